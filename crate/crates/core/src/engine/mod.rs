//! Round protocol: weight schedules, local updates, aggregation and the
//! experiment driver.

mod algorithm;
mod client;
mod experiment;
mod server;
mod weights;

pub use algorithm::{AlgorithmSpec, Approximator, Selection, WeightMode};
pub use client::{
    local_gradient, run_local_update, Client, ClientRoundResult, Labeler, LocalData, LocalTask, PastRound,
    RoundSamples,
};
pub use experiment::{build_manifest, build_population, run_experiment, Experiment};
pub use server::{
    run_round, sample_clients, Participation, Population, RoundConfig, RunRecord, ServerState,
    DIVERGENCE_THRESHOLD,
};
pub use weights::{brute_force_optimal_weights, compute_round_weights, weight_objective, RoundWeights};
