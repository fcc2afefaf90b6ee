//! Deterministic simulator for continual federated learning on convex objectives.
//!
//! The crate runs FedAvg, FedProx and continual (CFL) round protocols under an
//! additive client/time/step drift model, implements the past-objective
//! approximators (Taylor regularization, core sets, MCMC regeneration), and
//! provides the harness used to check convergence, weight-schedule and
//! information-loss properties numerically.
//!
//! Module map:
//!
//! * [`objectives`]: noisy quadratic model and least-squares objectives.
//! * [`drift`]: client drift, time drift and SGD noise streams.
//! * [`approx`]: Taylor fits, core sets, MCMC sampling, information loss.
//! * [`engine`]: round weights, local updates, rounds and experiments.
//! * [`partition`]: Dirichlet splits, hierarchical splits, overlap windows.
//! * [`harness`]: config files, presets, sweeps, theorem checks, CSV output.

pub mod approx;
pub mod drift;
pub mod engine;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
