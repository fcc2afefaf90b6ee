//! Server state, client sampling and fixed-order aggregation.

use super::algorithm::{AlgorithmSpec, Approximator};
use super::client::{run_local_update, Client, ClientRoundResult, LocalData, LocalTask, PastRound};
use crate::approx::HistoryBuffer;
use crate::drift::{ClientDriftState, DriftConfig};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objectives::QuadraticObjective;
use crate::rng::{self, StreamTag};
use rayon::prelude::*;
use std::sync::Arc;

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Client ids for one-shot clients start here so their streams never collide
/// with stateful ids.
const STATELESS_ID_BASE: u64 = 1 << 40;

/// One completed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub round: u64,
    /// `‖∇f(w_{t+1})‖` on the global objective.
    pub loss: f64,
    pub dist_to_opt: Option<f64>,
    pub info_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub w: Vector,
    /// Rounds completed so far.
    pub round: u64,
    pub seed: u64,
    /// Round-level history used by one-shot clients.
    pub shared_history: HistoryBuffer<PastRound>,
}

impl ServerState {
    pub fn new(w0: Vector, seed: u64, history_capacity: usize) -> Self {
        Self {
            w: w0,
            round: 0,
            seed,
            shared_history: HistoryBuffer::new(history_capacity),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Participation {
    /// A fixed population; `S` of them are sampled each round.
    Stateful(Vec<Client>),
    /// Every round materializes `S` fresh clients that are never seen again.
    Stateless {
        base: Arc<QuadraticObjective>,
        drift: DriftConfig,
        history_capacity: usize,
    },
}

/// Clients plus the objective the server is evaluated on.
#[derive(Debug, Clone)]
pub struct Population {
    pub global: QuadraticObjective,
    pub optimum: Option<Vector>,
    pub participation: Participation,
}

impl Population {
    pub fn size(&self) -> Option<usize> {
        match &self.participation {
            Participation::Stateful(c) => Some(c.len()),
            Participation::Stateless { .. } => None,
        }
    }
}

/// Hyperparameters of a round.
#[derive(Debug, Clone)]
pub struct RoundConfig {
    pub spec: AlgorithmSpec,
    pub clients_per_round: usize,
    pub local_steps: usize,
    pub eta_l: f64,
    pub eta_g: f64,
    /// Run client updates on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

/// Indices of the clients taking part in round `round`, ascending.
pub fn sample_clients(seed: u64, round: u64, population: usize, s: usize) -> Result<Vec<usize>> {
    if s > population {
        return Err(Error::config(format!(
            "cannot sample {s} clients from a population of {population}"
        )));
    }
    if s == population {
        return Ok((0..population).collect());
    }
    let mut r = rng::stream(seed, StreamTag::Sampling, &[round]);
    let mut idx = rand::seq::index::sample(&mut r, population, s).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn execute<T, F>(items: &[T], parallel: bool, f: F) -> Result<Vec<ClientRoundResult>>
where
    T: Sync,
    F: Fn(&T) -> Result<ClientRoundResult> + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Executes round `server.round + 1` and advances the server.
pub fn run_round(server: &mut ServerState, pop: &mut Population, cfg: &RoundConfig) -> Result<RunRecord> {
    if !(cfg.eta_g > 0.0) {
        return Err(Error::config(format!("eta_g must be positive, got {}", cfg.eta_g)));
    }
    if cfg.clients_per_round == 0 {
        return Err(Error::config("clients_per_round must be positive"));
    }
    let round = server.round + 1;
    let w_t = server.w.clone();
    let seed = server.seed;
    let s = cfg.clients_per_round;

    let results = match &mut pop.participation {
        Participation::Stateful(clients) => {
            let chosen = sample_clients(seed, round, clients.len(), s)?;
            let view: Vec<&Client> = chosen.iter().map(|&i| &clients[i]).collect();
            let mut results = execute(&view, cfg.parallel, |c| {
                let task = LocalTask::new(&cfg.spec, c, &c.history, round, seed)?;
                run_local_update(&task, &w_t, cfg.local_steps, cfg.eta_l)
            })?;
            for (&i, res) in chosen.iter().zip(results.iter_mut()) {
                clients[i].commit(res);
            }
            results
        }
        Participation::Stateless {
            base,
            drift,
            history_capacity,
        } => {
            if matches!(
                cfg.spec,
                AlgorithmSpec::Cfl {
                    approximator: Approximator::CoreSet { .. } | Approximator::Mcmc { .. },
                    ..
                }
            ) {
                return Err(Error::config("sample-based approximators need stateful clients"));
            }
            let fresh = (0..s as u64)
                .map(|slot| {
                    let id = STATELESS_ID_BASE + (round - 1) * s as u64 + slot;
                    let d = ClientDriftState::new(seed, id, base.dim(), *drift)?;
                    Ok(Client::new(d, LocalData::Shared(base.clone()), *history_capacity))
                })
                .collect::<Result<Vec<_>>>()?;
            let history = &server.shared_history;
            let mut results = execute(&fresh, cfg.parallel, |c| {
                let task = LocalTask::new(&cfg.spec, c, history, round, seed)?;
                run_local_update(&task, &w_t, cfg.local_steps, cfg.eta_l)
            })?;
            let artifacts: Vec<PastRound> = results.iter_mut().filter_map(|r| r.artifact.take()).collect();
            if artifacts.len() == results.len() && !artifacts.is_empty() {
                server.shared_history.push(PastRound::average(&artifacts, round)?);
            }
            results
        }
    };

    // fixed-order reduction over ascending client index
    let mut sum = Vector::zeros(w_t.len());
    let mut any_diverged = false;
    for r in &results {
        sum += &r.delta;
        any_diverged |= r.diverged;
    }
    server.w = &w_t + sum * (cfg.eta_g / s as f64);
    server.round = round;

    let info: Vec<f64> = results.iter().filter_map(|r| r.info_loss).collect();
    let info_loss = if info.is_empty() {
        None
    } else {
        Some(info.iter().sum::<f64>() / info.len() as f64)
    };
    let loss = pop.global.gradient(&server.w)?.norm();
    let diverged = any_diverged || !loss.is_finite() || loss > DIVERGENCE_THRESHOLD;
    let dist_to_opt = pop.optimum.as_ref().map(|o| (&server.w - o).norm());
    Ok(RunRecord {
        round,
        loss,
        dist_to_opt,
        info_loss,
        diverged,
    })
}
