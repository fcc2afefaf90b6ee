//! Simulated clients and the K-step local update.

use super::algorithm::{AlgorithmSpec, Approximator, Selection};
use crate::approx::{
    cfl_combined_gradient, mcmc_generate, perturb_hessian, select_core_set_icarl, select_core_set_naive,
    ApproxObjective, HistoryBuffer,
};
use crate::approx::taylor_fit_quadratic;
use crate::drift::ClientDriftState;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objectives::{fit_least_squares, QuadraticObjective, SampleSet};
use crate::partition::overlap_window_indices;
use crate::rng::{self, StreamTag};
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// Generative labeling rule `y = xᵀw_true + N(0, noise_sd²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeler {
    pub w_true: Vector,
    pub noise_sd: f64,
}

impl Labeler {
    pub fn label<R: Rng + ?Sized>(&self, x: &Vector, rng: &mut R) -> f64 {
        let noise: f64 = if self.noise_sd > 0.0 {
            rng.sample::<f64, _>(StandardNormal) * self.noise_sd
        } else {
            0.0
        };
        x.dot(&self.w_true) + noise
    }
}

/// Where a least-squares client's round data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundSamples {
    /// Disjoint subsets, used cyclically starting from round 1.
    Subsets(Vec<SampleSet>),
    /// A window of `window` items over the concatenated subsets whose start
    /// moves `step` items each round, wrapping around.
    Window {
        sequence: SampleSet,
        window: usize,
        step: usize,
    },
}

impl RoundSamples {
    pub fn for_round(&self, round: u64) -> Result<SampleSet> {
        let t = round.saturating_sub(1);
        match self {
            RoundSamples::Subsets(sets) => Ok(sets[(t % sets.len() as u64) as usize].clone()),
            RoundSamples::Window { sequence, window, step } => {
                let idx = overlap_window_indices(sequence.len(), *window, *step, t as usize)?;
                sequence.select(&idx)
            }
        }
    }
}

/// The base objective a client optimizes before drift is added.
#[derive(Debug, Clone)]
pub enum LocalData {
    /// Every client shares the global quadratic.
    Shared(Arc<QuadraticObjective>),
    Samples {
        source: RoundSamples,
        labeler: Arc<Labeler>,
    },
}

/// A stored approximation together with the objective it approximates, so
/// information loss can be measured exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PastRound {
    pub approx: ApproxObjective,
    pub truth: QuadraticObjective,
}

impl AsRef<ApproxObjective> for PastRound {
    fn as_ref(&self) -> &ApproxObjective {
        &self.approx
    }
}

impl PastRound {
    /// Exact merge of several clients' artifacts from one round.
    pub fn average(parts: &[PastRound], round: u64) -> Result<Self> {
        let approxes: Vec<ApproxObjective> = parts.iter().map(|p| p.approx.clone()).collect();
        let truths: Vec<&QuadraticObjective> = parts.iter().map(|p| &p.truth).collect();
        Ok(Self {
            approx: ApproxObjective::average(&approxes, round)?,
            truth: QuadraticObjective::average(&truths)?,
        })
    }

    pub fn info_loss(&self, w: &Vector) -> Result<f64> {
        Ok((self.truth.gradient(w)? - self.approx.gradient(w)?).norm())
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    pub drift: ClientDriftState,
    pub history: HistoryBuffer<PastRound>,
    pub data: LocalData,
}

impl Client {
    pub fn new(drift: ClientDriftState, data: LocalData, history_capacity: usize) -> Self {
        Self {
            drift,
            history: HistoryBuffer::new(history_capacity),
            data,
        }
    }

    pub fn id(&self) -> u64 {
        self.drift.client_id()
    }

    /// The client's objective at `round` (drift included) and, for sample
    /// clients, the round's samples.
    pub fn round_objective(&self, round: u64) -> Result<(QuadraticObjective, Option<SampleSet>)> {
        let shift = self.drift.round_shift(round);
        match &self.data {
            LocalData::Shared(q) => Ok((q.with_linear_shift(&shift)?, None)),
            LocalData::Samples { source, .. } => {
                let s = source.for_round(round)?;
                Ok((fit_least_squares(&s)?.with_linear_shift(&shift)?, Some(s)))
            }
        }
    }

    fn labeler(&self) -> Option<&Labeler> {
        match &self.data {
            LocalData::Samples { labeler, .. } => Some(labeler),
            LocalData::Shared(_) => None,
        }
    }

    /// Appends a round's artifact after aggregation.
    pub fn commit(&mut self, result: &mut ClientRoundResult) {
        if let Some(a) = result.artifact.take() {
            self.history.push(a);
        }
    }
}

/// Everything one client needs for one round of local training.
pub struct LocalTask<'a> {
    pub spec: &'a AlgorithmSpec,
    pub client: &'a Client,
    /// Past approximations in use; the client's own buffer for stateful
    /// clients, the server's for stateless ones.
    pub history: &'a HistoryBuffer<PastRound>,
    pub objective: QuadraticObjective,
    pub samples: Option<SampleSet>,
    pub round: u64,
    pub seed: u64,
}

impl<'a> LocalTask<'a> {
    pub fn new(
        spec: &'a AlgorithmSpec,
        client: &'a Client,
        history: &'a HistoryBuffer<PastRound>,
        round: u64,
        seed: u64,
    ) -> Result<Self> {
        let (objective, samples) = client.round_objective(round)?;
        Ok(Self {
            spec,
            client,
            history,
            objective,
            samples,
            round,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClientRoundResult {
    pub client_id: u64,
    /// `w_{t,i,K} − w_t`.
    pub delta: Vector,
    pub diverged: bool,
    /// `‖∇f_t(w_{t,i,K})‖` on the client's own round objective.
    pub local_loss: f64,
    /// Mean information loss of the stored approximations at `w_t`.
    pub info_loss: Option<f64>,
    pub artifact: Option<PastRound>,
}

/// Gradient used at local step `step` (1-based).
pub fn local_gradient(task: &LocalTask<'_>, w: &Vector, w_round_start: &Vector, step: u64) -> Result<Vector> {
    let nu = task.client.drift.sgd_noise(task.round, step);
    let current = task.objective.gradient(w)?;
    match task.spec {
        AlgorithmSpec::FedAvg {} => Ok(current + nu),
        AlgorithmSpec::FedProx { prox_mu } => Ok(current + nu + (w - w_round_start) * *prox_mu),
        AlgorithmSpec::Cfl { weights, .. } => {
            let (p, used) = weights.weights_for(task.history.len())?;
            let g = if used == task.history.len() {
                cfl_combined_gradient(&current, task.history, &p, w)?
            } else {
                let mut recent = HistoryBuffer::new(used.max(1));
                for e in task.history.iter().skip(task.history.len() - used) {
                    recent.push(e.clone());
                }
                cfl_combined_gradient(&current, &recent, &p, w)?
            };
            Ok(g + nu)
        }
    }
}

/// Runs `K` local steps from `w_t` and builds the round's approximation artifact.
pub fn run_local_update(task: &LocalTask<'_>, w_t: &Vector, k: usize, eta_l: f64) -> Result<ClientRoundResult> {
    if k == 0 {
        return Err(Error::invalid("local steps must be at least 1"));
    }
    if !(eta_l >= 0.0) {
        return Err(Error::invalid(format!("local learning rate must be non-negative, got {eta_l}")));
    }
    let info_loss = if task.spec.is_cfl() && !task.history.is_empty() {
        let mut total = 0.0;
        for e in task.history.iter() {
            total += e.info_loss(w_t)?;
        }
        Some(total / task.history.len() as f64)
    } else {
        None
    };

    let mut w = w_t.clone();
    let mut diverged = false;
    for step in 1..=k as u64 {
        let g = local_gradient(task, &w, w_t, step)?;
        w -= g * eta_l;
        if !w.iter().all(|v| v.is_finite()) {
            diverged = true;
            break;
        }
    }
    let delta = &w - w_t;
    let local_loss = if diverged {
        f64::INFINITY
    } else {
        task.objective.gradient(&w)?.norm()
    };
    let artifact = if task.spec.is_cfl() && !diverged {
        Some(build_artifact(task, &w)?)
    } else {
        None
    };
    Ok(ClientRoundResult {
        client_id: task.client.id(),
        delta,
        diverged,
        local_loss,
        info_loss,
        artifact,
    })
}

fn build_artifact(task: &LocalTask<'_>, anchor: &Vector) -> Result<PastRound> {
    let AlgorithmSpec::Cfl { approximator, .. } = task.spec else {
        unreachable!("artifacts are only built for CFL");
    };
    let ids = [task.client.id(), task.round];
    let truth = task.objective.clone();
    let approx = match approximator {
        Approximator::Taylor { eps } => {
            let fit = taylor_fit_quadratic(&truth, anchor, task.round)?;
            let mut r = rng::stream(task.seed, StreamTag::Perturbation, &ids);
            perturb_hessian(&fit, *eps, &mut r)?
        }
        Approximator::CoreSet { m, selection } => {
            let samples = task.samples.as_ref().ok_or_else(|| {
                Error::config("core-set approximation needs a sample-based scenario")
            })?;
            let core = match selection {
                Selection::Naive => {
                    let mut r = rng::stream(task.seed, StreamTag::CoreSet, &ids);
                    select_core_set_naive(samples, *m, &mut r)?
                }
                Selection::Icarl => select_core_set_icarl(samples, *m, |x| x.clone())?,
            };
            let surrogate = surrogate_objective(task, &core.samples(samples)?)?;
            taylor_fit_quadratic(&surrogate, anchor, task.round)?
        }
        Approximator::Mcmc { samples: n, eta, sigma, steps } => {
            let samples = task.samples.as_ref().ok_or_else(|| {
                Error::config("MCMC approximation needs a sample-based scenario")
            })?;
            let labeler = task
                .client
                .labeler()
                .ok_or_else(|| Error::config("MCMC approximation needs a labeling rule"))?;
            let (center, spread) = feature_moments(samples);
            let mut r = rng::stream(task.seed, StreamTag::Mcmc, &ids);
            let xs = mcmc_generate(
                |x| (x - &center) / spread,
                *n,
                *eta,
                *sigma,
                *steps,
                samples.dim(),
                &mut r,
            )?;
            let ys: Vec<f64> = xs.iter().map(|x| labeler.label(x, &mut r)).collect();
            let surrogate = surrogate_objective(task, &SampleSet::new(xs, ys)?)?;
            taylor_fit_quadratic(&surrogate, anchor, task.round)?
        }
    };
    Ok(PastRound { approx, truth })
}

/// Least squares on `samples` with this round's drift applied, mirroring how
/// the true round objective is built.
fn surrogate_objective(task: &LocalTask<'_>, samples: &SampleSet) -> Result<QuadraticObjective> {
    let shift = task.client.drift.round_shift(task.round);
    fit_least_squares(samples)?.with_linear_shift(&shift)
}

/// Mean feature vector and mean per-coordinate variance (floored).
fn feature_moments(samples: &SampleSet) -> (Vector, f64) {
    let n = samples.len() as f64;
    let d = samples.dim();
    let mean = samples.features().iter().fold(Vector::zeros(d), |a, x| a + x) / n;
    let var = samples
        .features()
        .iter()
        .map(|x| (x - &mean).norm_squared())
        .sum::<f64>()
        / (n * d as f64);
    (mean, var.max(1e-12))
}
