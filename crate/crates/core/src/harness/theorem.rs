//! Numeric check of the one-round progress bound
//!
//! `f(w_t) − f* ≤ (1/η)(1 − μη/2)E‖w_t − w*‖² − (1/η)E‖w_{t+1} − w*‖² + c₁η + c₂η² + φ_t`
//!
//! with `η = K·η_g·η_l`. Expectations are seed averages over replicates that
//! share one objective. `φ_t = C·p̄_past·R·‖w_0 − w*‖` where `C` is fitted on
//! a separate calibration replicate set and then held fixed.
//!
//! The objective `wᵀAw + bᵀw` has Hessian `2A`, so the smoothness and
//! convexity constants entering the bound are `2L` and `2μ`.

use super::config::{ExperimentConfig, Scenario};
use crate::engine::{AlgorithmSpec, Experiment, Participation, RoundWeights};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Fewest seed replicates accepted for an expectation estimate.
pub const MIN_REPLICATES: usize = 200;

/// Relative slack for floating-point ties between the two sides.
const TIE_TOLERANCE: f64 = 1e-9;

/// Offset separating calibration seeds from validation seeds.
const CALIBRATION_SEED_OFFSET: u64 = 1 << 32;

/// Problem constants the bound is stated in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremInputs {
    /// `σ²`, SGD noise.
    pub sigma2: f64,
    /// `G²`, client drift.
    pub g2: f64,
    /// `D²`, time drift.
    pub d2: f64,
    /// Information-loss bound.
    pub r: f64,
    pub k: usize,
    /// Clients per round.
    pub n: usize,
    pub eta_g: f64,
    pub eta_l: f64,
    /// Smoothness of the local objectives.
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremConstants {
    pub c_pg: f64,
    pub c_r: f64,
    pub c1: f64,
    pub c2: f64,
    pub eta: f64,
}

impl TheoremConstants {
    /// Constants for one round given each client's weight vector.
    pub fn compute(inp: &TheoremInputs, weights: &[RoundWeights]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("need at least one client's weights"));
        }
        let n_clients = weights.len() as f64;
        let sum_sq = weights
            .iter()
            .map(|p| p.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / n_clients;
        let past_sq = weights
            .iter()
            .map(|p| p.past().iter().sum::<f64>().powi(2))
            .sum::<f64>()
            / n_clients;
        Ok(Self::from_sums(inp, sum_sq, past_sq))
    }

    /// `sum_sq` is the client mean of `Σ_τ p_τ²`; `past_sq` the client mean
    /// of `(Σ_{τ<t} p_τ)²`.
    pub fn from_sums(inp: &TheoremInputs, sum_sq: f64, past_sq: f64) -> Self {
        let c_pg = inp.g2 + inp.d2 * sum_sq;
        let c_r = past_sq * inp.r * inp.r;
        let k = inp.k as f64;
        let n = inp.n as f64;
        let eg2 = inp.eta_g * inp.eta_g;
        let c1 = 2.0 * c_pg + inp.sigma2 / (n * k) + 2.0 * c_r;
        let c2 = inp.l * c_pg / (3.0 * eg2) + inp.l * inp.sigma2 / (6.0 * eg2 * k) + inp.l * c_r / (3.0 * eg2);
        Self {
            c_pg,
            c_r,
            c1,
            c2,
            eta: k * inp.eta_g * inp.eta_l,
        }
    }
}

/// Largest `η = K·η_g·η_l` the convergence theorem admits for smoothness `l`
/// in the additive-noise regime, `(√7 − 2)/(6L)`.
pub fn step_bound(l: f64) -> f64 {
    (7f64.sqrt() - 2.0) / (6.0 * l)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Checked,
    /// Preconditions unmet; the bound was not evaluated.
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundCheck {
    /// Index `t` of the iterate `w_t`; the round maps `w_t` to `w_{t+1}`.
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub phi: f64,
    pub constants: TheoremConstants,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub status: CheckStatus,
    pub eta: f64,
    pub step_bound: f64,
    pub replicates: usize,
    /// Information-loss bound used, the largest value seen in calibration.
    pub r: f64,
    /// Fitted constant `C` of `φ_t`.
    pub phi_constant: f64,
    pub rounds: Vec<RoundCheck>,
    pub satisfaction_rate: f64,
}

impl Theorem1Report {
    pub fn passes(&self, min_rate: f64) -> bool {
        self.status == CheckStatus::Checked && self.satisfaction_rate >= min_rate
    }
}

/// Per-round seed averages.
#[derive(Debug, Clone, Default)]
struct Moments {
    gap: Vec<f64>,
    dist: Vec<f64>,
    dist_next: Vec<f64>,
    sum_sq: Vec<f64>,
    past_sq: Vec<f64>,
    past_mass: Vec<f64>,
    max_info: f64,
    w0_dist: f64,
}

struct Trace {
    gap: Vec<f64>,
    dist: Vec<f64>,
    dist_next: Vec<f64>,
    sum_sq: Vec<f64>,
    past_sq: Vec<f64>,
    past_mass: Vec<f64>,
    max_info: f64,
    w0_dist: f64,
}

fn client_weights(exp: &Experiment) -> Result<Vec<RoundWeights>> {
    let spec = &exp.round_config.spec;
    let Participation::Stateful(clients) = &exp.population.participation else {
        return Err(Error::config("the theorem check needs a fixed client population"));
    };
    clients
        .iter()
        .map(|c| match spec {
            AlgorithmSpec::Cfl { weights, .. } => Ok(weights.weights_for(c.history.len())?.0),
            _ => Ok(RoundWeights::single()),
        })
        .collect()
}

fn trace(cfg: &ExperimentConfig, seed: u64) -> Result<Trace> {
    let mut c = cfg.clone();
    c.seed = seed;
    c.objective_seed = Some(cfg.objective_seed());
    c.parallel = false;
    let mut exp = Experiment::new(&c)?;
    let opt = exp
        .population
        .optimum
        .clone()
        .ok_or_else(|| Error::config("the objective has no exact optimum"))?;
    let fstar = exp.global().value(&opt)?;
    let t_max = c.rounds;
    let mut out = Trace {
        gap: Vec::with_capacity(t_max),
        dist: Vec::with_capacity(t_max),
        dist_next: Vec::with_capacity(t_max),
        sum_sq: Vec::with_capacity(t_max),
        past_sq: Vec::with_capacity(t_max),
        past_mass: Vec::with_capacity(t_max),
        max_info: 0.0,
        w0_dist: (exp.w() - &opt).norm(),
    };
    for _ in 0..t_max {
        let w = exp.w().clone();
        out.gap.push(exp.global().value(&w)? - fstar);
        out.dist.push((&w - &opt).norm_squared());
        let weights = client_weights(&exp)?;
        let n = weights.len() as f64;
        out.sum_sq
            .push(weights.iter().map(|p| p.as_slice().iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n);
        out.past_sq
            .push(weights.iter().map(|p| p.past().iter().sum::<f64>().powi(2)).sum::<f64>() / n);
        out.past_mass
            .push(weights.iter().map(|p| p.past().iter().sum::<f64>()).sum::<f64>() / n);
        let rec = exp.step()?;
        if rec.diverged {
            return Err(Error::config(format!("replicate {seed} diverged at round {}", rec.round)));
        }
        if let Some(i) = rec.info_loss {
            out.max_info = out.max_info.max(i);
        }
        out.dist_next.push((exp.w() - &opt).norm_squared());
    }
    Ok(out)
}

fn moments(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Moments> {
    let traces: Vec<Trace> = seeds.par_iter().map(|&s| trace(cfg, s)).collect::<Result<_>>()?;
    let n = traces.len() as f64;
    let t_max = cfg.rounds;
    let mean = |f: &dyn Fn(&Trace) -> &Vec<f64>| -> Vec<f64> {
        (0..t_max)
            .map(|t| traces.iter().map(|tr| f(tr)[t]).sum::<f64>() / n)
            .collect()
    };
    Ok(Moments {
        gap: mean(&|t| &t.gap),
        dist: mean(&|t| &t.dist),
        dist_next: mean(&|t| &t.dist_next),
        sum_sq: mean(&|t| &t.sum_sq),
        past_sq: mean(&|t| &t.past_sq),
        past_mass: mean(&|t| &t.past_mass),
        max_info: traces.iter().map(|t| t.max_info).fold(0.0, f64::max),
        w0_dist: traces.iter().map(|t| t.w0_dist).sum::<f64>() / n,
    })
}

/// Right-hand side without `φ_t`, and the left-hand side, per round.
fn sides(m: &Moments, inp: &TheoremInputs, mu: f64) -> Vec<(f64, f64, TheoremConstants)> {
    (0..m.gap.len())
        .map(|t| {
            let k = TheoremConstants::from_sums(inp, m.sum_sq[t], m.past_sq[t]);
            let eta = k.eta;
            let a1 = (1.0 - mu * eta / 2.0) * m.dist[t] / eta - m.dist_next[t] / eta;
            (m.gap[t], a1 + k.c1 * eta + k.c2 * eta * eta, k)
        })
        .collect()
}

fn tolerance(rhs: f64) -> f64 {
    TIE_TOLERANCE * (1.0 + rhs.abs())
}

/// Runs the check on `cfg` with `replicates` validation seeds and as many
/// calibration seeds.
pub fn theorem1_check(cfg: &ExperimentConfig, replicates: usize) -> Result<Theorem1Report> {
    if replicates < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "the check needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    if cfg.scenario != Scenario::Quadratic || !(cfg.mu > 0.0) {
        return Err(Error::config(
            "the theorem check needs the quadratic scenario with mu > 0 so the optimum is exact",
        ));
    }
    cfg.validate()?;
    let l_f = 2.0 * cfg.l;
    let mu_f = 2.0 * cfg.mu;
    let eta = cfg.local_steps as f64 * cfg.eta_g * cfg.eta_l;
    let bound = step_bound(l_f);
    let mut report = Theorem1Report {
        status: CheckStatus::Checked,
        eta,
        step_bound: bound,
        replicates,
        r: 0.0,
        phi_constant: 0.0,
        rounds: Vec::new(),
        satisfaction_rate: 0.0,
    };
    if !(eta > 0.0) {
        report.status = CheckStatus::Skipped("eta is zero; the bound divides by eta".into());
        return Ok(report);
    }
    if eta > bound {
        report.status = CheckStatus::Skipped(format!(
            "eta = K·eta_g·eta_l = {eta} exceeds the step bound {bound} for smoothness {l_f}"
        ));
        return Ok(report);
    }

    let base = cfg.seed;
    let calib_seeds: Vec<u64> = (0..replicates as u64)
        .map(|r| base.wrapping_add(CALIBRATION_SEED_OFFSET).wrapping_add(r))
        .collect();
    let valid_seeds: Vec<u64> = (0..replicates as u64).map(|r| base.wrapping_add(r)).collect();

    let mut inp = TheoremInputs {
        sigma2: cfg.drift.sgd_var,
        g2: cfg.drift.client_var,
        d2: cfg.drift.time_var,
        r: 0.0,
        k: cfg.local_steps,
        n: cfg.clients_per_round,
        eta_g: cfg.eta_g,
        eta_l: cfg.eta_l,
        l: l_f,
    };

    let calib = moments(cfg, &calib_seeds)?;
    inp.r = calib.max_info;
    let mut c = 0.0f64;
    for (t, (lhs, rhs, _)) in sides(&calib, &inp, mu_f).into_iter().enumerate() {
        let unit = calib.past_mass[t] * inp.r * calib.w0_dist;
        if lhs > rhs + tolerance(rhs) && unit > 0.0 {
            c = c.max((lhs - rhs) / unit);
        }
    }

    let valid = moments(cfg, &valid_seeds)?;
    let rounds: Vec<RoundCheck> = sides(&valid, &inp, mu_f)
        .into_iter()
        .enumerate()
        .map(|(t, (lhs, rhs0, constants))| {
            let phi = c * valid.past_mass[t] * inp.r * valid.w0_dist;
            let rhs = rhs0 + phi;
            RoundCheck {
                t,
                lhs,
                rhs,
                phi,
                constants,
                holds: lhs <= rhs + tolerance(rhs),
            }
        })
        .collect();
    let held = rounds.iter().filter(|r| r.holds).count();
    report.satisfaction_rate = if rounds.is_empty() {
        1.0
    } else {
        held as f64 / rounds.len() as f64
    };
    report.r = inp.r;
    report.phi_constant = c;
    report.rounds = rounds;
    Ok(report)
}
