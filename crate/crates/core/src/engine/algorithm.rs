use super::weights::{compute_round_weights, RoundWeights};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which update rule clients run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    FedAvg {},
    /// FedAvg plus `prox_mu·(w − w_round_start)` in every local gradient.
    FedProx { prox_mu: f64 },
    /// Current objective combined with approximations of the client's past objectives.
    Cfl {
        approximator: Approximator,
        weights: WeightMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Approximator {
    /// Second-order expansion at the final local iterate, Hessian perturbed by `eps`.
    Taylor {
        #[serde(default)]
        eps: f64,
    },
    /// Least squares on `m` retained samples of the round's data.
    CoreSet { m: usize, selection: Selection },
    /// Least squares on `samples` Langevin-regenerated points.
    Mcmc {
        samples: usize,
        eta: f64,
        sigma: f64,
        steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    Naive,
    Icarl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightMode {
    /// Optimal schedule for information-loss bound `r` and time-drift scale `d`.
    Theorem2 { r: f64, d: f64 },
    Uniform,
    /// Fixed weights, oldest first, the last for the current round. Uses the
    /// most recent `len − 1` history entries.
    Explicit { weights: Vec<f64> },
}

impl AlgorithmSpec {
    pub fn cfl_taylor(eps: f64, r: f64, d: f64) -> Self {
        AlgorithmSpec::Cfl {
            approximator: Approximator::Taylor { eps },
            weights: WeightMode::Theorem2 { r, d },
        }
    }

    /// Short label used in summaries.
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::FedAvg {} => "fedavg".into(),
            AlgorithmSpec::FedProx { .. } => "fedprox".into(),
            AlgorithmSpec::Cfl { approximator, .. } => match approximator {
                Approximator::Taylor { .. } => "cfl-taylor".into(),
                Approximator::CoreSet { selection: Selection::Naive, .. } => "cfl-coreset-naive".into(),
                Approximator::CoreSet { selection: Selection::Icarl, .. } => "cfl-coreset-icarl".into(),
                Approximator::Mcmc { .. } => "cfl-mcmc".into(),
            },
        }
    }

    pub fn is_cfl(&self) -> bool {
        matches!(self, AlgorithmSpec::Cfl { .. })
    }

    pub fn needs_samples(&self) -> bool {
        matches!(
            self,
            AlgorithmSpec::Cfl {
                approximator: Approximator::CoreSet { .. } | Approximator::Mcmc { .. },
                ..
            }
        )
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            AlgorithmSpec::FedAvg {} => {}
            AlgorithmSpec::FedProx { prox_mu } => {
                if !(*prox_mu >= 0.0) {
                    errs.push(format!("algorithm.prox_mu must be non-negative, got {prox_mu}"));
                }
            }
            AlgorithmSpec::Cfl { approximator, weights } => {
                match approximator {
                    Approximator::Taylor { eps } => {
                        if !(*eps >= 0.0) {
                            errs.push(format!("algorithm.approximator.eps must be non-negative, got {eps}"));
                        }
                    }
                    Approximator::CoreSet { m, .. } => {
                        if *m == 0 {
                            errs.push("algorithm.approximator.m must be positive".into());
                        }
                    }
                    Approximator::Mcmc { samples, eta, sigma, steps } => {
                        if *samples == 0 {
                            errs.push("algorithm.approximator.samples must be positive".into());
                        }
                        if !(*eta > 0.0) {
                            errs.push(format!("algorithm.approximator.eta must be positive, got {eta}"));
                        }
                        if !(*sigma >= 0.0) {
                            errs.push(format!("algorithm.approximator.sigma must be non-negative, got {sigma}"));
                        }
                        if *steps == 0 {
                            errs.push("algorithm.approximator.steps must be positive".into());
                        }
                    }
                }
                match weights {
                    WeightMode::Theorem2 { r, d } => {
                        if !(*r >= 0.0) || !(*d >= 0.0) {
                            errs.push(format!("algorithm.weights r and d must be non-negative, got r={r}, d={d}"));
                        } else if *r == 0.0 && *d == 0.0 {
                            errs.push("algorithm.weights r and d cannot both be zero".into());
                        }
                    }
                    WeightMode::Uniform => {}
                    WeightMode::Explicit { weights } => {
                        if let Err(e) = RoundWeights::new(weights.clone()) {
                            errs.push(format!("algorithm.weights.weights: {e}"));
                        }
                    }
                }
            }
        }
        errs
    }
}

impl WeightMode {
    /// Weights for a round with `history_len` stored approximations, and the
    /// number of (most recent) history entries they cover.
    pub fn weights_for(&self, history_len: usize) -> Result<(RoundWeights, usize)> {
        match self {
            WeightMode::Theorem2 { r, d } => Ok((compute_round_weights(history_len + 1, *r, *d)?, history_len)),
            WeightMode::Uniform => Ok((RoundWeights::uniform(history_len + 1)?, history_len)),
            WeightMode::Explicit { weights } => {
                let need = weights.len() - 1;
                if history_len < need {
                    // early rounds: renormalize the trailing weights over what exists
                    let tail = &weights[need - history_len..];
                    let s: f64 = tail.iter().sum();
                    if !(s > 0.0) {
                        return Err(Error::invalid("explicit weights put no mass on available rounds"));
                    }
                    return Ok((RoundWeights::new(tail.iter().map(|v| v / s).collect())?, history_len));
                }
                Ok((RoundWeights::new(weights.clone())?, need))
            }
        }
    }
}
