//! Two-level additive gradient noise: a fixed client drift `δᵢ`, a per-round
//! time drift `ξₜ,ᵢ` shared by all local steps of the round, and fresh SGD
//! noise `ν` at every local step.
//!
//! Each component is isotropic Gaussian with per-coordinate variance `var/d`,
//! so its expected squared norm equals the configured variance. Multiplicative
//! drift terms are identically zero in this model.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{gaussian_vector, Vector};
use crate::objectives::Objective;
use crate::rng::{self, StreamTag};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Target second moments of the three noise streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// `E‖δ‖²`
    pub client_var: f64,
    /// `E‖ξ‖²`
    pub time_var: f64,
    /// `E‖ν‖²`
    pub sgd_var: f64,
}

impl DriftConfig {
    pub const NOISELESS: DriftConfig = DriftConfig {
        client_var: 0.0,
        time_var: 0.0,
        sgd_var: 0.0,
    };

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("client_var", self.client_var),
            ("time_var", self.time_var),
            ("sgd_var", self.sgd_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("drift.{name} must be finite and non-negative, got {v}"));
            }
        }
        errs
    }

    pub fn is_noiseless(&self) -> bool {
        self.client_var == 0.0 && self.time_var == 0.0 && self.sgd_var == 0.0
    }
}

/// Draws a zero-mean isotropic Gaussian vector with `E‖x‖² = var`.
pub fn sample_drift<R: Rng + ?Sized>(var: f64, d: usize, rng: &mut R) -> Result<Vector> {
    if !(var >= 0.0) {
        return Err(Error::invalid(format!("drift variance must be non-negative, got {var}")));
    }
    if var == 0.0 {
        return Ok(Vector::zeros(d));
    }
    Ok(gaussian_vector(d, rng) * (var / d as f64).sqrt())
}

/// Noise state owned by one simulated client.
///
/// `delta` is drawn once when the client is created. Time drift and SGD noise
/// are regenerated on demand from streams keyed by `(seed, client, round[, step])`,
/// so they are identical no matter when or in which thread they are requested.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDriftState {
    client_id: u64,
    delta: Vector,
    seed: u64,
    cfg: DriftConfig,
    d: usize,
}

impl ClientDriftState {
    pub fn new(seed: u64, client_id: u64, d: usize, cfg: DriftConfig) -> Result<Self> {
        let mut r = rng::stream(seed, StreamTag::ClientDrift, &[client_id]);
        let delta = sample_drift(cfg.client_var, d, &mut r)?;
        Ok(Self::with_delta(seed, client_id, delta, cfg))
    }

    /// Client with an externally chosen drift vector.
    pub fn with_delta(seed: u64, client_id: u64, delta: Vector, cfg: DriftConfig) -> Self {
        let d = delta.len();
        Self {
            client_id,
            delta,
            seed,
            cfg,
            d,
        }
    }

    pub fn client_id(&self) -> u64 {
        self.client_id
    }

    pub fn delta(&self) -> &Vector {
        &self.delta
    }

    pub fn config(&self) -> &DriftConfig {
        &self.cfg
    }

    /// `ξ` for this client at `round`.
    pub fn time_drift(&self, round: u64) -> Vector {
        let mut r = rng::stream(self.seed, StreamTag::TimeDrift, &[self.client_id, round]);
        sample_drift(self.cfg.time_var, self.d, &mut r).expect("validated variance")
    }

    /// `ν` for this client at `(round, step)`.
    pub fn sgd_noise(&self, round: u64, step: u64) -> Vector {
        let mut r = rng::stream(self.seed, StreamTag::SgdNoise, &[self.client_id, round, step]);
        sample_drift(self.cfg.sgd_var, self.d, &mut r).expect("validated variance")
    }

    /// `δ + ξ_round`: the offset between the client's round objective and the base objective.
    pub fn round_shift(&self, round: u64) -> Vector {
        &self.delta + self.time_drift(round)
    }
}

/// Builds the drift states for a stateful population.
///
/// With `center` set, the drifts are shifted to have zero population mean and
/// rescaled by `sqrt(n/(n-1))`, which keeps `E‖δᵢ‖²` at the configured value
/// while making the base objective exactly the average of the client objectives.
pub fn population(seed: u64, n: usize, d: usize, cfg: DriftConfig, center: bool) -> Result<Vec<ClientDriftState>> {
    let mut states = (0..n as u64)
        .map(|i| ClientDriftState::new(seed, i, d, cfg))
        .collect::<Result<Vec<_>>>()?;
    if center && n > 1 && cfg.client_var > 0.0 {
        let mean = states.iter().fold(Vector::zeros(d), |acc, s| acc + &s.delta) / n as f64;
        let scale = (n as f64 / (n as f64 - 1.0)).sqrt();
        for s in &mut states {
            s.delta = (&s.delta - &mean) * scale;
        }
    }
    Ok(states)
}

/// `∇f(w) + δᵢ + ξ_{round,i} + ν_{round,i,step}`.
pub fn noisy_gradient(
    obj: &Objective,
    w: &Vector,
    state: &ClientDriftState,
    round: u64,
    step: u64,
) -> Result<Vector> {
    check_dim(state.d, w.len())?;
    Ok(obj.gradient(w)? + state.round_shift(round) + state.sgd_noise(round, step))
}

/// Mean of squared norms.
pub fn empirical_second_moment(draws: &[Vector]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid("need at least one draw"));
    }
    Ok(draws.iter().map(|x| x.norm_squared()).sum::<f64>() / draws.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::build_quadratic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(c: f64, t: f64, s: f64) -> DriftConfig {
        DriftConfig {
            client_var: c,
            time_var: t,
            sgd_var: s,
        }
    }

    #[test]
    fn zero_variance_is_exactly_zero() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_drift(0.0, 5, &mut r).unwrap(), Vector::zeros(5));
    }

    #[test]
    fn negative_variance_rejected() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_drift(-1.0, 5, &mut r).is_err());
        assert_eq!(cfg(-1.0, 0.0, 0.0).validate().len(), 1);
    }

    #[test]
    fn second_moment_examples() {
        let m = empirical_second_moment(&[Vector::from_row_slice(&[3.0, 4.0])]).unwrap();
        assert_eq!(m, 25.0);
        let m = empirical_second_moment(&[
            Vector::from_row_slice(&[1.0, 0.0]),
            Vector::from_row_slice(&[0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(m, 1.0);
        assert!(empirical_second_moment(&[]).is_err());
    }

    #[test]
    fn moments_hit_targets() {
        let mut r = ChaCha8Rng::seed_from_u64(42);
        for (var, lo, hi) in [(100.0, 97.0, 103.0), (0.01, 0.0097, 0.0103)] {
            let draws: Vec<Vector> = (0..10_000).map(|_| sample_drift(var, 10, &mut r).unwrap()).collect();
            let m = empirical_second_moment(&draws).unwrap();
            assert!(m >= lo && m <= hi, "var {var}: {m}");
        }
    }

    #[test]
    fn noiseless_gradient_is_exact() {
        let obj: Objective = build_quadratic(4, 1.0, 3.0, 1).unwrap().into();
        let st = ClientDriftState::new(3, 0, 4, DriftConfig::NOISELESS).unwrap();
        let w = Vector::from_row_slice(&[0.5, -1.0, 2.0, 0.0]);
        assert_eq!(noisy_gradient(&obj, &w, &st, 3, 1).unwrap(), obj.gradient(&w).unwrap());
    }

    #[test]
    fn time_drift_shared_within_round() {
        let obj: Objective = build_quadratic(4, 1.0, 3.0, 1).unwrap().into();
        let st = ClientDriftState::new(3, 2, 4, cfg(0.0, 1.0, 1.0)).unwrap();
        let w = Vector::zeros(4);
        let g1 = noisy_gradient(&obj, &w, &st, 5, 1).unwrap();
        let g2 = noisy_gradient(&obj, &w, &st, 5, 2).unwrap();
        assert_ne!(g1, g2);
        let base = obj.gradient(&w).unwrap() + st.time_drift(5);
        assert_eq!(g1 - st.sgd_noise(5, 1), base);
        assert_eq!(g2 - st.sgd_noise(5, 2), base);
        assert_ne!(st.time_drift(5), st.time_drift(6));
    }

    #[test]
    fn centered_population_has_zero_mean() {
        let pop = population(1, 7, 10, cfg(0.01, 0.0, 0.0), true).unwrap();
        let mean = pop.iter().fold(Vector::zeros(10), |a, s| a + s.delta()) / 7.0;
        assert!(mean.amax() < 1e-15);
        let raw = population(1, 7, 10, cfg(0.01, 0.0, 0.0), false).unwrap();
        assert_ne!(raw[0].delta(), pop[0].delta());
    }
}
