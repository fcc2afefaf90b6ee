//! Per-round simplex weights over the current objective and its stored past approximations.

use crate::error::{Error, Result};

/// Weights `p_1 … p_t`, oldest first; the last entry belongs to the current round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundWeights {
    weights: Vec<f64>,
}

impl RoundWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("round weights must not be empty"));
        }
        if weights.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("round weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("round weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    /// `[1]`, the weights of a round without history.
    pub fn single() -> Self {
        Self { weights: vec![1.0] }
    }

    pub fn uniform(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("round index must be at least 1"));
        }
        Ok(Self {
            weights: vec![1.0 / t as f64; t],
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn current(&self) -> f64 {
        self.weights[self.weights.len() - 1]
    }

    pub fn past(&self) -> &[f64] {
        &self.weights[..self.weights.len() - 1]
    }
}

/// Optimal weight schedule balancing time-drift variance `D²` against the
/// approximation error bound `R²`:
///
/// `p_τ = D² / (tD² + (t−1)R²)` for `τ < t` and
/// `p_t = ((t−1)R² + D²) / (tD² + (t−1)R²)`.
pub fn compute_round_weights(t: usize, r: f64, d: f64) -> Result<RoundWeights> {
    if t == 0 {
        return Err(Error::invalid("round index must be at least 1"));
    }
    if !(r >= 0.0 && d >= 0.0) || !r.is_finite() || !d.is_finite() {
        return Err(Error::config(format!("R and D must be finite and non-negative, got R={r}, D={d}")));
    }
    if t == 1 {
        return Ok(RoundWeights::single());
    }
    let (r2, d2) = (r * r, d * d);
    let tm1 = (t - 1) as f64;
    let denom = t as f64 * d2 + tm1 * r2;
    if denom == 0.0 {
        return Err(Error::config("R = D = 0 leaves the round weights undefined"));
    }
    let past = d2 / denom;
    let current = (tm1 * r2 + d2) / denom;
    let mut weights = vec![past; t - 1];
    weights.push(current);
    Ok(RoundWeights { weights })
}

/// Per-client objective whose minimizer the schedule above is:
/// `(1 − p_t)²R² + G² + D²Σ p_τ²`.
pub fn weight_objective(p: &[f64], r: f64, d: f64, g: f64) -> f64 {
    let pt = p[p.len() - 1];
    (1.0 - pt).powi(2) * r * r + g * g + d * d * p.iter().map(|x| x * x).sum::<f64>()
}

/// Grid search of [`weight_objective`] over the simplex at resolution `1/grid`.
///
/// Serves as an independent check of [`compute_round_weights`] for `t ≤ 4`.
pub fn brute_force_optimal_weights(t: usize, r: f64, d: f64, g: f64, grid: usize) -> Result<RoundWeights> {
    if t == 0 {
        return Err(Error::invalid("round index must be at least 1"));
    }
    if t > 4 {
        return Err(Error::invalid(format!("grid search supports t ≤ 4, got {t}")));
    }
    if grid < 100 {
        return Err(Error::invalid(format!("grid needs at least 100 points, got {grid}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; t];
    visit_compositions(grid, t, &mut counts, 0, &mut |c| {
        let p: Vec<f64> = c.iter().map(|&k| k as f64 / grid as f64).collect();
        let v = weight_objective(&p, r, d, g);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, c.to_vec()));
        }
    });
    let (_, c) = best.expect("non-empty simplex grid");
    let weights: Vec<f64> = c.iter().map(|&k| k as f64 / grid as f64).collect();
    Ok(RoundWeights { weights })
}

fn visit_compositions(total: usize, parts: usize, buf: &mut Vec<usize>, idx: usize, f: &mut impl FnMut(&[usize])) {
    if idx == parts - 1 {
        buf[idx] = total;
        f(buf);
        return;
    }
    for k in 0..=total {
        buf[idx] = k;
        visit_compositions(total - k, parts, buf, idx + 1, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_round_is_all_current() {
        assert_eq!(compute_round_weights(1, 3.0, 0.0).unwrap().as_slice(), &[1.0]);
        assert_eq!(compute_round_weights(1, 0.0, 0.0).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn equal_r_and_d_at_round_three() {
        let w = compute_round_weights(3, 2.0, 2.0).unwrap();
        let expected = [0.2, 0.2, 0.6];
        for (a, b) in w.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_information_loss_recovers_fedavg() {
        let w = compute_round_weights(5, 1e6, 1.0).unwrap();
        assert!(w.current() >= 1.0 - 1e-11);
        assert!(w.past().iter().all(|&p| p <= 1e-12));
    }

    #[test]
    fn degenerate_schedule_rejected() {
        assert!(matches!(compute_round_weights(2, 0.0, 0.0), Err(Error::Config(_))));
        assert!(compute_round_weights(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn grid_search_examples() {
        let w = brute_force_optimal_weights(2, 1.0, 1.0, 0.0, 300).unwrap();
        assert!((w.as_slice()[0] - 1.0 / 3.0).abs() <= 1.0 / 300.0);
        let w = brute_force_optimal_weights(3, 1.0, 1.0, 0.5, 100).unwrap();
        for (a, b) in w.as_slice().iter().zip([0.2, 0.2, 0.6]) {
            assert!((a - b).abs() <= 0.01);
        }
        let w = brute_force_optimal_weights(4, 0.0, 1.0, 0.0, 100).unwrap();
        for a in w.as_slice() {
            assert!((a - 0.25).abs() <= 0.01);
        }
        assert!(brute_force_optimal_weights(5, 1.0, 1.0, 0.0, 100).is_err());
        assert!(brute_force_optimal_weights(3, 1.0, 1.0, 0.0, 50).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(RoundWeights::new(vec![0.5, 0.6]).is_err());
        assert!(RoundWeights::new(vec![-0.5, 1.5]).is_err());
        assert!(RoundWeights::new(vec![0.25, 0.75]).is_ok());
    }
}
