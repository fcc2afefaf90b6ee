use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, Vector};
use rand::Rng;

/// Runs `n` independent chains of `x ← x − η∇E(x) + ω`, `ω ~ N(0, σ²I)`,
/// for `steps` iterations from `x₀ ~ U[−1, 1]^d`, and returns the final states.
///
/// The caller attaches targets to the generated features.
pub fn mcmc_generate<F, R>(
    energy_grad: F,
    n: usize,
    eta: f64,
    sigma: f64,
    steps: usize,
    d: usize,
    rng: &mut R,
) -> Result<Vec<Vector>>
where
    F: Fn(&Vector) -> Vector,
    R: Rng + ?Sized,
{
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("MCMC step size must be positive, got {eta}")));
    }
    if steps == 0 {
        return Err(Error::invalid("MCMC needs at least one step"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("MCMC noise scale must be non-negative, got {sigma}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = Vector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
        for _ in 0..steps {
            let g = energy_grad(&x);
            x -= g * eta;
            if sigma > 0.0 {
                x += gaussian_vector(d, rng) * sigma;
            }
        }
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_chains_reach_the_minimizer() {
        let target = Vector::from_row_slice(&[0.5, -2.0, 1.0]);
        let t = target.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs = mcmc_generate(move |x| x - &t, 20, 0.05, 0.0, 500, 3, &mut rng).unwrap();
        for x in xs {
            assert!((x - &target).amax() < 1e-3);
        }
    }

    #[test]
    fn one_noiseless_step_from_initializer() {
        let grad = |x: &Vector| x * 2.0;
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        let xs = mcmc_generate(grad, 5, 0.1, 0.0, 1, 2, &mut a).unwrap();
        for x in xs {
            let x0 = Vector::from_fn(2, |_, _| b.random_range(-1.0..=1.0));
            assert_eq!(x, &x0 - &x0 * 0.2);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mcmc_generate(|x: &Vector| x.clone(), 1, 0.0, 0.1, 1, 2, &mut rng).is_err());
        assert!(mcmc_generate(|x: &Vector| x.clone(), 1, 0.1, 0.1, 0, 2, &mut rng).is_err());
    }

    #[test]
    fn langevin_stationary_mean_matches_gaussian_target() {
        // E(x) = ½‖x − m‖² with σ² = 2η is unadjusted Langevin for N(m, I);
        // its stationary law is Gaussian with mean m exactly.
        let m = Vector::from_row_slice(&[1.0, -0.5]);
        let mm = m.clone();
        let eta = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let xs = mcmc_generate(move |x| x - &mm, n, eta, (2.0 * eta).sqrt(), 200, 2, &mut rng).unwrap();
        for k in 0..2 {
            let vals: Vec<f64> = xs.iter().map(|x| x[k]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - m[k]).abs() <= 3.0 * se, "coord {k}: {mean} vs {}", m[k]);
        }
    }
}
