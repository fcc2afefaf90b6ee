use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::objectives::{Objective, QuadraticObjective};
use rand::Rng;

/// Second-order summary of a past objective around `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxObjective {
    pub anchor: Vector,
    pub grad_at_anchor: Vector,
    pub hessian_at_anchor: Matrix,
    pub origin_round: u64,
}

impl ApproxObjective {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// `∇f(â) + ∇²f(â)(w − â)`.
    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dim(), w.len())?;
        Ok(&self.grad_at_anchor + &self.hessian_at_anchor * (w - &self.anchor))
    }

    /// The approximation whose gradient is the mean of the parts' gradients.
    /// Exact, since a mean of affine maps is affine.
    pub fn average(parts: &[ApproxObjective], origin_round: u64) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot average an empty set of approximations"))?;
        let d = first.dim();
        let n = parts.len() as f64;
        let mut anchor = Vector::zeros(d);
        let mut hess = Matrix::zeros(d, d);
        let mut offset = Vector::zeros(d);
        for p in parts {
            check_dim(d, p.dim())?;
            anchor += &p.anchor;
            hess += &p.hessian_at_anchor;
            offset += &p.grad_at_anchor - &p.hessian_at_anchor * &p.anchor;
        }
        let anchor = anchor / n;
        let hess = hess / n;
        let grad = offset / n + &hess * &anchor;
        Ok(Self {
            anchor,
            grad_at_anchor: grad,
            hessian_at_anchor: hess,
            origin_round,
        })
    }
}

impl AsRef<ApproxObjective> for ApproxObjective {
    fn as_ref(&self) -> &ApproxObjective {
        self
    }
}

/// Stores the exact gradient and Hessian of `obj` at `anchor`.
pub fn taylor_fit(obj: &Objective, anchor: &Vector, origin_round: u64) -> Result<ApproxObjective> {
    check_dim(obj.dim(), anchor.len())?;
    Ok(ApproxObjective {
        anchor: anchor.clone(),
        grad_at_anchor: obj.gradient(anchor)?,
        hessian_at_anchor: obj.hessian()?,
        origin_round,
    })
}

pub(crate) fn taylor_fit_quadratic(q: &QuadraticObjective, anchor: &Vector, origin_round: u64) -> Result<ApproxObjective> {
    Ok(ApproxObjective {
        anchor: anchor.clone(),
        grad_at_anchor: q.gradient(anchor)?,
        hessian_at_anchor: q.hessian(),
        origin_round,
    })
}

pub fn approx_gradient(approx: &ApproxObjective, w: &Vector) -> Result<Vector> {
    approx.gradient(w)
}

/// Adds a random symmetric matrix of spectral norm exactly `eps` to the stored Hessian.
pub fn perturb_hessian<R: Rng + ?Sized>(approx: &ApproxObjective, eps: f64, rng: &mut R) -> Result<ApproxObjective> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("perturbation size must be finite and non-negative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(approx.clone());
    }
    let d = approx.dim();
    let mut e = Matrix::zeros(d, d);
    let mut norm = 0.0;
    while norm == 0.0 {
        e = linalg::symmetrize(&linalg::gaussian_matrix(d, d, rng));
        norm = linalg::symmetric_spectral_norm(&e);
    }
    let mut out = approx.clone();
    out.hessian_at_anchor = linalg::symmetrize(&(&approx.hessian_at_anchor + e * (eps / norm)));
    Ok(out)
}

/// `‖∇f(w) − ∇f̃(w)‖₂`.
pub fn info_loss(obj: &Objective, approx: &ApproxObjective, w: &Vector) -> Result<f64> {
    check_dim(approx.dim(), w.len())?;
    Ok((obj.gradient(w)? - approx.gradient(w)?).norm())
}

/// `1/(tS) Σᵢ Σ_τ ‖Δ_{τ,i}‖`, with `records[i][τ]` the loss of client `i`'s
/// approximation from round `τ`.
pub fn avg_info_loss(records: &[Vec<f64>], t: usize, s: usize) -> Result<f64> {
    if t == 0 || s == 0 {
        return Err(Error::invalid("t and S must be positive"));
    }
    if records.len() != s {
        return Err(Error::MissingRecords(format!("expected {s} clients, found {}", records.len())));
    }
    let mut total = 0.0;
    for (i, row) in records.iter().enumerate() {
        if row.len() != t {
            return Err(Error::MissingRecords(format!(
                "client {i} has {} of {t} rounds",
                row.len()
            )));
        }
        total += row.iter().sum::<f64>();
    }
    Ok(total / (t * s) as f64)
}
