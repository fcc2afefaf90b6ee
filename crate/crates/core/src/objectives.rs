//! Convex objectives: the noisy quadratic model and sample least squares.
//!
//! All quadratics use the convention `f(w) = wᵀAw + bᵀw + c`, so the gradient
//! is `2Aw + b` and the Hessian is `2A`. The loss metric reported everywhere
//! is the norm of that gradient.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng::{self, StreamTag};
use rand::Rng;

/// `f(w) = wᵀAw + bᵀw + c` with `mu ≤ λ(A) ≤ L`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub a: Matrix,
    pub b: Vector,
    pub c: f64,
    pub mu: f64,
    pub l: f64,
}

impl QuadraticObjective {
    /// Builds a quadratic from explicit parts; `mu` and `L` are read off the spectrum of `a`.
    pub fn new(a: Matrix, b: Vector, c: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("A must be square"));
        }
        check_dim(a.nrows(), b.len())?;
        if linalg::asymmetry(&a) > 1e-12 {
            return Err(Error::invalid("A must be symmetric"));
        }
        let a = linalg::symmetrize(&a);
        let ev = linalg::sorted_eigenvalues(&a);
        let (mu, l) = (ev[0].max(0.0), ev[ev.len() - 1]);
        Ok(Self { a, b, c, mu, l })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        Ok(w.dot(&(&self.a * w)) + self.b.dot(w) + self.c)
    }

    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dim(), w.len())?;
        Ok(&self.a * w * 2.0 + &self.b)
    }

    pub fn hessian(&self) -> Matrix {
        &self.a * 2.0
    }

    /// Same curvature, linear term moved by `shift`. A drifted local objective
    /// has gradient `gradient(w) + shift`.
    pub fn with_linear_shift(&self, shift: &Vector) -> Result<Self> {
        check_dim(self.dim(), shift.len())?;
        Ok(Self {
            b: &self.b + shift,
            ..self.clone()
        })
    }

    /// Least-norm minimizer of `f`, solving `2Aw + b = 0`.
    pub fn exact_optimum(&self) -> Result<Vector> {
        let eig = self.a.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1.0);
        let mut w = Vector::zeros(self.dim());
        let mut outside = 0.0;
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let u = eig.eigenvectors.column(j);
            let coef = u.dot(&self.b);
            if lambda.abs() > 1e-10 * scale {
                w -= u * (coef / (2.0 * lambda));
            } else {
                outside += coef * coef;
            }
        }
        if outside.sqrt() > 1e-8 {
            return Err(Error::Unbounded);
        }
        Ok(w)
    }

    /// Mean of several quadratics of equal dimension.
    pub fn average(parts: &[&QuadraticObjective]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot average an empty set of objectives"))?;
        let d = first.dim();
        let mut a = Matrix::zeros(d, d);
        let mut b = Vector::zeros(d);
        let mut c = 0.0;
        for p in parts {
            check_dim(d, p.dim())?;
            a += &p.a;
            b += &p.b;
            c += p.c;
        }
        let n = parts.len() as f64;
        Self::new(a / n, b / n, c / n)
    }
}

/// Builds the noisy-quadratic-model objective `A = UᵀΛU`.
///
/// `Λ` has entries uniform in `[mu, L]` with the first pinned to `mu` and the
/// last pinned to `L`; `U` is Haar-orthogonal; `b` is standard Gaussian and
/// `c = 0`. When eigenvalues are exactly zero (`mu = 0`) the component of `b`
/// along their eigenvectors is removed so the objective stays bounded below.
pub fn build_quadratic(d: usize, mu: f64, l: f64, seed: u64) -> Result<QuadraticObjective> {
    if d < 2 {
        return Err(Error::config(format!("dimension must be at least 2, got {d}")));
    }
    if !(mu >= 0.0 && mu.is_finite() && l.is_finite()) {
        return Err(Error::config(format!("mu must be finite and non-negative, got {mu}")));
    }
    if mu > l {
        return Err(Error::config(format!("mu ({mu}) must not exceed L ({l})")));
    }
    let mut rng = rng::stream(seed, StreamTag::Objective, &[]);
    let mut lambda: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..=1.0) * (l - mu) + mu).collect();
    lambda[0] = mu;
    lambda[d - 1] = l;
    let u = linalg::random_orthogonal(d, &mut rng);
    let diag = Matrix::from_diagonal(&Vector::from_vec(lambda.clone()));
    let a = linalg::symmetrize(&(u.transpose() * diag * &u));
    let mut b = linalg::gaussian_vector(d, &mut rng);
    // rows of U are the eigenvectors of UᵀΛU
    for (j, &lam) in lambda.iter().enumerate() {
        if lam == 0.0 {
            let v = u.row(j).transpose();
            let coef = v.dot(&b);
            b -= v * coef;
        }
    }
    Ok(QuadraticObjective {
        a,
        b,
        c: 0.0,
        mu,
        l,
    })
}

/// Labeled samples `(x_j, y_j)` for least-squares objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    features: Vec<Vector>,
    targets: Vec<f64>,
}

impl SampleSet {
    pub fn new(features: Vec<Vector>, targets: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("sample set must not be empty"));
        }
        if features.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} feature vectors but {} targets",
                features.len(),
                targets.len()
            )));
        }
        let d = features[0].len();
        for x in &features {
            check_dim(d, x.len())?;
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vector] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut xs = Vec::with_capacity(indices.len());
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("sample index {i} out of bounds")));
            }
            xs.push(self.features[i].clone());
            ys.push(self.targets[i]);
        }
        Self::new(xs, ys)
    }

    /// Concatenation of two sample sets.
    pub fn concat(&self, other: &SampleSet) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let mut xs = self.features.clone();
        xs.extend(other.features.iter().cloned());
        let mut ys = self.targets.clone();
        ys.extend_from_slice(&other.targets);
        Self::new(xs, ys)
    }

    /// Mean squared residual `(1/n) Σ (xⱼᵀw − yⱼ)²`, evaluated sample by sample.
    pub fn mean_squared_residual(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        let total: f64 = self
            .features
            .iter()
            .zip(&self.targets)
            .map(|(x, y)| (x.dot(w) - y).powi(2))
            .sum();
        Ok(total / self.len() as f64)
    }

    fn residual_gradient(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dim(), w.len())?;
        let mut g = Vector::zeros(self.dim());
        for (x, y) in self.features.iter().zip(&self.targets) {
            g += x * (2.0 * (x.dot(w) - y));
        }
        Ok(g / self.len() as f64)
    }
}

/// Canonical quadratic form of the mean squared residual:
/// `A = (1/n)Σxxᵀ`, `b = −(2/n)Σyx`, `c = (1/n)Σy²`.
pub fn fit_least_squares(samples: &SampleSet) -> Result<QuadraticObjective> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit an empty sample set"));
    }
    let d = samples.dim();
    let n = samples.len() as f64;
    let mut a = Matrix::zeros(d, d);
    let mut b = Vector::zeros(d);
    let mut c = 0.0;
    for (x, &y) in samples.features().iter().zip(samples.targets()) {
        a += x * x.transpose();
        b -= x * (2.0 * y);
        c += y * y;
    }
    QuadraticObjective::new(linalg::symmetrize(&(a / n)), b / n, c / n)
}

/// Any objective the simulator optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(QuadraticObjective),
    LeastSquares(SampleSet),
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim(),
            Objective::LeastSquares(s) => s.dim(),
        }
    }

    pub fn value(&self, w: &Vector) -> Result<f64> {
        match self {
            Objective::Quadratic(q) => q.value(w),
            Objective::LeastSquares(s) => s.mean_squared_residual(w),
        }
    }

    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        match self {
            Objective::Quadratic(q) => q.gradient(w),
            Objective::LeastSquares(s) => s.residual_gradient(w),
        }
    }

    pub fn hessian(&self) -> Result<Matrix> {
        Ok(self.as_quadratic()?.hessian())
    }

    pub fn exact_optimum(&self) -> Result<Vector> {
        self.as_quadratic()?.exact_optimum()
    }

    /// The equivalent quadratic form (a clone for `Quadratic`).
    pub fn as_quadratic(&self) -> Result<QuadraticObjective> {
        match self {
            Objective::Quadratic(q) => Ok(q.clone()),
            Objective::LeastSquares(s) => fit_least_squares(s),
        }
    }
}

impl From<QuadraticObjective> for Objective {
    fn from(q: QuadraticObjective) -> Self {
        Objective::Quadratic(q)
    }
}

impl From<SampleSet> for Objective {
    fn from(s: SampleSet) -> Self {
        Objective::LeastSquares(s)
    }
}

pub fn gradient(obj: &Objective, w: &Vector) -> Result<Vector> {
    obj.gradient(w)
}

/// `‖∇f(w)‖`, zero exactly at the optimum.
pub fn loss_metric(obj: &Objective, w: &Vector) -> Result<f64> {
    Ok(obj.gradient(w)?.norm())
}

pub fn exact_optimum(obj: &Objective) -> Result<Vector> {
    obj.exact_optimum()
}
