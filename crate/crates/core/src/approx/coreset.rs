use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objectives::SampleSet;
use rand::Rng;

/// Indices of retained samples, in selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreSet {
    pub indices: Vec<usize>,
    pub capacity: usize,
}

impl CoreSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn samples(&self, from: &SampleSet) -> Result<SampleSet> {
        from.select(&self.indices)
    }
}

/// `min(m, n)` distinct indices drawn uniformly without replacement.
pub fn select_core_set_naive<R: Rng + ?Sized>(samples: &SampleSet, m: usize, rng: &mut R) -> Result<CoreSet> {
    if m == 0 {
        return Err(Error::invalid("core-set capacity must be positive"));
    }
    let n = samples.len();
    let indices = rand::seq::index::sample(rng, n, m.min(n)).into_vec();
    Ok(CoreSet { indices, capacity: m })
}

/// Greedy herding: the k-th exemplar brings the running feature mean of the
/// chosen set closest to the mean feature of all samples. Exemplars are
/// distinct and ties go to the lowest index.
pub fn select_core_set_icarl<F>(samples: &SampleSet, m: usize, feature_fn: F) -> Result<CoreSet>
where
    F: Fn(&Vector) -> Vector,
{
    if m == 0 {
        return Err(Error::invalid("core-set capacity must be positive"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("cannot select from an empty sample set"));
    }
    let feats: Vec<Vector> = samples.features().iter().map(&feature_fn).collect();
    let n = feats.len();
    let mean = feats.iter().fold(Vector::zeros(feats[0].len()), |acc, f| acc + f) / n as f64;
    let mut chosen = vec![false; n];
    let mut running = Vector::zeros(mean.len());
    let mut indices = Vec::with_capacity(m.min(n));
    for k in 1..=m.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for (j, f) in feats.iter().enumerate() {
            if chosen[j] {
                continue;
            }
            let dist = (&mean - (&running + f) / k as f64).norm();
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((j, dist));
            }
        }
        let (j, _) = best.expect("at least one unchosen sample");
        chosen[j] = true;
        running += &feats[j];
        indices.push(j);
    }
    Ok(CoreSet { indices, capacity: m })
}
