use super::taylor::ApproxObjective;
use crate::engine::RoundWeights;
use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;
use std::collections::VecDeque;

pub const DEFAULT_HISTORY_CAPACITY: usize = 40;

/// Bounded FIFO of past-round artifacts; the oldest entry is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer<T> {
    entries: VecDeque<T>,
    capacity: usize,
}

impl<T> HistoryBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Appends `item`, returning the evicted entry when full.
    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(item);
        evicted
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }
}

impl<T> Default for HistoryBuffer<T> {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY_CAPACITY)
    }
}

/// `p_t·current_grad + Σ_τ p_τ·∇f̃_τ(w)`.
///
/// `weights` runs oldest to newest and its last entry belongs to the current
/// round, so it must be one longer than `history`.
pub fn cfl_combined_gradient<T: AsRef<ApproxObjective>>(
    current_grad: &Vector,
    history: &HistoryBuffer<T>,
    weights: &RoundWeights,
    w: &Vector,
) -> Result<Vector> {
    check_dim(current_grad.len(), w.len())?;
    let p = weights.as_slice();
    if p.len() != history.len() + 1 {
        return Err(Error::invalid(format!(
            "{} weights for {} history entries plus the current round",
            p.len(),
            history.len()
        )));
    }
    let mut g = current_grad * p[history.len()];
    for (entry, &pt) in history.iter().zip(p) {
        if pt != 0.0 {
            g += entry.as_ref().gradient(w)? * pt;
        }
    }
    Ok(g)
}
