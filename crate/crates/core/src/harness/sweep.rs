//! Learning-rate sweeps over seed replicates.

use super::config::ExperimentConfig;
use super::metrics::final_loss;
use crate::engine::Experiment;
use crate::error::{Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lr: f64,
    /// Final loss per seed, in the order the seeds were given; infinite for
    /// diverged runs.
    pub per_seed: Vec<f64>,
    /// Mean of `per_seed`; infinite when any run diverged.
    pub mean_final_loss: f64,
    pub diverged_fraction: f64,
    /// Mean final loss is below the mean loss at the starting point.
    pub improving: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Lowest mean among rows with no diverged run; ties go to the smaller lr.
    pub best_lr: Option<f64>,
}

impl SweepTable {
    pub fn row(&self, lr: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.lr == lr)
    }

    pub fn best(&self) -> Option<&SweepRow> {
        self.best_lr.and_then(|lr| self.row(lr))
    }
}

/// Runs every `(lr, seed)` pair. Runs execute concurrently; the table is
/// reduced in the given lr and seed order.
pub fn lr_sweep(cfg: &ExperimentConfig, lrs: &[f64], seeds: &[u64]) -> Result<SweepTable> {
    if lrs.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("a sweep needs at least one learning rate and one seed"));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..lrs.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let mut c = cfg.clone();
            c.eta_l = lrs[i];
            c.seed = seed;
            c.parallel = false;
            let mut exp = Experiment::new(&c)?;
            let start = exp.global().gradient(exp.w())?.norm();
            let records = exp.run()?;
            Ok((final_loss(&records), start))
        })
        .collect::<Result<_>>()?;

    let n = seeds.len();
    let rows: Vec<SweepRow> = lrs
        .iter()
        .enumerate()
        .map(|(i, &lr)| {
            let chunk = &results[i * n..(i + 1) * n];
            let per_seed: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let diverged = per_seed.iter().filter(|v| !v.is_finite()).count();
            let mean = per_seed.iter().sum::<f64>() / n as f64;
            let start = chunk.iter().map(|r| r.1).sum::<f64>() / n as f64;
            SweepRow {
                lr,
                mean_final_loss: mean,
                diverged_fraction: diverged as f64 / n as f64,
                improving: mean < start,
                per_seed,
            }
        })
        .collect();
    let best_lr = rows
        .iter()
        .filter(|r| r.diverged_fraction == 0.0 && r.mean_final_loss.is_finite())
        .min_by(|a, b| {
            a.mean_final_loss
                .total_cmp(&b.mean_final_loss)
                .then(a.lr.total_cmp(&b.lr))
        })
        .map(|r| r.lr);
    Ok(SweepTable { rows, best_lr })
}
