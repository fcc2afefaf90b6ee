use crate::engine::RunRecord;
use crate::error::{Error, Result};

/// Rounds averaged into a run's final loss.
pub const FINAL_WINDOW: usize = 10;

/// Window used when comparing curve smoothness.
pub const SMOOTHNESS_WINDOW: usize = 20;

/// Mean over all sliding windows of the population standard deviation inside
/// the window.
pub fn smoothness_metric(series: &[f64], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    if window > series.len() {
        return Err(Error::invalid(format!(
            "window {window} exceeds series length {}",
            series.len()
        )));
    }
    let n = window as f64;
    let positions = series.len() - window + 1;
    let mut total = 0.0;
    for win in series.windows(window) {
        let mean = win.iter().sum::<f64>() / n;
        let var = win.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        total += var.sqrt();
    }
    Ok(total / positions as f64)
}

/// Mean loss of the last `FINAL_WINDOW` rounds (fewer if the run is shorter);
/// infinite for a diverged run.
pub fn final_loss(records: &[RunRecord]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    if records.iter().any(|r| r.diverged) {
        return f64::INFINITY;
    }
    let tail = &records[records.len().saturating_sub(FINAL_WINDOW)..];
    tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothness_examples() {
        assert_eq!(smoothness_metric(&[3.0; 30], 5).unwrap(), 0.0);
        let alt: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        assert!((smoothness_metric(&alt, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(smoothness_metric(&alt, 0).is_err());
        assert!(smoothness_metric(&alt[..3], 4).is_err());
    }

    #[test]
    fn final_loss_uses_last_ten() {
        let recs: Vec<RunRecord> = (1..=20)
            .map(|i| RunRecord {
                round: i,
                loss: i as f64,
                dist_to_opt: None,
                info_loss: None,
                diverged: false,
            })
            .collect();
        assert_eq!(final_loss(&recs), 15.5);
        assert_eq!(final_loss(&recs[..2]), 1.5);
    }
}
