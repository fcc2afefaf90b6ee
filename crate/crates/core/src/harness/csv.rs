//! Per-round CSV output and the one-line run summary.

use super::metrics::{final_loss, smoothness_metric, SMOOTHNESS_WINDOW};
use crate::engine::RunRecord;
use crate::error::Result;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: &str = "round,loss,dist_to_opt,info_loss,diverged";

// `{:?}` on f64 is the shortest string that parses back to the same value.
fn float(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    let mut buf = String::with_capacity(64 * (records.len() + 1));
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for r in records {
        let _ = writeln!(
            buf,
            "{},{},{},{},{}",
            r.round,
            float(r.loss),
            opt(r.dist_to_opt),
            opt(r.info_loss),
            r.diverged
        );
    }
    out.write_all(buf.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Writes the CSV to `path`, creating parent directories.
pub fn emit_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(file))
}

/// `setting=<name> algo=<name> final_loss=<v> smoothness=<v> diverged=<bool>`
pub fn summary_line(setting: &str, algo: &str, records: &[RunRecord]) -> String {
    let losses: Vec<f64> = records.iter().map(|r| r.loss).collect();
    let window = SMOOTHNESS_WINDOW.min(losses.len());
    let smooth = smoothness_metric(&losses, window).unwrap_or(f64::NAN);
    let diverged = records.iter().any(|r| r.diverged);
    format!(
        "setting={setting} algo={algo} final_loss={} smoothness={} diverged={diverged}",
        float(final_loss(records)),
        float(smooth)
    )
}
