//! Experiment driver: configs, presets, sweeps, theorem checks and output.

pub mod config;
mod csv;
mod metrics;
mod presets;
mod sweep;
mod theorem;

pub use config::{load_config, ExperimentConfig, LeastSquaresConfig, OverlapConfig, Scenario};
pub use csv::{emit_csv, summary_line, write_csv, CSV_HEADER};
pub use metrics::{final_loss, smoothness_metric, FINAL_WINDOW, SMOOTHNESS_WINDOW};
pub use presets::{best_lr, default_cfl, fedprox, nqm_config, preset, preset_names, PresetSetting, DEFAULT_LR_GRID};
pub use sweep::{lr_sweep, SweepRow, SweepTable};
pub use theorem::{
    step_bound, theorem1_check, CheckStatus, RoundCheck, Theorem1Report, TheoremConstants, TheoremInputs,
    MIN_REPLICATES,
};
