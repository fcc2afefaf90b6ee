//! The eight noisy-quadratic settings: small or large `L`, strongly or
//! generally convex, small or big round drift.

use super::config::{ExperimentConfig, Scenario};
use crate::approx::DEFAULT_HISTORY_CAPACITY;
use crate::drift::DriftConfig;
use crate::engine::AlgorithmSpec;
use crate::error::{Error, Result};

/// Learning rates swept when no grid is given.
pub const DEFAULT_LR_GRID: [f64; 9] = [0.01, 0.02, 0.03, 0.05, 0.08, 0.1, 0.2, 0.3, 0.5];

const CLIENT_VAR: f64 = 0.01;
const SGD_VAR: f64 = 1e-5;
const SMALL_DRIFT: f64 = 0.01;
const BIG_DRIFT: f64 = 100.0;
const FEDPROX_MU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PresetSetting {
    pub large_l: bool,
    pub strongly_convex: bool,
    pub big_drift: bool,
}

impl PresetSetting {
    pub fn all() -> [PresetSetting; 8] {
        let mut out = [PresetSetting {
            large_l: false,
            strongly_convex: false,
            big_drift: false,
        }; 8];
        for (i, s) in out.iter_mut().enumerate() {
            s.large_l = i & 4 != 0;
            s.strongly_convex = i & 2 == 0;
            s.big_drift = i & 1 != 0;
        }
        out
    }

    pub fn name(&self) -> String {
        format!(
            "{}-{}-{}",
            if self.large_l { "largeL" } else { "smallL" },
            if self.strongly_convex { "sc" } else { "gc" },
            if self.big_drift { "bigdrift" } else { "smalldrift" }
        )
    }

    /// Accepts the name with or without an `nqm-` prefix.
    pub fn parse(name: &str) -> Result<Self> {
        let bare = name.strip_prefix("nqm-").unwrap_or(name);
        Self::all()
            .into_iter()
            .find(|s| s.name() == bare)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown preset {name:?}; expected one of {}",
                    preset_names().join(", ")
                ))
            })
    }

    pub fn l(&self) -> f64 {
        if self.large_l {
            20.0
        } else {
            5.0
        }
    }

    pub fn mu(&self) -> f64 {
        if self.strongly_convex {
            1.0
        } else {
            0.0
        }
    }

    pub fn time_var(&self) -> f64 {
        if self.big_drift {
            BIG_DRIFT
        } else {
            SMALL_DRIFT
        }
    }

    pub fn drift(&self) -> DriftConfig {
        DriftConfig {
            client_var: CLIENT_VAR,
            time_var: self.time_var(),
            sgd_var: SGD_VAR,
        }
    }
}

pub fn preset_names() -> Vec<String> {
    PresetSetting::all().iter().map(PresetSetting::name).collect()
}

/// CFL with exact Taylor approximations and the optimal weight schedule for
/// zero information loss.
pub fn default_cfl(setting: &PresetSetting) -> AlgorithmSpec {
    AlgorithmSpec::cfl_taylor(0.0, 0.0, setting.time_var().sqrt())
}

pub fn fedprox() -> AlgorithmSpec {
    AlgorithmSpec::FedProx { prox_mu: FEDPROX_MU }
}

/// Best learning rates reported for the three algorithms on each setting.
pub fn best_lr(setting: &PresetSetting, algo: &AlgorithmSpec) -> Option<f64> {
    // columns: SL-SC, LL-SC, SL-GC, LL-GC
    let (small, big) = match algo {
        AlgorithmSpec::FedAvg {} => ([0.03, 0.08, 0.33, 0.09], [0.02, 0.01, 0.09, 0.02]),
        AlgorithmSpec::FedProx { .. } => ([0.04, 0.07, 0.35, 0.09], [0.02, 0.01, 0.26, 0.02]),
        AlgorithmSpec::Cfl { .. } => ([0.2, 0.09, 0.35, 0.09], [0.25, 0.08, 0.3, 0.08]),
    };
    let col = match (setting.large_l, setting.strongly_convex) {
        (false, true) => 0,
        (true, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    };
    Some(if setting.big_drift { big[col] } else { small[col] })
}

/// The setting's config running `algorithm` at `eta_l`.
pub fn nqm_config(setting: &PresetSetting, algorithm: AlgorithmSpec, eta_l: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: format!("nqm-{}", setting.name()),
        scenario: Scenario::Quadratic,
        seed: 0,
        objective_seed: None,
        rounds: 500,
        dim: 10,
        population: 7,
        clients_per_round: 7,
        local_steps: 3,
        eta_l,
        eta_g: 0.1,
        mu: setting.mu(),
        l: setting.l(),
        center_client_drift: true,
        history_capacity: DEFAULT_HISTORY_CAPACITY,
        parallel: false,
        drift: setting.drift(),
        algorithm,
        least_squares: None,
    }
}

/// The named setting with CFL-Taylor at its reported best learning rate.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let setting = PresetSetting::parse(name)?;
    let algo = default_cfl(&setting);
    let lr = best_lr(&setting, &algo).expect("every setting has a CFL entry");
    Ok(nqm_config(&setting, algo, lr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let names = preset_names();
        assert_eq!(names.len(), 8);
        for n in &names {
            assert_eq!(&PresetSetting::parse(n).unwrap().name(), n);
            assert_eq!(&PresetSetting::parse(&format!("nqm-{n}")).unwrap().name(), n);
        }
        assert!(PresetSetting::parse("mediumL-sc-bigdrift").is_err());
    }

    #[test]
    fn best_lr_lookup() {
        let s = PresetSetting::parse("smallL-sc-smalldrift").unwrap();
        assert_eq!(best_lr(&s, &AlgorithmSpec::FedAvg {}), Some(0.03));
        assert_eq!(best_lr(&s, &default_cfl(&s)), Some(0.2));
    }
}
