//! Experiment configuration files.
//!
//! Configs are TOML. Unknown and duplicate keys are rejected, parse errors
//! carry a line and column, and semantic validation reports every violation
//! at once.

use crate::approx::DEFAULT_HISTORY_CAPACITY;
use crate::drift::DriftConfig;
use crate::engine::AlgorithmSpec;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Every client shares one noisy quadratic; a fixed population.
    Quadratic,
    /// Clients own partitioned labeled data and fit least squares per round.
    LeastSquares,
    /// Shared quadratic, but every participating client is fresh.
    Stateless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    pub seed: u64,
    /// Seed of the base objective; `seed` when absent. Lets replicates vary
    /// the noise while keeping the problem fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_seed: Option<u64>,
    pub rounds: usize,
    pub dim: usize,
    pub population: usize,
    pub clients_per_round: usize,
    pub local_steps: usize,
    pub eta_l: f64,
    pub eta_g: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Shift client drifts to zero population mean (quadratic scenarios).
    #[serde(default = "default_true")]
    pub center_client_drift: bool,
    #[serde(default = "default_history")]
    pub history_capacity: usize,
    /// Run client updates concurrently. Output is identical either way.
    #[serde(default)]
    pub parallel: bool,
    pub drift: DriftConfig,
    pub algorithm: AlgorithmSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub least_squares: Option<LeastSquaresConfig>,
}

/// Synthetic labeled data and its partition for the least-squares scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresConfig {
    pub classes: usize,
    pub items_per_class: usize,
    /// Standard deviation of the class means around the origin.
    pub class_spread: f64,
    /// Label noise of `y = xᵀw_true + noise`.
    pub noise_sd: f64,
    /// Items each client receives.
    pub items_per_client: usize,
    /// Round subsets each client's items are split into.
    pub subsets_per_client: usize,
    /// Concentration across clients.
    pub alpha: f64,
    /// Concentration across a client's rounds.
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapConfig {
    pub window: usize,
    pub step: usize,
}

fn default_true() -> bool {
    true
}

fn default_history() -> usize {
    DEFAULT_HISTORY_CAPACITY
}

impl ExperimentConfig {
    /// All semantic violations, empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("rounds", self.rounds),
            ("dim", self.dim),
            ("population", self.population),
            ("clients_per_round", self.clients_per_round),
            ("local_steps", self.local_steps),
            ("history_capacity", self.history_capacity),
        ] {
            // rounds = 0 is a valid empty run
            if v == 0 && name != "rounds" {
                errs.push(format!("{name} must be positive"));
            }
        }
        if self.dim == 1 && self.scenario != Scenario::LeastSquares {
            errs.push("dim must be at least 2 for quadratic scenarios".into());
        }
        if self.scenario != Scenario::Stateless && self.clients_per_round > self.population {
            errs.push(format!(
                "clients_per_round ({}) exceeds population ({})",
                self.clients_per_round, self.population
            ));
        }
        if !(self.eta_l >= 0.0 && self.eta_l.is_finite()) {
            errs.push(format!("eta_l must be finite and non-negative, got {}", self.eta_l));
        }
        if !(self.eta_g > 0.0 && self.eta_g.is_finite()) {
            errs.push(format!("eta_g must be positive, got {}", self.eta_g));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            errs.push(format!("mu must be finite and non-negative, got {}", self.mu));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            errs.push(format!("L must be positive, got {}", self.l));
        } else if self.mu > self.l {
            errs.push(format!("mu ({}) must not exceed L ({})", self.mu, self.l));
        }
        errs.extend(self.drift.validate());
        errs.extend(self.algorithm.validate());
        match (self.scenario, &self.least_squares) {
            (Scenario::LeastSquares, None) => errs.push("least-squares scenario needs a [least_squares] section".into()),
            (Scenario::LeastSquares, Some(ls)) => errs.extend(ls.violations(self.population)),
            (_, Some(_)) => errs.push("[least_squares] is only valid with scenario = \"least-squares\"".into()),
            (_, None) => {}
        }
        if self.algorithm.needs_samples() && self.scenario != Scenario::LeastSquares {
            errs.push(format!(
                "algorithm {} needs the least-squares scenario",
                self.algorithm.label()
            ));
        }
        errs
    }

    pub fn objective_seed(&self) -> u64 {
        self.objective_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

impl LeastSquaresConfig {
    fn violations(&self, population: usize) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("classes", self.classes),
            ("items_per_class", self.items_per_class),
            ("items_per_client", self.items_per_client),
            ("subsets_per_client", self.subsets_per_client),
        ] {
            if v == 0 {
                errs.push(format!("least_squares.{name} must be positive"));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0) {
                errs.push(format!("least_squares.{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("class_spread", self.class_spread), ("noise_sd", self.noise_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("least_squares.{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.subsets_per_client > 0 && self.items_per_client % self.subsets_per_client != 0 {
            errs.push(format!(
                "least_squares.items_per_client ({}) must split evenly into {} subsets",
                self.items_per_client, self.subsets_per_client
            ));
        }
        if population * self.items_per_client > self.classes * self.items_per_class {
            errs.push(format!(
                "{population} clients × {} items exceed the pool of {}",
                self.items_per_client,
                self.classes * self.items_per_class
            ));
        }
        if let Some(o) = self.overlap {
            if o.step == 0 {
                errs.push("least_squares.overlap.step must be positive".into());
            }
            if o.window == 0 || o.window > self.items_per_client {
                errs.push(format!(
                    "least_squares.overlap.window must be in 1..={}, got {}",
                    self.items_per_client, o.window
                ));
            }
        }
        errs
    }
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
scenario = "quadratic"
seed = 1
rounds = 5
dim = 4
population = 3
clients_per_round = 2
local_steps = 2
eta_l = 0.01
eta_g = 1.0
mu = 1.0
L = 5.0

[drift]
client_var = 0.01
time_var = 100.0
sgd_var = 1e-5

[algorithm]
kind = "fed-avg"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.l, 5.0);
        assert!(cfg.center_client_drift);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn duplicate_key_rejected_with_position() {
        let text = BASE.replace("seed = 1", "seed = 1\nseed = 2");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = BASE.replace("seed = 1", "seed = 1\nsed = 2");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn every_violation_listed() {
        let text = BASE
            .replace("time_var = 100.0", "time_var = -1.0")
            .replace("clients_per_round = 2", "clients_per_round = 9")
            .replace("eta_g = 1.0", "eta_g = 0.0");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Validation(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v.iter().any(|m| m.contains("drift.time_var")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn sample_approximators_need_least_squares() {
        let text = BASE.replace(
            "kind = \"fed-avg\"",
            "kind = \"cfl\"\n[algorithm.approximator]\nmethod = \"core-set\"\nm = 5\nselection = \"naive\"\n[algorithm.weights]\nmode = \"uniform\"",
        );
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Validation(_))));
    }
}
