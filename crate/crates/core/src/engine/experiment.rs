//! Builds a population from a config and drives it for `T` rounds.

use super::client::{Client, Labeler, LocalData, RoundSamples};
use super::server::{run_round, Participation, Population, RoundConfig, RunRecord, ServerState};
use crate::drift::population;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, LeastSquaresConfig, Scenario};
use crate::linalg::{gaussian_vector, Vector};
use crate::objectives::{build_quadratic, fit_least_squares, QuadraticObjective, SampleSet};
use crate::partition::{hierarchical_split, LabeledPool, PartitionManifest};
use crate::rng::{self, derive_seed, StreamTag};
use std::sync::Arc;

/// Materializes the clients and global objective described by `cfg`.
pub fn build_population(cfg: &ExperimentConfig) -> Result<Population> {
    match cfg.scenario {
        Scenario::Quadratic | Scenario::Stateless => {
            let base = build_quadratic(cfg.dim, cfg.mu, cfg.l, derive_seed(cfg.objective_seed(), StreamTag::Objective, &[]))?;
            let optimum = base.exact_optimum().ok();
            let shared = Arc::new(base.clone());
            let participation = if cfg.scenario == Scenario::Quadratic {
                let states = population(cfg.seed, cfg.population, cfg.dim, cfg.drift, cfg.center_client_drift)?;
                Participation::Stateful(
                    states
                        .into_iter()
                        .map(|s| Client::new(s, LocalData::Shared(shared.clone()), cfg.history_capacity))
                        .collect(),
                )
            } else {
                Participation::Stateless {
                    base: shared,
                    drift: cfg.drift,
                    history_capacity: cfg.history_capacity,
                }
            };
            Ok(Population {
                global: base,
                optimum,
                participation,
            })
        }
        Scenario::LeastSquares => {
            let ls = cfg
                .least_squares
                .as_ref()
                .ok_or_else(|| Error::config("least-squares scenario needs a [least_squares] section"))?;
            least_squares_population(cfg, ls)
        }
    }
}

fn least_squares_population(cfg: &ExperimentConfig, ls: &LeastSquaresConfig) -> Result<Population> {
    let d = cfg.dim;
    let mut data_rng = rng::stream(cfg.objective_seed(), StreamTag::Data, &[]);
    let labeler = Arc::new(Labeler {
        w_true: gaussian_vector(d, &mut data_rng),
        noise_sd: ls.noise_sd,
    });
    let means: Vec<Vector> = (0..ls.classes)
        .map(|_| gaussian_vector(d, &mut data_rng) * ls.class_spread)
        .collect();
    let mut features = Vec::with_capacity(ls.classes * ls.items_per_class);
    let mut targets = Vec::with_capacity(ls.classes * ls.items_per_class);
    for mean in &means {
        for _ in 0..ls.items_per_class {
            let x = mean + gaussian_vector(d, &mut data_rng);
            targets.push(labeler.label(&x, &mut data_rng));
            features.push(x);
        }
    }
    let all = SampleSet::new(features, targets)?;
    let manifest = build_manifest(cfg)?;

    let states = population(cfg.seed, cfg.population, d, cfg.drift, cfg.center_client_drift)?;
    let mut clients = Vec::with_capacity(cfg.population);
    let mut used: Vec<usize> = Vec::new();
    for (state, subsets) in states.into_iter().zip(&manifest.clients) {
        let sets = subsets
            .iter()
            .map(|ids| {
                let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                used.extend(&idx);
                all.select(&idx)
            })
            .collect::<Result<Vec<_>>>()?;
        let source = match ls.overlap {
            Some(o) => {
                let idx: Vec<usize> = subsets.iter().flatten().map(|&i| i as usize).collect();
                RoundSamples::Window {
                    sequence: all.select(&idx)?,
                    window: o.window,
                    step: o.step,
                }
            }
            None => RoundSamples::Subsets(sets),
        };
        let data = LocalData::Samples {
            source,
            labeler: labeler.clone(),
        };
        clients.push(Client::new(state, data, cfg.history_capacity));
    }
    used.sort_unstable();
    let global = fit_least_squares(&all.select(&used)?)?;
    let optimum = global.exact_optimum().ok();
    Ok(Population {
        global,
        optimum,
        participation: Participation::Stateful(clients),
    })
}

/// The item partition of a least-squares config: item `j` of class `c` has
/// id `c·items_per_class + j`.
pub fn build_manifest(cfg: &ExperimentConfig) -> Result<PartitionManifest> {
    let ls = cfg
        .least_squares
        .as_ref()
        .ok_or_else(|| Error::config("partitioning needs a [least_squares] section"))?;
    let pool = LabeledPool::balanced(ls.classes, ls.items_per_class)?;
    let mut r = rng::stream(cfg.objective_seed(), StreamTag::Partition, &[]);
    hierarchical_split(
        &pool,
        cfg.population,
        ls.subsets_per_client,
        ls.items_per_client,
        ls.alpha,
        ls.beta,
        &mut r,
    )
}

/// A run in progress; exposes the iterate between rounds.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub server: ServerState,
    pub population: Population,
    pub round_config: RoundConfig,
    pub rounds: usize,
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let population = build_population(cfg)?;
        let dim = population.global.dim();
        Ok(Self {
            server: ServerState::new(Vector::zeros(dim), cfg.seed, cfg.history_capacity),
            population,
            round_config: RoundConfig {
                spec: cfg.algorithm.clone(),
                clients_per_round: cfg.clients_per_round,
                local_steps: cfg.local_steps,
                eta_l: cfg.eta_l,
                eta_g: cfg.eta_g,
                parallel: cfg.parallel,
            },
            rounds: cfg.rounds,
        })
    }

    pub fn w(&self) -> &Vector {
        &self.server.w
    }

    pub fn global(&self) -> &QuadraticObjective {
        &self.population.global
    }

    pub fn step(&mut self) -> Result<RunRecord> {
        run_round(&mut self.server, &mut self.population, &self.round_config)
    }

    /// Runs the remaining rounds. A diverged round is recorded and ends the run.
    pub fn run(&mut self) -> Result<Vec<RunRecord>> {
        let mut out = Vec::with_capacity(self.rounds);
        while (self.server.round as usize) < self.rounds {
            let rec = self.step()?;
            let stop = rec.diverged;
            out.push(rec);
            if stop {
                break;
            }
        }
        Ok(out)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    Experiment::new(cfg)?.run()
}
