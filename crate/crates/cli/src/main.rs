//! Command-line driver for the simulator.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config error, 3 check failure.

use cfl_core::engine::{run_experiment, AlgorithmSpec};
use cfl_core::harness::{
    best_lr, default_cfl, emit_csv, fedprox, load_config, lr_sweep, nqm_config, summary_line, theorem1_check,
    CheckStatus, ExperimentConfig, PresetSetting, DEFAULT_LR_GRID, MIN_REPLICATES,
};
use cfl_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Directory for outputs whose path is not given with `--out`.
const OUT_DIR_ENV: &str = "CFLSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "cflsim", version, about = "Deterministic continual federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its per-round CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the eight noisy-quadratic settings.
    Preset {
        name: String,
        /// Algorithm to run; defaults to CFL with Taylor approximations.
        #[arg(long, value_enum, default_value_t = Algo::Cfl)]
        algo: Algo,
        /// Local learning rate; defaults to the setting's reported best.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep local learning rates over seeds and report the best.
    Sweep {
        config: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        lrs: Option<Vec<f64>>,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numeric checks of the convergence theory.
    Check {
        #[command(subcommand)]
        which: Check,
    },
    /// Write the data partition of a least-squares config.
    Partition {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Check {
    /// One-round progress bound, estimated over seed replicates.
    Theorem1 {
        config: PathBuf,
        #[arg(long, default_value_t = MIN_REPLICATES)]
        replicates: usize,
        /// Fraction of rounds that must satisfy the bound.
        #[arg(long, default_value_t = 0.99)]
        min_rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Fedavg,
    Fedprox,
    Cfl,
}

enum Failure {
    Config(String),
    Check(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Validation(_) | Error::Parse { .. } => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    load_config(path).map_err(|e| match e {
        Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

/// `--out` if given, else `<name>` inside the output directory.
fn output_path(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        dir.join(name)
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run_and_emit(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<(), Failure> {
    let records = run_experiment(cfg)?;
    let path = output_path(out, &format!("{}.csv", cfg.name));
    emit_csv(&records, &path)?;
    println!("{}", summary_line(&cfg.name, &cfg.algorithm.label(), &records));
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => run_and_emit(&load(&config)?, out),
        Command::Preset {
            name,
            algo,
            lr,
            seed,
            rounds,
            out,
        } => {
            let setting = PresetSetting::parse(&name)?;
            let spec = match algo {
                Algo::Fedavg => AlgorithmSpec::FedAvg {},
                Algo::Fedprox => fedprox(),
                Algo::Cfl => default_cfl(&setting),
            };
            let lr = lr.unwrap_or_else(|| best_lr(&setting, &spec).expect("table covers every setting"));
            let mut cfg = nqm_config(&setting, spec, lr);
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            cfg.validate()?;
            run_and_emit(&cfg, out)
        }
        Command::Sweep {
            config,
            lrs,
            seeds,
            out,
        } => {
            let cfg = load(&config)?;
            let lrs = lrs.unwrap_or_else(|| DEFAULT_LR_GRID.to_vec());
            let table = lr_sweep(&cfg, &lrs, &seeds)?;
            let mut text = String::from("lr,mean_final_loss,diverged_fraction,improving\n");
            for r in &table.rows {
                let _ = writeln!(
                    text,
                    "{:?},{:?},{:?},{}",
                    r.lr, r.mean_final_loss, r.diverged_fraction, r.improving
                );
            }
            write_file(&output_path(out, &format!("{}-sweep.csv", cfg.name)), &text)?;
            print!("{text}");
            match table.best_lr {
                Some(lr) => println!("setting={} algo={} best_lr={lr:?}", cfg.name, cfg.algorithm.label()),
                None => println!("setting={} algo={} best_lr=none", cfg.name, cfg.algorithm.label()),
            }
            Ok(())
        }
        Command::Check {
            which:
                Check::Theorem1 {
                    config,
                    replicates,
                    min_rate,
                    out,
                },
        } => {
            let cfg = load(&config)?;
            let report = theorem1_check(&cfg, replicates)?;
            let mut text = String::from("t,lhs,rhs,phi,holds\n");
            for r in &report.rounds {
                let _ = writeln!(text, "{},{:?},{:?},{:?},{}", r.t, r.lhs, r.rhs, r.phi, r.holds);
            }
            write_file(&output_path(out, &format!("{}-theorem1.csv", cfg.name)), &text)?;
            match &report.status {
                CheckStatus::Skipped(why) => {
                    println!("check=theorem1 setting={} status=skipped reason={why:?}", cfg.name);
                    Ok(())
                }
                CheckStatus::Checked => {
                    println!(
                        "check=theorem1 setting={} status=checked rate={:?} rounds={} replicates={} eta={:?} step_bound={:?} r={:?} phi_constant={:?}",
                        cfg.name,
                        report.satisfaction_rate,
                        report.rounds.len(),
                        report.replicates,
                        report.eta,
                        report.step_bound,
                        report.r,
                        report.phi_constant
                    );
                    if report.passes(min_rate) {
                        Ok(())
                    } else {
                        Err(Failure::Check(format!(
                            "bound held in {:?} of rounds, below {min_rate:?}",
                            report.satisfaction_rate
                        )))
                    }
                }
            }
        }
        Command::Partition { config, out } => {
            let cfg = load(&config)?;
            let manifest = cfl_core::engine::build_manifest(&cfg)?;
            let mut buf = Vec::new();
            manifest.write_to(&mut buf)?;
            let path = output_path(out, &format!("{}-partition.txt", cfg.name));
            write_file(&path, &String::from_utf8(buf).expect("manifest is ascii"))?;
            println!(
                "setting={} clients={} subsets={} subset_size={}",
                cfg.name,
                manifest.clients.len(),
                manifest.num_subsets(),
                manifest.subset_size
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
