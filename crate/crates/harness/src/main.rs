//! `shadows`: plan, acquire, estimate, experiment, compare, validate.
//!
//! Exit codes: 0 success, 1 validation/runtime failure, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use shadows_core::acquisition::{load_record, run_acquisition, save_record, RngStreamSpec};
use shadows_core::estimators::{
    plan_samples, planning_norm_sq, threshold, truncated_mean, Observable, PlanRegime,
};
use shadows_core::protocol::Protocol;
use shadows_core::sources::build_source;

use shadows_harness::compare::{run_compare, write_compare_outputs};
use shadows_harness::config::{ConfigError, ExperimentConfig};
use shadows_harness::experiment::{run_experiment, write_experiment_outputs};
use shadows_harness::plan::{plan_config, render_plan};
use shadows_harness::report::write_json;
use shadows_harness::validate::run_validation;

#[derive(Parser)]
#[command(
    name = "shadows",
    about = "Classical shadow estimation for adaptive, history-dependent sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print thresholds and the planned round count.
    Plan {
        /// Experiment config (JSON).
        #[arg(long, conflicts_with_all = ["epsilon", "delta", "observables"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["delta", "observables"])]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// JSON array of shadow norms squared (general) or tr(O²) (clifford).
        #[arg(long)]
        observables: Option<String>,
        #[arg(long, default_value = "general")]
        regime: String,
        /// Write the plan as JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one acquisition and write the measurement record.
    Acquire {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        record_out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Round count; defaults to the planned N for the config.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Estimate one observable from a stored record.
    Estimate {
        #[arg(long, alias = "record-in")]
        record: PathBuf,
        /// Observable JSON, e.g. '{"pauli":"ZZ"}'.
        #[arg(long)]
        observable: String,
        /// Truncation threshold; computed from --epsilon when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the coverage experiment from a config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Compare truncated mean, plain mean and median-of-means on one config.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the exact-oracle validation suites.
    Validate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            if e.downcast_ref::<ConfigError>().is_some() {
                eprintln!("{e:#}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::from_path(path)?)
}

fn apply_overrides(
    config: &mut ExperimentConfig,
    seed: Option<u64>,
    trials: Option<usize>,
    batches: Option<usize>,
) {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(trials) = trials {
        config.trials = trials;
    }
    if batches.is_some() {
        config.batches = batches;
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Plan {
            config,
            epsilon,
            delta,
            observables,
            regime,
            out,
        } => {
            let plan = if let Some(path) = config {
                plan_config(&load_config(&path)?)?
            } else {
                let epsilon = epsilon.ok_or_else(|| anyhow!("--epsilon or --config required"))?;
                let delta = delta.ok_or_else(|| anyhow!("--delta required"))?;
                let norms: Vec<f64> = serde_json::from_str(
                    &observables.ok_or_else(|| anyhow!("--observables required"))?,
                )
                .context("cannot parse --observables as a JSON array of numbers")?;
                let regime = match regime.as_str() {
                    "general" => PlanRegime::General,
                    "clifford" => PlanRegime::Clifford,
                    other => return Err(anyhow!("unknown regime {other:?}")),
                };
                let plan = plan_samples(epsilon, delta, &norms, regime)?;
                shadows_harness::plan::PlanOutput {
                    epsilon,
                    delta,
                    observable_count: norms.len(),
                    rounds: plan.rounds,
                    observables: plan
                        .observables
                        .iter()
                        .enumerate()
                        .map(|(i, p)| shadows_harness::plan::PlannedEntry {
                            id: format!("obs{i}"),
                            norm_sq: p.norm_sq,
                            norm_source: shadows_core::estimators::NormSource::Exact,
                            threshold: p.threshold,
                        })
                        .collect(),
                }
            };
            print!("{}", render_plan(&plan));
            println!("{}", serde_json::to_string(&plan)?);
            if let Some(path) = out {
                write_json(&path, &plan)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Acquire {
            config,
            record_out,
            seed,
            trial,
            rounds,
        } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, seed, None, None);
            let protocol = config.build_protocol()?;
            let descriptor = config
                .source
                .clone()
                .ok_or_else(|| anyhow!("acquire needs a state source"))?;
            let source = build_source(&descriptor, &protocol)?;
            let rounds = match rounds.or(config.rounds_override) {
                Some(n) => n,
                None => plan_config(&config)?.rounds as usize,
            };
            let (record, _) = run_acquisition(
                source.as_ref(),
                &protocol,
                rounds,
                RngStreamSpec::new(config.seed, trial),
            )?;
            save_record(&record_out, &record)?;
            println!(
                "wrote {} rounds ({} protocol, seed {}, trial {}) to {}",
                record.len(),
                record.meta.protocol,
                config.seed,
                trial,
                record_out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            record,
            observable,
            threshold: threshold_flag,
            epsilon,
            out,
        } => {
            let record = load_record(&record)?;
            let observable: Observable = serde_json::from_str(&observable)
                .context("cannot parse --observable JSON")?;
            let protocol = match record.meta.protocol.as_str() {
                "pauli" => Protocol::pauli(record.meta.dim.trailing_zeros() as usize),
                "clifford" => Protocol::clifford(record.meta.dim.trailing_zeros() as usize),
                other => {
                    return Err(anyhow!(
                        "estimate supports pauli/clifford records, found {other:?}"
                    ))
                }
            };
            let t = match (threshold_flag, epsilon) {
                (Some(t), _) => t,
                (None, Some(eps)) => {
                    let (norm_sq, _) = planning_norm_sq(&observable, &protocol)?;
                    threshold(norm_sq, eps)?
                }
                (None, None) => {
                    return Err(anyhow!("provide --threshold or --epsilon"));
                }
            };
            let result = truncated_mean(&record, &observable, &protocol, t)?;
            let output = serde_json::json!({
                "o_hat": result.o_hat,
                "T": t,
                "N": result.diagnostics.rounds,
                "diagnostics": result.diagnostics,
            });
            println!("{}", serde_json::to_string_pretty(&output)?);
            if let Some(path) = out {
                write_json(&path, &output)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment {
            config,
            seed,
            trials,
            out_dir,
        } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, seed, trials, None);
            let report = run_experiment(&config)?;
            write_experiment_outputs(&report, &out_dir)?;
            for obs in &report.observables {
                println!(
                    "{}: N={} T={} failures={}/{} rate={:.4} mean|err|={:.4} max|err|={:.4}",
                    obs.id,
                    obs.rounds,
                    obs.threshold,
                    obs.failures,
                    obs.trials,
                    obs.failure_rate,
                    obs.mean_abs_err,
                    obs.max_abs_err
                );
            }
            println!("rows: {}", out_dir.join("experiment_rows.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            config,
            seed,
            trials,
            batches,
            out_dir,
        } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, seed, trials, batches);
            let report = run_compare(&config)?;
            write_compare_outputs(&report, &out_dir)?;
            for summary in &report.summaries {
                println!(
                    "{:<16} mean|err|={:.5} p50={:.5} p90={:.5} max={:.5}",
                    summary.estimator,
                    summary.mean_err,
                    summary.p50_err,
                    summary.p90_err,
                    summary.max_err
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate => {
            let results = run_validation();
            let mut all_passed = true;
            for suite in &results {
                println!(
                    "[{}] {}: {}",
                    if suite.passed { "PASS" } else { "FAIL" },
                    suite.name,
                    suite.detail
                );
                all_passed &= suite.passed;
            }
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
