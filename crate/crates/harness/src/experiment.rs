//! The coverage experiment: seeded trial fan-out, per-trial estimation
//! against the realized trajectory average, CSV rows and a JSON summary.

use std::path::Path;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use shadows_core::acquisition::{run_acquisition, RngStreamSpec};
use shadows_core::estimators::{truncated_mean, EstimateResult, NormSource};
use shadows_core::process::{build_channel_source, estimate_process, run_process_acquisition};
use shadows_core::sources::{build_source, trajectory_average};

use crate::config::{ExperimentConfig, ProtocolKind};
use crate::plan::{config_norms, plan_config, PlanOutput};
use crate::report;

/// One CSV row per (trial, observable).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub observable_id: String,
    #[serde(rename = "N")]
    pub rounds: usize,
    #[serde(rename = "T")]
    pub threshold: f64,
    pub o_hat: f64,
    pub o_bar: f64,
    pub abs_err: f64,
    /// 1 when |ô − ō| > ε.
    pub failed: u8,
    pub truncation_hits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableCoverage {
    pub id: String,
    pub norm_sq: f64,
    pub norm_source: NormSource,
    pub rounds: usize,
    pub threshold: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_abs_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub rounds: usize,
    pub seed: u64,
    pub observables: Vec<ObservableCoverage>,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

impl CoverageReport {
    /// Recomputes the per-observable aggregates from raw rows; used both to
    /// build the report and to check it regenerates from persisted rows.
    pub fn aggregate(
        plan: &PlanOutput,
        norms: &[(f64, NormSource)],
        rounds: usize,
        epsilon: f64,
        delta: f64,
        trials: usize,
        seed: u64,
        rows: Vec<TrialRow>,
    ) -> Self {
        let observables = plan
            .observables
            .iter()
            .zip(norms)
            .map(|(entry, (_, source))| {
                let obs_rows: Vec<&TrialRow> = rows
                    .iter()
                    .filter(|r| r.observable_id == entry.id)
                    .collect();
                let failures = obs_rows.iter().filter(|r| r.failed == 1).count();
                let mean_abs_err = if obs_rows.is_empty() {
                    0.0
                } else {
                    obs_rows.iter().map(|r| r.abs_err).sum::<f64>() / obs_rows.len() as f64
                };
                let max_abs_err = obs_rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
                ObservableCoverage {
                    id: entry.id.clone(),
                    norm_sq: entry.norm_sq,
                    norm_source: *source,
                    rounds,
                    threshold: entry.threshold,
                    trials: obs_rows.len(),
                    failures,
                    failure_rate: if obs_rows.is_empty() {
                        0.0
                    } else {
                        failures as f64 / obs_rows.len() as f64
                    },
                    mean_abs_err,
                    max_abs_err,
                }
            })
            .collect();
        CoverageReport {
            epsilon,
            delta,
            trials,
            rounds,
            seed,
            observables,
            rows,
        }
    }
}

/// Per-trial estimation results for every observable in the config.
fn run_trial(
    config: &ExperimentConfig,
    plan: &PlanOutput,
    rounds: usize,
    trial: u64,
) -> Result<Vec<(EstimateResult, f64)>> {
    let streams = RngStreamSpec::new(config.seed, trial);
    match config.protocol {
        ProtocolKind::Pauli | ProtocolKind::Clifford => {
            let protocol = config.build_protocol()?;
            let descriptor = config
                .source
                .as_ref()
                .ok_or_else(|| anyhow!("config validated without a source"))?;
            let source = build_source(descriptor, &protocol)?;
            let (record, traj) = run_acquisition(source.as_ref(), &protocol, rounds, streams)?;
            config
                .observables
                .iter()
                .zip(&plan.observables)
                .map(|(entry, planned)| {
                    let est = truncated_mean(
                        &record,
                        &entry.observable,
                        &protocol,
                        planned.threshold,
                    )?;
                    let o_bar = trajectory_average(&traj, &entry.observable.to_dense()?)?;
                    Ok((est.with_ground_truth(o_bar), o_bar))
                })
                .collect()
        }
        ProtocolKind::Process => {
            let ensemble = config.build_ensemble()?;
            let povm = config.build_process_measurement()?;
            let descriptor = config
                .channel_source
                .as_ref()
                .ok_or_else(|| anyhow!("config validated without a channel source"))?;
            let source = build_channel_source(descriptor)?;
            let (record, traj) =
                run_process_acquisition(source.as_ref(), &ensemble, &povm, rounds, streams)?;
            config
                .observables
                .iter()
                .zip(&plan.observables)
                .map(|(entry, planned)| {
                    let dense = entry.observable.to_dense()?;
                    let est =
                        estimate_process(&record, &dense, &ensemble, &povm, planned.threshold)?;
                    let o_bar = trajectory_average(&traj, &dense)?;
                    Ok((est.with_ground_truth(o_bar), o_bar))
                })
                .collect()
        }
    }
}

/// Runs the full coverage experiment. Trials fan out across threads; rows
/// come back in trial order regardless of completion order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CoverageReport> {
    config.validate()?;
    let norms = config_norms(config)?;
    let plan = plan_config(config)?;
    let rounds = config.rounds_override.unwrap_or(plan.rounds as usize);

    let outcomes: Vec<Result<Vec<TrialRow>>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let results = run_trial(config, &plan, rounds, trial)?;
            Ok(config
                .observables
                .iter()
                .zip(&plan.observables)
                .zip(results)
                .map(|((entry, planned), (est, o_bar))| {
                    let abs_err = est.abs_error.unwrap_or(f64::NAN);
                    TrialRow {
                        trial,
                        observable_id: entry.id.clone(),
                        rounds,
                        threshold: planned.threshold,
                        o_hat: est.o_hat,
                        o_bar,
                        abs_err,
                        failed: u8::from(abs_err > config.epsilon),
                        truncation_hits: est.diagnostics.truncation_hits,
                        seed: config.seed,
                    }
                })
                .collect())
        })
        .collect();

    // keep completed trials even when one fails, then surface the error
    let mut rows = Vec::with_capacity(config.trials * config.observables.len());
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(mut trial_rows) => rows.append(&mut trial_rows),
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    let report = CoverageReport::aggregate(
        &plan,
        &norms,
        rounds,
        config.epsilon,
        config.delta,
        config.trials,
        config.seed,
        rows,
    );
    match first_error {
        Some(e) => Err(e.context(format!(
            "experiment aborted after {} complete trial rows",
            report.rows.len()
        ))),
        None => Ok(report),
    }
}

/// Writes `experiment_rows.csv` and `experiment_summary.json`.
pub fn write_experiment_outputs(report: &CoverageReport, out_dir: &Path) -> Result<()> {
    report::write_csv(&out_dir.join("experiment_rows.csv"), &report.rows)?;
    report::write_json(&out_dir.join("experiment_summary.json"), report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ObservableEntry, CONFIG_SCHEMA};
    use shadows_core::estimators::Observable;
    use shadows_core::sources::SourceDescriptor;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            protocol: ProtocolKind::Pauli,
            qubits: Some(1),
            d: None,
            source: Some(SourceDescriptor::Ghz { n: 2 }),
            channel_source: None,
            ensemble: None,
            observables: vec![ObservableEntry {
                id: "Z".into(),
                observable: Observable::Pauli("Z".parse().unwrap()),
            }],
            epsilon: 0.4,
            delta: 0.2,
            trials: 6,
            seed: 11,
            rounds_override: Some(300),
            batches: None,
        }
    }

    #[test]
    fn experiment_rows_are_deterministic_and_ordered() {
        let config = small_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a.rows).unwrap(),
            serde_json::to_string(&b.rows).unwrap()
        );
        let trials: Vec<u64> = a.rows.iter().map(|r| r.trial).collect();
        assert_eq!(trials, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(a.observables[0].trials, 6);
        assert!(a.observables[0].failures <= 6);
    }

    #[test]
    fn coverage_regenerates_from_rows() {
        let config = small_config();
        let report = run_experiment(&config).unwrap();
        let norms = config_norms(&config).unwrap();
        let plan = plan_config(&config).unwrap();
        let rebuilt = CoverageReport::aggregate(
            &plan,
            &norms,
            report.rounds,
            report.epsilon,
            report.delta,
            report.trials,
            report.seed,
            report.rows.clone(),
        );
        assert_eq!(
            serde_json::to_string(&rebuilt).unwrap(),
            serde_json::to_string(&report).unwrap()
        );
    }

    #[test]
    fn trivial_epsilon_never_fails() {
        // ε ≥ 2·3^w with N = 1: the estimate range cannot leave [ō−ε, ō+ε]
        let mut config = small_config();
        config.epsilon = 6.0;
        config.rounds_override = Some(1);
        config.trials = 50;
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.observables[0].failures, 0);
    }
}
