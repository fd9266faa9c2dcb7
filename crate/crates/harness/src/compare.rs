//! Estimator comparison: the same records feed the truncated mean, the plain
//! mean, and median-of-means; errors are reported per trial with summary
//! quantiles.

use std::path::Path;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use shadows_core::acquisition::{run_acquisition, RngStreamSpec};
use shadows_core::estimators::{median_of_means, plain_mean, truncated_mean};
use shadows_core::sources::{build_source, trajectory_average};

use crate::config::{ExperimentConfig, ProtocolKind};
use crate::plan::plan_config;
use crate::report;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub trial: u64,
    pub observable_id: String,
    pub o_bar: f64,
    pub truncated: f64,
    pub plain: f64,
    pub median_of_means: f64,
    pub truncated_err: f64,
    pub plain_err: f64,
    pub median_of_means_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub mean_err: f64,
    pub p50_err: f64,
    pub p90_err: f64,
    pub max_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub trials: usize,
    pub rounds: usize,
    pub batches: usize,
    pub seed: u64,
    pub summaries: Vec<EstimatorSummary>,
    #[serde(skip)]
    pub rows: Vec<CompareRow>,
}

fn summarize(name: &str, errs: &[f64]) -> EstimatorSummary {
    let mut sorted = errs.to_vec();
    sorted.sort_by(f64::total_cmp);
    EstimatorSummary {
        estimator: name.into(),
        mean_err: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
        p50_err: report::quantile(&sorted, 0.5),
        p90_err: report::quantile(&sorted, 0.9),
        max_err: sorted.last().copied().unwrap_or(f64::NAN),
    }
}

/// Runs the three estimators over identical records (state protocols only;
/// the comparators are defined on single-outcome rounds).
pub fn run_compare(config: &ExperimentConfig) -> Result<CompareReport> {
    config.validate()?;
    if config.protocol == ProtocolKind::Process {
        return Err(anyhow!(
            "compare runs on the pauli/clifford state protocols"
        ));
    }
    let plan = plan_config(config)?;
    let rounds = config.rounds_override.unwrap_or(plan.rounds as usize);
    let batches = config.batches();
    let protocol = config.build_protocol()?;
    let descriptor = config
        .source
        .as_ref()
        .ok_or_else(|| anyhow!("config validated without a source"))?;
    let source = build_source(descriptor, &protocol)?;

    let rows: Vec<CompareRow> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<Vec<CompareRow>> {
            let streams = RngStreamSpec::new(config.seed, trial);
            let (record, traj) = run_acquisition(source.as_ref(), &protocol, rounds, streams)?;
            config
                .observables
                .iter()
                .zip(&plan.observables)
                .map(|(entry, planned)| {
                    let o_bar = trajectory_average(&traj, &entry.observable.to_dense()?)?;
                    let truncated =
                        truncated_mean(&record, &entry.observable, &protocol, planned.threshold)?
                            .o_hat;
                    let plain = plain_mean(&record, &entry.observable, &protocol)?;
                    let mom = median_of_means(&record, &entry.observable, &protocol, batches)?;
                    Ok(CompareRow {
                        trial,
                        observable_id: entry.id.clone(),
                        o_bar,
                        truncated,
                        plain,
                        median_of_means: mom,
                        truncated_err: (truncated - o_bar).abs(),
                        plain_err: (plain - o_bar).abs(),
                        median_of_means_err: (mom - o_bar).abs(),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<CompareRow>>>>()?
        .into_iter()
        .flatten()
        .collect();

    let summaries = vec![
        summarize(
            "truncated",
            &rows.iter().map(|r| r.truncated_err).collect::<Vec<_>>(),
        ),
        summarize("plain", &rows.iter().map(|r| r.plain_err).collect::<Vec<_>>()),
        summarize(
            "median_of_means",
            &rows
                .iter()
                .map(|r| r.median_of_means_err)
                .collect::<Vec<_>>(),
        ),
    ];
    Ok(CompareReport {
        trials: config.trials,
        rounds,
        batches,
        seed: config.seed,
        summaries,
        rows,
    })
}

pub fn write_compare_outputs(report: &CompareReport, out_dir: &Path) -> Result<()> {
    report::write_csv(&out_dir.join("compare_rows.csv"), &report.rows)?;
    report::write_json(&out_dir.join("compare_summary.json"), report)?;
    Ok(())
}
