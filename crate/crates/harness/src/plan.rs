//! Sample-size planning front-end: per-observable norms (with provenance),
//! truncation thresholds, and the planned round count.

use anyhow::Result;
use serde::{Deserialize, Serialize};

use shadows_core::estimators::{plan_samples, planning_norm_sq, NormSource, PlanRegime};
use shadows_core::povm::shadow_norm_exact;

use crate::config::{ExperimentConfig, ProtocolKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannedEntry {
    pub id: String,
    /// Effective shadow norm squared used for planning.
    pub norm_sq: f64,
    pub norm_source: NormSource,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanOutput {
    pub epsilon: f64,
    pub delta: f64,
    pub observable_count: usize,
    pub rounds: u64,
    pub observables: Vec<PlannedEntry>,
}

/// Norms for every observable in the config, with their provenance.
pub fn config_norms(config: &ExperimentConfig) -> Result<Vec<(f64, NormSource)>> {
    match config.protocol {
        ProtocolKind::Pauli | ProtocolKind::Clifford => {
            let protocol = config.build_protocol()?;
            config
                .observables
                .iter()
                .map(|entry| Ok(planning_norm_sq(&entry.observable, &protocol)?))
                .collect()
        }
        ProtocolKind::Process => {
            let ensemble = config.build_ensemble()?;
            let povm = config.build_process_measurement()?;
            let bipartite = shadows_core::process::process_povm(&ensemble, &povm)?;
            config
                .observables
                .iter()
                .map(|entry| {
                    let dense = entry.observable.to_dense()?;
                    let (o0, _) = shadows_core::pauli::traceless_decompose(&dense);
                    Ok((shadow_norm_exact(&bipartite, &o0)?, NormSource::Exact))
                })
                .collect()
        }
    }
}

pub fn plan_config(config: &ExperimentConfig) -> Result<PlanOutput> {
    let norms = config_norms(config)?;
    let plan = plan_samples(
        config.epsilon,
        config.delta,
        &norms.iter().map(|(s, _)| *s).collect::<Vec<_>>(),
        PlanRegime::General,
    )?;
    let observables = config
        .observables
        .iter()
        .zip(&norms)
        .zip(&plan.observables)
        .map(|((entry, (_, source)), planned)| PlannedEntry {
            id: entry.id.clone(),
            norm_sq: planned.norm_sq,
            norm_source: *source,
            threshold: planned.threshold,
        })
        .collect();
    Ok(PlanOutput {
        epsilon: config.epsilon,
        delta: config.delta,
        observable_count: config.observables.len(),
        rounds: plan.rounds,
        observables,
    })
}

pub fn render_plan(plan: &PlanOutput) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "plan: epsilon={} delta={} K={} rounds={}\n",
        plan.epsilon, plan.delta, plan.observable_count, plan.rounds
    ));
    for entry in &plan.observables {
        out.push_str(&format!(
            "  {:<12} norm_sq={:<10} source={:<9} T={}\n",
            entry.id, entry.norm_sq, entry.norm_source.to_string(), entry.threshold
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ObservableEntry, CONFIG_SCHEMA};
    use shadows_core::estimators::Observable;
    use shadows_core::pauli::WeightedPauliSum;
    use shadows_core::sources::SourceDescriptor;

    fn config_with(observables: Vec<ObservableEntry>, epsilon: f64, delta: f64) -> ExperimentConfig {
        let zero = shadows_core::povm::eigenprojector(shadows_core::pauli::PauliLetter::Z, 0);
        let one = shadows_core::povm::eigenprojector(shadows_core::pauli::PauliLetter::Z, 1);
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            protocol: ProtocolKind::Pauli,
            qubits: Some(2),
            d: None,
            source: Some(SourceDescriptor::ParityFlip {
                state_a: shadows_core::linalg::MatrixJson::from_matrix(
                    &shadows_core::linalg::kron(&zero, &zero),
                ),
                state_b: shadows_core::linalg::MatrixJson::from_matrix(
                    &shadows_core::linalg::kron(&zero, &one),
                ),
            }),
            channel_source: None,
            ensemble: None,
            observables,
            epsilon,
            delta,
            trials: 1,
            seed: 0,
            rounds_override: None,
            batches: None,
        }
    }

    #[test]
    fn zz_plan_golden() {
        let config = config_with(
            vec![ObservableEntry {
                id: "ZZ".into(),
                observable: Observable::Pauli("ZZ".parse().unwrap()),
            }],
            0.25,
            0.1,
        );
        let plan = plan_config(&config).unwrap();
        assert_eq!(plan.rounds, 2247);
        assert_eq!(plan.observables[0].threshold, 45.0);
        assert_eq!(plan.observables[0].norm_source, NormSource::PauliWeight);
    }

    #[test]
    fn hamiltonian_plan_golden() {
        // V_H = 3.42 at ε = 0.2, δ = 0.05: N = ceil(445.3125·ln 40) = 1643
        let h = WeightedPauliSum::new(
            2,
            vec![(0.5, "XX".parse().unwrap()), (0.3, "XI".parse().unwrap())],
        )
        .unwrap();
        let config = config_with(
            vec![ObservableEntry {
                id: "H".into(),
                observable: Observable::PauliSum(h),
            }],
            0.2,
            0.05,
        );
        let plan = plan_config(&config).unwrap();
        assert_eq!(plan.rounds, 1643);
        assert_eq!(plan.observables[0].norm_source, NormSource::VH);
        assert!((plan.observables[0].norm_sq - 3.42).abs() < 1e-12);
    }

    #[test]
    fn k_observables_grow_by_union_bound() {
        let one = config_with(
            vec![ObservableEntry {
                id: "a".into(),
                observable: Observable::Pauli("ZZ".parse().unwrap()),
            }],
            0.25,
            0.1,
        );
        let entries: Vec<ObservableEntry> = (0..10)
            .map(|i| ObservableEntry {
                id: format!("o{i}"),
                observable: Observable::Pauli("ZZ".parse().unwrap()),
            })
            .collect();
        let ten = config_with(entries, 0.25, 0.1);
        let plan1 = plan_config(&one).unwrap();
        let plan10 = plan_config(&ten).unwrap();
        // ln(2K/δ)/ln(2/δ) growth
        let expected =
            (plan1.rounds as f64 / (2.0f64 / 0.1).ln() * (20.0f64 / 0.1).ln()).ceil() as u64;
        assert!((plan10.rounds as i64 - expected as i64).abs() <= 1);
        assert!(plan10.rounds > plan1.rounds);
    }
}
