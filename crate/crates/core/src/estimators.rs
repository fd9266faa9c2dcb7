//! Observable estimation from measurement records: single-shot values,
//! symmetric truncation, the truncated mean, thresholds and sample-size
//! planning, plus plain-mean and median-of-means comparators.
//!
//! The truncated mean clamps each single-shot value to [−T, T] before
//! averaging. With T = (5/4)·‖O‖²/ε and
//! N ≥ (125/24)·‖O‖²/ε²·ln(2K/δ) the estimate lands within ε of the
//! trajectory average with probability 1 − δ, for arbitrary history-dependent
//! sources. Logs are natural; N is the integer ceiling.

use serde::{Deserialize, Serialize};

use crate::acquisition::MeasurementRecord;
use crate::error::{Result, ShadowError};
use crate::linalg::{CMat, DenseHermitian, DensityMatrix};
use crate::pauli::{traceless_decompose, PauliLetter, PauliString, WeightedPauliSum};
use crate::povm::{DualFrame, Povm};
use crate::protocol::{Protocol, ProtocolDraw};

/// An observable in whichever form the caller has: a symbolic Pauli string,
/// a weighted Pauli sum, or a dense Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Pauli(PauliString),
    PauliSum(WeightedPauliSum),
    Dense(DenseHermitian),
}

impl Observable {
    pub fn dim(&self) -> usize {
        match self {
            Observable::Pauli(p) => 1usize << p.len(),
            Observable::PauliSum(h) => 1usize << h.qubits(),
            Observable::Dense(o) => o.dim(),
        }
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        match self {
            Observable::Pauli(p) => p.to_dense(),
            Observable::PauliSum(h) => h.to_dense(),
            Observable::Dense(o) => Ok(o.clone()),
        }
    }

    /// Splits O = O₀ + μ·1 without densifying symbolic forms.
    pub fn traceless_split(&self) -> Result<(Observable, f64)> {
        Ok(match self {
            Observable::Pauli(p) if p.is_identity() => (
                Observable::PauliSum(WeightedPauliSum::new(p.len(), vec![])?),
                1.0,
            ),
            Observable::Pauli(p) => (Observable::Pauli(p.clone()), 0.0),
            Observable::PauliSum(h) => {
                let (rest, mu) = h.split_identity();
                (Observable::PauliSum(rest), mu)
            }
            Observable::Dense(o) => {
                let (o0, mu) = traceless_decompose(o);
                (Observable::Dense(o0), mu)
            }
        })
    }
}

/// Wire form: {"pauli": "ZZ"} | {"pauli_sum": [{coeff, string}]} | {"dense": [[..]]}.
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ObservableWire {
    Pauli(PauliString),
    PauliSum(WeightedPauliSum),
    Dense(crate::linalg::MatrixJson),
}

impl Serialize for Observable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = match self {
            Observable::Pauli(p) => ObservableWire::Pauli(p.clone()),
            Observable::PauliSum(h) => ObservableWire::PauliSum(h.clone()),
            Observable::Dense(o) => {
                ObservableWire::Dense(crate::linalg::MatrixJson::from_matrix(o.matrix()))
            }
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Observable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        Ok(match ObservableWire::deserialize(deserializer)? {
            ObservableWire::Pauli(p) => Observable::Pauli(p),
            ObservableWire::PauliSum(h) => Observable::PauliSum(h),
            ObservableWire::Dense(m) => Observable::Dense(
                DenseHermitian::new(m.to_matrix().map_err(D::Error::custom)?)
                    .map_err(D::Error::custom)?,
            ),
        })
    }
}

/// Per-round evaluator of X_t = tr(O ρ̂_{k_t}), built once per observable.
/// Pauli observables under Pauli-basis draws use the factored fast path:
/// the trace is Π_{q ∈ supp} 3·(±1) when every support letter matches the
/// drawn basis, else 0.
enum SingleShotEvaluator {
    FastPauli {
        n: usize,
        terms: Vec<(f64, Vec<(usize, PauliLetter)>)>,
    },
    Dense {
        observable: DenseHermitian,
    },
}

impl SingleShotEvaluator {
    fn build(observable: &Observable, protocol: &Protocol) -> Result<Self> {
        let pauli_draws = matches!(
            protocol,
            Protocol::PauliBases { .. } | Protocol::FixedBases { .. }
        );
        match (observable, pauli_draws) {
            (Observable::Pauli(p), true) => Ok(SingleShotEvaluator::FastPauli {
                n: p.len(),
                terms: vec![(1.0, support_letters(p))],
            }),
            (Observable::PauliSum(h), true) => Ok(SingleShotEvaluator::FastPauli {
                n: h.qubits(),
                terms: h
                    .terms()
                    .iter()
                    .map(|t| (t.coeff, support_letters(&t.string)))
                    .collect(),
            }),
            (obs, _) => Ok(SingleShotEvaluator::Dense {
                observable: obs.to_dense()?,
            }),
        }
    }

    fn value(&self, protocol: &Protocol, draw: &ProtocolDraw, outcome: usize) -> Result<f64> {
        match self {
            SingleShotEvaluator::FastPauli { n, terms } => {
                let ProtocolDraw::PauliBases(bases) = draw else {
                    return Err(ShadowError::MalformedRecord(
                        "pauli fast path on a non-pauli draw".into(),
                    ));
                };
                if bases.len() != *n {
                    return Err(ShadowError::DimensionMismatch {
                        expected: *n,
                        found: bases.len(),
                    });
                }
                let space = 1usize << *n;
                if outcome >= space {
                    return Err(ShadowError::OutcomeOutOfRange { outcome, space });
                }
                let mut total = 0.0;
                'terms: for (coeff, support) in terms {
                    let mut value = *coeff;
                    for &(q, letter) in support {
                        if bases[q] != letter {
                            continue 'terms;
                        }
                        let sign = if crate::linalg::qubit_bit(outcome, *n, q) == 0 {
                            3.0
                        } else {
                            -3.0
                        };
                        value *= sign;
                    }
                    total += value;
                }
                Ok(total)
            }
            SingleShotEvaluator::Dense { observable } => {
                let (_, shadow) = protocol.effect_and_shadow(draw, outcome)?;
                Ok(shadow.expectation_of(observable))
            }
        }
    }
}

fn support_letters(p: &PauliString) -> Vec<(usize, PauliLetter)> {
    p.support().into_iter().map(|q| (q, p.letter(q))).collect()
}

/// tr(O ρ̂) for one recorded round.
pub fn single_shot_value(
    observable: &Observable,
    protocol: &Protocol,
    draw: &ProtocolDraw,
    outcome: usize,
) -> Result<f64> {
    SingleShotEvaluator::build(observable, protocol)?.value(protocol, draw, outcome)
}

/// Symmetric truncation: x inside [−T, T] is kept (the boundary included),
/// anything beyond is clamped to ±T.
pub fn truncate(x: f64, threshold: f64) -> Result<f64> {
    if threshold < 0.0 {
        return Err(ShadowError::NegativeThreshold(threshold));
    }
    Ok(if x.abs() <= threshold {
        x
    } else {
        threshold * x.signum()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    pub rounds: usize,
    /// Rounds where |X_t| exceeded the threshold.
    pub truncation_hits: usize,
    /// Population variance of the truncated values Y_t.
    pub y_variance: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub o_hat: f64,
    /// Ground-truth trajectory average, when the simulation kept it.
    pub o_bar: Option<f64>,
    pub abs_error: Option<f64>,
    pub diagnostics: EstimateDiagnostics,
}

impl EstimateResult {
    pub fn with_ground_truth(mut self, o_bar: f64) -> Self {
        self.abs_error = Some((self.o_hat - o_bar).abs());
        self.o_bar = Some(o_bar);
        self
    }
}

fn record_values(
    record: &MeasurementRecord,
    observable: &Observable,
    protocol: &Protocol,
) -> Result<(Vec<f64>, f64)> {
    if record.is_empty() {
        return Err(ShadowError::EmptyRecord);
    }
    let (traceless, mu) = observable.traceless_split()?;
    let evaluator = SingleShotEvaluator::build(&traceless, protocol)?;
    let mut values = Vec::with_capacity(record.len());
    for round in &record.rounds {
        values.push(evaluator.value(protocol, &round.draw, round.k.index()?)?);
    }
    Ok((values, mu))
}

/// The truncated-mean estimate of the time-averaged expectation value. The
/// identity part μ is added back after estimating the traceless part.
pub fn truncated_mean(
    record: &MeasurementRecord,
    observable: &Observable,
    protocol: &Protocol,
    threshold: f64,
) -> Result<EstimateResult> {
    if threshold < 0.0 {
        return Err(ShadowError::NegativeThreshold(threshold));
    }
    let (values, mu) = record_values(record, observable, protocol)?;
    let n = values.len() as f64;
    let mut hits = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &x in &values {
        if x.abs() > threshold {
            hits += 1;
        }
        let y = truncate(x, threshold)?;
        sum += y;
        sum_sq += y * y;
    }
    let mean = sum / n;
    let y_variance = (sum_sq / n - mean * mean).max(0.0);
    Ok(EstimateResult {
        o_hat: mean + mu,
        o_bar: None,
        abs_error: None,
        diagnostics: EstimateDiagnostics {
            rounds: values.len(),
            truncation_hits: hits,
            y_variance,
            threshold,
        },
    })
}

/// Untruncated comparator: (1/N)ΣX_t (+ μ).
pub fn plain_mean(
    record: &MeasurementRecord,
    observable: &Observable,
    protocol: &Protocol,
) -> Result<f64> {
    let (values, mu) = record_values(record, observable, protocol)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64 + mu)
}

/// Median of per-batch plain means (batch size N/batches, trailing remainder
/// dropped). Even batch counts take the midpoint of the two middle means.
pub fn median_of_means(
    record: &MeasurementRecord,
    observable: &Observable,
    protocol: &Protocol,
    batches: usize,
) -> Result<f64> {
    if batches == 0 {
        return Err(ShadowError::NonPositiveInput {
            name: "batches",
            value: 0.0,
        });
    }
    if record.len() < batches {
        return Err(ShadowError::TooFewRounds {
            rounds: record.len(),
            batches,
        });
    }
    let (values, mu) = record_values(record, observable, protocol)?;
    let batch_size = values.len() / batches;
    let mut means: Vec<f64> = values
        .chunks_exact(batch_size)
        .take(batches)
        .map(|chunk| chunk.iter().sum::<f64>() / batch_size as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let mid = means.len() / 2;
    let median = if means.len() % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    };
    Ok(median + mu)
}

/// T = (5/4)·‖O‖²/ε.
pub fn threshold(norm_sq: f64, epsilon: f64) -> Result<f64> {
    if norm_sq <= 0.0 {
        return Err(ShadowError::NonPositiveInput {
            name: "norm_sq",
            value: norm_sq,
        });
    }
    if epsilon <= 0.0 {
        return Err(ShadowError::NonPositiveInput {
            name: "epsilon",
            value: epsilon,
        });
    }
    Ok(1.25 * norm_sq / epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanRegime {
    /// norms_sq are shadow norms ‖O‖².
    General,
    /// norms_sq are tr(O²); the planner substitutes the bound ‖O‖² ≤ 3tr(O²).
    Clifford,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedObservable {
    /// Effective ‖O‖² used for this observable.
    pub norm_sq: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub observable_count: usize,
    pub observables: Vec<PlannedObservable>,
    pub rounds: u64,
}

/// N = ceil((125/24)·max_i ‖O_i‖²/ε² · ln(2K/δ)), with per-observable
/// thresholds T_i = (5/4)‖O_i‖²/ε.
pub fn plan_samples(
    epsilon: f64,
    delta: f64,
    norms_sq: &[f64],
    regime: PlanRegime,
) -> Result<EstimationPlan> {
    if epsilon <= 0.0 {
        return Err(ShadowError::NonPositiveInput {
            name: "epsilon",
            value: epsilon,
        });
    }
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(ShadowError::InvalidProbability(delta));
    }
    if norms_sq.is_empty() {
        return Err(ShadowError::NonPositiveInput {
            name: "observable count",
            value: 0.0,
        });
    }
    let effective: Vec<f64> = norms_sq
        .iter()
        .map(|&s| match regime {
            PlanRegime::General => s,
            PlanRegime::Clifford => 3.0 * s,
        })
        .collect();
    let observables = effective
        .iter()
        .map(|&s| {
            Ok(PlannedObservable {
                norm_sq: s,
                threshold: threshold(s, epsilon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = effective.len() as f64;
    let max = effective.iter().cloned().fold(f64::MIN, f64::max);
    let rounds = ((125.0 / 24.0) * max / (epsilon * epsilon) * (2.0 * k / delta).ln()).ceil();
    Ok(EstimationPlan {
        epsilon,
        delta,
        observable_count: norms_sq.len(),
        observables,
        rounds: rounds as u64,
    })
}

/// V_H = Σ_{j,l compatible} |α_j α_l|·3^|supp(P_j) ∩ supp(P_l)|: the
/// pairwise-compatibility bound on the Pauli-protocol shadow norm of a
/// Hamiltonian.
pub fn v_h(h: &WeightedPauliSum) -> Result<f64> {
    if h.has_identity_term() {
        return Err(ShadowError::IdentityTermPresent);
    }
    let terms = h.terms();
    let mut total = 0.0;
    for a in terms {
        for b in terms {
            if a.string.compatible(&b.string)? {
                let overlap = a.string.support_overlap(&b.string);
                total += (a.coeff * b.coeff).abs() * 3f64.powi(overlap as i32);
            }
        }
    }
    Ok(total)
}

/// How a planning norm was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormSource {
    /// λ_max of Σ_k x_k² E_k over the enumerated POVM.
    Exact,
    /// 3^weight for a single Pauli under the Pauli protocol.
    PauliWeight,
    /// V_H for a Pauli sum under the Pauli protocol.
    VH,
    /// 3·tr(O²) for the Clifford protocol.
    CliffordBound,
}

impl std::fmt::Display for NormSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormSource::Exact => "exact",
            NormSource::PauliWeight => "3^w",
            NormSource::VH => "V_H",
            NormSource::CliffordBound => "3tr(O^2)",
        })
    }
}

/// Shadow norm squared of the observable's traceless part under the given
/// protocol, with the provenance of the number.
pub fn planning_norm_sq(observable: &Observable, protocol: &Protocol) -> Result<(f64, NormSource)> {
    let (traceless, _) = observable.traceless_split()?;
    match (protocol, &traceless) {
        (Protocol::PauliBases { .. }, Observable::Pauli(p)) => {
            Ok((crate::povm::pauli_norm_bound(p)?, NormSource::PauliWeight))
        }
        (Protocol::PauliBases { .. }, Observable::PauliSum(h)) => Ok((v_h(h)?, NormSource::VH)),
        (Protocol::Clifford { .. }, obs) => Ok((
            crate::povm::clifford_norm_bound(&obs.to_dense()?),
            NormSource::CliffordBound,
        )),
        (protocol, obs) => {
            let povm = protocol.enumerable_povm()?;
            Ok((
                crate::povm::shadow_norm_exact(&povm, &obs.to_dense()?)?,
                NormSource::Exact,
            ))
        }
    }
}

/// Exact moments of the single-shot estimator under one POVM and state:
/// E[X], E[Y] at threshold T, and E[X²], by outcome enumeration.
#[derive(Debug, Clone, Copy)]
pub struct TruncationMoments {
    pub e_x: f64,
    pub e_y: f64,
    pub e_x_sq: f64,
}

pub fn enumerate_truncation_moments(
    povm: &Povm,
    duals: &DualFrame,
    rho: &DensityMatrix,
    observable: &DenseHermitian,
    threshold: f64,
) -> Result<TruncationMoments> {
    let mut m = TruncationMoments {
        e_x: 0.0,
        e_y: 0.0,
        e_x_sq: 0.0,
    };
    for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
        let p = probability(e, rho.matrix());
        let x = observable.expectation_of(shadow.matrix());
        m.e_x += p * x;
        m.e_y += p * truncate(x, threshold)?;
        m.e_x_sq += p * x * x;
    }
    Ok(m)
}

fn probability(effect: &CMat, rho: &CMat) -> f64 {
    (effect * rho).diagonal().sum().re
}
