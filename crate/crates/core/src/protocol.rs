//! Measurement protocols: per-round draws, conditional Born effects, and the
//! realized single-shot shadow for each (draw, outcome) pair.
//!
//! A protocol fixes the distribution of measurement settings; the draw at
//! round t comes from a trusted RNG stream and is independent of the source's
//! history. Conditional on a draw, the measured POVM is the projective set
//! for that setting, and the matching shadow is the canonical dual-frame
//! element of the full (weighted) protocol POVM.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clifford;
use crate::error::{Result, ShadowError};
use crate::linalg::{self, CMat, DenseHermitian, MatrixJson};
use crate::pauli::PauliLetter;
use crate::povm::{dual_frame, eigenprojector, pauli_qubit_shadow, DualFrame, Povm};

/// The measurement setting realized at one round.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolDraw {
    /// One basis letter in {X, Y, Z} per qubit.
    PauliBases(Vec<PauliLetter>),
    /// A global Clifford rotation; `index` is set for the enumerated
    /// single-qubit group, the explicit unitary is always present.
    Clifford { index: Option<usize>, unitary: CMat },
    /// The protocol measures one fixed POVM every round.
    FixedPovm,
}

impl ProtocolDraw {
    pub fn pauli_letters(&self) -> Option<&[PauliLetter]> {
        match self {
            ProtocolDraw::PauliBases(letters) => Some(letters),
            _ => None,
        }
    }
}

/// Wire form of a draw (records serialize the setting explicitly so any
/// observable can be estimated from the file alone).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum DrawWire {
    Pauli {
        bases: String,
    },
    Clifford {
        #[serde(skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        unitary: Option<MatrixJson>,
    },
    Fixed,
}

impl Serialize for ProtocolDraw {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = match self {
            ProtocolDraw::PauliBases(letters) => DrawWire::Pauli {
                bases: letters.iter().map(|l| l.as_char()).collect(),
            },
            ProtocolDraw::Clifford { index: Some(i), .. } => DrawWire::Clifford {
                index: Some(*i),
                unitary: None,
            },
            ProtocolDraw::Clifford { index: None, unitary } => DrawWire::Clifford {
                index: None,
                unitary: Some(MatrixJson::from_matrix(unitary)),
            },
            ProtocolDraw::FixedPovm => DrawWire::Fixed,
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProtocolDraw {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let wire = DrawWire::deserialize(deserializer)?;
        Ok(match wire {
            DrawWire::Pauli { bases } => {
                let letters = bases
                    .chars()
                    .map(PauliLetter::from_char)
                    .collect::<Result<Vec<_>>>()
                    .map_err(D::Error::custom)?;
                ProtocolDraw::PauliBases(letters)
            }
            DrawWire::Clifford {
                index: Some(i),
                unitary: _,
            } => {
                if i >= 24 {
                    return Err(D::Error::custom(format!("clifford index {i} out of range")));
                }
                ProtocolDraw::Clifford {
                    index: Some(i),
                    unitary: clifford::single_qubit_group()[i].clone(),
                }
            }
            DrawWire::Clifford {
                index: None,
                unitary: Some(m),
            } => ProtocolDraw::Clifford {
                index: None,
                unitary: m.to_matrix().map_err(D::Error::custom)?,
            },
            DrawWire::Clifford {
                index: None,
                unitary: None,
            } => return Err(D::Error::custom("clifford draw without index or unitary")),
            DrawWire::Fixed => ProtocolDraw::FixedPovm,
        })
    }
}

/// A protocol family: how settings are drawn and measured.
#[derive(Clone)]
pub enum Protocol {
    /// Independent uniform X/Y/Z basis per qubit.
    PauliBases { n: usize },
    /// Global Clifford rotation, uniform over the group.
    Clifford { n: usize },
    /// The same basis letters every round (a sampling protocol; its POVM is
    /// not IC, so shadows reconstruct only bases-compatible observables).
    FixedBases { letters: Vec<PauliLetter> },
    /// One fixed POVM measured every round; shadows are present only when
    /// the POVM is informationally complete.
    Fixed {
        povm: Arc<Povm>,
        duals: Option<Arc<DualFrame>>,
    },
}

impl Protocol {
    pub fn pauli(n: usize) -> Self {
        assert!(n >= 1, "at least one qubit");
        Protocol::PauliBases { n }
    }

    pub fn clifford(n: usize) -> Self {
        assert!(n >= 1, "at least one qubit");
        Protocol::Clifford { n }
    }

    /// Requires informational completeness so the shadows exist.
    pub fn fixed(povm: Povm) -> Result<Self> {
        let duals = dual_frame(&povm)?;
        Ok(Protocol::Fixed {
            povm: Arc::new(povm),
            duals: Some(Arc::new(duals)),
        })
    }

    /// Accepts any POVM for Born sampling; estimation (shadows) will fail
    /// unless the POVM is IC.
    pub fn fixed_for_sampling(povm: Povm) -> Self {
        let duals = dual_frame(&povm).ok().map(Arc::new);
        Protocol::Fixed {
            povm: Arc::new(povm),
            duals,
        }
    }

    pub fn fixed_bases(letters: Vec<PauliLetter>) -> Self {
        assert!(!letters.is_empty(), "at least one qubit");
        assert!(
            letters.iter().all(|l| *l != PauliLetter::I),
            "basis letters must be X, Y or Z"
        );
        Protocol::FixedBases { letters }
    }

    pub fn dim(&self) -> usize {
        match self {
            Protocol::PauliBases { n } | Protocol::Clifford { n } => 1usize << n,
            Protocol::FixedBases { letters } => 1usize << letters.len(),
            Protocol::Fixed { povm, .. } => povm.dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::PauliBases { .. } => "pauli",
            Protocol::Clifford { .. } => "clifford",
            Protocol::FixedBases { .. } => "fixed_bases",
            Protocol::Fixed { .. } => "fixed_povm",
        }
    }

    /// Draws the round's measurement setting; uniform per qubit for the Pauli
    /// protocol, uniform over the Clifford group otherwise.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ProtocolDraw {
        match self {
            Protocol::PauliBases { n } => ProtocolDraw::PauliBases(draw_pauli_letters(*n, rng)),
            Protocol::Clifford { n } => {
                if *n == 1 {
                    let index = clifford::sample_single_qubit_index(rng);
                    ProtocolDraw::Clifford {
                        index: Some(index),
                        unitary: clifford::single_qubit_group()[index].clone(),
                    }
                } else {
                    ProtocolDraw::Clifford {
                        index: None,
                        unitary: clifford::sample_clifford_unitary(*n, rng),
                    }
                }
            }
            Protocol::FixedBases { letters } => ProtocolDraw::PauliBases(letters.clone()),
            Protocol::Fixed { .. } => ProtocolDraw::FixedPovm,
        }
    }

    /// Number of outcomes of the realized draw.
    pub fn outcome_count(&self, draw: &ProtocolDraw) -> usize {
        match (self, draw) {
            (_, ProtocolDraw::PauliBases(letters)) => 1usize << letters.len(),
            (_, ProtocolDraw::Clifford { unitary, .. }) => unitary.nrows(),
            (Protocol::Fixed { povm, .. }, ProtocolDraw::FixedPovm) => povm.len(),
            (_, ProtocolDraw::FixedPovm) => 0,
        }
    }

    /// The Born effects of the realized draw (they sum to the identity).
    pub fn conditional_effects(&self, draw: &ProtocolDraw) -> Vec<CMat> {
        match draw {
            ProtocolDraw::PauliBases(letters) => {
                let n = letters.len();
                (0..(1usize << n))
                    .map(|z| {
                        let mut e = CMat::identity(1, 1);
                        for (q, &b) in letters.iter().enumerate() {
                            e = linalg::kron(&e, &eigenprojector(b, linalg::qubit_bit(z, n, q)));
                        }
                        e
                    })
                    .collect()
            }
            ProtocolDraw::Clifford { unitary, .. } => (0..unitary.nrows())
                .map(|z| {
                    let ket = unitary.adjoint().column(z).into_owned();
                    &ket * ket.adjoint()
                })
                .collect(),
            ProtocolDraw::FixedPovm => match self {
                Protocol::Fixed { povm, .. } => povm.effects().to_vec(),
                _ => Vec::new(),
            },
        }
    }

    /// The realized effect and the matching single-shot shadow.
    /// For the Pauli protocol the shadow is returned factored per qubit.
    pub fn effect_and_shadow(&self, draw: &ProtocolDraw, outcome: usize) -> Result<(DenseHermitian, Shadow)> {
        let space = self.outcome_count(draw);
        if outcome >= space {
            return Err(ShadowError::OutcomeOutOfRange { outcome, space });
        }
        match draw {
            ProtocolDraw::PauliBases(letters) => {
                let n = letters.len();
                let mut effect = CMat::identity(1, 1);
                let mut factors = Vec::with_capacity(n);
                for (q, &b) in letters.iter().enumerate() {
                    let bit = linalg::qubit_bit(outcome, n, q);
                    effect = linalg::kron(&effect, &eigenprojector(b, bit));
                    factors.push(pauli_qubit_shadow(b, bit));
                }
                Ok((DenseHermitian::new(effect)?, Shadow::Factored(factors)))
            }
            ProtocolDraw::Clifford { unitary, .. } => {
                let d = unitary.nrows();
                let ket = unitary.adjoint().column(outcome).into_owned();
                let proj = &ket * ket.adjoint();
                let shadow = proj.scale((d + 1) as f64) - linalg::identity(d);
                Ok((
                    DenseHermitian::new(proj)?,
                    Shadow::Dense(DenseHermitian::from_nearly_hermitian(shadow)?),
                ))
            }
            ProtocolDraw::FixedPovm => match self {
                Protocol::Fixed { povm, duals } => {
                    let duals = duals.as_ref().ok_or(
                        ShadowError::NotInformationallyComplete { min_eig: 0.0 },
                    )?;
                    Ok((
                        DenseHermitian::from_nearly_hermitian(povm.effect(outcome).clone())?,
                        Shadow::Dense(duals.shadow(outcome).clone()),
                    ))
                }
                _ => Err(ShadowError::NotEnumerable),
            },
        }
    }

    /// Full weighted POVM of the protocol, when enumerable.
    pub fn enumerable_povm(&self) -> Result<Povm> {
        match self {
            Protocol::PauliBases { n } => Povm::pauli_bases(*n),
            Protocol::Clifford { n } if *n == 1 => Ok(Povm::single_qubit_clifford()),
            Protocol::Clifford { .. } => Err(ShadowError::NotEnumerable),
            Protocol::FixedBases { letters } => {
                let draw = ProtocolDraw::PauliBases(letters.clone());
                Povm::new(self.conditional_effects(&draw))
            }
            Protocol::Fixed { povm, .. } => Ok(povm.as_ref().clone()),
        }
    }

    /// All draws with their probabilities, when the setting space is finite
    /// and small (None for sampled-only families).
    pub fn enumerate_draws(&self) -> Option<Vec<(f64, ProtocolDraw)>> {
        match self {
            Protocol::PauliBases { n } => {
                if *n > crate::povm::MAX_ENUMERABLE_QUBITS {
                    return None;
                }
                let bases = [PauliLetter::X, PauliLetter::Y, PauliLetter::Z];
                let count = 3usize.pow(*n as u32);
                let weight = 1.0 / count as f64;
                let mut out = Vec::with_capacity(count);
                for code in 0..count {
                    let mut letters = Vec::with_capacity(*n);
                    let mut rem = code;
                    for _ in 0..*n {
                        letters.push(bases[rem % 3]);
                        rem /= 3;
                    }
                    letters.reverse();
                    out.push((weight, ProtocolDraw::PauliBases(letters)));
                }
                Some(out)
            }
            Protocol::Clifford { n } if *n == 1 => Some(
                clifford::single_qubit_group()
                    .iter()
                    .enumerate()
                    .map(|(i, u)| {
                        (
                            1.0 / 24.0,
                            ProtocolDraw::Clifford {
                                index: Some(i),
                                unitary: u.clone(),
                            },
                        )
                    })
                    .collect(),
            ),
            Protocol::Clifford { .. } => None,
            Protocol::FixedBases { letters } => {
                Some(vec![(1.0, ProtocolDraw::PauliBases(letters.clone()))])
            }
            Protocol::Fixed { .. } => Some(vec![(1.0, ProtocolDraw::FixedPovm)]),
        }
    }
}

/// Uniform independent basis letters, one per qubit.
pub fn draw_pauli_letters<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<PauliLetter> {
    let bases = [PauliLetter::X, PauliLetter::Y, PauliLetter::Z];
    (0..n).map(|_| bases[rng.gen_range(0..3)]).collect()
}

/// A single-shot state estimate, either dense or factored over qubits.
#[derive(Debug, Clone)]
pub enum Shadow {
    /// Per-qubit 2x2 factors whose Kronecker product is the dense shadow.
    Factored(Vec<CMat>),
    Dense(DenseHermitian),
}

impl Shadow {
    pub fn dense(&self) -> DenseHermitian {
        match self {
            Shadow::Factored(factors) => {
                let mut m = CMat::identity(1, 1);
                for f in factors {
                    m = linalg::kron(&m, f);
                }
                DenseHermitian::from_nearly_hermitian(m).expect("factors are Hermitian")
            }
            Shadow::Dense(m) => m.clone(),
        }
    }

    /// tr(O ρ̂) through the dense materialization.
    pub fn expectation_of(&self, o: &DenseHermitian) -> f64 {
        o.expectation_of(self.dense().matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, max_abs_diff};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn pauli_letter_frequencies_are_uniform() {
        // 90k single-qubit draws: each letter within 1% of 1/3
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut counts = [0usize; 3];
        let total = 90_000;
        for _ in 0..total {
            match draw_pauli_letters(1, &mut rng)[0] {
                PauliLetter::X => counts[0] += 1,
                PauliLetter::Y => counts[1] += 1,
                PauliLetter::Z => counts[2] += 1,
                PauliLetter::I => unreachable!("I is never drawn"),
            }
        }
        for &count in &counts {
            let freq = count as f64 / total as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01 * (1.0 / 3.0));
        }
    }

    #[test]
    fn draw_shapes_and_determinism() {
        let protocol = Protocol::pauli(3);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let draw = protocol.draw(&mut rng);
        assert_eq!(draw.pauli_letters().unwrap().len(), 3);

        let mut a = ChaCha12Rng::seed_from_u64(43);
        let mut b = ChaCha12Rng::seed_from_u64(43);
        for _ in 0..50 {
            assert_eq!(protocol.draw(&mut a), protocol.draw(&mut b));
        }
    }

    #[test]
    fn clifford_draws_are_unitary() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        for n in [1usize, 2] {
            let protocol = Protocol::clifford(n);
            for _ in 0..10 {
                let draw = protocol.draw(&mut rng);
                let ProtocolDraw::Clifford { unitary, .. } = &draw else {
                    panic!("clifford protocol must draw clifford settings");
                };
                let d = 1 << n;
                assert!(
                    max_abs_diff(&(unitary.adjoint() * unitary), &linalg::identity(d)) < 1e-10
                );
            }
        }
    }

    #[test]
    fn pauli_shadow_examples() {
        let protocol = Protocol::pauli(1);
        // draw Z, outcome 0: shadow = diag(2, -1)
        let draw = ProtocolDraw::PauliBases(vec![PauliLetter::Z]);
        let (effect, shadow) = protocol.effect_and_shadow(&draw, 0).unwrap();
        assert!((effect.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
        let dense = shadow.dense();
        assert!((dense.matrix()[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((dense.matrix()[(1, 1)].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn clifford_identity_shadow_example() {
        // U = 1, outcome 1: shadow = 3|1⟩⟨1| − 1 = diag(−1, 2)
        let protocol = Protocol::clifford(1);
        let draw = ProtocolDraw::Clifford {
            index: None,
            unitary: linalg::identity(2),
        };
        let (_, shadow) = protocol.effect_and_shadow(&draw, 1).unwrap();
        let dense = shadow.dense();
        assert!((dense.matrix()[(0, 0)].re + 1.0).abs() < 1e-12);
        assert!((dense.matrix()[(1, 1)].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn factored_shadow_matches_dense_kron_oracle() {
        // draw (Z, X), outcome (0, 0): diag(2,−1) ⊗ (3|+⟩⟨+| − 1)
        let protocol = Protocol::pauli(2);
        let draw = ProtocolDraw::PauliBases(vec![PauliLetter::Z, PauliLetter::X]);
        let (_, shadow) = protocol.effect_and_shadow(&draw, 0).unwrap();
        let dense = shadow.dense();

        let z_part = CMat::from_row_slice(2, 2, &[cr(2.0), cr(0.0), cr(0.0), cr(-1.0)]);
        let half = cr(0.5);
        let plus = CMat::from_row_slice(2, 2, &[half, half, half, half]);
        let x_part = plus.scale(3.0) - linalg::identity(2);
        let oracle = linalg::kron(&z_part, &x_part);
        assert!(max_abs_diff(dense.matrix(), &oracle) < 1e-12);
    }

    #[test]
    fn outcome_out_of_range_is_rejected() {
        let protocol = Protocol::pauli(1);
        let draw = ProtocolDraw::PauliBases(vec![PauliLetter::Z]);
        assert!(matches!(
            protocol.effect_and_shadow(&draw, 2),
            Err(ShadowError::OutcomeOutOfRange { outcome: 2, space: 2 })
        ));
    }

    #[test]
    fn conditional_effects_sum_to_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        for protocol in [Protocol::pauli(2), Protocol::clifford(2)] {
            let draw = protocol.draw(&mut rng);
            let effects = protocol.conditional_effects(&draw);
            let mut sum = linalg::zeros(protocol.dim());
            for e in &effects {
                sum += e;
            }
            assert!(max_abs_diff(&sum, &linalg::identity(protocol.dim())) < 1e-10);
        }
    }

    #[test]
    fn enumerated_draws_cover_probability_one() {
        for protocol in [Protocol::pauli(2), Protocol::clifford(1)] {
            let draws = protocol.enumerate_draws().unwrap();
            let total: f64 = draws.iter().map(|(w, _)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(Protocol::clifford(2).enumerate_draws().is_none());
    }

    #[test]
    fn draw_serialization_round_trips() {
        let draws = vec![
            ProtocolDraw::PauliBases(vec![PauliLetter::Z, PauliLetter::X]),
            ProtocolDraw::Clifford {
                index: Some(7),
                unitary: clifford::single_qubit_group()[7].clone(),
            },
            ProtocolDraw::Clifford {
                index: None,
                unitary: clifford::sample_clifford_unitary(
                    2,
                    &mut ChaCha12Rng::seed_from_u64(46),
                ),
            },
            ProtocolDraw::FixedPovm,
        ];
        for draw in draws {
            let text = serde_json::to_string(&draw).unwrap();
            let back: ProtocolDraw = serde_json::from_str(&text).unwrap();
            assert_eq!(back, draw, "round-trip failed for {text}");
        }
    }
}
