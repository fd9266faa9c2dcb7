//! Pauli strings, weighted Pauli sums, and the traceless/identity split.
//!
//! Strings are phase-free: the protocols here never need signed Pauli
//! products, only supports, compatibility and dense materialization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::linalg::{self, c, cr, CMat, DenseHermitian};

/// Default cap on dense materialization (d = 2^6 = 64).
pub const DEFAULT_DENSE_CAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub fn matrix(self) -> CMat {
        let z = c(0.0, 0.0);
        let one = cr(1.0);
        match self {
            PauliLetter::I => CMat::from_row_slice(2, 2, &[one, z, z, one]),
            PauliLetter::X => CMat::from_row_slice(2, 2, &[z, one, one, z]),
            PauliLetter::Y => CMat::from_row_slice(2, 2, &[z, -c(0.0, 1.0), c(0.0, 1.0), z]),
            PauliLetter::Z => CMat::from_row_slice(2, 2, &[one, z, z, -one]),
        }
    }

    pub fn from_char(ch: char) -> Result<Self> {
        match ch {
            'I' | 'i' => Ok(PauliLetter::I),
            'X' | 'x' => Ok(PauliLetter::X),
            'Y' | 'y' => Ok(PauliLetter::Y),
            'Z' | 'z' => Ok(PauliLetter::Z),
            other => Err(ShadowError::MalformedRecord(format!(
                "invalid Pauli letter {other:?}"
            ))),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }
}

/// An n-qubit Pauli string such as "XIZ" (no phase).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<PauliLetter>,
}

impl PauliString {
    pub fn new(letters: Vec<PauliLetter>) -> Self {
        Self { letters }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            letters: vec![PauliLetter::I; n],
        }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.letters
    }

    pub fn letter(&self, qubit: usize) -> PauliLetter {
        self.letters[qubit]
    }

    /// Indices carrying a non-identity letter.
    pub fn support(&self) -> Vec<usize> {
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != PauliLetter::I)
            .map(|(q, _)| q)
            .collect()
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|l| **l != PauliLetter::I).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// True iff the strings agree on every qubit where both are non-identity.
    pub fn compatible(&self, other: &PauliString) -> Result<bool> {
        if self.len() != other.len() {
            return Err(ShadowError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(self
            .letters
            .iter()
            .zip(&other.letters)
            .all(|(a, b)| *a == PauliLetter::I || *b == PauliLetter::I || a == b))
    }

    /// Size of the support intersection (both non-identity).
    pub fn support_overlap(&self, other: &PauliString) -> usize {
        self.letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| **a != PauliLetter::I && **b != PauliLetter::I)
            .count()
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    /// ⊗_j σ_{P_j} as a 2^n x 2^n matrix.
    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DenseHermitian> {
        let n = self.len();
        if n > cap {
            return Err(ShadowError::DimensionCapExceeded { n, cap });
        }
        let mut m = CMat::identity(1, 1);
        for letter in &self.letters {
            m = linalg::kron(&m, &letter.matrix());
        }
        DenseHermitian::new(m)
    }
}

impl FromStr for PauliString {
    type Err = ShadowError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Self {
            letters: s.chars().map(PauliLetter::from_char).collect::<Result<_>>()?,
        })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightedTerm {
    pub coeff: f64,
    pub string: PauliString,
}

/// A real linear combination of Pauli strings on a fixed qubit count.
/// Duplicate strings are merged and exact-zero coefficients dropped, so
/// pair enumeration over terms is well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPauliSum {
    n: usize,
    terms: Vec<WeightedTerm>,
}

impl WeightedPauliSum {
    pub fn new(n: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        let mut merged: Vec<WeightedTerm> = Vec::new();
        for (coeff, string) in terms {
            if string.len() != n {
                return Err(ShadowError::LengthMismatch {
                    left: n,
                    right: string.len(),
                });
            }
            if !coeff.is_finite() {
                return Err(ShadowError::NonPositiveInput {
                    name: "coefficient (finite)",
                    value: coeff,
                });
            }
            match merged.iter_mut().find(|t| t.string == string) {
                Some(t) => t.coeff += coeff,
                None => merged.push(WeightedTerm { coeff, string }),
            }
        }
        merged.retain(|t| t.coeff != 0.0);
        Ok(Self { n, terms: merged })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[WeightedTerm] {
        &self.terms
    }

    pub fn has_identity_term(&self) -> bool {
        self.terms.iter().any(|t| t.string.is_identity())
    }

    /// Splits off any identity term: returns (traceless sum, identity coefficient).
    pub fn split_identity(&self) -> (WeightedPauliSum, f64) {
        let mu: f64 = self
            .terms
            .iter()
            .filter(|t| t.string.is_identity())
            .map(|t| t.coeff)
            .sum();
        let rest: Vec<_> = self
            .terms
            .iter()
            .filter(|t| !t.string.is_identity())
            .map(|t| (t.coeff, t.string.clone()))
            .collect();
        (
            WeightedPauliSum::new(self.n, rest).expect("terms already validated"),
            mu,
        )
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DenseHermitian> {
        if self.n > cap {
            return Err(ShadowError::DimensionCapExceeded { n: self.n, cap });
        }
        let d = 1usize << self.n;
        let mut m = linalg::zeros(d);
        for t in &self.terms {
            m += t.string.to_dense_with_cap(cap)?.matrix().scale(t.coeff);
        }
        DenseHermitian::new(m)
    }
}

impl Serialize for WeightedPauliSum {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.terms.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightedPauliSum {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<WeightedTerm>::deserialize(deserializer)?;
        let n = terms.first().map(|t| t.string.len()).unwrap_or(0);
        WeightedPauliSum::new(n, terms.into_iter().map(|t| (t.coeff, t.string)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// O = O₀ + μ·1 with tr(O₀) = 0 and μ = tr(O)/d.
pub fn traceless_decompose(o: &DenseHermitian) -> (DenseHermitian, f64) {
    let d = o.dim();
    let mu = o.trace() / d as f64;
    let m = o.matrix() - linalg::identity(d).scale(mu);
    (
        DenseHermitian::new(m).expect("shift by real multiple of identity keeps hermiticity"),
        mu,
    )
}
