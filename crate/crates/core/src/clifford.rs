//! Clifford unitaries: the enumerated 24-element single-qubit group and a
//! uniform sampler for arbitrary qubit counts.
//!
//! The n-qubit sampler follows van den Berg's method
//! (<https://arxiv.org/abs/2008.06011>): draw a uniformly random
//! anticommuting Pauli pair on the remaining register, sweep it to
//! (X_i, Z_i) with H/S/CNOT/SWAP conjugations plus a sign-fixing Pauli, and
//! recurse. The induced distribution over tableaus is exactly uniform, and
//! the recorded gate list is multiplied out into a dense unitary.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{self, c, cr, CMat};

/// Phase-normalized matrices of the 24 single-qubit Clifford unitaries,
/// enumerated once by closing {H, S} under multiplication.
pub fn single_qubit_group() -> &'static [CMat] {
    static GROUP: OnceLock<Vec<CMat>> = OnceLock::new();
    GROUP.get_or_init(|| {
        let elems = enumerate_single_qubit_group();
        assert_eq!(elems.len(), 24, "single-qubit Clifford group has order 24");
        elems
    })
}

fn enumerate_single_qubit_group() -> Vec<CMat> {
    let h = hadamard();
    let s = phase_gate();
    let mut elems: Vec<CMat> = vec![phase_normalize(&linalg::identity(2))];
    let mut cursor = 0;
    while cursor < elems.len() {
        let u = elems[cursor].clone();
        cursor += 1;
        for g in [&h, &s] {
            let cand = phase_normalize(&(g * &u));
            if !elems.iter().any(|e| linalg::max_abs_diff(e, &cand) < 1e-8) {
                elems.push(cand);
            }
        }
    }
    elems
}

/// Divides out the global phase so equal-up-to-phase matrices compare equal:
/// the first entry (column-major) with modulus > 1e-6 is made real positive.
pub fn phase_normalize(u: &CMat) -> CMat {
    for z in u.iter() {
        if z.norm() > 1e-6 {
            return u * (z.conj() / cr(z.norm()));
        }
    }
    u.clone()
}

pub fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[cr(s), cr(s), cr(s), cr(-s)])
}

pub fn phase_gate() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), c(0.0, 1.0)])
}

/// Draws a uniform index into the enumerated single-qubit group.
pub fn sample_single_qubit_index<R: Rng + ?Sized>(rng: &mut R) -> usize {
    rng.gen_range(0..24)
}

/// Uniformly random n-qubit Clifford unitary as a dense 2^n x 2^n matrix.
pub fn sample_clifford_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    if n == 1 {
        return single_qubit_group()[sample_single_qubit_index(rng)].clone();
    }
    let gates = sample_clifford_gates(n, rng);
    gates_to_matrix(n, &gates)
}

// --- symplectic tableau machinery ---

/// One qubit of a Pauli operator in (x, z) bit form.
#[derive(Clone, Copy, Default, PartialEq, Eq)]
struct XzBit {
    x: bool,
    z: bool,
}

impl XzBit {
    fn is_identity(self) -> bool {
        !self.x && !self.z
    }

    fn anticommutes(self, other: XzBit) -> bool {
        (self.x && other.z) ^ (self.z && other.x)
    }
}

/// A signed Pauli operator in binary symplectic form.
#[derive(Clone)]
struct BinaryPauli {
    sign: bool,
    bits: Vec<XzBit>,
}

impl BinaryPauli {
    fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        BinaryPauli {
            sign: rng.gen(),
            bits: (0..n)
                .map(|_| XzBit {
                    x: rng.gen(),
                    z: rng.gen(),
                })
                .collect(),
        }
    }

    fn identity_from(&self, lo: usize) -> bool {
        self.bits[lo..].iter().all(|b| b.is_identity())
    }

    fn anticommutes_from(&self, other: &BinaryPauli, lo: usize) -> bool {
        self.bits[lo..]
            .iter()
            .zip(&other.bits[lo..])
            .filter(|(a, b)| a.anticommutes(**b))
            .count()
            % 2
            == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliffordGate {
    H(usize),
    S(usize),
    Cnot(usize, usize),
    Swap(usize, usize),
    X(usize),
    Y(usize),
    Z(usize),
}

/// Tracks the images of one anticommuting Pauli pair under conjugation by
/// the gates applied so far.
struct PairTableau {
    a: BinaryPauli,
    b: BinaryPauli,
    gates: Vec<CliffordGate>,
}

impl PairTableau {
    fn new(a: BinaryPauli, b: BinaryPauli) -> Self {
        PairTableau {
            a,
            b,
            gates: Vec::new(),
        }
    }

    fn h(&mut self, q: usize) {
        for row in [&mut self.a, &mut self.b] {
            let bit = &mut row.bits[q];
            row.sign ^= bit.x && bit.z;
            std::mem::swap(&mut bit.x, &mut bit.z);
        }
        self.gates.push(CliffordGate::H(q));
    }

    fn s(&mut self, q: usize) {
        for row in [&mut self.a, &mut self.b] {
            let bit = &mut row.bits[q];
            row.sign ^= bit.x && bit.z;
            bit.z ^= bit.x;
        }
        self.gates.push(CliffordGate::S(q));
    }

    fn cnot(&mut self, ctrl: usize, tgt: usize) {
        for row in [&mut self.a, &mut self.b] {
            let (xc, zc) = (row.bits[ctrl].x, row.bits[ctrl].z);
            let (xt, zt) = (row.bits[tgt].x, row.bits[tgt].z);
            row.sign ^= xc && zt && (xt == zc);
            row.bits[tgt].x ^= xc;
            row.bits[ctrl].z ^= zt;
        }
        self.gates.push(CliffordGate::Cnot(ctrl, tgt));
    }

    fn swap(&mut self, p: usize, q: usize) {
        for row in [&mut self.a, &mut self.b] {
            row.bits.swap(p, q);
        }
        self.gates.push(CliffordGate::Swap(p, q));
    }

    fn row(&self, row_b: bool, q: usize) -> XzBit {
        if row_b {
            self.b.bits[q]
        } else {
            self.a.bits[q]
        }
    }

    /// Clears Z components of one row beyond `lo` and collapses its X
    /// components onto the lowest-index column via a CNOT tree; returns
    /// that column.
    fn reduce_row_to_single_x(&mut self, row_b: bool, lo: usize) -> usize {
        let n = self.a.bits.len();
        for q in lo..n {
            let b = self.row(row_b, q);
            if b.z && !b.x {
                self.h(q);
            }
        }
        for q in lo..n {
            let b = self.row(row_b, q);
            if b.z && b.x {
                self.s(q);
            }
        }
        let mut xs: Vec<usize> = (lo..n).filter(|&q| self.row(row_b, q).x).collect();
        assert!(!xs.is_empty(), "row must be non-identity on the register");
        while xs.len() > 1 {
            let mut next = Vec::with_capacity(xs.len().div_ceil(2));
            for pair in xs.chunks(2) {
                if pair.len() == 2 {
                    self.cnot(pair[0], pair[1]);
                }
                next.push(pair[0]);
            }
            xs = next;
        }
        xs[0]
    }

    /// Sweeps the pair to (±X_lo, ±Z_lo), then clears signs with a Pauli.
    fn sweep(&mut self, lo: usize) {
        let col = self.reduce_row_to_single_x(false, lo);
        if col != lo {
            self.swap(col, lo);
        }

        // Row b anticommutes with X_lo, so unless it is already exactly Z_lo
        // conjugate through H, collapse it to X_lo, and rotate back.
        let b_is_z_lo = self.b.bits[lo].z
            && !self.b.bits[lo].x
            && self.b.bits[lo + 1..].iter().all(|bit| bit.is_identity());
        if !b_is_z_lo {
            self.h(lo);
            let col = self.reduce_row_to_single_x(true, lo);
            debug_assert_eq!(col, lo, "anticommutation pins row b to column lo");
            self.h(lo);
        }

        match (self.a.sign, self.b.sign) {
            (false, false) => {}
            (false, true) => self.gates.push(CliffordGate::X(lo)),
            (true, true) => self.gates.push(CliffordGate::Y(lo)),
            (true, false) => self.gates.push(CliffordGate::Z(lo)),
        }
        self.a.sign = false;
        self.b.sign = false;
    }
}

/// Gate sequence of a uniformly random n-qubit Clifford element.
pub fn sample_clifford_gates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<CliffordGate> {
    let mut gates = Vec::new();
    for lo in 0..n {
        let mut a = BinaryPauli::sample(n, rng);
        while a.identity_from(lo) {
            a = BinaryPauli::sample(n, rng);
        }
        let mut b = BinaryPauli::sample(n, rng);
        while !a.anticommutes_from(&b, lo) {
            b = BinaryPauli::sample(n, rng);
        }
        let mut tableau = PairTableau::new(a, b);
        tableau.sweep(lo);
        gates.extend(tableau.gates);
    }
    gates
}

/// Multiplies the gate list into a dense unitary, first-applied gate
/// rightmost. Qubit 0 is the most significant index bit.
pub fn gates_to_matrix(n: usize, gates: &[CliffordGate]) -> CMat {
    let mut u = linalg::identity(1 << n);
    for gate in gates {
        u = gate_matrix(n, *gate) * u;
    }
    u
}

fn gate_matrix(n: usize, gate: CliffordGate) -> CMat {
    match gate {
        CliffordGate::H(q) => embed_single(n, q, &hadamard()),
        CliffordGate::S(q) => embed_single(n, q, &phase_gate()),
        CliffordGate::X(q) => embed_single(n, q, &crate::pauli::PauliLetter::X.matrix()),
        CliffordGate::Y(q) => embed_single(n, q, &crate::pauli::PauliLetter::Y.matrix()),
        CliffordGate::Z(q) => embed_single(n, q, &crate::pauli::PauliLetter::Z.matrix()),
        CliffordGate::Cnot(c, t) => permutation_matrix(n, |i| {
            if linalg::qubit_bit(i, n, c) == 1 {
                i ^ (1usize << (n - 1 - t))
            } else {
                i
            }
        }),
        CliffordGate::Swap(p, q) => permutation_matrix(n, |i| {
            let bp = linalg::qubit_bit(i, n, p);
            let bq = linalg::qubit_bit(i, n, q);
            if bp == bq {
                i
            } else {
                i ^ (1usize << (n - 1 - p)) ^ (1usize << (n - 1 - q))
            }
        }),
    }
}

fn embed_single(n: usize, qubit: usize, g: &CMat) -> CMat {
    let eye = linalg::identity(2);
    let mut m = CMat::identity(1, 1);
    for q in 0..n {
        m = linalg::kron(&m, if q == qubit { g } else { &eye });
    }
    m
}

fn permutation_matrix(n: usize, image: impl Fn(usize) -> usize) -> CMat {
    let d = 1usize << n;
    let mut m = linalg::zeros(d);
    for col in 0..d {
        m[(image(col), col)] = Complex64::new(1.0, 0.0);
    }
    m
}
