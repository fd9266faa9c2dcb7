//! Dense complex operators on small Hilbert spaces.
//!
//! Everything is `nalgebra::DMatrix<Complex64>` underneath; dimensions stay
//! small (d <= 64) so dense kernels are always the right tool here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const STATE_TRACE_TOL: f64 = 1e-10;
pub const STATE_EIG_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Kronecker product with the first factor on the most significant axis
/// (qubit 0 of `a ⊗ b` is the leftmost factor).
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(d: usize) -> CMat {
    CMat::zeros(d, d)
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().sum()
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Column-stacked vectorization; pairs with the Hilbert-Schmidt inner product
/// as `tr(A† B) = vec(A)† vec(B)`.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues (ascending)
/// with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let se = m.clone().symmetric_eigen();
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = CMat::from_columns(
        &order
            .iter()
            .map(|&i| se.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    vals[0]
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    *vals.last().expect("non-empty spectrum")
}

/// A d x d Hermitian operator (observable).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHermitian {
    mat: CMat,
}

impl DenseHermitian {
    /// Validates hermiticity to `HERMITICITY_TOL` entrywise.
    pub fn new(mat: CMat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(ShadowError::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        let defect = hermiticity_defect(&mat);
        if defect > HERMITICITY_TOL {
            return Err(ShadowError::InvalidState(format!(
                "hermiticity defect {defect:.3e} exceeds {HERMITICITY_TOL:.0e}"
            )));
        }
        Ok(Self { mat })
    }

    /// Symmetrizes `(A + A†)/2` after checking the defect is numerical noise
    /// rather than a genuinely non-Hermitian input.
    pub fn from_nearly_hermitian(mat: CMat) -> Result<Self> {
        let defect = hermiticity_defect(&mat);
        if defect > 1e-9 {
            return Err(ShadowError::InvalidState(format!(
                "matrix is not Hermitian (defect {defect:.3e})"
            )));
        }
        let sym = (&mat + mat.adjoint()).scale(0.5);
        Ok(Self { mat: sym })
    }

    pub fn zero(d: usize) -> Self {
        Self { mat: zeros(d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: identity(d) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        trace(&self.mat).re
    }

    /// tr(O²) = squared Frobenius norm for Hermitian O.
    pub fn trace_of_square(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    /// tr(O A) for Hermitian O and any matrix A (real part; exact for
    /// Hermitian A).
    pub fn expectation_of(&self, a: &CMat) -> f64 {
        debug_assert_eq!(self.dim(), a.nrows());
        // tr(O A) = sum_ij O_ij A_ji
        let mut acc = Complex64::default();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.mat[(i, j)] * a[(j, i)];
            }
        }
        acc.re
    }

    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        self.expectation_of(rho.matrix())
    }
}

/// A valid quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        let defect = hermiticity_defect(&mat);
        if defect > 1e-9 {
            return Err(ShadowError::InvalidState(format!(
                "hermiticity defect {defect:.3e}"
            )));
        }
        let mat = (&mat + mat.adjoint()).scale(0.5);
        let tr = trace(&mat).re;
        if (tr - 1.0).abs() > STATE_TRACE_TOL {
            return Err(ShadowError::InvalidState(format!(
                "trace {tr} deviates from 1 by more than {STATE_TRACE_TOL:.0e}"
            )));
        }
        let min_eig = min_eigenvalue(&mat);
        if min_eig < -STATE_EIG_TOL {
            return Err(ShadowError::InvalidState(format!(
                "minimum eigenvalue {min_eig:.3e} below -{STATE_EIG_TOL:.0e}"
            )));
        }
        Ok(Self { mat })
    }

    /// |ψ⟩⟨ψ| from a (normalized or unnormalized, non-null) state vector.
    pub fn pure(ket: &CVec) -> Result<Self> {
        let norm_sq: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq <= 0.0 {
            return Err(ShadowError::InvalidState("null state vector".into()));
        }
        let mat = ket * ket.adjoint() / cr(norm_sq);
        Ok(Self { mat })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            mat: identity(d).scale(1.0 / d as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }
}

/// Serialization form for complex matrices: rows of `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        if rows == 0 {
            return Err(ShadowError::MalformedRecord("empty matrix".into()));
        }
        let cols = self.0[0].len();
        if self.0.iter().any(|r| r.len() != cols) {
            return Err(ShadowError::MalformedRecord("ragged matrix rows".into()));
        }
        Ok(CMat::from_fn(rows, cols, |i, j| {
            c(self.0[i][j][0], self.0[i][j][1])
        }))
    }
}

// --- state-vector utilities (qubit 0 is the most significant bit) ---

#[inline]
pub fn qubit_bit(index: usize, n_qubits: usize, qubit: usize) -> usize {
    (index >> (n_qubits - 1 - qubit)) & 1
}

/// Applies a single-qubit operator to `qubit` of an n-qubit state vector.
pub fn apply_single_qubit(state: &CVec, n_qubits: usize, qubit: usize, op: &CMat) -> CVec {
    let dim = 1usize << n_qubits;
    debug_assert_eq!(state.len(), dim);
    debug_assert_eq!(op.nrows(), 2);
    let stride = 1usize << (n_qubits - 1 - qubit);
    let mut out = CVec::zeros(dim);
    for i in 0..dim {
        let b = (i / stride) & 1;
        let base = i & !(stride);
        // amplitude contributions from bit values 0 and 1 at `qubit`
        out[i] = op[(b, 0)] * state[base] + op[(b, 1)] * state[base | stride];
    }
    out
}

/// Reduced 2x2 state of `qubit` from a pure n-qubit state vector
/// (traces out every other qubit).
pub fn reduce_to_qubit(state: &CVec, n_qubits: usize, qubit: usize) -> CMat {
    let dim = 1usize << n_qubits;
    debug_assert_eq!(state.len(), dim);
    let stride = 1usize << (n_qubits - 1 - qubit);
    let mut rho = zeros(2);
    for i in 0..dim {
        if (i / stride) & 1 != 0 {
            continue;
        }
        let a0 = state[i];
        let a1 = state[i | stride];
        rho[(0, 0)] += a0 * a0.conj();
        rho[(0, 1)] += a0 * a1.conj();
        rho[(1, 0)] += a1 * a0.conj();
        rho[(1, 1)] += a1 * a1.conj();
    }
    rho
}

// --- random test/validation inputs ---

pub fn random_ket<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    let mut v = CVec::from_fn(d, |_, _| gaussian_c(rng));
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v /= cr(norm);
    v
}

/// Ginibre-sampled full-rank density matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = CMat::from_fn(d, d, |_, _| gaussian_c(rng));
    let m = &g * g.adjoint();
    let tr = trace(&m).re;
    DensityMatrix::new(m.scale(1.0 / tr)).expect("Ginibre construction is valid")
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DenseHermitian {
    let g = CMat::from_fn(d, d, |_, _| gaussian_c(rng));
    DenseHermitian::new((&g + g.adjoint()).scale(0.5)).expect("symmetrized")
}

pub fn random_traceless_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DenseHermitian {
    let h = random_hermitian(d, rng);
    let shift = h.trace() / d as f64;
    let m = h.into_matrix() - identity(d).scale(shift);
    DenseHermitian::new(m).expect("traceless shift keeps hermiticity")
}

fn gaussian_c<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    // Box-Muller; good enough for test-input generation.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u1.ln()).sqrt();
    c(r * u2.cos(), r * u2.sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    // independent elementwise Kronecker oracle
    fn kron_oracle(a: &CMat, b: &CMat) -> CMat {
        let (ar, ac) = (a.nrows(), a.ncols());
        let (br, bc) = (b.nrows(), b.ncols());
        CMat::from_fn(ar * br, ac * bc, |i, j| {
            a[(i / br, j / bc)] * b[(i % br, j % bc)]
        })
    }

    #[test]
    fn kron_matches_elementwise_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = CMat::from_fn(2, 2, |_, _| gaussian_c(&mut rng));
        let b = CMat::from_fn(3, 3, |_, _| gaussian_c(&mut rng));
        assert!(max_abs_diff(&kron(&a, &b), &kron_oracle(&a, &b)) < 1e-14);
    }

    #[test]
    fn vectorize_preserves_hs_inner_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let a = CMat::from_fn(3, 3, |_, _| gaussian_c(&mut rng));
        let b = CMat::from_fn(3, 3, |_, _| gaussian_c(&mut rng));
        let hs = trace(&(a.adjoint() * &b));
        let v = (vectorize(&a).adjoint() * vectorize(&b))[(0, 0)];
        assert!((hs - v).norm() < 1e-12);
        assert!(max_abs_diff(&unvectorize(&vectorize(&a), 3), &a) < 1e-15);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let h = random_hermitian(4, &mut rng);
        let (vals, vecs) = hermitian_eigen(h.matrix());
        let diag = CMat::from_diagonal(&CVec::from_iterator(4, vals.iter().map(|&v| cr(v))));
        let rebuilt = &vecs * diag * vecs.adjoint();
        assert!(max_abs_diff(&rebuilt, h.matrix()) < 1e-10);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn density_matrix_rejects_bad_inputs() {
        // trace 2
        let m = identity(2);
        assert!(DensityMatrix::new(m).is_err());
        // negative eigenvalue
        let mut m = zeros(2);
        m[(0, 0)] = cr(1.5);
        m[(1, 1)] = cr(-0.5);
        assert!(DensityMatrix::new(m).is_err());
        // non-Hermitian
        let mut m = identity(2).scale(0.5);
        m[(0, 1)] = cr(0.3);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn pure_state_has_unit_trace_and_rank_one() {
        let ket = CVec::from_vec(vec![cr(1.0), cr(1.0)]);
        let rho = DensityMatrix::pure(&ket).unwrap();
        assert!((trace(rho.matrix()).re - 1.0).abs() < 1e-14);
        let (vals, _) = hermitian_eigen(rho.matrix());
        assert!(vals[0].abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduce_to_qubit_matches_definition() {
        // |ψ⟩ = |0⟩⊗|+⟩: qubit 0 reduces to |0⟩⟨0|, qubit 1 to |+⟩⟨+|
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = CVec::from_vec(vec![cr(s), cr(s), cr(0.0), cr(0.0)]);
        let r0 = reduce_to_qubit(&psi, 2, 0);
        assert!((r0[(0, 0)].re - 1.0).abs() < 1e-12 && r0[(1, 1)].norm() < 1e-12);
        let r1 = reduce_to_qubit(&psi, 2, 1);
        assert!((r1[(0, 1)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn apply_single_qubit_respects_bit_order() {
        // X on qubit 0 of |00⟩ gives |10⟩ (index 2 with MSB convention)
        let x = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]);
        let mut psi = CVec::zeros(4);
        psi[0] = cr(1.0);
        let out = apply_single_qubit(&psi, 2, 0, &x);
        assert!((out[2].re - 1.0).abs() < 1e-14);
        let out = apply_single_qubit(&psi, 2, 1, &x);
        assert!((out[1].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_json_round_trips() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = CMat::from_fn(3, 3, |_, _| gaussian_c(&mut rng));
        let j = MatrixJson::from_matrix(&m);
        let text = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert!(max_abs_diff(&back.to_matrix().unwrap(), &m) < 1e-15);
    }
}
