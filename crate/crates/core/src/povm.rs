//! IC POVMs, frame superoperators, canonical dual frames, and shadow norms.
//!
//! The frame superoperator S(ρ) = Σ_k tr(ρ E_k) E_k is realized as a d²×d²
//! Hermitian matrix acting on column-vectorized operators; its inversion on
//! the effects yields the canonical dual frame of single-shot estimators.

use num_complex::Complex64;

use crate::clifford;
use crate::error::{Result, ShadowError};
use crate::linalg::{self, cr, CMat, CVec, DenseHermitian};
use crate::pauli::{traceless_decompose, PauliLetter, PauliString};

/// Relative eigenvalue floor below which a frame counts as rank-deficient.
pub const IC_RELATIVE_FLOOR: f64 = 1e-10;

/// Enumeration guard for product POVMs (6^n effects grow fast).
pub const MAX_ENUMERABLE_QUBITS: usize = 4;

/// A positive operator-valued measure with explicitly enumerated effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    dim: usize,
    effects: Vec<CMat>,
}

impl Povm {
    /// Validates positivity of every effect and Σ_k E_k = 1.
    pub fn new(effects: Vec<CMat>) -> Result<Self> {
        let dim = match effects.first() {
            Some(e) => e.nrows(),
            None => return Err(ShadowError::InvalidPovm("no effects".into())),
        };
        let mut sum = linalg::zeros(dim);
        for (k, e) in effects.iter().enumerate() {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(ShadowError::InvalidPovm(format!(
                    "effect {k} has shape {}x{}, expected {dim}x{dim}",
                    e.nrows(),
                    e.ncols()
                )));
            }
            let defect = linalg::hermiticity_defect(e);
            if defect > 1e-10 {
                return Err(ShadowError::InvalidPovm(format!(
                    "effect {k} is not Hermitian (defect {defect:.3e})"
                )));
            }
            let min_eig = linalg::min_eigenvalue(e);
            if min_eig < -1e-10 {
                return Err(ShadowError::InvalidPovm(format!(
                    "effect {k} has negative eigenvalue {min_eig:.3e}"
                )));
            }
            sum += e;
        }
        let dev = linalg::max_abs_diff(&sum, &linalg::identity(dim));
        if dev > 1e-10 {
            return Err(ShadowError::InvalidPovm(format!(
                "effects sum deviates from identity by {dev:.3e}"
            )));
        }
        Ok(Self { dim, effects })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn effect(&self, k: usize) -> &CMat {
        &self.effects[k]
    }

    /// The random-Pauli-basis POVM on n qubits: 6^n weighted effects
    /// (1/3^n)·⊗_q Π_{b_q, z_q}, the uniform basis choice folded into the
    /// weights so the effects sum to the identity.
    pub fn pauli_bases(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_ENUMERABLE_QUBITS {
            return Err(ShadowError::NotEnumerable);
        }
        let weight = 1.0 / 3f64.powi(n as i32);
        let mut effects = Vec::with_capacity(6usize.pow(n as u32));
        let bases = [PauliLetter::X, PauliLetter::Y, PauliLetter::Z];
        let mut combo = vec![0usize; n];
        loop {
            for z in 0..(1usize << n) {
                let mut e = CMat::identity(1, 1);
                for (q, &b) in combo.iter().enumerate() {
                    let bit = linalg::qubit_bit(z, n, q);
                    e = linalg::kron(&e, &eigenprojector(bases[b], bit));
                }
                effects.push(e.scale(weight));
            }
            // odometer over basis combinations
            let mut q = n;
            loop {
                if q == 0 {
                    break;
                }
                q -= 1;
                combo[q] += 1;
                if combo[q] < 3 {
                    break;
                }
                combo[q] = 0;
            }
            if combo.iter().all(|&b| b == 0) {
                break;
            }
        }
        Self::new(effects)
    }

    /// The enumerated single-qubit Clifford POVM: 48 effects
    /// (1/24)·U_g†|z⟩⟨z|U_g, indexed k = 2g + z.
    pub fn single_qubit_clifford() -> Self {
        let mut effects = Vec::with_capacity(48);
        for u in clifford::single_qubit_group() {
            for z in 0..2 {
                let ket = u.adjoint().column(z).into_owned();
                effects.push((&ket * ket.adjoint()).scale(1.0 / 24.0));
            }
        }
        Self::new(effects).expect("group POVM is valid by construction")
    }

    /// Computational-basis projectors; a valid POVM that is not IC.
    pub fn computational_basis(d: usize) -> Self {
        let effects = (0..d)
            .map(|i| {
                let mut e = linalg::zeros(d);
                e[(i, i)] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        Self::new(effects).expect("projective POVM is valid")
    }
}

/// Eigenprojector of a Pauli basis letter onto outcome bit z
/// (z = 0 is the +1 eigenvector). Entries are exact dyadic rationals,
/// (1 + (−1)^z σ_B)/2, so downstream traces stay exact.
pub fn eigenprojector(basis: PauliLetter, z: usize) -> CMat {
    let sign = if z == 0 { 0.5 } else { -0.5 };
    linalg::identity(2).scale(0.5) + basis.matrix().scale(sign)
}

/// Unitary rotating the given Pauli eigenbasis onto the computational basis:
/// measuring `basis` equals applying U then measuring Z.
pub fn basis_unitary(basis: PauliLetter) -> CMat {
    match basis {
        PauliLetter::Z | PauliLetter::I => linalg::identity(2),
        PauliLetter::X => clifford::hadamard(),
        // U† maps |0⟩ to the +i eigenvector (|0⟩ + i|1⟩)/√2
        PauliLetter::Y => clifford::hadamard() * clifford::phase_gate().adjoint(),
    }
}

/// The single-shot shadow for a Pauli-basis measurement on one qubit:
/// 3·Π_{b,z} − 1.
pub fn pauli_qubit_shadow(basis: PauliLetter, z: usize) -> CMat {
    eigenprojector(basis, z).scale(3.0) - linalg::identity(2)
}

/// The d²×d² matrix of ρ ↦ Σ_k tr(ρ E_k) E_k on vectorized operators.
#[derive(Debug, Clone)]
pub struct FrameSuperoperator {
    dim: usize,
    matrix: CMat,
}

impl FrameSuperoperator {
    pub fn from_povm(povm: &Povm) -> Self {
        Self::from_weighted_effects(povm.effects().iter().map(|e| (1.0, e)))
    }

    /// Weighted sum Σ w·vec(E)vec(E)†; with per-draw effect sets and draw
    /// probabilities as weights this is the protocol-averaged measurement
    /// map E_draw[Σ_z tr(ρ Π_z) Π_z].
    pub fn from_weighted_effects<'a, I>(effects: I) -> Self
    where
        I: IntoIterator<Item = (f64, &'a CMat)>,
    {
        let mut matrix: Option<CMat> = None;
        let mut dim = 0;
        for (w, e) in effects {
            dim = e.nrows();
            let v = linalg::vectorize(e);
            let outer = (&v * v.adjoint()).scale(w);
            match &mut matrix {
                Some(m) => *m += outer,
                None => matrix = Some(outer),
            }
        }
        let matrix = matrix.expect("at least one effect");
        Self { dim, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        linalg::unvectorize(&(&self.matrix * linalg::vectorize(rho)), self.dim)
    }

    /// Real eigenvalues of the (Hermitian PSD) frame matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen(&self.matrix).0
    }

    /// Rank relative to the largest eigenvalue.
    pub fn rank(&self) -> usize {
        let vals = self.eigenvalues();
        let max = vals.last().copied().unwrap_or(0.0);
        vals.iter().filter(|&&v| v > IC_RELATIVE_FLOOR * max).count()
    }

    pub fn is_informationally_complete(&self) -> bool {
        self.rank() == self.dim * self.dim
    }

    /// S⁻¹ applied to a matrix, via the Hermitian eigendecomposition.
    /// Fails when the smallest eigenvalue sits below the relative floor.
    pub fn invert_on(&self, a: &CMat) -> Result<CMat> {
        let (vals, vecs) = linalg::hermitian_eigen(&self.matrix);
        let max = *vals.last().expect("non-empty spectrum");
        let min = vals[0];
        if min < IC_RELATIVE_FLOOR * max {
            return Err(ShadowError::NotInformationallyComplete { min_eig: min });
        }
        let inv_diag = CMat::from_diagonal(&CVec::from_iterator(
            vals.len(),
            vals.iter().map(|&v| cr(1.0 / v)),
        ));
        let inv = &vecs * inv_diag * vecs.adjoint();
        Ok(linalg::unvectorize(&(inv * linalg::vectorize(a)), self.dim))
    }
}

/// The canonical dual frame: single-shot shadows ρ̂_k = S⁻¹(E_k), aligned
/// with the POVM's effects.
#[derive(Debug, Clone)]
pub struct DualFrame {
    shadows: Vec<DenseHermitian>,
}

impl DualFrame {
    /// Wraps an explicit shadow list (tests inject corrupted frames here).
    pub fn from_shadows(shadows: Vec<DenseHermitian>) -> Self {
        Self { shadows }
    }

    pub fn len(&self) -> usize {
        self.shadows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shadows.is_empty()
    }

    pub fn shadows(&self) -> &[DenseHermitian] {
        &self.shadows
    }

    pub fn shadow(&self, k: usize) -> &DenseHermitian {
        &self.shadows[k]
    }
}

pub fn frame_superoperator(povm: &Povm) -> FrameSuperoperator {
    FrameSuperoperator::from_povm(povm)
}

/// Computes ρ̂_k = S⁻¹(E_k) for every effect.
pub fn dual_frame(povm: &Povm) -> Result<DualFrame> {
    let frame = FrameSuperoperator::from_povm(povm);
    let shadows = povm
        .effects()
        .iter()
        .map(|e| {
            let raw = frame.invert_on(e)?;
            DenseHermitian::from_nearly_hermitian(raw)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DualFrame { shadows })
}

/// Exact worst-case second moment sup_σ Σ_k tr(σE_k)(tr(Oρ̂_k))².
/// The objective is linear in σ, so the supremum over states equals the
/// largest eigenvalue of M_O = Σ_k (tr(Oρ̂_k))²·E_k.
pub fn shadow_norm_exact(povm: &Povm, o: &DenseHermitian) -> Result<f64> {
    let duals = dual_frame(povm)?;
    shadow_norm_exact_with(povm, &duals, o)
}

/// Same as [`shadow_norm_exact`] with a precomputed dual frame.
pub fn shadow_norm_exact_with(povm: &Povm, duals: &DualFrame, o: &DenseHermitian) -> Result<f64> {
    if o.dim() != povm.dim() {
        return Err(ShadowError::DimensionMismatch {
            expected: povm.dim(),
            found: o.dim(),
        });
    }
    let mut m = linalg::zeros(povm.dim());
    for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
        let x = o.expectation_of(shadow.matrix());
        m += e.scale(x * x);
    }
    Ok(linalg::max_eigenvalue(&m).max(0.0))
}

/// The Clifford-protocol bound 3·tr(O²), computed on the traceless part.
pub fn clifford_norm_bound(o: &DenseHermitian) -> f64 {
    let (o0, mu) = traceless_decompose(o);
    if mu.abs() * (o.dim() as f64) > 1e-10 {
        log::warn!(
            "clifford_norm_bound: observable has trace {:.3e}; using its traceless part",
            o.trace()
        );
    }
    3.0 * o0.trace_of_square()
}

/// The Pauli-protocol shadow norm 3^weight for a single Pauli string.
pub fn pauli_norm_bound(p: &PauliString) -> Result<f64> {
    if p.is_identity() {
        return Err(ShadowError::IdentityPauli);
    }
    Ok(3f64.powi(p.weight() as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, random_density_matrix, random_traceless_hermitian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn pauli6_frame_matches_direct_summation_oracle() {
        let povm = Povm::pauli_bases(1).unwrap();
        assert_eq!(povm.len(), 6);
        let frame = frame_superoperator(&povm);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let rho = random_density_matrix(2, &mut rng);
            // direct summation over the 6 effects
            let mut oracle = linalg::zeros(2);
            for e in povm.effects() {
                let p = (e * rho.matrix()).diagonal().sum();
                oracle += e.scale(p.re);
            }
            assert!(max_abs_diff(&frame.apply(rho.matrix()), &oracle) < 1e-12);
        }
    }

    #[test]
    fn single_effect_povm_frame_is_trace_projector() {
        let povm = Povm::new(vec![linalg::identity(2)]).unwrap();
        let frame = frame_superoperator(&povm);
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let rho = random_density_matrix(2, &mut rng);
        let expect = linalg::identity(2).scale(linalg::trace(rho.matrix()).re);
        assert!(max_abs_diff(&frame.apply(rho.matrix()), &expect) < 1e-12);
    }

    #[test]
    fn computational_basis_frame_has_rank_two() {
        let povm = Povm::computational_basis(2);
        let frame = frame_superoperator(&povm);
        // eigendecomposition oracle: the frame is an orthogonal projector
        // onto span{vec(|0⟩⟨0|), vec(|1⟩⟨1|)}, so S² = S and tr S = 2
        let s = frame.matrix();
        assert!(max_abs_diff(&(s * s), s) < 1e-12);
        assert!((linalg::trace(s).re - 2.0).abs() < 1e-12);
        assert_eq!(frame.rank(), 2);
        assert!(!frame.is_informationally_complete());
    }

    #[test]
    fn pauli6_duals_are_3p_minus_identity() {
        let povm = Povm::pauli_bases(1).unwrap();
        let duals = dual_frame(&povm).unwrap();
        for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
            // effect is (1/3)|s⟩⟨s|; the matching shadow is 3|s⟩⟨s| − 1
            let expect = e.scale(9.0) - linalg::identity(2);
            assert!(max_abs_diff(shadow.matrix(), &expect) < 1e-9);
        }
    }

    #[test]
    fn clifford24_duals_match_d_plus_one_formula() {
        let povm = Povm::single_qubit_clifford();
        let duals = dual_frame(&povm).unwrap();
        let group = clifford::single_qubit_group();
        for (g, u) in group.iter().enumerate() {
            for z in 0..2 {
                let ket = u.adjoint().column(z).into_owned();
                let expect = (&ket * ket.adjoint()).scale(3.0) - linalg::identity(2);
                assert!(max_abs_diff(duals.shadow(2 * g + z).matrix(), &expect) < 1e-9);
            }
        }
    }

    #[test]
    fn computational_basis_has_no_dual_frame() {
        let povm = Povm::computational_basis(2);
        assert!(matches!(
            dual_frame(&povm),
            Err(ShadowError::NotInformationallyComplete { .. })
        ));
    }

    #[test]
    fn unbiasedness_on_random_states() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for povm in [
            Povm::pauli_bases(1).unwrap(),
            Povm::pauli_bases(2).unwrap(),
            Povm::single_qubit_clifford(),
        ] {
            let duals = dual_frame(&povm).unwrap();
            for _ in 0..10 {
                let rho = random_density_matrix(povm.dim(), &mut rng);
                let mut recon = linalg::zeros(povm.dim());
                for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
                    let p = (e * rho.matrix()).diagonal().sum().re;
                    recon += shadow.matrix().scale(p);
                }
                assert!(max_abs_diff(&recon, rho.matrix()) < 1e-9);
            }
        }
    }

    #[test]
    fn dual_frame_consistency() {
        for povm in [Povm::pauli_bases(1).unwrap(), Povm::single_qubit_clifford()] {
            let frame = frame_superoperator(&povm);
            let duals = dual_frame(&povm).unwrap();
            for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
                assert!(max_abs_diff(&frame.apply(shadow.matrix()), e) < 1e-9);
            }
        }
    }

    #[test]
    fn clifford_group_average_is_depolarizing() {
        // S(ρ) = (ρ + tr(ρ)·1)/3 for the exact 24-element average
        let group = clifford::single_qubit_group();
        let mut sets: Vec<(f64, CMat)> = Vec::new();
        for u in group.iter() {
            for z in 0..2 {
                let ket = u.adjoint().column(z).into_owned();
                sets.push((1.0 / 24.0, &ket * ket.adjoint()));
            }
        }
        let avg = FrameSuperoperator::from_weighted_effects(sets.iter().map(|(w, e)| (*w, e)));
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        for _ in 0..20 {
            let rho = random_density_matrix(2, &mut rng);
            let expect =
                (rho.matrix() + linalg::identity(2).scale(linalg::trace(rho.matrix()).re))
                    .scale(1.0 / 3.0);
            assert!(max_abs_diff(&avg.apply(rho.matrix()), &expect) < 1e-12);
        }
    }

    #[test]
    fn shadow_norm_of_z_is_three() {
        let povm = Povm::pauli_bases(1).unwrap();
        let z = "Z".parse::<PauliString>().unwrap().to_dense().unwrap();
        let norm = shadow_norm_exact(&povm, &z).unwrap();
        assert!((norm - 3.0).abs() < 1e-9);

        let cl = Povm::single_qubit_clifford();
        let norm = shadow_norm_exact(&cl, &z).unwrap();
        assert!((norm - 3.0).abs() < 1e-9);
        assert!(norm <= clifford_norm_bound(&z));
        assert!((clifford_norm_bound(&z) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn shadow_norm_of_zero_observable_is_zero() {
        let povm = Povm::pauli_bases(1).unwrap();
        let zero = DenseHermitian::zero(2);
        assert!(shadow_norm_exact(&povm, &zero).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pauli_shadow_norms_equal_3_pow_weight() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        for n in 1..=3 {
            let povm = Povm::pauli_bases(n).unwrap();
            let duals = dual_frame(&povm).unwrap();
            for _ in 0..3 {
                let letters: Vec<PauliLetter> = (0..n)
                    .map(|_| {
                        [PauliLetter::X, PauliLetter::Y, PauliLetter::Z][rng.gen_range(0..3)]
                    })
                    .collect();
                let p = PauliString::new(letters);
                let dense = p.to_dense().unwrap();
                let exact = shadow_norm_exact_with(&povm, &duals, &dense).unwrap();
                let bound = pauli_norm_bound(&p).unwrap();
                assert!(
                    (exact - bound).abs() < 1e-9,
                    "weight {} exact {exact} bound {bound}",
                    p.weight()
                );
            }
        }
    }

    #[test]
    fn clifford_norm_dominates_exact_norm() {
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        let povm = Povm::single_qubit_clifford();
        let duals = dual_frame(&povm).unwrap();
        for _ in 0..100 {
            let o = random_traceless_hermitian(2, &mut rng);
            let exact = shadow_norm_exact_with(&povm, &duals, &o).unwrap();
            assert!(exact <= clifford_norm_bound(&o) + 1e-9);
        }
    }

    #[test]
    fn clifford_norm_bound_examples() {
        let z = "Z".parse::<PauliString>().unwrap().to_dense().unwrap();
        assert!((clifford_norm_bound(&z) - 6.0).abs() < 1e-12);
        assert_eq!(clifford_norm_bound(&DenseHermitian::zero(2)), 0.0);
        let xx = "XX".parse::<PauliString>().unwrap().to_dense().unwrap();
        assert!((clifford_norm_bound(&xx) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_norm_bound_examples() {
        assert_eq!(pauli_norm_bound(&"Z".parse().unwrap()).unwrap(), 3.0);
        assert_eq!(pauli_norm_bound(&"ZZ".parse().unwrap()).unwrap(), 9.0);
        assert_eq!(pauli_norm_bound(&"XYZ".parse().unwrap()).unwrap(), 27.0);
        assert!(matches!(
            pauli_norm_bound(&PauliString::identity(2)),
            Err(ShadowError::IdentityPauli)
        ));
    }

    #[test]
    fn eigenprojectors_match_basis_unitary_columns() {
        for basis in [PauliLetter::X, PauliLetter::Y, PauliLetter::Z] {
            let u = basis_unitary(basis);
            for z in 0..2 {
                let ket = u.adjoint().column(z).into_owned();
                let from_unitary = &ket * ket.adjoint();
                assert!(max_abs_diff(&eigenprojector(basis, z), &from_unitary) < 1e-15);
            }
        }
    }

    #[test]
    fn povm_validation_rejects_bad_sets() {
        // does not sum to identity
        let half = linalg::identity(2).scale(0.4);
        assert!(Povm::new(vec![half.clone(), half.clone()]).is_err());
        // negative effect
        let z = "Z".parse::<PauliString>().unwrap().to_dense().unwrap();
        let plus = (linalg::identity(2) + z.matrix()).scale(0.75);
        let minus = (linalg::identity(2) - z.matrix()).scale(0.25)
            - linalg::identity(2).scale(0.25);
        assert!(Povm::new(vec![plus, minus + linalg::identity(2).scale(0.25)]).is_err());
    }
}
