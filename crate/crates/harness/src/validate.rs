//! Exact-oracle validation suites behind `shadows validate`: enumeration
//! identities that must hold to tight tolerances on a healthy build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use shadows_core::clifford;
use shadows_core::estimators::{
    enumerate_truncation_moments, plan_samples, threshold, v_h, PlanRegime,
};
use shadows_core::linalg::{
    self, random_density_matrix, random_traceless_hermitian, CMat, DensityMatrix,
};
use shadows_core::pauli::{PauliLetter, PauliString, WeightedPauliSum};
use shadows_core::povm::{
    dual_frame, frame_superoperator, shadow_norm_exact_with, clifford_norm_bound, DualFrame, Povm,
};
use shadows_core::process::{choi, process_povm, Channel, InputEnsemble};
use shadows_core::protocol::Protocol;
use shadows_core::sources::{
    ghz_state, martingale_centering_gap, GhzUnravelSource, History, IidSource,
    LastOutcomeEchoSource, ParityFlipSource, StateSource,
};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn check(name: &str, passed: bool, detail: String) -> Self {
        SuiteResult {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Worst entrywise gap of Σ_k tr(ρE_k)ρ̂_k − ρ over the given states.
pub fn unbiasedness_max_gap(povm: &Povm, duals: &DualFrame, states: &[DensityMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for rho in states {
        let mut recon = linalg::zeros(povm.dim());
        for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
            let p = (e * rho.matrix()).diagonal().sum().re;
            recon += shadow.matrix().scale(p);
        }
        worst = worst.max(linalg::max_abs_diff(&recon, rho.matrix()));
    }
    worst
}

fn random_states(d: usize, count: usize, seed: u64) -> Vec<DensityMatrix> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count).map(|_| random_density_matrix(d, &mut rng)).collect()
}

pub fn suite_unbiasedness() -> SuiteResult {
    let mut worst = 0.0f64;
    for (povm, seed) in [
        (Povm::pauli_bases(1).unwrap(), 101u64),
        (Povm::pauli_bases(2).unwrap(), 102),
        (Povm::single_qubit_clifford(), 103),
    ] {
        let duals = dual_frame(&povm).unwrap();
        let states = random_states(povm.dim(), 50, seed);
        worst = worst.max(unbiasedness_max_gap(&povm, &duals, &states));
    }
    SuiteResult::check(
        "unbiasedness",
        worst < 1e-9,
        format!("max reconstruction gap {worst:.3e} (tolerance 1e-9)"),
    )
}

/// Exact 24-element Clifford group average against (ρ + tr(ρ)·1)/3.
pub fn depolarizing_identity_gap() -> f64 {
    let group = clifford::single_qubit_group();
    let mut sets: Vec<(f64, CMat)> = Vec::new();
    for u in group.iter() {
        for z in 0..2 {
            let ket = u.adjoint().column(z).into_owned();
            sets.push((1.0 / 24.0, &ket * ket.adjoint()));
        }
    }
    let frame = shadows_core::povm::FrameSuperoperator::from_weighted_effects(
        sets.iter().map(|(w, e)| (*w, e)),
    );
    let mut rng = ChaCha12Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rho = random_density_matrix(2, &mut rng);
        let expect = (rho.matrix() + linalg::identity(2).scale(1.0)).scale(1.0 / 3.0);
        worst = worst.max(linalg::max_abs_diff(&frame.apply(rho.matrix()), &expect));
    }
    worst
}

pub fn suite_depolarizing_identity() -> SuiteResult {
    let gap = depolarizing_identity_gap();
    SuiteResult::check(
        "clifford_depolarizing_identity",
        gap < 1e-12,
        format!("max gap {gap:.3e} (tolerance 1e-12)"),
    )
}

pub fn suite_shadow_norms() -> SuiteResult {
    let mut detail = String::new();
    let mut passed = true;

    // Pauli protocol: exact norm equals 3^k for weight-k strings, k = 1..3
    let mut rng = ChaCha12Rng::seed_from_u64(105);
    for k in 1..=3usize {
        let n = 3;
        let povm = Povm::pauli_bases(n).unwrap();
        let duals = dual_frame(&povm).unwrap();
        for _ in 0..3 {
            let mut letters = vec![PauliLetter::I; n];
            let mut support: Vec<usize> = (0..n).collect();
            for _ in 0..(n - k) {
                support.remove(rng.gen_range(0..support.len()));
            }
            for &q in &support {
                letters[q] =
                    [PauliLetter::X, PauliLetter::Y, PauliLetter::Z][rng.gen_range(0..3)];
            }
            let p = PauliString::new(letters);
            let exact =
                shadow_norm_exact_with(&povm, &duals, &p.to_dense().unwrap()).unwrap();
            let expect = 3f64.powi(k as i32);
            if (exact - expect).abs() > 1e-9 {
                passed = false;
                detail.push_str(&format!("{p}: exact {exact} != {expect}; "));
            }
        }
    }

    // Clifford d = 2: exact norm below 3·tr(O²) for random traceless O
    let povm = Povm::single_qubit_clifford();
    let duals = dual_frame(&povm).unwrap();
    let mut worst_excess = 0.0f64;
    for _ in 0..100 {
        let o = random_traceless_hermitian(2, &mut rng);
        let exact = shadow_norm_exact_with(&povm, &duals, &o).unwrap();
        worst_excess = worst_excess.max(exact - clifford_norm_bound(&o));
    }
    if worst_excess > 1e-9 {
        passed = false;
        detail.push_str(&format!("clifford bound violated by {worst_excess:.3e}; "));
    }
    if detail.is_empty() {
        detail = format!(
            "pauli norms match 3^k (1e-9); clifford excess {worst_excess:.3e}"
        );
    }
    SuiteResult::check("shadow_norms", passed, detail)
}

pub fn suite_bias_bound() -> SuiteResult {
    let povm = Povm::pauli_bases(1).unwrap();
    let duals = dual_frame(&povm).unwrap();
    let z = "Z".parse::<PauliString>().unwrap().to_dense().unwrap();
    let norm = 3.0; // exact shadow norm of Z under Pauli-6
    let mut rng = ChaCha12Rng::seed_from_u64(106);
    let mut worst_slack = f64::MIN;
    let mut worst_eps_ratio = f64::MIN;
    for _ in 0..50 {
        // mixtures of pure and mixed inputs
        let rho = if rng.gen_bool(0.5) {
            random_density_matrix(2, &mut rng)
        } else {
            let a = random_density_matrix(2, &mut rng);
            let b = random_density_matrix(2, &mut rng);
            let w: f64 = rng.gen_range(0.0..1.0);
            DensityMatrix::new(a.matrix().scale(w) + b.matrix().scale(1.0 - w)).unwrap()
        };
        let t: f64 = rng.gen_range(0.05..4.0);
        let m = enumerate_truncation_moments(&povm, &duals, &rho, &z, t).unwrap();
        let bias = (m.e_y - m.e_x).abs();
        worst_slack = worst_slack.max(bias - norm / (4.0 * t));
        worst_slack = worst_slack.max(bias - m.e_x_sq / (4.0 * t));

        // with the planner threshold the bias stays below ε/5
        let eps: f64 = rng.gen_range(0.05..0.5);
        let t_plan = threshold(norm, eps).unwrap();
        let m = enumerate_truncation_moments(&povm, &duals, &rho, &z, t_plan).unwrap();
        worst_eps_ratio = worst_eps_ratio.max((m.e_y - m.e_x).abs() / (eps / 5.0));
    }
    let passed = worst_slack <= 1e-12 && worst_eps_ratio <= 1.0 + 1e-12;
    SuiteResult::check(
        "truncation_bias_bound",
        passed,
        format!(
            "max slack {worst_slack:.3e} (tolerance 1e-12); bias/(ε/5) max {worst_eps_ratio:.3}"
        ),
    )
}

pub fn suite_v_h() -> SuiteResult {
    let mut passed = true;
    let mut detail = String::new();

    let h = WeightedPauliSum::new(
        2,
        vec![(0.5, "XX".parse().unwrap()), (0.3, "XI".parse().unwrap())],
    )
    .unwrap();
    let golden = v_h(&h).unwrap();
    if (golden - 3.42).abs() > 1e-12 {
        passed = false;
        detail.push_str(&format!("golden V_H = {golden} != 3.42; "));
    }

    // dominance over the exact worst-case second moment, 2-term Hamiltonians
    let mut rng = ChaCha12Rng::seed_from_u64(107);
    let mut worst = f64::MIN;
    let letters = [PauliLetter::I, PauliLetter::X, PauliLetter::Y, PauliLetter::Z];
    for n in 1..=3usize {
        let povm = Povm::pauli_bases(n).unwrap();
        let duals = dual_frame(&povm).unwrap();
        let mut done = 0;
        while done < 17 {
            let mut terms = Vec::new();
            for _ in 0..2 {
                let s = PauliString::new((0..n).map(|_| letters[rng.gen_range(0..4)]).collect());
                if !s.is_identity() {
                    terms.push((rng.gen_range(-1.0..1.0), s));
                }
            }
            let Ok(h) = WeightedPauliSum::new(n, terms) else {
                continue;
            };
            if h.terms().is_empty() {
                continue;
            }
            let vh = v_h(&h).unwrap();
            let exact =
                shadow_norm_exact_with(&povm, &duals, &h.to_dense().unwrap()).unwrap();
            worst = worst.max(exact - vh);
            done += 1;
        }
    }
    if worst > 1e-9 {
        passed = false;
        detail.push_str(&format!("V_H undershoots the exact norm by {worst:.3e}; "));
    }
    if detail.is_empty() {
        detail = format!("golden 3.42 exact; max (exact − V_H) = {worst:.3e}");
    }
    SuiteResult::check("v_h", passed, detail)
}

pub fn suite_planner_goldens() -> SuiteResult {
    let mut passed = true;
    let mut detail = String::new();
    let cases: [(f64, f64, f64, PlanRegime, u64, Option<f64>); 3] = [
        (0.25, 0.1, 9.0, PlanRegime::General, 2247, Some(45.0)),
        (0.1, 0.05, 3.0, PlanRegime::General, 5764, None),
        (0.2, 0.05, 2.0, PlanRegime::Clifford, 2882, None),
    ];
    for (eps, delta, norm, regime, expect_n, expect_t) in cases {
        let plan = plan_samples(eps, delta, &[norm], regime).unwrap();
        if plan.rounds != expect_n {
            passed = false;
            detail.push_str(&format!("N({norm},{eps},{delta}) = {} != {expect_n}; ", plan.rounds));
        }
        if let Some(t) = expect_t {
            if plan.observables[0].threshold != t {
                passed = false;
                detail.push_str(&format!(
                    "T = {} != {t}; ",
                    plan.observables[0].threshold
                ));
            }
        }
    }
    if detail.is_empty() {
        detail = "N = 2247/5764/2882 and T = 45 match".into();
    }
    SuiteResult::check("planner_goldens", passed, detail)
}

pub fn suite_martingale_centering() -> SuiteResult {
    let protocol = Protocol::pauli(1);
    let z = "Z".parse::<PauliString>().unwrap().to_dense().unwrap();
    let ket0 = DensityMatrix::new(shadows_core::povm::eigenprojector(PauliLetter::Z, 0)).unwrap();
    let ket1 = DensityMatrix::new(shadows_core::povm::eigenprojector(PauliLetter::Z, 1)).unwrap();
    let sources: Vec<Box<dyn StateSource>> = vec![
        Box::new(IidSource::new(random_states(2, 1, 108).pop().unwrap())),
        Box::new(ParityFlipSource::new(ket0.clone(), ket1.clone()).unwrap()),
        Box::new(LastOutcomeEchoSource::new(ket0, ket1).unwrap()),
        Box::new(GhzUnravelSource::new(3).unwrap()),
    ];
    let mut rng = ChaCha12Rng::seed_from_u64(109);
    let mut worst = 0.0f64;
    let mut histories = 0usize;
    while histories < 100 {
        let source = &sources[histories % sources.len()];
        let mut h = History::new();
        for _ in 0..rng.gen_range(0..10) {
            let draw = protocol.draw(&mut rng);
            let k = rng.gen_range(0..2);
            h.push(draw, k);
        }
        if source.next_state(&h).is_err() {
            continue; // zero-probability GHZ path
        }
        let gap = martingale_centering_gap(source.as_ref(), &protocol, &h, &z).unwrap();
        worst = worst.max(gap);
        histories += 1;
    }
    SuiteResult::check(
        "martingale_centering",
        worst < 1e-9,
        format!("max centering gap {worst:.3e} over 100 histories (tolerance 1e-9)"),
    )
}

pub fn suite_ghz_distribution() -> SuiteResult {
    let mut worst_tv = 0.0f64;
    for n in 2..=4usize {
        let source = GhzUnravelSource::new(n).unwrap();
        let psi = ghz_state(n);
        let mut tv = 0.0;
        for z in 0..(1usize << n) {
            let mut h = History::new();
            let mut chain = 1.0;
            for q in 0..n {
                let bit = linalg::qubit_bit(z, n, q);
                let rho = source.next_state(&h).unwrap();
                chain *= rho.matrix()[(bit, bit)].re;
                if chain == 0.0 {
                    break;
                }
                h.push(
                    shadows_core::protocol::ProtocolDraw::PauliBases(vec![PauliLetter::Z]),
                    bit,
                );
            }
            tv += 0.5 * (chain - psi[z].norm_sqr()).abs();
        }
        worst_tv = worst_tv.max(tv);
    }
    SuiteResult::check(
        "ghz_unraveling_distribution",
        worst_tv < 1e-12,
        format!("max total variation {worst_tv:.3e} for n = 2..4 (tolerance 1e-12)"),
    )
}

pub fn suite_choi_unbiasedness() -> SuiteResult {
    let ensemble = InputEnsemble::pauli6();
    let povm = Povm::pauli_bases(1).unwrap();
    let bipartite = process_povm(&ensemble, &povm).unwrap();
    let duals = dual_frame(&bipartite).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(110);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        // random unitary mixed with depolarizing noise
        let g = CMat::from_fn(2, 2, |_, _| {
            linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let u = g.qr().q();
        let p: f64 = rng.gen_range(0.0..1.0);
        let mut kraus = vec![u.scale((1.0 - 0.75 * p).sqrt())];
        for letter in [PauliLetter::X, PauliLetter::Y, PauliLetter::Z] {
            kraus.push((letter.matrix() * &u).scale((0.25 * p).sqrt()));
        }
        let channel = Channel::new(kraus).unwrap();
        let rho_choi = choi(&channel).unwrap();
        let mut recon = linalg::zeros(4);
        for (effect, shadow) in bipartite.effects().iter().zip(duals.shadows()) {
            let prob = (effect * rho_choi.matrix()).diagonal().sum().re;
            recon += shadow.matrix().scale(prob);
        }
        worst = worst.max(linalg::max_abs_diff(&recon, rho_choi.matrix()));
    }
    SuiteResult::check(
        "choi_unbiasedness",
        worst < 1e-9,
        format!("max Choi reconstruction gap {worst:.3e} over 20 channels (tolerance 1e-9)"),
    )
}

pub fn suite_frame_consistency() -> SuiteResult {
    // S(ρ̂_k) = E_k for the built-in enumerable POVMs
    let mut worst = 0.0f64;
    for povm in [
        Povm::pauli_bases(1).unwrap(),
        Povm::pauli_bases(2).unwrap(),
        Povm::single_qubit_clifford(),
    ] {
        let frame = frame_superoperator(&povm);
        let duals = dual_frame(&povm).unwrap();
        for (e, shadow) in povm.effects().iter().zip(duals.shadows()) {
            worst = worst.max(linalg::max_abs_diff(&frame.apply(shadow.matrix()), e));
        }
    }
    SuiteResult::check(
        "dual_frame_consistency",
        worst < 1e-9,
        format!("max S(ρ̂)−E gap {worst:.3e} (tolerance 1e-9)"),
    )
}

/// Runs every suite; all must pass on a healthy build.
pub fn run_validation() -> Vec<SuiteResult> {
    vec![
        suite_unbiasedness(),
        suite_frame_consistency(),
        suite_depolarizing_identity(),
        suite_shadow_norms(),
        suite_bias_bound(),
        suite_v_h(),
        suite_planner_goldens(),
        suite_martingale_centering(),
        suite_ghz_distribution(),
        suite_choi_unbiasedness(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use shadows_core::linalg::DenseHermitian;

    #[test]
    fn all_suites_pass_on_a_fresh_build() {
        for suite in run_validation() {
            assert!(suite.passed, "{}: {}", suite.name, suite.detail);
        }
    }

    #[test]
    fn mutated_dual_frame_breaks_unbiasedness() {
        // fault injection: scale the shadows by 1.01 and watch the suite fail
        let povm = Povm::pauli_bases(1).unwrap();
        let duals = dual_frame(&povm).unwrap();
        let corrupted: Vec<DenseHermitian> = duals
            .shadows()
            .iter()
            .map(|s| DenseHermitian::new(s.matrix().scale(1.01)).unwrap())
            .collect();
        let corrupted = DualFrame::from_shadows(corrupted);
        let states = random_states(2, 10, 999);
        let gap = unbiasedness_max_gap(&povm, &corrupted, &states);
        assert!(gap > 1e-9, "corrupted frame still looks unbiased ({gap})");
    }
}
