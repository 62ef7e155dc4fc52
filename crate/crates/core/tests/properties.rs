use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, RngSeed};

use qss_core::analysis::{self, in_validity_region};
use qss_core::channels::{adc, apply_channel, pdc, weak_op, ChannelKind, WeakKind};
use qss_core::linalg::{embed, partial_trace, su2, tensor};
use qss_core::optimizer::{correction_objectives, optimize_correction_from, SecretFamily};
use qss_core::par::Execution;
use qss_core::protocol::{receiver_marginals, recycle_and_rerun, run_iteration, ProtocolConfig, Secret};
use qss_core::tolerance::{EQ_TOL, RESIDUAL_TOL};
use qss_core::{Complex64, ComplexMatrix, DensityMatrix, PureState};

fn config(cases: u32, seed: u64) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

fn matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
    complex_vec(dim * dim).prop_map(move |d| ComplexMatrix::new(dim, dim, d).unwrap())
}

fn pure_state(qubits: usize) -> impl Strategy<Value = PureState> {
    complex_vec(1 << qubits)
        .prop_filter("nonzero", |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            PureState::new(v.iter().map(|z| z / n).collect()).unwrap()
        })
}

/// Mixture of two random pure states.
fn density(qubits: usize) -> impl Strategy<Value = DensityMatrix> {
    (pure_state(qubits), pure_state(qubits), 0.0f64..1.0)
        .prop_map(|(a, b, w)| a.density().scaled(w).sum(&b.density().scaled(1.0 - w)).unwrap())
}

fn secret() -> impl Strategy<Value = Secret> {
    (0.0f64..=1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(k, phi)| Secret::with_phase(k, phi).unwrap())
}

fn is_valid_state(rho: &DensityMatrix, trace: f64) -> bool {
    rho.validate(EQ_TOL).is_ok() && (rho.trace() - trace).abs() < EQ_TOL
}

proptest! {
    #![proptest_config(config(64, 0x5eed_0001))]

    #[test]
    fn tensor_is_associative_and_bilinear(a in matrix(2), b in matrix(2), c in matrix(2), t in -2.0f64..2.0) {
        let left = tensor(&tensor(&a, &b), &c);
        let right = tensor(&a, &tensor(&b, &c));
        prop_assert!(left.approx_eq(&right, 1e-12));
        let scaled = tensor(&a.scale_real(t), &b);
        prop_assert!(scaled.approx_eq(&tensor(&a, &b).scale_real(t), 1e-12));
        let sum = tensor(&(&a + &c), &b);
        prop_assert!(sum.approx_eq(&(&tensor(&a, &b) + &tensor(&c, &b)), 1e-12));
    }

    #[test]
    fn embedding_preserves_unitarity(theta in 0.0f64..3.2, phi in 0.0f64..6.3, lam in 0.0f64..6.3, q in 0usize..4, shrink in 0.1f64..0.9) {
        let u = su2(theta, phi, lam);
        prop_assert!(embed(&u, &[q], 4).unwrap().is_unitary(RESIDUAL_TOL));
        let not_unitary = ComplexMatrix::diagonal(&[Complex64::new(1.0, 0.0), Complex64::new(shrink, 0.0)]);
        prop_assert!(!embed(&not_unitary, &[q], 4).unwrap().is_unitary(1e-3));
    }

    #[test]
    fn embedded_kraus_sets_stay_complete(strength in 0.0f64..=1.0, q in 0usize..3, amplitude in any::<bool>()) {
        let ch = if amplitude { adc(strength) } else { pdc(strength) }.unwrap();
        let mut sum = ComplexMatrix::zeros(8, 8);
        for k in ch.operators() {
            let e = embed(k, &[q], 3).unwrap();
            sum = &sum + &e.adjoint().matmul(&e).unwrap();
        }
        prop_assert!(sum.approx_eq(&ComplexMatrix::identity(8), RESIDUAL_TOL));
    }

    #[test]
    fn partial_trace_identities(rho in density(3), mask in 0usize..8) {
        let all = partial_trace(&rho, &[0, 1, 2]).unwrap();
        prop_assert!(all.matrix().approx_eq(rho.matrix(), 1e-15));
        let keep: Vec<usize> = (0..3).filter(|q| mask & (1 << q) != 0).collect();
        if !keep.is_empty() {
            let reduced = partial_trace(&rho, &keep).unwrap();
            prop_assert!((reduced.trace() - rho.trace()).abs() < 1e-12);
            prop_assert!(reduced.validate(EQ_TOL).is_ok());
        }
    }
}

proptest! {
    #![proptest_config(config(100, 0x5eed_0002))]

    #[test]
    fn channels_preserve_trace_and_positivity(rho in density(2), strength in 0.0f64..=1.0, q in 0usize..2) {
        for ch in [pdc(strength).unwrap(), adc(strength).unwrap()] {
            let out = apply_channel(&rho, &ch, q).unwrap();
            prop_assert!(is_valid_state(&out, 1.0));
        }
    }

    #[test]
    fn channel_fixed_points(p in 0.0f64..=1.0, d in 0.0f64..=1.0) {
        let diag = DensityMatrix::new(ComplexMatrix::diagonal(&[Complex64::new(d, 0.0), Complex64::new(1.0 - d, 0.0)])).unwrap();
        let out = apply_channel(&diag, &pdc(p).unwrap(), 0).unwrap();
        prop_assert!(out.matrix().approx_eq(diag.matrix(), 1e-15));
        let ground = PureState::basis(1, 0).unwrap().density();
        let out = apply_channel(&ground, &adc(p).unwrap(), 0).unwrap();
        prop_assert!(out.matrix().approx_eq(ground.matrix(), 1e-15));
    }

    #[test]
    fn matched_reversal_is_a_uniform_rescaling(rho in density(1), s in 0.0f64..1.0) {
        let fwd = weak_op(WeakKind::ForwardNull, s).unwrap();
        let rev = weak_op(WeakKind::Reverse, s).unwrap();
        let both = rho.conjugate_local(fwd.matrix(), 0).unwrap().conjugate_local(rev.matrix(), 0).unwrap();
        prop_assert!(both.matrix().approx_eq(&rho.matrix().scale_real(1.0 - s), 1e-14));
    }
}

proptest! {
    #![proptest_config(config(40, 0x5eed_0003))]

    #[test]
    fn single_receivers_learn_nothing(secret in secret(), n in 2usize..=5) {
        let half = DensityMatrix::maximally_mixed(1);
        for (q, marginal) in receiver_marginals(&ProtocolConfig::new(n), &secret).unwrap() {
            prop_assert!(marginal.matrix().approx_eq(half.matrix(), 1e-12), "receiver {}", q);
        }
    }

    #[test]
    fn noiseless_reconstruction_is_perfect(secret in secret(), n in 2usize..=5) {
        let out = run_iteration(&ProtocolConfig::new(n), &secret).unwrap();
        prop_assert_eq!(out.reports.len(), 1 << n);
        prop_assert!((out.total_branch_probability() - 1.0).abs() < 1e-10);
        for r in &out.reports {
            prop_assert!((r.fidelity - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_probabilities_sum_to_success(
        secret in secret(),
        p in 0.0f64..=1.0,
        s in 0.0f64..=1.0,
        r in 0.0f64..=1.0,
        amplitude in any::<bool>(),
    ) {
        let kind = if amplitude { ChannelKind::AmplitudeDamping } else { ChannelKind::PhaseDamping };
        let plain = ProtocolConfig::new(2).with_noise(kind, p);
        let out = run_iteration(&plain, &secret).unwrap();
        prop_assert!((out.total_branch_probability() - 1.0).abs() < 1e-10);
        for rep in &out.reports {
            prop_assert!(is_valid_state(&rep.reconstructed_state, 1.0));
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&rep.fidelity));
        }
        if amplitude {
            if let Ok(out) = run_iteration(&plain.clone().with_wmrqm(s, r), &secret) {
                let expected = analysis::sp2(secret.k(), s, r, p).unwrap();
                prop_assert!((out.total_branch_probability() - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn later_rounds_ignore_earlier_noise(
        first in secret(),
        second in secret(),
        n1 in 0.0f64..=1.0,
        n2 in 0.0f64..=1.0,
        amplitude in any::<bool>(),
        back in 0.0f64..=1.0,
    ) {
        let kind = if amplitude { ChannelKind::AmplitudeDamping } else { ChannelKind::PhaseDamping };
        let round1 = ProtocolConfig::new(3).with_noise(kind, n1).with_return_trip(kind, back);
        let round2 = ProtocolConfig::new(3).with_noise(kind, n2);
        let a = run_iteration(&round1, &first).unwrap();
        let b = recycle_and_rerun(&a.state, &second, &round2).unwrap();
        let single = run_iteration(&round2, &second).unwrap();
        for (x, y) in b.reports.iter().zip(&single.reports) {
            prop_assert!((x.fidelity - y.fidelity).abs() < 1e-12);
            prop_assert!((x.branch_probability - y.branch_probability).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(config(200, 0x5eed_0004))]

    #[test]
    fn averages_decrease_with_noise(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(analysis::avg_f_pd(hi).unwrap() < analysis::avg_f_pd(lo).unwrap());
        prop_assert!(analysis::avg_f_ad(hi).unwrap() < analysis::avg_f_ad(lo).unwrap());
    }

    #[test]
    fn case_one_fidelity_grows_with_reversal(k in 0.0f64..=1.0, p in 0.0f64..0.999, r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(analysis::f1_ww(k, hi, p).unwrap() >= analysis::f1_ww(k, lo, p).unwrap() - 1e-15);
    }

    #[test]
    fn optimal_reversal_dominates(k in 0.0f64..1.0, s in 0.0f64..1.0, p in 0.0f64..1.0, r in 0.0f64..=1.0) {
        prop_assume!(in_validity_region(k, s, p));
        let ropt = analysis::r_opt(k, s, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&ropt));
        let best = analysis::f0_ww(k, s, ropt, p).unwrap();
        prop_assert!(best >= analysis::f0_ww(k, s, r, p).unwrap() - 1e-12);
    }

    #[test]
    fn bounded_formulas_stay_in_unit_interval(idx in 0usize..64, args in prop::collection::vec(0.0f64..=1.0, 4)) {
        let formulas = analysis::formulas();
        let f = &formulas[idx % formulas.len()];
        prop_assume!(f.bounded);
        if let Ok(v) = f.eval(&args[..f.params.len()]) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{} = {}", f.name, v);
        }
    }
}

proptest! {
    #![proptest_config(config(6, 0x5eed_0005))]

    #[test]
    fn correction_search_is_restart_invariant(strength in 0.1f64..=1.0, amplitude in any::<bool>(), branch in 0usize..4) {
        let kind = if amplitude { ChannelKind::AmplitudeDamping } else { ChannelKind::PhaseDamping };
        let cfg = ProtocolConfig::new(2).with_noise(kind, strength);
        let objectives = correction_objectives(&cfg, SecretFamily::Haar { phases: 4 }, 12, Execution::Parallel).unwrap();
        let b = &objectives[branch];
        let values: Vec<f64> = (0..8)
            .map(|i| {
                let opt = optimize_correction_from(&b.objective, i as f64 / 8.0, Execution::Parallel);
                assert!(opt.unitary.is_unitary(1e-10));
                opt.average_fidelity
            })
            .collect();
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(max - min < 1e-6, "{:?}", values);
    }
}
