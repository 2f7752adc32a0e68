//! Cross-module properties checked through the public API.

use aae_core::estimation::{
    aae_estimate, boost, canonical_p0, estimate_projector_sum, invert_boost, predicted_queries, AaeOptions, Backend,
    GroupPriors, Prior,
};
use aae_core::fermion::{
    beta_norms, extrapolation_radius, fock_matrix, jordan_wigner_one_body, pauli_sum_matrix, projector_decomposition,
    projector_drift_bound, OneBodyOperator,
};
use aae_core::oracles::{make_boosted_walk, make_walk, sqrt_encoding, BlockEncodedOperator, ReflectionOracle, StatePrepOracle};
use aae_core::quadrature::{
    gradient_operator, hellmann_feynman_deviation, newton_cotes_rule, select_parameters, AnalyticityBudget,
};
use aae_core::random::{self, rng_from_seed};
use aae_core::statevector::{exact_eigensolve, DenseOperator, StateVector};
use aae_core::toys::{random_one_body, random_projector_sum, toy_path, TOY_PATHS};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unitary_sequences_preserve_norm(seed in any::<u64>(), n in 1usize..5, steps in 1usize..12) {
        let mut rng = rng_from_seed(seed);
        let mut psi = random::state(n, &mut rng);
        for _ in 0..steps {
            let k = rng.random_range(1..=n.min(2));
            let mut targets: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                targets.swap(i, j);
            }
            let (t, rest) = targets.split_at(k);
            let controls: Vec<usize> = rest.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
            psi = psi.apply_unitary(&random::unitary(k, &mut rng), t, &controls).unwrap();
        }
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_probabilities_sum_to_one(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let psi = random::state(n, &mut rng);
        let width = rng.random_range(1..=n);
        let register: Vec<usize> = (0..width).map(|i| (i * 7 + seed as usize) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let total: f64 = (0..1usize << register.len())
            .map(|v| psi.measurement_probability_value(&register, v).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenpairs_are_consistent(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let h = random::hermitian(n, &mut rng);
        let spec = exact_eigensolve(&h).unwrap();
        let scale = h.spectral_norm().max(1e-300);
        for (i, &lambda) in spec.eigenvalues.iter().enumerate() {
            let v = spec.eigenvectors.column(i).into_owned();
            let r = h.matrix() * &v - v.scale(lambda);
            prop_assert!(r.norm() <= 1e-10 * scale);
        }
        let gram = spec.eigenvectors.adjoint() * &spec.eigenvectors;
        prop_assert!(max_diff(&gram, &DMatrix::identity(h.dim(), h.dim())) < 1e-10);
        prop_assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn projector_expectations_are_probabilities(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let rank = rng.random_range(0..=(1usize << n));
        let proj = random::projector(n, rank, &mut rng).unwrap();
        prop_assert!(proj.is_projector(1e-10));
        let v = random::state(n, &mut rng).expectation_value(&proj).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn boosted_walk_matches_boost_formula(seed in any::<u64>(), n in 1usize..5, mu in 1u32..=5, frac in 0.0f64..1.0) {
        let mut rng = rng_from_seed(seed);
        let dim = 1usize << n;
        let rank = rng.random_range(1..dim.max(2));
        let proj = random::projector(n, rank.min(dim - 1).max(1), &mut rng).unwrap();
        let p = frac * canonical_p0(mu);
        let psi = random::state_with_marked_probability(&proj, p, &mut rng).unwrap();
        let prep = StatePrepOracle::from_state("prep", psi);
        let refl = ReflectionOracle::from_projector("refl", proj).unwrap();
        let walk = make_boosted_walk(&prep, &refl, mu).unwrap();
        prop_assert!((walk.boosted_probability() - boost(p, mu).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn sqrt_encoding_success_is_normalized_expectation(seed in any::<u64>(), n in 1usize..4, k in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let dim = 1usize << n;
        let betas: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let refls: Vec<ReflectionOracle> = (0..k)
            .map(|i| {
                let rank = rng.random_range(0..=dim);
                ReflectionOracle::from_projector(&format!("p{i}"), random::projector(n, rank, &mut rng).unwrap()).unwrap()
            })
            .collect();
        let psi = random::state(n, &mut rng);
        let enc = sqrt_encoding(&betas, &refls).unwrap();
        let expectation: f64 = betas.iter().zip(&refls).map(|(b, r)| b * r.marked_probability(&psi).unwrap()).sum();
        let norm = betas.iter().map(|b| b.sqrt()).sum::<f64>().powi(2);
        prop_assert!((enc.success_probability(&psi).unwrap() - expectation / norm).abs() < 1e-10);
    }

    #[test]
    fn block_encoding_top_left_block(seed in any::<u64>(), n in 1usize..3, k in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
        let us: Vec<DenseOperator> = (0..k).map(|_| random::unitary(n, &mut rng)).collect();
        let be = BlockEncodedOperator::new("lcu", &coeffs, &us).unwrap();
        let mut a = DMatrix::<Complex64>::zeros(1 << n, 1 << n);
        for (c, u) in coeffs.iter().zip(&us) {
            a += u.matrix().scale(*c);
        }
        prop_assert!(max_diff(&be.encoded_block(), &a.unscale(be.alpha())) < 1e-10);
    }

    #[test]
    fn walk_charges_are_additive(seed in any::<u64>(), applications in 0u64..20, mu in 0u32..4) {
        let mut rng = rng_from_seed(seed);
        let proj = random::projector(2, 1, &mut rng).unwrap();
        let prep = StatePrepOracle::from_state("prep", random::state(2, &mut rng));
        let refl = ReflectionOracle::from_projector("refl", proj).unwrap();
        let walk = make_boosted_walk(&prep, &refl, mu).unwrap();
        let mut v = walk.boosted_state();
        for _ in 0..applications {
            v = walk.apply(&v).unwrap();
        }
        walk.charge_boosted_state(1);
        let m = mu as u64;
        prop_assert_eq!(prep.queries(), applications * (2 * m + 2) + 2 * m + 1);
        prop_assert_eq!(refl.queries(), applications * (m + 1) + m);
    }

    #[test]
    fn inversion_round_trip(mu in 1u32..=5, frac in 1e-6f64..=1.0) {
        let p = frac * canonical_p0(mu);
        prop_assert!((invert_boost(boost(p, mu).unwrap(), mu).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn predicted_queries_monotone(p0 in 1e-4f64..0.25, a in 0.01f64..1.0, b in 0.01f64..1.0, e1 in 1e-5f64..1e-1, e2 in 1e-5f64..1e-1) {
        let (d_lo, d_hi) = if a < b { (a * p0, b * p0) } else { (b * p0, a * p0) };
        let (e_lo, e_hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(predicted_queries(p0, d_hi, e_lo, 0.05).unwrap() <= predicted_queries(p0, d_lo, e_lo, 0.05).unwrap());
        prop_assert!(predicted_queries(p0, d_lo, e_hi, 0.05).unwrap() <= predicted_queries(p0, d_lo, e_lo, 0.05).unwrap());
    }

    #[test]
    fn one_body_mappings_reconstruct(seed in any::<u64>(), n in 1usize..7) {
        let a = random_one_body(n, seed).unwrap();
        let direct = fock_matrix(&a);
        let strings = jordan_wigner_one_body(&a).unwrap();
        prop_assert!(max_diff(&pauli_sum_matrix(&strings, n), &direct) < 1e-10);
        let sum = projector_decomposition(&a).unwrap();
        prop_assert!(max_diff(sum.operator().matrix(), &direct) < 1e-10);
        let psi = random::state(n, &mut rng_from_seed(seed ^ 1));
        let direct_value = psi.expectation_value(&DenseOperator::hermitian(direct).unwrap()).unwrap();
        prop_assert!((sum.expectation(&psi).unwrap() - direct_value).abs() < 1e-10);
        let (b1, bhalf) = beta_norms(&sum);
        prop_assert!(b1 <= bhalf + 1e-12);
    }

    #[test]
    fn extrapolation_radius_monotone(
        gap in 0.1f64..2.0, p0 in 0.0f64..0.25, b in 0.1f64..5.0, eps in 1e-4f64..1e-1, scale in 1.0f64..3.0
    ) {
        let base = extrapolation_radius(gap, p0, b, eps).unwrap();
        prop_assert!(extrapolation_radius(gap, p0, b, eps * scale).unwrap() >= base);
        prop_assert!(extrapolation_radius(gap * scale, p0, b, eps).unwrap() >= base);
        prop_assert!(extrapolation_radius(gap, p0, b * scale, eps).unwrap() <= base);
        prop_assert!(extrapolation_radius(gap, (p0 * scale).min(0.25), b, eps).unwrap() <= base);
    }

    #[test]
    fn perturbed_nodes_stay_within_budget(gamma in 0.05f64..2.0, eps in 1e-3f64..0.1, seed in any::<u64>()) {
        let budget = AnalyticityBudget::new(gamma).unwrap();
        let params = select_parameters(eps, &budget).unwrap();
        let rule = newton_cotes_rule(params.n).unwrap();
        let mut rng = rng_from_seed(seed);
        let values: Vec<f64> = rule.nodes.iter().map(|x| x.sin()).collect();
        let perturbed: Vec<f64> = values
            .iter()
            .map(|v| v + if rng.random_bool(0.5) { 1.0 } else { -1.0 } * params.node_tolerance)
            .collect();
        let dev = (rule.integrate(&perturbed).unwrap() - rule.integrate(&values).unwrap()).abs();
        prop_assert!(dev <= eps / 2.0 + 1e-15);
        prop_assert!(dev + params.truncation <= eps);
    }
}

#[test]
fn exact_backend_error_within_twice_epsilon() {
    let opts = AaeOptions::with_backend(Backend::ExactSubspace);
    let mut rng = rng_from_seed(17);
    for mu in 1..=5u32 {
        let p0 = canonical_p0(mu);
        for frac in [0.1, 0.3, 0.5, 0.7] {
            let p = frac * p0;
            let proj = random::projector(2, 1, &mut rng).unwrap();
            let psi = random::state_with_marked_probability(&proj, p, &mut rng).unwrap();
            let prep = StatePrepOracle::from_state("prep", psi);
            let refl = ReflectionOracle::from_projector("refl", proj).unwrap();
            let eps = 1e-4 * p0;
            let rep = aae_estimate(&prep, &refl, &Prior::new(mu, 0.05).unwrap(), eps, &opts, &mut rng).unwrap();
            assert!((rep.estimate - p).abs() <= 2.0 * eps, "mu {mu} p {p}");
        }
    }
}

#[test]
fn projector_sum_error_within_group_errors() {
    let sum = random_projector_sum(2, 3, 2, 0.4, 21).unwrap();
    let (prep, priors) = aae_core::toys::low_weight_instance(&sum, 22).unwrap();
    let truth: Vec<f64> = sum.groups.iter().map(|g| g.expectation(prep.state()).unwrap()).collect();
    let opts = AaeOptions::default();
    for seed in 0..10 {
        let rep = estimate_projector_sum(&sum, &priors, &prep, 1e-2, 0.05, &opts, seed).unwrap();
        let total_err = (rep.estimate - sum.expectation(prep.state()).unwrap()).abs();
        let group_errs: f64 = rep.groups.iter().map(|g| (g.estimate - truth[g.group]).abs()).sum();
        assert!(total_err <= group_errs + 1e-12);
        let budgets: f64 = rep.groups.iter().map(|g| g.epsilon_budget).sum();
        assert!((budgets - 1e-2).abs() < 1e-12);
    }
    assert_eq!(GroupPriors::new(vec![1, 2]).unwrap().len(), 2);
}

#[test]
fn drift_bound_holds_on_shipped_paths() {
    let samples = aae_core::toys::path_samples();
    for id in TOY_PATHS {
        let path = toy_path(id).unwrap();
        let (_, gap) = path.min_gap(64).unwrap();
        let hdot = path.derivative_norm_bound(64).unwrap();
        let mut rng = rng_from_seed(31);
        let projectors: Vec<DenseOperator> = (0..20)
            .map(|_| {
                let rank = rng.random_range(1..path.dim());
                random::projector(path.n_qubits(), rank, &mut rng).unwrap()
            })
            .collect();
        let states: Vec<StateVector> = samples.iter().map(|&x| path.spectrum(x).unwrap().ground_state()).collect();
        for w in samples.windows(2).zip(states.windows(2)) {
            let ((x0, x1), (s0, s1)) = ((w.0[0], w.0[1]), (&w.1[0], &w.1[1]));
            let bound = projector_drift_bound(hdot, gap).unwrap() * (x1 - x0);
            for p in &projectors {
                let change = (s1.expectation_value(p).unwrap() - s0.expectation_value(p).unwrap()).abs();
                assert!(change <= bound + 1e-12, "{id}: {change} > {bound}");
            }
        }
    }
}

#[test]
fn hellmann_feynman_on_shipped_paths() {
    for id in TOY_PATHS {
        let path = toy_path(id).unwrap();
        assert!(hellmann_feynman_deviation(&path, 16, 1e-4).unwrap() < 1e-6, "{id}");
        let (g, sum) = gradient_operator(&path, 0.3).unwrap();
        assert!(max_diff(g.matrix(), sum.operator().matrix()) < 1e-12);
    }
}

#[test]
fn walk_queries_match_manual_count() {
    let (prep, refl) = aae_core::toys::single_qubit_instance(0.1).unwrap();
    let walk = make_walk(&prep, &refl).unwrap();
    let mut v = prep.state().clone();
    for _ in 0..5 {
        v = walk.apply(&v).unwrap();
    }
    assert_eq!((prep.queries(), refl.queries()), (10, 5));
    let one = OneBodyOperator::from_real(&DMatrix::from_element(1, 1, 2.0)).unwrap();
    assert_eq!(one.n_orbitals(), 1);
}
