use num_complex::Complex64;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penalty_vqe::ising::{
    build, build_custom, build_slack, build_unbalanced, constraint_eigenvalue, encode_constraint,
    upper_bound_lambda, PenaltySpec,
};
use penalty_vqe::model::{generate_instance, Bitstring, LinearConstraint, Rational};
use penalty_vqe::paulidecomp::{decompose_stepped_constraint, reconstruct};
use penalty_vqe::sim::{expectation_diagonal, expectation_on_support, AnsatzSpec, Statevector};
use penalty_vqe::vqe::{initial_theta, Energy, GradientMode, OptimizerConfig, Simulator};

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Statevector {
    let amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Statevector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn shape() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=3, 1usize..=3, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalue_equals_constraint_value(
        coeffs in proptest::collection::vec(-6i64..=6, 1..7),
        bound in -10i64..=10,
        index in any::<u64>(),
    ) {
        prop_assume!(coeffs.iter().any(|&c| c != 0));
        let c = LinearConstraint::from_integers(&coeffs, bound);
        let h = encode_constraint(&c).unwrap();
        let bits = Bitstring::from_index(index % (1 << coeffs.len()), coeffs.len());
        prop_assert_eq!(constraint_eigenvalue(&h, &bits), c.violation(&bits));
    }

    #[test]
    fn step_penalty_preserves_the_constrained_minimum((k, l, seed) in shape()) {
        let inst = generate_instance(k, l, seed).unwrap();
        let p = inst.to_program();
        let lambda = upper_bound_lambda(&inst).to_f64().unwrap() + 1.0;
        let dp = build_custom(&p, &PenaltySpec::step(lambda)).unwrap();
        let n = p.n_vars();
        let argmin = (0..1u64 << n)
            .map(|i| Bitstring::from_index(i, n))
            .min_by(|a, b| dp.eigenvalue(a).total_cmp(&dp.eigenvalue(b)))
            .unwrap();
        let best = p.brute_force_solve().unwrap();
        prop_assert!(p.check_feasible(&argmin).unwrap());
        prop_assert_eq!(p.eval_objective(&argmin).unwrap(), best.objective_value);
    }

    #[test]
    fn slack_minimum_over_registers_recovers_objective((k, l, seed) in (1usize..=2, 1usize..=3, any::<u64>()), lambda in 0.5f64..20.0) {
        let inst = generate_instance(k, l, seed).unwrap();
        let p = inst.to_program();
        let dp = build_slack(&p, lambda).unwrap();
        let n = p.n_vars();
        let extra = dp.n_qubits() - n;
        for x in 0..1u64 << n {
            let xb = Bitstring::from_index(x, n);
            if !p.check_feasible(&xb).unwrap() {
                continue;
            }
            let best = (0..1u64 << extra)
                .map(|y| dp.eigenvalue(&Bitstring::from_index((x << extra) | y, dp.n_qubits())))
                .fold(f64::INFINITY, f64::min);
            let f = p.minimization_value(&xb).unwrap();
            prop_assert!((best - f.to_f64().unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn support_marginals_match_full_expectation((k, l, seed) in shape(), state_seed in any::<u64>()) {
        let p = generate_instance(k, l, seed).unwrap().to_program();
        let dp = build_custom(&p, &PenaltySpec::exponential(1.5, 0.7)).unwrap();
        let state = random_state(dp.n_qubits(), &mut ChaCha8Rng::seed_from_u64(state_seed));
        for term in dp.terms() {
            let full = expectation_diagonal(&state, |b| term.penalty_at(b));
            let local = expectation_on_support(&state, term.support(), term.penalty_table()).unwrap();
            prop_assert!((full - local).abs() <= 1e-9 * full.abs().max(1.0));
        }
    }

    #[test]
    fn engines_agree((k, l, seed) in shape(), theta_seed in any::<u64>(), which in 0usize..3) {
        let p = generate_instance(k, l, seed).unwrap().to_program();
        let spec = [PenaltySpec::step(50.0), PenaltySpec::unbalanced(1.0, 0.5), PenaltySpec::slack(3.0)][which].clone();
        let dp = build(&p, &spec).unwrap();
        prop_assume!(dp.n_qubits() <= 14);
        let dense = Energy::new(&dp, &OptimizerConfig { simulator: Simulator::Dense, ..Default::default() }).unwrap();
        let chain = Energy::new(&dp, &OptimizerConfig { simulator: Simulator::Chain, ..Default::default() }).unwrap();
        let theta = initial_theta(2 * dp.n_qubits(), theta_seed);
        let (a, ga) = dense.loss_and_gradient(&theta, GradientMode::Analytic, 1e-7).unwrap();
        let (b, gb) = chain.loss_and_gradient(&theta, GradientMode::Analytic, 1e-7).unwrap();
        let scale = a.abs().max(1.0);
        prop_assert!((a - b).abs() <= 1e-10 * scale);
        for (x, y) in ga.iter().zip(&gb) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
        prop_assert_eq!(dense.extract(&theta).unwrap(), chain.extract(&theta).unwrap());
    }

    #[test]
    fn stepped_decomposition_expectation((k, l, seed) in shape(), state_seed in any::<u64>()) {
        let p = generate_instance(k, l, seed).unwrap().to_program();
        let dp = build_custom(&p, &PenaltySpec::step(2.0)).unwrap();
        let state = random_state(dp.n_qubits(), &mut ChaCha8Rng::seed_from_u64(state_seed));
        let probs = state.probabilities();
        for term in dp.terms() {
            let poly = decompose_stepped_constraint(term.hamiltonian(), &PenaltySpec::step(2.0), dp.n_qubits()).unwrap();
            prop_assert!(poly.terms().len() <= 1 << term.support().len());
            let diag = reconstruct(&poly);
            let via_poly: f64 = probs.iter().zip(&diag).map(|(p, d)| p * d).sum();
            let direct = expectation_on_support(&state, term.support(), term.penalty_table()).unwrap();
            prop_assert!((via_poly - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn random_gates_preserve_norm(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = random_state(n, &mut rng);
        for _ in 0..200 {
            if n > 1 && rng.gen_bool(0.4) {
                let a = rng.gen_range(0..n);
                let b = (a + rng.gen_range(1..n)) % n;
                s.apply_cz(a, b);
            } else {
                s.apply_ry(rng.gen_range(0..n), rng.gen_range(-7.0..7.0));
            }
        }
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn unbalanced_penalty_has_a_false_minimum() {
    // Some generated instance has an infeasible unbalanced argmin while the
    // step argmin is feasible.
    let found = (0..200u64).any(|seed| {
        let inst = generate_instance(2, 3, seed).unwrap();
        let p = inst.to_program();
        let n = p.n_vars();
        let argmin = |dp: &penalty_vqe::DiagonalProblem| {
            (0..1u64 << n)
                .map(|i| Bitstring::from_index(i, n))
                .min_by(|a, b| dp.eigenvalue(a).total_cmp(&dp.eigenvalue(b)))
                .unwrap()
        };
        let unb = argmin(&build_unbalanced(&p, 1.0, 0.5).unwrap());
        let step = argmin(&build_custom(&p, &PenaltySpec::step(100.0)).unwrap());
        !p.check_feasible(&unb).unwrap() && p.check_feasible(&step).unwrap()
    });
    assert!(found);
}

#[test]
fn three_by_four_slack_register_count() {
    let inst = penalty_vqe::MkpInstance::new(vec![1, 2, 3, 4], vec![1, 1, 1, 1], vec![5, 5, 5]).unwrap();
    let dp = build_slack(&inst.to_program(), 1.0).unwrap();
    assert_eq!(dp.n_qubits(), 25);
    assert_eq!(dp.slack_bits(), &[3, 3, 3, 1, 1, 1, 1]);
}

#[test]
fn ansatz_parameter_count() {
    assert_eq!(AnsatzSpec::new(12).param_count(), 24);
    assert_eq!(Rational::from_integer(3) / 2, Rational::new(3, 2));
}
