//! Variational loop: `<H_f> + sum_i <xi(H_i)>` over the ansatz state,
//! minimized with L-BFGS from seeded random starts.

pub mod lbfgs;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{penalty_of_rational, to_f64, ConstraintHamiltonian, DiagonalProblem};
use crate::model::{rational_string, Bitstring, Rational};
use crate::sim::chain::{ChainState, ValueLattice};
use crate::sim::{self, AnsatzSpec, DEFAULT_QUBIT_CAP};

pub use lbfgs::Termination;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    /// `(f(x + h e_k) - f(x)) / h`, as SciPy does when no gradient is supplied.
    ForwardDifference,
    CentralDifference,
}

/// How the ansatz state is evaluated. Both engines are exact; `Auto` uses
/// the dense statevector up to `dense_max_qubits` and the chain form beyond.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Simulator {
    #[default]
    Auto,
    Dense,
    Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_fun_evals: usize,
    pub max_iterations: usize,
    pub f_tol: f64,
    pub g_tol: f64,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
    pub gradient_mode: GradientMode,
    pub fd_step: f64,
    pub simulator: Simulator,
    pub dense_max_qubits: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_fun_evals: 15_000,
            max_iterations: 15_000,
            f_tol: 2.22e-15,
            g_tol: 1e-5,
            memory: 10,
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-7,
            simulator: Simulator::Auto,
            dense_max_qubits: 6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("optimizer config: {what}")));
        if self.max_fun_evals == 0 || self.max_iterations == 0 || self.memory == 0 {
            return bad("counts must be positive");
        }
        if !(self.f_tol > 0.0 && self.g_tol > 0.0 && self.fd_step > 0.0) {
            return bad("tolerances and fd_step must be positive");
        }
        if self.dense_max_qubits > DEFAULT_QUBIT_CAP {
            return bad("dense_max_qubits exceeds the dense simulator cap");
        }
        Ok(())
    }

    fn lbfgs(&self) -> lbfgs::LbfgsSettings {
        lbfgs::LbfgsSettings {
            max_iterations: self.max_iterations,
            max_evaluations: self.max_fun_evals,
            f_tol: self.f_tol,
            g_tol: self.g_tol,
            memory: self.memory,
        }
    }
}

/// Result of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqeOutcome {
    pub theta_opt: Vec<f64>,
    pub final_loss: f64,
    /// Most probable basis state of the final circuit (full register).
    pub best_bits: Bitstring,
    /// `best_bits` without slack qubits.
    pub decision_bits: Bitstring,
    #[serde(with = "rational_string")]
    pub best_objective: Rational,
    pub feasible: bool,
    pub trial_seed: Option<u64>,
    pub eval_count: usize,
    pub iterations: usize,
    pub termination: Termination,
}

enum Engine {
    Dense { diagonal: Vec<f64> },
    Chain { forms: Vec<(ValueLattice, Vec<f64>)> },
}

/// Loss evaluator for one problem with its simulation engine prepared.
pub struct Energy<'a> {
    dp: &'a DiagonalProblem,
    ansatz: AnsatzSpec,
    engine: Engine,
}

fn chain_form(
    h: &ConstraintHamiltonian,
    n: usize,
    xi: impl Fn(Rational) -> f64,
) -> (ValueLattice, Vec<f64>) {
    let coeffs: Vec<Rational> = (0..n).map(|q| h.coeff(q)).collect();
    let lattice = ValueLattice::new(&coeffs);
    let constant = h.binary_constant();
    let weights = lattice.values().iter().map(|&v| xi(v + constant)).collect();
    (lattice, weights)
}

impl<'a> Energy<'a> {
    pub fn new(dp: &'a DiagonalProblem, cfg: &OptimizerConfig) -> Result<Self> {
        let n = dp.n_qubits();
        let dense = match cfg.simulator {
            Simulator::Dense => true,
            Simulator::Chain => false,
            Simulator::Auto => n <= cfg.dense_max_qubits,
        };
        let engine = if dense {
            Engine::Dense {
                diagonal: dp.full_diagonal(DEFAULT_QUBIT_CAP)?,
            }
        } else {
            let mut forms = vec![chain_form(dp.objective(), n, to_f64)];
            forms.extend(dp.terms().iter().map(|t| {
                chain_form(t.hamiltonian(), n, |h| penalty_of_rational(dp.penalty(), h))
            }));
            Engine::Chain { forms }
        };
        Ok(Self {
            dp,
            ansatz: AnsatzSpec::new(n),
            engine,
        })
    }

    pub fn ansatz(&self) -> &AnsatzSpec {
        &self.ansatz
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.engine, Engine::Dense { .. })
    }

    /// Loss with every constraint contracted against its support marginal.
    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        match &self.engine {
            Engine::Dense { .. } => dense_marginal_loss(self.dp, &self.ansatz, theta),
            Engine::Chain { forms } => {
                let state = ChainState::new(&self.ansatz, theta)?;
                Ok(forms
                    .iter()
                    .map(|(lattice, w)| state.expectation(lattice, w))
                    .sum())
            }
        }
    }

    pub fn loss_and_gradient(
        &self,
        theta: &[f64],
        mode: GradientMode,
        fd_step: f64,
    ) -> Result<(f64, Vec<f64>)> {
        match mode {
            GradientMode::Analytic => self.analytic(theta),
            GradientMode::ForwardDifference | GradientMode::CentralDifference => {
                let value = self.loss(theta)?;
                let mut grad = Vec::with_capacity(theta.len());
                let mut probe = theta.to_vec();
                for k in 0..theta.len() {
                    probe[k] = theta[k] + fd_step;
                    let plus = self.loss(&probe)?;
                    grad.push(if mode == GradientMode::ForwardDifference {
                        (plus - value) / fd_step
                    } else {
                        probe[k] = theta[k] - fd_step;
                        (plus - self.loss(&probe)?) / (2.0 * fd_step)
                    });
                    probe[k] = theta[k];
                }
                Ok((value, grad))
            }
        }
    }

    fn analytic(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        match &self.engine {
            Engine::Dense { diagonal } => sim::adjoint_gradient(&self.ansatz, theta, diagonal),
            Engine::Chain { forms } => {
                let state = ChainState::new(&self.ansatz, theta)?;
                let mut grad = vec![0.0; theta.len()];
                let value = forms
                    .iter()
                    .map(|(lattice, w)| state.expectation_with_gradient(lattice, w, &mut grad))
                    .sum();
                Ok((value, grad))
            }
        }
    }

    /// Most probable basis state of the circuit at `theta`.
    pub fn extract(&self, theta: &[f64]) -> Result<Bitstring> {
        match &self.engine {
            Engine::Dense { .. } => Ok(sim::prepare_state(&self.ansatz, theta)?.argmax()),
            Engine::Chain { .. } => Ok(ChainState::new(&self.ansatz, theta)?.argmax()),
        }
    }
}

fn dense_marginal_loss(dp: &DiagonalProblem, ansatz: &AnsatzSpec, theta: &[f64]) -> Result<f64> {
    let state = sim::prepare_state(ansatz, theta)?;
    let objective = dp.objective();
    let mut value = to_f64(objective.offset());
    for (&q, &a) in objective.coeffs() {
        let m = state.marginal_probabilities(&[q])?;
        value -= 0.5 * to_f64(a) * (m[0] - m[1]);
    }
    for term in dp.terms() {
        value += sim::expectation_on_support(&state, term.support(), term.penalty_table())?;
    }
    Ok(value)
}

/// `<psi(theta)| H |psi(theta)>` with default simulator selection.
pub fn loss(dp: &DiagonalProblem, theta: &[f64]) -> Result<f64> {
    Energy::new(dp, &OptimizerConfig::default())?.loss(theta)
}

pub fn gradient(dp: &DiagonalProblem, theta: &[f64], mode: GradientMode) -> Result<Vec<f64>> {
    let cfg = OptimizerConfig::default();
    Ok(Energy::new(dp, &cfg)?
        .loss_and_gradient(theta, mode, cfg.fd_step)?
        .1)
}

pub fn extract_solution(dp: &DiagonalProblem, theta: &[f64]) -> Result<Bitstring> {
    Energy::new(dp, &OptimizerConfig::default())?.extract(theta)
}

/// Uniform angles in `[-pi, pi)` from a seed.
pub fn initial_theta(n_params: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_params).map(|_| rng.gen_range(-PI..PI)).collect()
}

pub fn optimize(dp: &DiagonalProblem, theta0: &[f64], cfg: &OptimizerConfig) -> Result<VqeOutcome> {
    cfg.validate()?;
    let energy = Energy::new(dp, cfg)?;
    energy.ansatz().check_params(theta0)?;
    optimize_with(&energy, theta0, cfg, None)
}

fn optimize_with(
    energy: &Energy<'_>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
    trial_seed: Option<u64>,
) -> Result<VqeOutcome> {
    let min = lbfgs::minimize(
        |theta| energy.loss_and_gradient(theta, cfg.gradient_mode, cfg.fd_step),
        theta0,
        &cfg.lbfgs(),
    )?;
    let best_bits = energy.extract(&min.x)?;
    let decision_bits = energy.dp.strip_slack(&best_bits);
    let program = energy.dp.program();
    Ok(VqeOutcome {
        best_objective: program.eval_objective(&decision_bits)?,
        feasible: program.check_feasible(&decision_bits)?,
        theta_opt: min.x,
        final_loss: min.value,
        best_bits,
        decision_bits,
        trial_seed,
        eval_count: min.evaluations,
        iterations: min.iterations,
        termination: min.termination,
    })
}

/// Runs `n_trials` independent optimizations, trial `k` seeded with
/// `base_seed + k`, sorted by final loss (stable in seed order).
pub fn run_trials(
    dp: &DiagonalProblem,
    n_trials: usize,
    base_seed: u64,
    cfg: &OptimizerConfig,
) -> Result<Vec<VqeOutcome>> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    cfg.validate()?;
    let energy = Energy::new(dp, cfg)?;
    let n_params = energy.ansatz().param_count();
    let mut outcomes = (0..n_trials as u64)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed.wrapping_add(k);
            optimize_with(&energy, &initial_theta(n_params, seed), cfg, Some(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    outcomes.sort_by(|a, b| a.final_loss.total_cmp(&b.final_loss));
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{build, build_custom, upper_bound_lambda, PenaltySpec};
    use crate::model::{generate_instance, ConstrainedProgram, LinearConstraint, MkpInstance, Sense};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn step_problem(inst: &MkpInstance, lambda: f64) -> DiagonalProblem {
        build_custom(&inst.to_program(), &PenaltySpec::step(lambda)).unwrap()
    }

    #[test]
    fn zero_angles_give_all_zeros_loss() {
        let inst = generate_instance(2, 3, 1).unwrap();
        let dp = step_problem(&inst, 50.0);
        assert_abs_diff_eq!(loss(&dp, &vec![0.0; 12]).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(extract_solution(&dp, &vec![0.0; 12]).unwrap().to_string(), "000000");
    }

    #[test]
    fn all_ones_loss_counts_violations() {
        let inst = MkpInstance::new(vec![3, 5], vec![2, 4], vec![5, 3]).unwrap();
        let p = inst.to_program();
        let dp = step_problem(&inst, 50.0);
        let mut theta = vec![PI; 4];
        theta.extend([0.0; 4]);
        let ones = Bitstring::new(vec![true; 4]);
        let violated = p.constraints().iter().filter(|c| !c.is_satisfied(&ones)).count();
        assert_eq!(violated, 4);
        let expected = to_f64(p.minimization_value(&ones).unwrap()) + 50.0 * violated as f64;
        assert_abs_diff_eq!(loss(&dp, &theta).unwrap(), expected, epsilon = 1e-9);
        assert_eq!(extract_solution(&dp, &theta).unwrap(), ones);
    }

    #[test]
    fn engines_agree_on_loss_and_gradient() {
        let p = generate_instance(2, 3, 8).unwrap().to_program();
        for spec in [
            PenaltySpec::step(20.0),
            PenaltySpec::exponential(1.0, 3.0),
            PenaltySpec::unbalanced(1.0, 0.5),
        ] {
            let dp = build(&p, &spec).unwrap();
            let dense = Energy::new(&dp, &OptimizerConfig { simulator: Simulator::Dense, ..Default::default() }).unwrap();
            let chain = Energy::new(&dp, &OptimizerConfig { simulator: Simulator::Chain, ..Default::default() }).unwrap();
            assert!(dense.is_dense() && !chain.is_dense());
            for seed in 0..5 {
                let theta = initial_theta(12, seed);
                let (a, ga) = dense.loss_and_gradient(&theta, GradientMode::Analytic, 1e-7).unwrap();
                let (b, gb) = chain.loss_and_gradient(&theta, GradientMode::Analytic, 1e-7).unwrap();
                let scale = a.abs().max(1.0);
                assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-10);
                assert_relative_eq!(dense.loss(&theta).unwrap(), a, epsilon = 1e-9, max_relative = 1e-10);
                for (x, y) in ga.iter().zip(&gb) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-9 * scale);
                }
                assert_eq!(dense.extract(&theta).unwrap(), chain.extract(&theta).unwrap());
            }
        }
    }

    #[test]
    fn constant_hamiltonian_has_zero_gradient() {
        let p = ConstrainedProgram::new(
            Sense::Minimize,
            vec![Rational::from_integer(0); 3],
            Rational::from_integer(4),
            vec![LinearConstraint::from_integers(&[1, 1, 1], 5)],
        )
        .unwrap();
        let dp = build_custom(&p, &PenaltySpec::step(10.0)).unwrap();
        let g = gradient(&dp, &initial_theta(6, 3), GradientMode::Analytic).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn one_qubit_gradient_closed_form() {
        // Minimize x: loss = P(x = 1) = (1 - cos(t0 + t1)) / 2.
        let p = ConstrainedProgram::new(
            Sense::Minimize,
            vec![Rational::from_integer(1)],
            Rational::from_integer(0),
            vec![LinearConstraint::from_integers(&[1], 1)],
        )
        .unwrap();
        let dp = build_custom(&p, &PenaltySpec::step(1.0)).unwrap();
        for theta in [[0.3, 0.4], [-2.0, 0.1], [1.0, 2.5]] {
            let total = theta[0] + theta[1];
            assert_abs_diff_eq!(loss(&dp, &theta).unwrap(), (1.0 - total.cos()) / 2.0, epsilon = 1e-12);
            let g = gradient(&dp, &theta, GradientMode::Analytic).unwrap();
            let fd = gradient(&dp, &theta, GradientMode::CentralDifference).unwrap();
            for k in 0..2 {
                assert_abs_diff_eq!(g[k], total.sin() / 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(g[k], fd[k], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn one_qubit_descends_to_a_pole() {
        // Minimize -x: optimum is |1>, loss -1.
        let p = ConstrainedProgram::new(
            Sense::Maximize,
            vec![Rational::from_integer(1)],
            Rational::from_integer(0),
            vec![LinearConstraint::from_integers(&[1], 1)],
        )
        .unwrap();
        let dp = build_custom(&p, &PenaltySpec::step(1.0)).unwrap();
        let out = optimize(&dp, &[0.4, -0.1], &OptimizerConfig::default()).unwrap();
        assert_abs_diff_eq!(out.final_loss, -1.0, epsilon = 1e-9);
        assert!(out.eval_count <= 100);
        assert_eq!(out.best_bits.to_string(), "1");
        assert!(out.feasible);
    }

    #[test]
    fn stationary_start_is_kept() {
        let inst = generate_instance(1, 2, 3).unwrap();
        let dp = step_problem(&inst, 50.0);
        let out = optimize(&dp, &[0.0; 4], &OptimizerConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.theta_opt, vec![0.0; 4]);
        assert_eq!(out.termination, Termination::GradientTolerance);
    }

    #[test]
    fn small_mkp_reaches_brute_force_optimum() {
        let inst = MkpInstance::new(vec![3, 5], vec![2, 4], vec![5]).unwrap();
        let p = inst.to_program();
        let lambda = to_f64(upper_bound_lambda(&inst)) + 1.0;
        let dp = step_problem(&inst, lambda);
        let outcomes = run_trials(&dp, 3, 0, &OptimizerConfig::default()).unwrap();
        let best = &outcomes[0];
        assert_eq!(best.decision_bits, p.brute_force_solve().unwrap().bits);
        for o in &outcomes {
            assert_eq!(o.feasible, p.check_feasible(&o.decision_bits).unwrap());
        }
    }

    #[test]
    fn trials_are_sorted_deterministic_and_distinct() {
        let inst = generate_instance(2, 2, 4).unwrap();
        let dp = step_problem(&inst, 50.0);
        let cfg = OptimizerConfig::default();
        let a = run_trials(&dp, 3, 10, &cfg).unwrap();
        let b = run_trials(&dp, 3, 10, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].final_loss <= w[1].final_loss));
        assert_ne!(initial_theta(8, 10), initial_theta(8, 11));
        assert!(initial_theta(8, 10).iter().all(|t| (-PI..PI).contains(t)));
        assert!(run_trials(&dp, 0, 0, &cfg).is_err());
    }

    #[test]
    fn slack_outcome_strips_slack_bits() {
        let inst = MkpInstance::new(vec![3, 5], vec![2, 4], vec![5]).unwrap();
        let dp = build(&inst.to_program(), &PenaltySpec::slack(9.0)).unwrap();
        let out = optimize(&dp, &initial_theta(2 * dp.n_qubits(), 1), &OptimizerConfig::default()).unwrap();
        assert_eq!(out.best_bits.len(), 7);
        assert_eq!(out.decision_bits.len(), 2);
        assert_eq!(out.decision_bits, out.best_bits.truncated(2));
    }

    #[test]
    fn config_validation_and_dimension_checks() {
        let cfg = OptimizerConfig { f_tol: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let inst = generate_instance(1, 2, 3).unwrap();
        let dp = step_problem(&inst, 50.0);
        assert!(matches!(loss(&dp, &[0.0; 3]), Err(Error::ParameterCount { .. })));
        assert!(optimize(&dp, &[0.0; 5], &OptimizerConfig::default()).is_err());
    }
}
