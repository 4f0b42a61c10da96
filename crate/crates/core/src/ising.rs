//! Spin encoding of linear forms and the penalized diagonal Hamiltonians.
//!
//! Substituting `x_j -> (1 - Z_j) / 2` into `h(x) = sum_j a_j x_j - b` gives
//! `H = C - 1/2 sum_j a_j Z_j` with `C = sum_j a_j / 2 - b`. Its eigenvalue on
//! `|x>` is `C - 1/2 sum_j (-1)^(x_j) a_j`, which only depends on the bits in
//! the support of `a`, so a constraint with `t` nonzero coefficients has at
//! most `2^t` distinct eigenvalues regardless of the register size.

use std::collections::BTreeMap;

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bitstring, ConstrainedProgram, LinearConstraint, MkpInstance, Rational};

/// Largest support for which eigenvalue tables are materialized.
pub const DEFAULT_SUPPORT_CAP: usize = 20;

/// Clamp applied to the exponent of the exponential penalty.
pub const EXP_CLAMP: f64 = 60.0;

/// Spin form `offset - 1/2 sum_j a_j Z_j` of a linear function of bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintHamiltonian {
    offset: Rational,
    coeffs: BTreeMap<usize, Rational>,
    support: Vec<usize>,
}

impl ConstraintHamiltonian {
    /// Encodes `sum_j coeffs[j] x_j - bound`. An empty support is allowed here
    /// (the objective may be constant); `encode_constraint` rejects it.
    pub fn from_linear(coeffs: &[Rational], bound: Rational) -> Self {
        let coeffs: BTreeMap<usize, Rational> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, &c)| (j, c))
            .collect();
        let half_sum = coeffs.values().fold(Rational::zero(), |acc, &c| acc + c) / 2;
        Self {
            offset: half_sum - bound,
            support: coeffs.keys().copied().collect(),
            coeffs,
        }
    }

    pub fn offset(&self) -> Rational {
        self.offset
    }

    /// Constant `-b` of the binary form `sum_j a_j x_j - b`, i.e. `C - sum_j a_j / 2`.
    pub fn binary_constant(&self) -> Rational {
        self.offset - self.coeffs.values().fold(Rational::zero(), |acc, &c| acc + c) / 2
    }

    pub fn coeffs(&self) -> &BTreeMap<usize, Rational> {
        &self.coeffs
    }

    pub fn coeff(&self, qubit: usize) -> Rational {
        self.coeffs.get(&qubit).copied().unwrap_or_else(Rational::zero)
    }

    /// Qubits with a nonzero Z coefficient, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Eigenvalue on `|x>`: `C - 1/2 sum_j (-1)^(x_j) a_j`.
    pub fn eigenvalue(&self, bits: &Bitstring) -> Rational {
        let signed: Rational = self
            .coeffs
            .iter()
            .map(|(&j, &a)| if bits.get(j) { -a } else { a })
            .fold(Rational::zero(), |acc, v| acc + v);
        self.offset - signed / 2
    }

    /// Eigenvalue for the support bits packed big-endian into `pattern`.
    pub fn eigenvalue_for_pattern(&self, pattern: usize) -> Rational {
        let t = self.support.len();
        let signed: Rational = self
            .support
            .iter()
            .enumerate()
            .map(|(k, j)| {
                let a = self.coeffs[j];
                if (pattern >> (t - 1 - k)) & 1 == 1 {
                    -a
                } else {
                    a
                }
            })
            .fold(Rational::zero(), |acc, v| acc + v);
        self.offset - signed / 2
    }

    /// All `2^t` support eigenvalues, indexed by big-endian support pattern.
    pub fn support_table(&self, cap: usize) -> Result<Vec<Rational>> {
        let t = self.support.len();
        if t > cap {
            return Err(Error::SupportCap { t, cap });
        }
        Ok((0..1usize << t)
            .map(|s| self.eigenvalue_for_pattern(s))
            .collect())
    }
}

pub fn encode_constraint(c: &LinearConstraint) -> Result<ConstraintHamiltonian> {
    encode_row(c, 0)
}

fn encode_row(c: &LinearConstraint, index: usize) -> Result<ConstraintHamiltonian> {
    let h = ConstraintHamiltonian::from_linear(&c.coeffs, c.bound);
    if h.support.is_empty() {
        return Err(Error::EmptyConstraint(index));
    }
    Ok(h)
}

pub fn constraint_eigenvalue(h: &ConstraintHamiltonian, bits: &Bitstring) -> Rational {
    h.eigenvalue(bits)
}

pub fn support_eigenvalue_table(h: &ConstraintHamiltonian) -> Result<Vec<Rational>> {
    h.support_table(DEFAULT_SUPPORT_CAP)
}

/// Which penalty function is applied to each constraint value `h`, and its
/// weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `lambda * [h > 0]`
    Step { lambda: f64 },
    /// `lambda1 * exp(lambda2 * h)`
    Exponential { lambda1: f64, lambda2: f64 },
    /// `lambda1 * h + lambda2 * h^2`
    UnbalancedQuadratic { lambda1: f64, lambda2: f64 },
    /// `lambda * (h + slack)^2` with binary-encoded slack registers.
    /// `slack_bits: None` sizes each register as `ceil(log2(b_i + 1))`.
    SlackQuadratic {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slack_bits: Option<Vec<usize>>,
    },
}

impl PenaltySpec {
    pub fn step(lambda: f64) -> Self {
        Self::Step { lambda }
    }

    pub fn exponential(lambda1: f64, lambda2: f64) -> Self {
        Self::Exponential { lambda1, lambda2 }
    }

    /// `(1, 0.5)` reproduces the second-order Taylor expansion of `e^h - 1`.
    pub fn unbalanced(lambda1: f64, lambda2: f64) -> Self {
        Self::UnbalancedQuadratic { lambda1, lambda2 }
    }

    pub fn slack(lambda: f64) -> Self {
        Self::SlackQuadratic {
            lambda,
            slack_bits: None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Step { .. } => "step",
            Self::Exponential { .. } => "exponential",
            Self::UnbalancedQuadratic { .. } => "unbalanced_quadratic",
            Self::SlackQuadratic { .. } => "slack_quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights: &[f64] = match self {
            Self::Step { lambda } | Self::SlackQuadratic { lambda, .. } => &[*lambda],
            Self::Exponential { lambda1, lambda2 }
            | Self::UnbalancedQuadratic { lambda1, lambda2 } => &[*lambda1, *lambda2],
        };
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidPenalty(format!(
                "{} weights must be positive and finite, got {w}",
                self.kind_name()
            )));
        }
        if let Self::SlackQuadratic {
            slack_bits: Some(bits),
            ..
        } = self
        {
            if bits.contains(&0) {
                return Err(Error::InvalidPenalty(
                    "every slack register needs at least one bit".into(),
                ));
            }
        }
        Ok(())
    }

    /// Same penalty with its leading weight replaced (`lambda` or `lambda1`).
    pub fn with_leading_weight(&self, weight: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Step { lambda } | Self::SlackQuadratic { lambda, .. } => *lambda = weight,
            Self::Exponential { lambda1, .. } | Self::UnbalancedQuadratic { lambda1, .. } => {
                *lambda1 = weight
            }
        }
        out
    }
}

/// `xi(h)` for a penalty spec. The exponential exponent is clamped at
/// [`EXP_CLAMP`].
pub fn penalty_value(spec: &PenaltySpec, h: f64) -> f64 {
    match *spec {
        PenaltySpec::Step { lambda } => {
            if h > 0.0 {
                lambda
            } else {
                0.0
            }
        }
        PenaltySpec::Exponential { lambda1, lambda2 } => {
            lambda1 * (lambda2 * h).min(EXP_CLAMP).exp()
        }
        PenaltySpec::UnbalancedQuadratic { lambda1, lambda2 } => lambda1 * h + lambda2 * h * h,
        PenaltySpec::SlackQuadratic { lambda, .. } => lambda * h * h,
    }
}

/// Exact-sign variant used when tabulating: the step indicator is decided on
/// the rational value.
pub(crate) fn penalty_of_rational(spec: &PenaltySpec, h: Rational) -> f64 {
    match spec {
        PenaltySpec::Step { lambda } => {
            if h.is_positive() {
                *lambda
            } else {
                0.0
            }
        }
        _ => penalty_value(spec, to_f64(h)),
    }
}

pub(crate) fn to_f64(r: Rational) -> f64 {
    r.to_f64().expect("rational fits in f64")
}

/// One penalized constraint: its spin form and `xi` tabulated over the
/// support patterns.
#[derive(Clone, Debug)]
pub struct PenaltyTerm {
    hamiltonian: ConstraintHamiltonian,
    table: Vec<f64>,
}

impl PenaltyTerm {
    fn new(hamiltonian: ConstraintHamiltonian, spec: &PenaltySpec) -> Result<Self> {
        let table = hamiltonian
            .support_table(DEFAULT_SUPPORT_CAP)?
            .into_iter()
            .map(|mu| penalty_of_rational(spec, mu))
            .collect();
        Ok(Self { hamiltonian, table })
    }

    pub fn hamiltonian(&self) -> &ConstraintHamiltonian {
        &self.hamiltonian
    }

    pub fn support(&self) -> &[usize] {
        self.hamiltonian.support()
    }

    /// `xi(mu)` for every support pattern.
    pub fn penalty_table(&self) -> &[f64] {
        &self.table
    }

    pub fn penalty_at(&self, bits: &Bitstring) -> f64 {
        self.table[support_pattern(bits, self.support())]
    }
}

/// Packs the bits at `support` big-endian.
pub fn support_pattern(bits: &Bitstring, support: &[usize]) -> usize {
    support
        .iter()
        .fold(0usize, |acc, &j| (acc << 1) | bits.get(j) as usize)
}

/// A fully diagonal cost Hamiltonian `H_f + sum_i xi(H_i)`.
#[derive(Clone, Debug)]
pub struct DiagonalProblem {
    n_qubits: usize,
    n_vars: usize,
    objective: ConstraintHamiltonian,
    terms: Vec<PenaltyTerm>,
    penalty: PenaltySpec,
    slack_bits: Vec<usize>,
    program: ConstrainedProgram,
}

impl DiagonalProblem {
    /// The program this Hamiltonian encodes; used to score extracted bits.
    pub fn program(&self) -> &ConstrainedProgram {
        &self.program
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Number of original problem variables; slack qubits follow them.
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Spin form of the minimization-sense objective.
    pub fn objective(&self) -> &ConstraintHamiltonian {
        &self.objective
    }

    pub fn terms(&self) -> &[PenaltyTerm] {
        &self.terms
    }

    pub fn penalty(&self) -> &PenaltySpec {
        &self.penalty
    }

    /// Slack register width per constraint (empty for slack-free problems).
    pub fn slack_bits(&self) -> &[usize] {
        &self.slack_bits
    }

    pub fn objective_eigenvalue(&self, bits: &Bitstring) -> Rational {
        self.objective.eigenvalue(bits)
    }

    /// Total penalized eigenvalue at a full register assignment.
    pub fn eigenvalue(&self, bits: &Bitstring) -> f64 {
        to_f64(self.objective.eigenvalue(bits))
            + self.terms.iter().map(|t| t.penalty_at(bits)).sum::<f64>()
    }

    /// Dense diagonal over all `2^n` basis states, indexed big-endian.
    pub fn full_diagonal(&self, qubit_cap: usize) -> Result<Vec<f64>> {
        let n = self.n_qubits;
        if n > qubit_cap {
            return Err(Error::QubitBudget {
                required: n,
                budget: qubit_cap,
            });
        }
        let mut diag = vec![to_f64(self.objective.offset()); 1 << n];
        let mut add_linear = |coeffs: &BTreeMap<usize, Rational>| {
            for (&j, &a) in coeffs {
                let half = to_f64(a) / 2.0;
                let mask = 1usize << (n - 1 - j);
                for (idx, d) in diag.iter_mut().enumerate() {
                    *d += if idx & mask == 0 { -half } else { half };
                }
            }
        };
        add_linear(self.objective.coeffs());
        for term in &self.terms {
            let shifts: Vec<usize> = term.support().iter().map(|&j| n - 1 - j).collect();
            for (idx, d) in diag.iter_mut().enumerate() {
                let pattern = shifts
                    .iter()
                    .fold(0usize, |acc, &s| (acc << 1) | ((idx >> s) & 1));
                *d += term.table[pattern];
            }
        }
        Ok(diag)
    }

    /// Drops slack qubits, leaving the original decision variables.
    pub fn strip_slack(&self, bits: &Bitstring) -> Bitstring {
        bits.truncated(self.n_vars)
    }
}

fn objective_hamiltonian(p: &ConstrainedProgram) -> ConstraintHamiltonian {
    ConstraintHamiltonian::from_linear(p.objective(), -p.offset())
}

fn encode_all(p: &ConstrainedProgram, spec: &PenaltySpec) -> Result<Vec<PenaltyTerm>> {
    p.constraints()
        .iter()
        .enumerate()
        .map(|(i, c)| PenaltyTerm::new(encode_row(c, i)?, spec))
        .collect()
}

/// Slack-free formulation with a step or exponential penalty per constraint.
pub fn build_custom(p: &ConstrainedProgram, spec: &PenaltySpec) -> Result<DiagonalProblem> {
    spec.validate()?;
    if !matches!(
        spec,
        PenaltySpec::Step { .. } | PenaltySpec::Exponential { .. }
    ) {
        return Err(Error::InvalidPenalty(format!(
            "custom formulation takes step or exponential, got {}",
            spec.kind_name()
        )));
    }
    Ok(DiagonalProblem {
        n_qubits: p.n_vars(),
        n_vars: p.n_vars(),
        objective: objective_hamiltonian(p),
        terms: encode_all(p, spec)?,
        penalty: spec.clone(),
        slack_bits: Vec::new(),
        program: p.clone(),
    })
}

/// Unbalanced penalization `f + sum_j (lambda1 h_j + lambda2 h_j^2)`.
pub fn build_unbalanced(p: &ConstrainedProgram, lambda1: f64, lambda2: f64) -> Result<DiagonalProblem> {
    let spec = PenaltySpec::unbalanced(lambda1, lambda2);
    spec.validate()?;
    Ok(DiagonalProblem {
        n_qubits: p.n_vars(),
        n_vars: p.n_vars(),
        objective: objective_hamiltonian(p),
        terms: encode_all(p, &spec)?,
        penalty: spec,
        slack_bits: Vec::new(),
        program: p.clone(),
    })
}

/// Register width for a slack variable ranging over `[0, bound]`.
pub fn slack_width(bound: i64) -> usize {
    let range = bound.max(0) as u64 + 1;
    (64 - (range - 1).leading_zeros() as usize).max(1)
}

/// Slack formulation `f + lambda sum_i (h_i(x) + sum_l 2^l y_il)^2`.
///
/// Slack registers are appended after the problem qubits in constraint
/// order; within a register the qubit at offset `l` carries weight `2^l`.
pub fn build_slack(p: &ConstrainedProgram, lambda: f64) -> Result<DiagonalProblem> {
    build_slack_with(p, &PenaltySpec::slack(lambda))
}

fn build_slack_with(p: &ConstrainedProgram, spec: &PenaltySpec) -> Result<DiagonalProblem> {
    spec.validate()?;
    let PenaltySpec::SlackQuadratic { slack_bits, .. } = spec else {
        return Err(Error::InvalidPenalty(format!(
            "slack formulation takes slack_quadratic, got {}",
            spec.kind_name()
        )));
    };
    let mut widths = Vec::with_capacity(p.constraints().len());
    for (i, c) in p.constraints().iter().enumerate() {
        if !c.bound.is_integer() {
            return Err(Error::NonIntegerBound {
                index: i,
                bound: c.bound.to_string(),
            });
        }
        widths.push(slack_width(c.bound.to_integer()));
    }
    if let Some(explicit) = slack_bits {
        if explicit.len() != widths.len() {
            return Err(Error::LengthMismatch {
                expected: widths.len(),
                actual: explicit.len(),
            });
        }
        widths = explicit.clone();
    }
    let n_vars = p.n_vars();
    let n_qubits = n_vars + widths.iter().sum::<usize>();
    let mut terms = Vec::with_capacity(widths.len());
    let mut next = n_vars;
    for (i, (c, &width)) in p.constraints().iter().zip(&widths).enumerate() {
        if c.support().is_empty() {
            return Err(Error::EmptyConstraint(i));
        }
        let mut coeffs = vec![Rational::zero(); n_qubits];
        coeffs[..n_vars].copy_from_slice(&c.coeffs);
        for l in 0..width {
            coeffs[next + l] = Rational::from_integer(1i64 << l);
        }
        next += width;
        let h = ConstraintHamiltonian::from_linear(&coeffs, c.bound);
        terms.push(PenaltyTerm::new(h, spec)?);
    }
    let mut spec = spec.clone();
    if let PenaltySpec::SlackQuadratic { slack_bits, .. } = &mut spec {
        *slack_bits = Some(widths.clone());
    }
    Ok(DiagonalProblem {
        n_qubits,
        n_vars,
        objective: objective_hamiltonian(p),
        terms,
        penalty: spec,
        slack_bits: widths,
        program: p.clone(),
    })
}

/// Builds whichever formulation the penalty spec names.
pub fn build(p: &ConstrainedProgram, spec: &PenaltySpec) -> Result<DiagonalProblem> {
    match spec {
        PenaltySpec::Step { .. } | PenaltySpec::Exponential { .. } => build_custom(p, spec),
        PenaltySpec::UnbalancedQuadratic { lambda1, lambda2 } => {
            build_unbalanced(p, *lambda1, *lambda2)
        }
        PenaltySpec::SlackQuadratic { .. } => build_slack_with(p, spec),
    }
}

/// `K * sum_j v_j`: the magnitude of the objective with every variable set.
pub fn upper_bound_lambda(inst: &MkpInstance) -> Rational {
    Rational::from_integer(inst.knapsacks as i64 * inst.values.iter().sum::<i64>())
}
