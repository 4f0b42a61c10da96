//! Constrained binary programs, Multiple Knapsack instances and the
//! brute-force classical oracle.
//!
//! Bitstrings follow one convention throughout the crate: position 0 is the
//! leftmost (most significant) bit, so the basis index of `x` over `n` bits is
//! `sum_j x_j * 2^(n-1-j)`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = num_rational::Rational64;

/// Serializes a rational as `"7"` or `"7/2"`.
pub mod rational_string {
    use super::Rational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        text.trim().parse().map_err(D::Error::custom)
    }
}

/// Default limit on `K * L` for generated and loaded instances.
pub const DEFAULT_QUBIT_BUDGET: usize = 16;

/// Largest variable count `brute_force_solve` will enumerate.
pub const ENUMERATION_CAP: usize = 24;

/// A binary assignment, most significant bit first.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Bitstring(Vec<bool>);

impl Bitstring {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    /// Decodes a basis index into `n` bits (big-endian).
    pub fn from_index(index: u64, n: usize) -> Self {
        Self(
            (0..n)
                .map(|j| (index >> (n - 1 - j)) & 1 == 1)
                .collect(),
        )
    }

    pub fn index(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// The first `n` bits; used to strip slack qubits.
    pub fn truncated(&self, n: usize) -> Self {
        Self(self.0[..n.min(self.0.len())].to_vec())
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "bitstring contains '{other}'"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Bitstring)
    }
}

impl From<Vec<bool>> for Bitstring {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

impl Serialize for Bitstring {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Bitstring {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `sum_j coeffs[j] * x_j <= bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<Rational>,
    pub bound: Rational,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<Rational>, bound: Rational) -> Self {
        Self { coeffs, bound }
    }

    pub fn from_integers(coeffs: &[i64], bound: i64) -> Self {
        Self {
            coeffs: coeffs.iter().map(|&c| Rational::from_integer(c)).collect(),
            bound: Rational::from_integer(bound),
        }
    }

    /// Indices with a nonzero coefficient, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, _)| j)
            .collect()
    }

    /// `h(x) = sum_j a_j x_j - b`; the constraint holds iff `h(x) <= 0`.
    pub fn violation(&self, bits: &Bitstring) -> Rational {
        self.coeffs
            .iter()
            .zip(bits.as_slice())
            .filter(|(_, &b)| b)
            .fold(-self.bound, |acc, (c, _)| acc + c)
    }

    pub fn is_satisfied(&self, bits: &Bitstring) -> bool {
        !self.violation(bits).is_positive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Linear objective plus linear inequality constraints over binary variables.
///
/// The objective is always stored in minimization sense; `sense` records
/// whether the caller's original problem was a maximization, in which case
/// the stored coefficients are the negated inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedProgram {
    n_vars: usize,
    objective: Vec<Rational>,
    offset: Rational,
    constraints: Vec<LinearConstraint>,
    sense: Sense,
}

impl ConstrainedProgram {
    /// Builds a program from an objective in the given sense.
    pub fn new(
        sense: Sense,
        objective: Vec<Rational>,
        offset: Rational,
        constraints: Vec<LinearConstraint>,
    ) -> Result<Self> {
        let n_vars = objective.len();
        for c in &constraints {
            if c.coeffs.len() != n_vars {
                return Err(Error::LengthMismatch {
                    expected: n_vars,
                    actual: c.coeffs.len(),
                });
            }
        }
        let (objective, offset) = match sense {
            Sense::Minimize => (objective, offset),
            Sense::Maximize => (objective.into_iter().map(|c| -c).collect(), -offset),
        };
        Ok(Self {
            n_vars,
            objective,
            offset,
            constraints,
            sense,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Minimization-sense coefficients.
    pub fn objective(&self) -> &[Rational] {
        &self.objective
    }

    /// Minimization-sense constant term.
    pub fn offset(&self) -> Rational {
        self.offset
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    fn check_len(&self, bits: &Bitstring) -> Result<()> {
        if bits.len() != self.n_vars {
            return Err(Error::LengthMismatch {
                expected: self.n_vars,
                actual: bits.len(),
            });
        }
        Ok(())
    }

    /// `f(x)` in minimization sense.
    pub fn minimization_value(&self, bits: &Bitstring) -> Result<Rational> {
        self.check_len(bits)?;
        Ok(self
            .objective
            .iter()
            .zip(bits.as_slice())
            .filter(|(_, &b)| b)
            .fold(self.offset, |acc, (c, _)| acc + c))
    }

    /// Objective in the original sense of the problem.
    pub fn eval_objective(&self, bits: &Bitstring) -> Result<Rational> {
        let v = self.minimization_value(bits)?;
        Ok(match self.sense {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        })
    }

    pub fn check_feasible(&self, bits: &Bitstring) -> Result<bool> {
        self.check_len(bits)?;
        Ok(self.constraints.iter().all(|c| c.is_satisfied(bits)))
    }

    /// Exhaustive search for the best feasible assignment.
    ///
    /// Ties go to the smallest basis index. With no feasible point the
    /// all-zeros assignment is returned, flagged by its own feasibility.
    pub fn brute_force_solve(&self) -> Result<Solution> {
        if self.n_vars > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n: self.n_vars,
                cap: ENUMERATION_CAP,
            });
        }
        let mut best: Option<(Bitstring, Rational)> = None;
        for index in 0..(1u64 << self.n_vars) {
            let bits = Bitstring::from_index(index, self.n_vars);
            if !self.check_feasible(&bits)? {
                continue;
            }
            let value = self.minimization_value(&bits)?;
            if best.as_ref().is_none_or(|(_, v)| value < *v) {
                best = Some((bits, value));
            }
        }
        let bits = best
            .map(|(b, _)| b)
            .unwrap_or_else(|| Bitstring::zeros(self.n_vars));
        Solution::evaluate(self, bits)
    }
}

/// An assignment together with its recomputed objective and feasibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub bits: Bitstring,
    #[serde(with = "rational_string")]
    pub objective_value: Rational,
    pub feasible: bool,
}

impl Solution {
    pub fn evaluate(program: &ConstrainedProgram, bits: Bitstring) -> Result<Self> {
        Ok(Self {
            objective_value: program.eval_objective(&bits)?,
            feasible: program.check_feasible(&bits)?,
            bits,
        })
    }
}

/// Multiple Knapsack Problem: assign each of `L` items to at most one of `K`
/// knapsacks, maximizing total value without exceeding any capacity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MkpInstance {
    #[serde(rename = "K")]
    pub knapsacks: usize,
    #[serde(rename = "L")]
    pub items: usize,
    pub values: Vec<i64>,
    pub weights: Vec<i64>,
    pub capacities: Vec<i64>,
}

impl MkpInstance {
    pub fn new(values: Vec<i64>, weights: Vec<i64>, capacities: Vec<i64>) -> Result<Self> {
        let inst = Self {
            knapsacks: capacities.len(),
            items: values.len(),
            values,
            weights,
            capacities,
        };
        inst.validate(DEFAULT_QUBIT_BUDGET)?;
        Ok(inst)
    }

    pub fn n_vars(&self) -> usize {
        self.knapsacks * self.items
    }

    /// Index of `x_ij` (zero-based knapsack `i`, item `j`), row-major.
    pub fn var_index(&self, knapsack: usize, item: usize) -> usize {
        knapsack * self.items + item
    }

    pub fn validate(&self, qubit_budget: usize) -> Result<()> {
        if self.knapsacks == 0 || self.items == 0 {
            return Err(Error::InvalidInstance(
                "need at least one knapsack and one item".into(),
            ));
        }
        if self.values.len() != self.items || self.weights.len() != self.items {
            return Err(Error::InvalidInstance(format!(
                "values/weights must have length L = {}",
                self.items
            )));
        }
        if self.capacities.len() != self.knapsacks {
            return Err(Error::InvalidInstance(format!(
                "capacities must have length K = {}",
                self.knapsacks
            )));
        }
        let all = self
            .values
            .iter()
            .chain(&self.weights)
            .chain(&self.capacities);
        if let Some(bad) = all.clone().find(|&&v| v <= 0) {
            return Err(Error::InvalidInstance(format!(
                "entries must be strictly positive, found {bad}"
            )));
        }
        if self.n_vars() > qubit_budget {
            return Err(Error::QubitBudget {
                required: self.n_vars(),
                budget: qubit_budget,
            });
        }
        Ok(())
    }

    /// Objective `max sum_ij v_j x_ij`, capacity rows `sum_j w_j x_ij <= W_i`
    /// for each knapsack, then assignment rows `sum_i x_ij <= 1` for each item.
    pub fn to_program(&self) -> ConstrainedProgram {
        let n = self.n_vars();
        let objective: Vec<Rational> = (0..n)
            .map(|idx| Rational::from_integer(self.values[idx % self.items]))
            .collect();
        let mut constraints = Vec::with_capacity(self.knapsacks + self.items);
        for i in 0..self.knapsacks {
            let mut coeffs = vec![Rational::zero(); n];
            for j in 0..self.items {
                coeffs[self.var_index(i, j)] = Rational::from_integer(self.weights[j]);
            }
            constraints.push(LinearConstraint::new(
                coeffs,
                Rational::from_integer(self.capacities[i]),
            ));
        }
        for j in 0..self.items {
            let mut coeffs = vec![Rational::zero(); n];
            for i in 0..self.knapsacks {
                coeffs[self.var_index(i, j)] = Rational::from_integer(1);
            }
            constraints.push(LinearConstraint::new(coeffs, Rational::from_integer(1)));
        }
        ConstrainedProgram::new(Sense::Maximize, objective, Rational::zero(), constraints)
            .expect("rows are built with n_vars coefficients")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate(DEFAULT_QUBIT_BUDGET)?;
        Ok(inst)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Seeded random MKP instance.
///
/// Values and weights are uniform in `[1, 10]`; each capacity is uniform in
/// `[max_j w_j, max(max_j w_j, ceil(0.7 * sum_j w_j))]`.
pub fn generate_instance(knapsacks: usize, items: usize, seed: u64) -> Result<MkpInstance> {
    generate_instance_with_budget(knapsacks, items, seed, DEFAULT_QUBIT_BUDGET)
}

pub fn generate_instance_with_budget(
    knapsacks: usize,
    items: usize,
    seed: u64,
    qubit_budget: usize,
) -> Result<MkpInstance> {
    if knapsacks == 0 || items == 0 {
        return Err(Error::InvalidInstance(
            "need at least one knapsack and one item".into(),
        ));
    }
    if knapsacks * items > qubit_budget {
        return Err(Error::QubitBudget {
            required: knapsacks * items,
            budget: qubit_budget,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<i64> = (0..items).map(|_| rng.gen_range(1..=10)).collect();
    let weights: Vec<i64> = (0..items).map(|_| rng.gen_range(1..=10)).collect();
    let max_w = *weights.iter().max().expect("items >= 1");
    let total: i64 = weights.iter().sum();
    let upper = ((7 * total + 9) / 10).max(max_w);
    let capacities = (0..knapsacks).map(|_| rng.gen_range(max_w..=upper)).collect();
    let inst = MkpInstance {
        knapsacks,
        items,
        values,
        weights,
        capacities,
    };
    inst.validate(qubit_budget)?;
    Ok(inst)
}

pub fn to_program(inst: &MkpInstance) -> ConstrainedProgram {
    inst.to_program()
}

pub fn brute_force_solve(program: &ConstrainedProgram) -> Result<Solution> {
    program.brute_force_solve()
}

pub fn check_feasible(program: &ConstrainedProgram, bits: &Bitstring) -> Result<bool> {
    program.check_feasible(bits)
}

pub fn eval_objective(program: &ConstrainedProgram, bits: &Bitstring) -> Result<Rational> {
    program.eval_objective(bits)
}
