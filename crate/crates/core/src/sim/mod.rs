//! Statevector simulation of the single-layer hardware-efficient ansatz.
//!
//! The circuit is a layer of RY rotations on every qubit, CZ on each adjacent
//! pair `(q, q + 1)`, then a second RY layer: `2n` parameters, first layer
//! first. Qubit 0 is the most significant bit of the basis index.

pub mod chain;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Bitstring;

pub use chain::ChainState;

/// Largest register the dense simulator will allocate.
pub const DEFAULT_QUBIT_CAP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// RY on `qubit` with angle `theta[param]`.
    Ry { qubit: usize, param: usize },
    Cz { control: usize, target: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnsatzSpec {
    n_qubits: usize,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn param_count(&self) -> usize {
        2 * self.n_qubits
    }

    /// Linear-chain entangler pairs.
    pub fn cz_pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        (1..self.n_qubits).map(|q| (q - 1, q))
    }

    /// Gate sequence in application order.
    pub fn gates(&self) -> Vec<Gate> {
        let n = self.n_qubits;
        let mut gates: Vec<Gate> = (0..n).map(|q| Gate::Ry { qubit: q, param: q }).collect();
        gates.extend(self.cz_pairs().map(|(control, target)| Gate::Cz { control, target }));
        gates.extend((0..n).map(|q| Gate::Ry {
            qubit: q,
            param: n + q,
        }));
        gates
    }

    pub fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::ParameterCount {
                expected: self.param_count(),
                actual: theta.len(),
            });
        }
        Ok(())
    }
}

/// Dense amplitude vector over `2^n` basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    amps: Vec<Complex64>,
    n_qubits: usize,
}

impl Statevector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits > DEFAULT_QUBIT_CAP {
            return Err(Error::QubitBudget {
                required: n_qubits,
                budget: DEFAULT_QUBIT_CAP,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { amps, n_qubits })
    }

    /// Wraps caller amplitudes; they must already be normalized.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(len));
        }
        let s = Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "amplitudes have squared norm {norm}"
            )));
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// Applies the real 2x2 matrix `[[m00, m01], [m10, m11]]` to `qubit`.
    fn apply_real_1q(&mut self, qubit: usize, m: [[f64; 2]; 2]) {
        let stride = self.mask(qubit);
        for block in self.amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = x0 * m[0][0] + x1 * m[0][1];
                *a1 = x0 * m[1][0] + x1 * m[1][1];
            }
        }
    }

    /// `RY(theta) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        self.apply_real_1q(qubit, ry_matrix(theta));
    }

    pub fn apply_cz(&mut self, control: usize, target: usize) {
        let both = self.mask(control) | self.mask(target);
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if idx & both == both {
                *a = -*a;
            }
        }
    }

    fn apply_gate(&mut self, gate: Gate, theta: &[f64]) {
        match gate {
            Gate::Ry { qubit, param } => self.apply_ry(qubit, theta[param]),
            Gate::Cz { control, target } => self.apply_cz(control, target),
        }
    }

    fn apply_gate_inverse(&mut self, gate: Gate, theta: &[f64]) {
        match gate {
            Gate::Ry { qubit, param } => self.apply_ry(qubit, -theta[param]),
            Gate::Cz { control, target } => self.apply_cz(control, target),
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal distribution over `support`, indexed by the big-endian
    /// pattern of the support bits.
    pub fn marginal_probabilities(&self, support: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_qubits;
        for (k, &q) in support.iter().enumerate() {
            if q >= n || support[..k].contains(&q) {
                return Err(Error::InvalidQubit { index: q, n });
            }
        }
        let shifts: Vec<usize> = support.iter().map(|&q| n - 1 - q).collect();
        let mut out = vec![0.0; 1 << support.len()];
        for (idx, a) in self.amps.iter().enumerate() {
            let pattern = shifts
                .iter()
                .fold(0usize, |acc, &s| (acc << 1) | ((idx >> s) & 1));
            out[pattern] += a.norm_sqr();
        }
        Ok(out)
    }

    /// `sum_x eig(x) p_x` with `eig` given on basis indices.
    pub fn expectation_indexed(&self, eig: impl Fn(usize) -> f64) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(idx, a)| eig(idx) * a.norm_sqr())
            .sum()
    }

    /// Most probable basis state; ties go to the smallest index.
    pub fn argmax(&self) -> Bitstring {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (idx, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > best.1 {
                best = (idx, p);
            }
        }
        Bitstring::from_index(best.0 as u64, self.n_qubits)
    }
}

pub(crate) fn ry_matrix(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[c, -s], [s, c]]
}

fn ry_derivative(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[-0.5 * s, -0.5 * c], [0.5 * c, -0.5 * s]]
}

pub fn prepare_state(spec: &AnsatzSpec, theta: &[f64]) -> Result<Statevector> {
    spec.check_params(theta)?;
    let mut state = Statevector::zero(spec.n_qubits())?;
    for gate in spec.gates() {
        state.apply_gate(gate, theta);
    }
    Ok(state)
}

pub fn probabilities(s: &Statevector) -> Vec<f64> {
    s.probabilities()
}

pub fn marginal_probabilities(s: &Statevector, support: &[usize]) -> Result<Vec<f64>> {
    s.marginal_probabilities(support)
}

/// `sum_x eig(x) p_x` over all basis states.
pub fn expectation_diagonal(s: &Statevector, eig: impl Fn(&Bitstring) -> f64) -> f64 {
    let n = s.n_qubits();
    s.expectation_indexed(|idx| eig(&Bitstring::from_index(idx as u64, n)))
}

/// Expectation of an operator that depends only on `support`, contracted
/// against the support marginals: `sum_s table[s] * P(support = s)`.
pub fn expectation_on_support(s: &Statevector, support: &[usize], table: &[f64]) -> Result<f64> {
    let marginal = s.marginal_probabilities(support)?;
    if marginal.len() != table.len() {
        return Err(Error::LengthMismatch {
            expected: marginal.len(),
            actual: table.len(),
        });
    }
    Ok(marginal.iter().zip(table).map(|(p, v)| p * v).sum())
}

/// Value and exact gradient of `<psi(theta)| D |psi(theta)>` for a diagonal
/// `D`, by one forward pass and one reverse (adjoint) pass.
pub fn adjoint_gradient(spec: &AnsatzSpec, theta: &[f64], diag: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut psi = prepare_state(spec, theta)?;
    if diag.len() != psi.amps.len() {
        return Err(Error::LengthMismatch {
            expected: psi.amps.len(),
            actual: diag.len(),
        });
    }
    let mut lam = psi.clone();
    for (a, d) in lam.amps.iter_mut().zip(diag) {
        *a *= *d;
    }
    let value: f64 = psi
        .amps
        .iter()
        .zip(&lam.amps)
        .map(|(p, l)| (p.conj() * l).re)
        .sum();
    let mut grad = vec![0.0; spec.param_count()];
    let mut scratch = psi.clone();
    for gate in spec.gates().into_iter().rev() {
        psi.apply_gate_inverse(gate, theta);
        if let Gate::Ry { qubit, param } = gate {
            scratch.amps.copy_from_slice(&psi.amps);
            scratch.apply_real_1q(qubit, ry_derivative(theta[param]));
            let overlap: f64 = lam
                .amps
                .iter()
                .zip(&scratch.amps)
                .map(|(l, d)| (l.conj() * d).re)
                .sum();
            grad[param] = 2.0 * overlap;
        }
        lam.apply_gate_inverse(gate, theta);
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn ansatz_layout() {
        let spec = AnsatzSpec::new(4);
        assert_eq!(spec.param_count(), 8);
        assert_eq!(spec.cz_pairs().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(spec.gates().len(), 4 + 3 + 4);
        assert!(matches!(
            prepare_state(&spec, &[0.0; 7]),
            Err(Error::ParameterCount { expected: 8, actual: 7 })
        ));
    }

    #[test]
    fn single_qubit_flip_and_identity() {
        let spec = AnsatzSpec::new(1);
        let s = prepare_state(&spec, &[PI, 0.0]).unwrap();
        assert_abs_diff_eq!(s.amps()[0].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1].norm(), 1.0, epsilon = 1e-15);

        let s = prepare_state(&spec, &[0.0, 0.0]).unwrap();
        assert_eq!(s.probabilities(), vec![1.0, 0.0]);
    }

    #[test]
    fn two_qubit_cz_sign() {
        let s = prepare_state(&AnsatzSpec::new(2), &[PI / 2.0, PI / 2.0, 0.0, 0.0]).unwrap();
        let expected = [0.5, 0.5, 0.5, -0.5];
        for (a, e) in s.amps().iter().zip(expected) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0);
        }
        for p in s.probabilities() {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn marginals() {
        let s = prepare_state(&AnsatzSpec::new(2), &[PI / 2.0, PI / 2.0, 0.0, 0.0]).unwrap();
        let m = s.marginal_probabilities(&[0]).unwrap();
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.5, epsilon = 1e-15);
        assert_eq!(s.marginal_probabilities(&[0, 1]).unwrap(), s.probabilities());
        assert!(s.marginal_probabilities(&[2]).is_err());
        assert!(s.marginal_probabilities(&[1, 1]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta: Vec<f64> = (0..10).map(|_| rng.gen_range(-PI..PI)).collect();
        let s = prepare_state(&AnsatzSpec::new(5), &theta).unwrap();
        let m = s.marginal_probabilities(&[3, 0, 4]).unwrap();
        assert_abs_diff_eq!(m.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // Pattern order follows the support order given, not qubit order.
        let p = s.probabilities();
        let direct: f64 = (0..32).filter(|i| (i >> 1) & 1 == 1 && i & 1 == 0).map(|i| p[i]).sum();
        assert_abs_diff_eq!(m[0b100] + m[0b110], direct, epsilon = 1e-14);
    }

    #[test]
    fn expectations() {
        let s = prepare_state(&AnsatzSpec::new(3), &[0.3, -1.2, 2.0, 0.1, 0.7, -0.4]).unwrap();
        assert_abs_diff_eq!(expectation_diagonal(&s, |_| 2.5), 2.5, epsilon = 1e-12);

        let zero = Statevector::zero(3).unwrap();
        assert_eq!(expectation_diagonal(&zero, |b| b.index() as f64 + 4.0), 4.0);

        // Uniform state against h = 2 x0 + 3 x1 - 4 averages the table to the offset.
        let uniform = prepare_state(&AnsatzSpec::new(2), &[PI / 2.0, PI / 2.0, 0.0, 0.0]).unwrap();
        let table = [-4.0, -1.0, -2.0, 1.0];
        assert_abs_diff_eq!(
            expectation_on_support(&uniform, &[0, 1], &table).unwrap(),
            -1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gates_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-PI..PI)).collect();
        let start = prepare_state(&AnsatzSpec::new(4), &theta).unwrap();
        let mut s = start.clone();
        s.apply_ry(2, 0.77);
        s.apply_ry(2, -0.77);
        s.apply_cz(1, 2);
        s.apply_cz(1, 2);
        for (a, b) in s.amps().iter().zip(start.amps()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn argmax_tie_takes_lowest_index() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = Statevector::from_amplitudes(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-h, 0.0),
        ])
        .unwrap();
        assert_eq!(s.argmax().to_string(), "01");
        assert!(Statevector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn adjoint_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let spec = AnsatzSpec::new(n);
        let diag: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let theta: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-PI..PI)).collect();
        let (value, grad) = adjoint_gradient(&spec, &theta, &diag).unwrap();
        let energy = |t: &[f64]| {
            let s = prepare_state(&spec, t).unwrap();
            s.expectation_indexed(|i| diag[i])
        };
        assert_abs_diff_eq!(value, energy(&theta), epsilon = 1e-12);
        let eps = 1e-6;
        for k in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[k] += eps;
            minus[k] -= eps;
            let fd = (energy(&plus) - energy(&minus)) / (2.0 * eps);
            assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-7);
        }
    }
}
