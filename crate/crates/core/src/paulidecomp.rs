//! Decomposition of diagonal operators into weighted Pauli-Z strings with
//! the scaled Walsh-Hadamard transform.
//!
//! A term mask has bit `j` set when the string contains `Z_j`. Qubit 0 is the
//! most significant bit of a basis index, as everywhere else in the crate.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{penalty_of_rational, ConstraintHamiltonian, PenaltySpec, DEFAULT_SUPPORT_CAP};

/// `sum_S c_S prod_{j in S} Z_j`. Terms absent from the map have coefficient 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliZPolynomial {
    n_qubits: usize,
    terms: BTreeMap<u64, f64>,
}

impl PauliZPolynomial {
    pub fn new(n_qubits: usize, terms: BTreeMap<u64, f64>) -> Result<Self> {
        if n_qubits > 63 {
            return Err(Error::InvalidArgument(format!("{n_qubits} qubits do not fit a u64 mask")));
        }
        if let Some(&mask) = terms.keys().find(|&&m| m >> n_qubits != 0) {
            return Err(Error::InvalidQubit {
                index: 63 - mask.leading_zeros() as usize,
                n: n_qubits,
            });
        }
        Ok(Self { n_qubits, terms })
    }

    pub fn zero(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &BTreeMap<u64, f64> {
        &self.terms
    }

    pub fn coefficient(&self, mask: u64) -> f64 {
        self.terms.get(&mask).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|&c| c == 0.0)
    }

    /// Qubits touched by at least one non-identity term.
    pub fn qubits(&self) -> Vec<usize> {
        let union = self.terms.keys().fold(0u64, |acc, m| acc | m);
        (0..self.n_qubits).filter(|j| union >> j & 1 == 1).collect()
    }

    /// Value of the polynomial on basis state `index`.
    pub fn eval_index(&self, index: u64) -> f64 {
        self.terms
            .iter()
            .map(|(&mask, &c)| {
                if (big_endian_mask(index, self.n_qubits) & mask).count_ones() % 2 == 1 {
                    -c
                } else {
                    c
                }
            })
            .sum()
    }
}

/// Renders a mask as one character per qubit, `Z` or `I`, qubit 0 first.
pub fn mask_label(mask: u64, n_qubits: usize) -> String {
    (0..n_qubits)
        .map(|j| if mask >> j & 1 == 1 { 'Z' } else { 'I' })
        .collect()
}

impl fmt::Display for PauliZPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (&mask, &c) in &self.terms {
            writeln!(f, "{c:+.12}  {}", mask_label(mask, self.n_qubits))?;
        }
        Ok(())
    }
}

/// Maps a big-endian basis index to a mask with bit `j` for qubit `j`.
fn big_endian_mask(index: u64, n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        index.reverse_bits() >> (64 - n)
    }
}

/// Unnormalized in-place Walsh-Hadamard butterfly.
pub fn fwht(data: &mut [f64]) -> Result<()> {
    if !data.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(data.len()));
    }
    let mut h = 1;
    while h < data.len() {
        for block in data.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// `c = 2^-n H_n diag`. Exactly-zero coefficients are omitted.
pub fn decompose(diag: &[f64]) -> Result<PauliZPolynomial> {
    let mut c = diag.to_vec();
    fwht(&mut c)?;
    let n = c.len().trailing_zeros() as usize;
    let scale = 1.0 / c.len() as f64;
    let terms = c
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .map(|(s, v)| (big_endian_mask(s as u64, n), v * scale))
        .collect();
    PauliZPolynomial::new(n, terms)
}

/// `diag_x = sum_S c_S prod_{j in S} (-1)^(x_j)`.
pub fn reconstruct(p: &PauliZPolynomial) -> Vec<f64> {
    let mut diag = vec![0.0; 1usize << p.n_qubits];
    for (&mask, &c) in &p.terms {
        diag[big_endian_mask(mask, p.n_qubits) as usize] = c;
    }
    fwht(&mut diag).expect("length is a power of two");
    diag
}

/// Decomposes `xi(H)` over the support of `h` only and relabels the masks to
/// qubits of an `n_qubits` register.
pub fn decompose_stepped_constraint(
    h: &ConstraintHamiltonian,
    spec: &PenaltySpec,
    n_qubits: usize,
) -> Result<PauliZPolynomial> {
    decompose_stepped_constraint_with_cap(h, spec, n_qubits, DEFAULT_SUPPORT_CAP)
}

pub fn decompose_stepped_constraint_with_cap(
    h: &ConstraintHamiltonian,
    spec: &PenaltySpec,
    n_qubits: usize,
    cap: usize,
) -> Result<PauliZPolynomial> {
    spec.validate()?;
    let support = h.support();
    if let Some(&q) = support.iter().find(|&&q| q >= n_qubits) {
        return Err(Error::InvalidQubit { index: q, n: n_qubits });
    }
    let table: Vec<f64> = h
        .support_table(cap)?
        .into_iter()
        .map(|mu| penalty_of_rational(spec, mu))
        .collect();
    let local = decompose(&table)?;
    let terms = local
        .terms
        .into_iter()
        .map(|(mask, c)| {
            let global = support
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .fold(0u64, |acc, (_, &q)| acc | 1 << q);
            (global, c)
        })
        .collect();
    PauliZPolynomial::new(n_qubits, terms)
}
