//! Exact evaluation of the RY-CZ-RY ansatz without a dense amplitude array.
//!
//! After the first rotation layer the register is a product state; the CZ
//! chain couples only neighbours and the last rotation layer is local again.
//! Writing `y` for the computational basis between the two layers,
//!
//! ```text
//! <x|psi> = sum_y  prod_q R_q[x_q][y_q] a_q[y_q]  prod_q (-1)^(y_q y_(q+1))
//! ```
//!
//! so every amplitude is a product of 2x2 transfer matrices and every
//! probability a product of 4x4 ones over the doubled index `(y, y')`. The
//! amplitudes are real because RY and CZ are real.
//!
//! Expectations of functions of a linear form `sum_q c_q x_q` are computed
//! by sweeping the chain while tracking the partial value of the form, so the
//! cost is `O(n * V)` for `V` distinct partial values instead of `O(2^n)`.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{Bitstring, Rational};

use super::{ry_derivative, ry_matrix, AnsatzSpec};

type Quad = [f64; 4];

const ONES: Quad = [1.0; 4];

/// Node budget for the exact argmax search.
const ARGMAX_NODE_CAP: usize = 1 << 26;

/// `(T x T) v` with `T = [[1, 1], [1, -1]]` over the doubled index `2y + y'`.
#[inline]
fn transfer(v: &Quad) -> Quad {
    let u0 = v[0] + v[1];
    let u1 = v[0] - v[1];
    let u2 = v[2] + v[3];
    let u3 = v[2] - v[3];
    [u0 + u2, u1 + u3, u0 - u2, u1 - u3]
}

#[inline]
fn hadamard_product(a: &Quad, b: &Quad) -> Quad {
    [a[0] * b[0], a[1] * b[1], a[2] * b[2], a[3] * b[3]]
}

#[inline]
fn dot(a: &Quad, b: &Quad) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
fn add_assign(acc: &mut Quad, v: &Quad) {
    for k in 0..4 {
        acc[k] += v[k];
    }
}

/// Reachable partial sums of `sum_q c_q x_q`, site by site.
#[derive(Clone, Debug)]
pub struct ValueLattice {
    coeffs: Vec<Rational>,
    levels: Vec<Vec<Rational>>,
    next: Vec<Vec<[usize; 2]>>,
}

impl ValueLattice {
    pub fn new(coeffs: &[Rational]) -> Self {
        let mut levels = vec![vec![Rational::zero()]];
        let mut next = Vec::with_capacity(coeffs.len());
        for &c in coeffs {
            let prev = levels.last().expect("level 0 exists");
            if c.is_zero() {
                next.push((0..prev.len()).map(|u| [u, u]).collect());
                levels.push(prev.clone());
                continue;
            }
            let values: Vec<Rational> = prev
                .iter()
                .flat_map(|&u| [u, u + c])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let find = |v: Rational| values.binary_search(&v).expect("value was inserted");
            next.push(prev.iter().map(|&u| [find(u), find(u + c)]).collect());
            levels.push(values);
        }
        Self {
            coeffs: coeffs.to_vec(),
            levels,
            next,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.coeffs.len()
    }

    /// Distinct values of the full form, ascending.
    pub fn values(&self) -> &[Rational] {
        self.levels.last().expect("level 0 exists")
    }
}

/// The ansatz output state in transfer-matrix form.
#[derive(Clone, Debug)]
pub struct ChainState {
    n: usize,
    first: Vec<[f64; 2]>,
    first_diff: Vec<[f64; 2]>,
    rot: Vec<[[f64; 2]; 2]>,
    rot_diff: Vec<[[f64; 2]; 2]>,
    site: Vec<[Quad; 2]>,
}

fn site_weight(rot: &[[f64; 2]; 2], first: &[f64; 2], x: usize) -> Quad {
    let b0 = rot[x][0] * first[0];
    let b1 = rot[x][1] * first[1];
    [b0 * b0, b0 * b1, b1 * b0, b1 * b1]
}

/// Derivative of `B(x,y) B(x,y')` given `dB`.
fn site_weight_diff(b: [f64; 2], db: [f64; 2]) -> Quad {
    [
        2.0 * db[0] * b[0],
        db[0] * b[1] + b[0] * db[1],
        db[1] * b[0] + b[1] * db[0],
        2.0 * db[1] * b[1],
    ]
}

impl ChainState {
    pub fn new(spec: &AnsatzSpec, theta: &[f64]) -> Result<Self> {
        spec.check_params(theta)?;
        let n = spec.n_qubits();
        let mut first = Vec::with_capacity(n);
        let mut first_diff = Vec::with_capacity(n);
        let mut rot = Vec::with_capacity(n);
        let mut rot_diff = Vec::with_capacity(n);
        for q in 0..n {
            let (s, c) = (theta[q] / 2.0).sin_cos();
            first.push([c, s]);
            first_diff.push([-0.5 * s, 0.5 * c]);
            rot.push(ry_matrix(theta[n + q]));
            rot_diff.push(ry_derivative(theta[n + q]));
        }
        let site = (0..n)
            .map(|q| [site_weight(&rot[q], &first[q], 0), site_weight(&rot[q], &first[q], 1)])
            .collect();
        Ok(Self {
            n,
            first,
            first_diff,
            rot,
            rot_diff,
            site,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    fn summed(&self, q: usize) -> Quad {
        let [w0, w1] = &self.site[q];
        [w0[0] + w1[0], w0[1] + w1[1], w0[2] + w1[2], w0[3] + w1[3]]
    }

    /// Amplitude `<x|psi>`.
    pub fn amplitude(&self, bits: &Bitstring) -> f64 {
        let b = |q: usize| {
            let x = bits.get(q) as usize;
            [self.rot[q][x][0] * self.first[q][0], self.rot[q][x][1] * self.first[q][1]]
        };
        let mut v = b(0);
        for q in 1..self.n {
            let bq = b(q);
            v = [(v[0] + v[1]) * bq[0], (v[0] - v[1]) * bq[1]];
        }
        v[0] + v[1]
    }

    pub fn probability(&self, bits: &Bitstring) -> f64 {
        self.amplitude(bits).powi(2)
    }

    /// Probability of each value of the lattice's linear form, aligned with
    /// [`ValueLattice::values`].
    pub fn distribution(&self, lattice: &ValueLattice) -> Vec<f64> {
        self.forward(lattice)
            .last_level
            .iter()
            .map(|v| v.iter().sum())
            .collect()
    }

    /// `sum_v weights[v] P(form = v)`.
    pub fn expectation(&self, lattice: &ValueLattice, weights: &[f64]) -> f64 {
        self.distribution(lattice)
            .iter()
            .zip(weights)
            .map(|(p, w)| p * w)
            .sum()
    }

    /// Marginal over `support`, indexed by the big-endian support pattern.
    pub fn marginal_probabilities(&self, support: &[usize]) -> Result<Vec<f64>> {
        let t = support.len();
        let mut coeffs = vec![Rational::zero(); self.n];
        for (k, &q) in support.iter().enumerate() {
            if q >= self.n || !coeffs[q].is_zero() {
                return Err(Error::InvalidQubit { index: q, n: self.n });
            }
            coeffs[q] = Rational::from_integer(1i64 << (t - 1 - k));
        }
        let lattice = ValueLattice::new(&coeffs);
        let mut out = vec![0.0; 1 << t];
        for (v, p) in lattice.values().iter().zip(self.distribution(&lattice)) {
            out[v.to_integer() as usize] = p;
        }
        Ok(out)
    }

    fn forward(&self, lattice: &ValueLattice) -> Forward {
        assert_eq!(lattice.n_sites(), self.n, "lattice and state sizes differ");
        let mut left_in: Vec<Vec<Quad>> = Vec::with_capacity(self.n);
        let mut current = vec![ONES];
        let mut last_level = Vec::new();
        for q in 0..self.n {
            let mut lam = vec![[0.0; 4]; lattice.levels[q + 1].len()];
            if lattice.coeffs[q].is_zero() {
                let e = self.summed(q);
                for (u, l) in current.iter().enumerate() {
                    lam[u] = hadamard_product(l, &e);
                }
            } else {
                for (u, l) in current.iter().enumerate() {
                    let [t0, t1] = lattice.next[q][u];
                    add_assign(&mut lam[t0], &hadamard_product(l, &self.site[q][0]));
                    add_assign(&mut lam[t1], &hadamard_product(l, &self.site[q][1]));
                }
            }
            left_in.push(std::mem::take(&mut current));
            if q + 1 < self.n {
                current = lam.iter().map(transfer).collect();
            } else {
                last_level = lam;
            }
        }
        Forward {
            left_in,
            last_level,
        }
    }

    /// Value of `sum_v weights[v] P(form = v)` and its exact gradient with
    /// respect to the `2n` ansatz angles, accumulated into `grad`.
    pub fn expectation_with_gradient(
        &self,
        lattice: &ValueLattice,
        weights: &[f64],
        grad: &mut [f64],
    ) -> f64 {
        let n = self.n;
        debug_assert_eq!(grad.len(), 2 * n);
        let fwd = self.forward(lattice);
        let value: f64 = fwd
            .last_level
            .iter()
            .zip(weights)
            .map(|(v, w)| w * v.iter().sum::<f64>())
            .sum();

        // right_in[v]: environment to the right of site q, for value v after q.
        let mut right_in: Vec<Quad> = weights.iter().map(|&w| [w; 4]).collect();
        for q in (0..n).rev() {
            let left = &fwd.left_in[q];
            let (d_first, d_rot) = self.site_derivatives(q);
            let mut g_first = 0.0;
            let mut g_rot = 0.0;
            let mut rho = vec![[0.0; 4]; left.len()];
            for (u, l) in left.iter().enumerate() {
                for x in 0..2 {
                    let r = &right_in[lattice.next[q][u][x]];
                    add_assign(&mut rho[u], &hadamard_product(&self.site[q][x], r));
                    let lr = hadamard_product(l, r);
                    g_first += dot(&lr, &d_first[x]);
                    g_rot += dot(&lr, &d_rot[x]);
                }
            }
            grad[q] += g_first;
            grad[n + q] += g_rot;
            right_in = rho.iter().map(transfer).collect();
        }
        value
    }

    /// `(dS/dtheta_first, dS/dtheta_last)` for both outcomes of site `q`.
    fn site_derivatives(&self, q: usize) -> ([Quad; 2], [Quad; 2]) {
        let (a, da) = (self.first[q], self.first_diff[q]);
        let (r, dr) = (self.rot[q], self.rot_diff[q]);
        let mut d_first = [[0.0; 4]; 2];
        let mut d_rot = [[0.0; 4]; 2];
        for x in 0..2 {
            let b = [r[x][0] * a[0], r[x][1] * a[1]];
            d_first[x] = site_weight_diff(b, [r[x][0] * da[0], r[x][1] * da[1]]);
            d_rot[x] = site_weight_diff(b, [dr[x][0] * a[0], dr[x][1] * a[1]]);
        }
        (d_first, d_rot)
    }

    /// Most probable basis state, ties to the smallest index.
    ///
    /// Depth-first branch and bound over prefixes: the marginal probability
    /// of a prefix bounds every completion, and at each depth at most
    /// `1 / p_best` prefixes survive the bound.
    pub fn argmax(&self) -> Bitstring {
        let n = self.n;
        // env[q]: all-outcome environment of sites q..n, seen from site q - 1.
        let mut env = vec![ONES; n + 1];
        for q in (0..n).rev() {
            let inner = if q + 1 < n { transfer(&env[q + 1]) } else { ONES };
            env[q] = hadamard_product(&self.summed(q), &inner);
        }
        let bound = |lam: &Quad, depth: usize| -> f64 {
            if depth < n {
                dot(&transfer(lam), &env[depth])
            } else {
                lam.iter().sum()
            }
        };
        let extend = |lam: Option<&Quad>, q: usize, x: usize| -> Quad {
            match lam {
                None => self.site[q][x],
                Some(l) => hadamard_product(&transfer(l), &self.site[q][x]),
            }
        };

        // Greedy descent for an incumbent.
        let mut bits = vec![false; n];
        let mut lam: Option<Quad> = None;
        for (q, bit) in bits.iter_mut().enumerate() {
            let c0 = extend(lam.as_ref(), q, 0);
            let c1 = extend(lam.as_ref(), q, 1);
            let take_one = bound(&c1, q + 1) > bound(&c0, q + 1);
            *bit = take_one;
            lam = Some(if take_one { c1 } else { c0 });
        }
        let mut best_p = lam.map(|l| l.iter().sum::<f64>()).unwrap_or(1.0);
        let mut best_bits = bits;
        let threshold = |p: f64| p * (1.0 - 1e-12);

        let mut nodes = 0usize;
        let mut stack: Vec<(usize, Option<Quad>, Vec<bool>)> = vec![(0, None, Vec::new())];
        while let Some((depth, lam, prefix)) = stack.pop() {
            if depth == n {
                let p = lam.map(|l| l.iter().sum::<f64>()).unwrap_or(1.0);
                let better = p > best_p
                    || (p >= threshold(best_p)
                        && Bitstring::new(prefix.clone()).index()
                            < Bitstring::new(best_bits.clone()).index());
                if better {
                    best_p = best_p.max(p);
                    best_bits = prefix;
                }
                continue;
            }
            nodes += 1;
            if nodes > ARGMAX_NODE_CAP {
                log::warn!("argmax search hit its node cap; returning best state found");
                break;
            }
            // Push 1 first so the 0 branch (smaller indices) is explored first.
            for x in [1usize, 0] {
                let child = extend(lam.as_ref(), depth, x);
                if bound(&child, depth + 1) < threshold(best_p) {
                    continue;
                }
                let mut next = prefix.clone();
                next.push(x == 1);
                stack.push((depth + 1, Some(child), next));
            }
        }
        Bitstring::new(best_bits)
    }
}

struct Forward {
    left_in: Vec<Vec<Quad>>,
    last_level: Vec<Quad>,
}
