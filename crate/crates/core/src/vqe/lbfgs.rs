//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Stopping rules follow the usual L-BFGS-B conventions: relative function
//! reduction `(f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) <= f_tol`, projected
//! gradient `max_i |g_i| <= g_tol`, or an iteration/evaluation budget.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsSettings {
    pub max_iterations: usize,
    pub max_evaluations: usize,
    pub f_tol: f64,
    pub g_tol: f64,
    pub memory: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    MaxEvaluations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Counted<F> {
    fg: F,
    evaluations: usize,
    budget: usize,
}

impl<F> Counted<F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evaluations += 1;
        let (f, g) = (self.fg)(x)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                value: f,
                evals: self.evaluations,
            });
        }
        Ok((f, g))
    }
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

fn step_point(x: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, clamped
/// to the middle 80% of the bracket; bisection when degenerate.
fn interpolate(a: &Trial, b: &Trial) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    let mut alpha = f64::NAN;
    if disc >= 0.0 {
        let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
        alpha = b.alpha
            - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    }
    let margin = 0.1 * (hi - lo);
    if alpha.is_finite() {
        alpha.clamp(lo + margin, hi - margin)
    } else {
        0.5 * (lo + hi)
    }
}

/// Strong-Wolfe search along `d`. Returns the accepted point, or the best
/// sufficient-decrease point seen, or `None` when no decrease was found.
fn line_search<F>(
    fg: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
) -> Result<Option<Trial>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let slope0 = dot(g0, d);
    let d_max = inf_norm(d);
    let armijo = |t: &Trial| t.f <= f0 + C1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -C2 * slope0;
    let mut fallback: Option<Trial> = None;
    let keep = |fallback: &mut Option<Trial>, t: &Trial| {
        if t.f < f0 && armijo(t) && fallback.as_ref().is_none_or(|b| t.f < b.f) {
            *fallback = Some(Trial {
                alpha: t.alpha,
                x: t.x.clone(),
                f: t.f,
                g: t.g.clone(),
                slope: t.slope,
            });
        }
    };

    let mut prev = Trial {
        alpha: 0.0,
        x: x.to_vec(),
        f: f0,
        g: g0.to_vec(),
        slope: slope0,
    };
    let mut alpha = alpha0;
    let mut evals = 0;
    let (mut lo, mut hi) = loop {
        if evals >= MAX_LINE_SEARCH_EVALS || fg.exhausted() {
            return Ok(fallback);
        }
        let xn = step_point(x, d, alpha);
        let (f, g) = fg.eval(&xn)?;
        evals += 1;
        let t = Trial {
            alpha,
            slope: dot(&g, d),
            x: xn,
            f,
            g,
        };
        keep(&mut fallback, &t);
        if !armijo(&t) || (prev.alpha > 0.0 && t.f >= prev.f) {
            break (prev, t);
        }
        if curvature(&t) {
            return Ok(Some(t));
        }
        if t.slope >= 0.0 {
            break (t, prev);
        }
        alpha *= 2.0;
        prev = t;
    };

    while evals < MAX_LINE_SEARCH_EVALS && !fg.exhausted() {
        let alpha = interpolate(&lo, &hi);
        if (hi.alpha - lo.alpha).abs() * d_max < 1e-15 {
            break;
        }
        let xn = step_point(x, d, alpha);
        let (f, g) = fg.eval(&xn)?;
        evals += 1;
        let t = Trial {
            alpha,
            slope: dot(&g, d),
            x: xn,
            f,
            g,
        };
        keep(&mut fallback, &t);
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Ok(Some(t));
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    Ok(fallback)
}

/// Minimizes `f` from `x0`; `fg` returns the value and gradient together.
pub fn minimize<F>(fg: F, x0: &[f64], settings: &LbfgsSettings) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut fg = Counted {
        fg,
        evaluations: 0,
        budget: settings.max_evaluations,
    };
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg.eval(&x)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) <= settings.g_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= settings.max_iterations {
            break Termination::MaxIterations;
        }
        if fg.exhausted() {
            break Termination::MaxEvaluations;
        }

        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if history.is_empty() {
            (1.0 / dot(&d, &d).sqrt()).min(1.0)
        } else {
            1.0
        };

        let Some(t) = line_search(&mut fg, &x, f, &g, &d, alpha0)? else {
            if history.is_empty() {
                break Termination::LineSearchFailed;
            }
            // Retry once along steepest descent with a fresh memory.
            history.clear();
            continue;
        };
        iterations += 1;

        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let reduction = (f - t.f) / f.abs().max(t.f.abs()).max(1.0);
        x = t.x;
        f = t.f;
        g = t.g;
        if reduction <= settings.f_tol {
            break Termination::FunctionTolerance;
        }
    };

    Ok(Minimum {
        x,
        value: f,
        gradient: g,
        iterations,
        evaluations: fg.evaluations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> LbfgsSettings {
        LbfgsSettings {
            max_iterations: 1000,
            max_evaluations: 5000,
            f_tol: 2.22e-15,
            g_tol: 1e-8,
            memory: 10,
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Ok((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let m = minimize(rosenbrock, &[-1.2, 1.0, -0.5, 0.8], &settings()).unwrap();
        assert!(m.value < 1e-12, "value {}", m.value);
        for xi in &m.x {
            assert!((xi - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let quad = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()))
        };
        let m = minimize(quad, &[0.0, 0.0], &settings()).unwrap();
        assert_eq!(m.iterations, 0);
        assert_eq!(m.evaluations, 1);
        assert_eq!(m.termination, Termination::GradientTolerance);
    }

    #[test]
    fn respects_evaluation_budget() {
        let mut s = settings();
        s.max_evaluations = 7;
        let m = minimize(rosenbrock, &[-1.2, 1.0], &s).unwrap();
        assert!(m.evaluations <= 7);
    }

    #[test]
    fn non_finite_values_abort() {
        let bad = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![1.0])) };
        assert!(matches!(
            minimize(bad, &[0.0], &settings()),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn values_never_increase() {
        let mut trace = Vec::new();
        let m = minimize(
            |x: &[f64]| {
                let r = rosenbrock(x)?;
                trace.push(r.0);
                Ok(r)
            },
            &[0.3, -0.7, 1.4],
            &settings(),
        )
        .unwrap();
        assert!(m.value <= trace[0]);
    }
}
