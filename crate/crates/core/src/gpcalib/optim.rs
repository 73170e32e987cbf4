//! Limited-memory BFGS with backtracking (Armijo) line search.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::dot;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Stop when `|f_k − f_{k+1}| ≤ tol · max(|f_k|, 1)`.
    pub tol: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iters: 1000, tol: 1e-6, memory: 10, armijo: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Minimizes `objective`, which returns the value and gradient at a point or
/// `None` where the objective is undefined (treated as +∞ by the line
/// search). Every accepted step strictly decreases the objective.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, opts: &OptimOptions) -> Option<OptimResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (mut f, mut g) = objective(&x0).filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite()))?;
    let mut x = x0;
    let n = x.len();
    let mut trace = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let gnorm = math::sqrt(dot(&g, &g));
        if gnorm == 0.0 {
            converged = true;
            break;
        }
        let mut dir = two_loop(&g, &pairs);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        // without curvature information, take a unit-length first step
        let mut step = if pairs.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + opts.armijo * step * slope && ft < f
                {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if pairs.is_empty() {
                // steepest descent cannot make progress either
                converged = gnorm <= 1e-8 * f.abs().max(1.0);
                break;
            }
            pairs.clear();
            continue;
        };

        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * math::sqrt(dot(&s, &s) * dot(&yv, &yv)) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, yv, 1.0 / sy));
        }
        let change = (f - f_new).abs();
        let scale = f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if change <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    debug_assert_eq!(x.len(), n);
    Some(OptimResult { x, value: f, iterations, converged, trace })
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let opts = OptimOptions { tol: 1e-14, max_iters: 500, ..Default::default() };
        let r = minimize(f, vec![-1.2, 1.0], &opts).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
        assert!(r.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_iterations() {
        let f = |x: &[f64]| Some((x[0] * x[0], vec![2.0 * x[0]]));
        let r = minimize(f, vec![3.0], &OptimOptions { max_iters: 0, ..Default::default() }).unwrap();
        assert_eq!(r.x, vec![3.0]);
        assert!(!r.converged);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn undefined_start() {
        let f = |_: &[f64]| None;
        assert!(minimize(f, vec![0.0], &OptimOptions::default()).is_none());
    }
}
