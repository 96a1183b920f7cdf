//! Limited-memory BFGS for smooth concave maximization with a monotone
//! backtracking (Armijo) line search. Every accepted step strictly
//! increases the objective.
//!
//! Sufficient increase is judged on `Objective::delta`, which the caller
//! computes directly from the two points. Subtracting two large objective
//! values cannot resolve the tiny increases seen near the optimum.

use std::collections::VecDeque;

use crate::Real;

pub(crate) struct LbfgsOptions<T> {
    pub max_iterations: usize,
    pub tolerance: T,
    pub memory: usize,
}

pub(crate) trait Objective<T> {
    /// Value and gradient.
    fn eval(&mut self, x: &[T]) -> (T, Vec<T>);
    /// `f(to) - f(from)`, computed without cancellation.
    fn delta(&mut self, from: &[T], to: &[T]) -> T;
}

pub(crate) struct LbfgsResult<T> {
    pub x: Vec<T>,
    pub grad_norm: T,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Maximizes `f`, which returns `(value, gradient)`.
pub(crate) fn maximize<T: Real>(
    f: &mut impl Objective<T>,
    x0: Vec<T>,
    opts: &LbfgsOptions<T>,
) -> LbfgsResult<T> {
    let mut x = x0;
    let (f0, mut g) = f.eval(&x);
    let mut fx = f0;
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(opts.memory);
    let c1 = T::c(1e-4);
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let gn = norm(&g);
        if gn <= opts.tolerance {
            break;
        }
        // Standard two-loop recursion for minimizing -f, applied to the
        // ascent gradient; by linearity the result is the ascent direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi = *qi - a * yi;
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => T::one() / gn,
        };
        for qi in q.iter_mut() {
            *qi = *qi * gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi = *qi + si * (a - b);
            }
        }
        let mut d = q;
        let mut slope = dot(&g, &d);
        if !(slope > T::zero()) {
            history.clear();
            d = g.iter().map(|&gi| gi / gn).collect();
            slope = dot(&g, &d);
        }

        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + step * di).collect();
            let gain = f.delta(&x, &cand);
            if gain.is_finite() && gain > T::zero() && gain >= c1 * step * slope {
                let (_, gc) = f.eval(&cand);
                accepted = Some((cand, gain, gc));
                break;
            }
            step = step * T::c(0.5);
        }
        let Some((xn, gain, gnew)) = accepted else {
            // No representable ascent along d; treat as converged.
            break;
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        // y for the minimization problem: -(g_new - g_old).
        let y: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| b - a).collect();
        let sy = dot(&s, &y);
        if sy > T::zero() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, T::one() / sy));
        }
        x = xn;
        fx = fx + gain;
        g = gnew;
        trace.push(fx);
        iterations += 1;
    }
    let grad_norm = norm(&g);
    LbfgsResult {
        x,
        grad_norm,
        iterations,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -sum_i c_i (x_i - i)^2
        struct Quad([f64; 4]);
        impl Objective<f64> for Quad {
            fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
                let c = self.0;
                let v = -x.iter().enumerate().map(|(i, &xi)| c[i] * (xi - i as f64).powi(2)).sum::<f64>();
                let g = x.iter().enumerate().map(|(i, &xi)| -2.0 * c[i] * (xi - i as f64)).collect();
                (v, g)
            }
            fn delta(&mut self, from: &[f64], to: &[f64]) -> f64 {
                from.iter()
                    .zip(to)
                    .enumerate()
                    .map(|(i, (&a, &b))| self.0[i] * (a - b) * (a + b - 2.0 * i as f64))
                    .sum()
            }
        }
        let r = maximize(
            &mut Quad([1.0, 10.0, 100.0, 0.5]),
            vec![0.0; 4],
            &LbfgsOptions {
                max_iterations: 200,
                tolerance: 1e-10,
                memory: 5,
            },
        );
        for (i, xi) in r.x.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-9);
        }
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.grad_norm <= 1e-10);
    }
}
