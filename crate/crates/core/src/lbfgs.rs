//! Limited-memory BFGS with a backtracking line search.
//!
//! The inverse-Hessian approximation is built from the last `memory`
//! curvature pairs via the two-loop recursion. Every accepted step satisfies
//! the Armijo sufficient-decrease condition, so the objective trace is
//! non-increasing.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsParams {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `(f_prev - f) <= tolerance * |f_prev|`.
    pub tolerance: f64,
    /// Stop once the max-norm of the gradient drops below this.
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            tolerance: 1e-9,
            gradient_tolerance: 1e-12,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    GradientVanished,
    MaxIterations,
    /// No step along the search direction (or steepest descent) decreased
    /// the objective any further.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective at the start point followed by every accepted iterate.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct History {
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    memory: usize,
}

impl History {
    fn new(memory: usize) -> Self {
        Self {
            s: VecDeque::with_capacity(memory),
            y: VecDeque::with_capacity(memory),
            rho: VecDeque::with_capacity(memory),
            memory,
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        // skip pairs that would break positive definiteness
        if sy <= 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() || sy <= 0.0 {
            return;
        }
        if self.memory == 0 {
            return;
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        self.rho.push_back(1.0 / sy);
    }

    /// `-H g` via the two-loop recursion.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let m = self.s.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if let (Some(s), Some(y)) = (self.s.back(), self.y.back()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += sj * (alpha[i] - beta);
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimize `f`, which writes the gradient into its second argument and
/// returns the objective.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, params: &LbfgsParams) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad);
    if !value.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut trace = vec![value];
    let mut history = History::new(params.memory);
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut iterations = 0;

    let termination = loop {
        if max_abs(&grad) <= params.gradient_tolerance {
            break Termination::GradientVanished;
        }
        if iterations >= params.max_iterations {
            break Termination::MaxIterations;
        }

        let mut direction = history.direction(&grad);
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &direction);
        }

        // first step without curvature information: unit-length move
        let mut step = if history.s.is_empty() { (1.0 / max_abs(&grad).max(f64::MIN_POSITIVE)).min(1.0) } else { 1.0 };

        let mut accepted = None;
        let mut saw_finite = false;
        for _ in 0..params.max_backtracks {
            for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&direction) {
                *t = xi + step * di;
            }
            let candidate = f(&trial, &mut trial_grad);
            if candidate.is_finite() {
                saw_finite = true;
                if candidate <= value + params.armijo * step * slope {
                    accepted = Some(candidate);
                    break;
                }
            }
            step *= 0.5;
        }

        let Some(new_value) = accepted else {
            if !saw_finite {
                return Err(Error::NonFinite { iteration: iterations + 1 });
            }
            if history.s.is_empty() {
                break Termination::LineSearchStalled;
            }
            // retry from steepest descent with a fresh memory
            history.clear();
            continue;
        };

        iterations += 1;
        let s: Vec<f64> = trial.iter().zip(&x).map(|(t, xi)| t - xi).collect();
        let y: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        history.push(s, y);
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        let previous = value;
        value = new_value;
        trace.push(value);

        if previous - value <= params.tolerance * previous.abs() {
            break Termination::Converged;
        }
    };

    Ok(Minimum { x, value, iterations, trace, termination })
}
