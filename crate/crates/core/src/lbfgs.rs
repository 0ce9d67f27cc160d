// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Box-constrained limited-memory BFGS with projected backtracking.
//!
//! Variables sitting on a bound whose gradient points outward are frozen for
//! the two-loop recursion; the trial point is always projected back into the
//! box and accepted only under an Armijo decrease, so accepted objective
//! values never increase.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the objective drops to this value.
    pub target: f64,
    pub lower: f64,
    pub upper: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 1000,
            target: f64::NEG_INFINITY,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetReached,
    MaxIterations,
    /// No descent step could be found, even along the projected gradient.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start point, then after each accepted step.
    pub history: Vec<f64>,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` (returning value and gradient) inside the box.
pub fn minimize<F>(mut objective: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let project = |v: f64| v.clamp(opts.lower, opts.upper);
    let mut x: Vec<f64> = x0.iter().map(|&v| project(v)).collect();
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite objective at start: {f}")));
    }
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut termination = Termination::MaxIterations;

    let mut iter = 0;
    while iter < opts.max_iterations {
        if f <= opts.target {
            termination = Termination::TargetReached;
            break;
        }
        let free: Vec<bool> = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| !((xi <= opts.lower && gi > 0.0) || (xi >= opts.upper && gi < 0.0)))
            .collect();

        let mut step = None;
        for use_memory in [true, false] {
            if !use_memory {
                pairs.clear();
            }
            let dir = search_direction(&g, &free, &pairs);
            if let Some(found) = line_search(&mut objective, &x, f, &g, &dir, opts, &project)? {
                step = Some(found);
                break;
            }
            if pairs.is_empty() {
                break;
            }
        }
        let Some((x_new, f_new, g_new)) = step else {
            termination = Termination::Stalled;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        iter += 1;
    }
    if iter >= opts.max_iterations && f <= opts.target {
        termination = Termination::TargetReached;
    }

    Ok(LbfgsOutcome {
        x,
        value: f,
        history,
        termination,
    })
}

fn search_direction(g: &[f64], free: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(&vi, &fi)| if fi { vi } else { 0.0 })
            .collect()
    };
    let mut q = mask(g);
    if pairs.is_empty() {
        let norm = dot(&q, &q).sqrt();
        let scale = if norm > 0.0 { 1.0 / norm.max(1.0) } else { 0.0 };
        return q.iter().map(|v| -v * scale).collect();
    }
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let s = mask(s);
        let y = mask(y);
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alphas.push((a, s, y, *rho));
    }
    let (s_last, y_last, _) = pairs.back().expect("non-empty");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    let mut r: Vec<f64> = q.iter().map(|v| v * gamma).collect();
    for (a, s, y, rho) in alphas.into_iter().rev() {
        let b = rho * dot(&y, &r);
        for (ri, si) in r.iter_mut().zip(&s) {
            *ri += si * (a - b);
        }
    }
    r.iter().zip(free).map(|(&v, &fi)| if fi { -v } else { 0.0 }).collect()
}

#[allow(clippy::type_complexity)]
fn line_search<F, P>(
    objective: &mut F,
    x: &[f64],
    f: f64,
    g: &[f64],
    dir: &[f64],
    opts: &LbfgsOptions,
    project: &P,
) -> Result<Option<(Vec<f64>, f64, Vec<f64>)>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: Fn(f64) -> f64,
{
    if dot(g, dir) >= 0.0 {
        return Ok(None);
    }
    let mut alpha = 1.0;
    for _ in 0..opts.max_backtracks {
        let trial: Vec<f64> = x
            .iter()
            .zip(dir)
            .map(|(&xi, &di)| project(xi + alpha * di))
            .collect();
        let decrease: f64 = trial.iter().zip(x).zip(g).map(|((t, xi), gi)| gi * (t - xi)).sum();
        if decrease < 0.0 {
            let (ft, gt) = objective(&trial)?;
            if !ft.is_finite() || gt.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite objective during line search (step {alpha:e})"
                )));
            }
            if ft <= f + opts.armijo * decrease && ft < f {
                return Ok(Some((trial, ft, gt)));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}
