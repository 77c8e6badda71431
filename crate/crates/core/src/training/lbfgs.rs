//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

use super::{best_of, Objective, OptimOutcome};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the strong Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe conditions.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_evals: usize,
    /// Stop when the loss improves by less than this over `stall_window` iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 50,
            max_iters: 2000,
            grad_tol: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 30,
            stall_tol: 1e-14,
            stall_window: 20,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::Config("lbfgs memory must be at least 1".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config("wolfe constants need 0 < c1 < c2 < 1".into()));
        }
        if self.grad_tol <= 0.0 || self.stall_tol <= 0.0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: d = -H g with the implicit inverse-Hessian estimate.
fn search_direction(g: &[f64], pairs: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (p, &a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Evaluate at x + alpha d; non-finite losses are reported as None so the
/// line search backs off instead of aborting.
#[allow(clippy::type_complexity)]
fn probe(
    objective: &mut dyn Objective,
    x: &[f64],
    d: &[f64],
    alpha: f64,
    evals: &mut usize,
) -> Result<Option<(Vec<f64>, f64, Vec<f64>)>> {
    let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
    *evals += 1;
    match objective.eval(&trial) {
        Ok((f, g)) if f.is_finite() => Ok(Some((trial, f, g))),
        Ok(_) => Ok(None),
        Err(Error::NonFinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Minimizer of the cubic through (a, fa, dfa) and (b, fb, dfb), clipped to
/// the interior of [a, b]; bisection when the interpolation degenerates.
fn cubic_step(a: f64, fa: f64, dfa: f64, b: f64, fb: f64, dfb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - dfa * dfb;
    let mid = 0.5 * (lo + hi);
    if disc < 0.0 {
        return mid;
    }
    let d2 = disc.sqrt() * (b - a).signum();
    let denom = dfb - dfa + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let cand = b - (b - a) * (dfb + d2 - d1) / denom;
    let margin = 0.1 * (hi - lo);
    if !cand.is_finite() || cand < lo + margin || cand > hi - margin {
        mid
    } else {
        cand
    }
}

struct LinePoint {
    alpha: f64,
    f: f64,
    dphi: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Inner zoom stage of the strong-Wolfe search.
#[allow(clippy::too_many_arguments)]
fn zoom(
    objective: &mut dyn Objective,
    x: &[f64],
    d: &[f64],
    f0: f64,
    dphi0: f64,
    cfg: &LbfgsConfig,
    mut lo: LinePoint,
    mut hi_alpha: f64,
    mut hi_f: f64,
    mut hi_dphi: f64,
    evals: &mut usize,
) -> Result<Option<LinePoint>> {
    while *evals < cfg.max_line_evals {
        let alpha = cubic_step(lo.alpha, lo.f, lo.dphi, hi_alpha, hi_f, hi_dphi);
        if (hi_alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
            return Ok(None);
        }
        let Some((trial, f, g)) = probe(objective, x, d, alpha, evals)? else {
            hi_alpha = alpha;
            hi_f = f64::INFINITY;
            hi_dphi = 0.0;
            continue;
        };
        let dphi = dot(&g, d);
        if f > f0 + cfg.c1 * alpha * dphi0 || f >= lo.f {
            hi_alpha = alpha;
            hi_f = f;
            hi_dphi = dphi;
        } else {
            if dphi.abs() <= -cfg.c2 * dphi0 {
                return Ok(Some(LinePoint {
                    alpha,
                    f,
                    dphi,
                    x: trial,
                    g,
                }));
            }
            if dphi * (hi_alpha - lo.alpha) >= 0.0 {
                hi_alpha = lo.alpha;
                hi_f = lo.f;
                hi_dphi = lo.dphi;
            }
            lo = LinePoint {
                alpha,
                f,
                dphi,
                x: trial,
                g,
            };
        }
    }
    Ok(None)
}

/// Strong-Wolfe search (bracket then zoom): returns an accepted point or
/// None when no acceptable step was found within the evaluation budget.
fn wolfe_search(
    objective: &mut dyn Objective,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha_init: f64,
    cfg: &LbfgsConfig,
) -> Result<Option<LinePoint>> {
    let dphi0 = dot(g0, d);
    if dphi0 >= 0.0 {
        return Ok(None);
    }
    let mut evals = 0usize;
    let mut prev = LinePoint {
        alpha: 0.0,
        f: f0,
        dphi: dphi0,
        x: x.to_vec(),
        g: g0.to_vec(),
    };
    let mut alpha = alpha_init;
    let mut first = true;
    while evals < cfg.max_line_evals {
        let Some((trial, f, g)) = probe(objective, x, d, alpha, &mut evals)? else {
            // overshoot into non-finite territory: zoom toward prev
            return zoom(
                objective,
                x,
                d,
                f0,
                dphi0,
                cfg,
                prev,
                alpha,
                f64::INFINITY,
                0.0,
                &mut evals,
            );
        };
        let dphi = dot(&g, d);
        if f > f0 + cfg.c1 * alpha * dphi0 || (!first && f >= prev.f) {
            return zoom(
                objective, x, d, f0, dphi0, cfg, prev, alpha, f, dphi, &mut evals,
            );
        }
        let current = LinePoint {
            alpha,
            f,
            dphi,
            x: trial,
            g,
        };
        if dphi.abs() <= -cfg.c2 * dphi0 {
            return Ok(Some(current));
        }
        if dphi >= 0.0 {
            let (pa, pf, pd) = (prev.alpha, prev.f, prev.dphi);
            return zoom(
                objective, x, d, f0, dphi0, cfg, current, pa, pf, pd, &mut evals,
            );
        }
        prev = current;
        alpha = (2.0 * alpha).min(1e10);
        first = false;
    }
    Ok(None)
}

/// Limited-memory BFGS with strong-Wolfe line search. Curvature pairs with
/// s.y <= 1e-12 are skipped; a failed line search falls back to one
/// steepest-descent restart, then aborts if it fails again.
pub fn lbfgs_minimize(
    objective: &mut dyn Objective,
    init: &[f64],
    cfg: &LbfgsConfig,
) -> Result<OptimOutcome> {
    cfg.validate()?;
    let (mut f, mut g) = objective.eval(init)?;
    if !f.is_finite() {
        return Err(Error::TrainingAborted(
            "non-finite loss at the initial point".into(),
        ));
    }
    let mut x = init.to_vec();
    let mut best: Option<(f64, Vec<f64>)> = None;
    best_of(&mut best, f, &x);
    let mut history = vec![f];
    let mut grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if grad_norm < cfg.grad_tol {
        let (loss, params) = best.expect("seeded");
        return Ok(OptimOutcome {
            params,
            loss,
            iterations: 0,
            history,
            grad_norm,
            converged: true,
        });
    }

    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut fell_back = false;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        let mut d = search_direction(&g, &pairs);
        if !d.iter().all(|v| v.is_finite()) || dot(&d, &g) >= 0.0 {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / g.iter().map(|v| v.abs()).sum::<f64>().max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let accepted = wolfe_search(objective, &x, f, &g, &d, alpha0, cfg)?;
        let Some(pt) = accepted else {
            if fell_back {
                return Err(Error::TrainingAborted(format!(
                    "line search failed twice near loss {f:.6e} (iteration {iter})"
                )));
            }
            fell_back = true;
            pairs.clear();
            continue;
        };
        fell_back = false;

        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back(Pair {
                rho: 1.0 / sy,
                s,
                y: yv,
            });
        }
        x = pt.x;
        f = pt.f;
        g = pt.g;
        iterations = iter;
        history.push(f);
        best_of(&mut best, f, &x);
        grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        if history.len() > cfg.stall_window {
            let before = history[history.len() - 1 - cfg.stall_window];
            if before - f < cfg.stall_tol {
                break;
            }
        }
    }

    let (loss, params) = best.expect("seeded");
    Ok(OptimOutcome {
        params,
        loss,
        iterations,
        history,
        grad_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::training::VecObjective;

    #[test]
    fn rosenbrock_to_high_precision() {
        let mut obj = VecObjective::new(2, |x| {
            let (a, b) = (1.0, 100.0);
            let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
            let g = vec![
                -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0],
                2.0 * b * (x[1] - x[0] * x[0]),
            ];
            (f, g)
        });
        let cfg = LbfgsConfig {
            max_iters: 200,
            grad_tol: 1e-12,
            ..LbfgsConfig::default()
        };
        let out = lbfgs_minimize(&mut obj, &[-1.2, 1.0], &cfg).unwrap();
        assert!(
            out.loss < 1e-8,
            "f* = {:e} after {} iters",
            out.loss,
            out.iterations
        );
        assert!((out.params[0] - 1.0).abs() < 1e-3);
        assert!((out.params[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn spd_quadratic_converges_fast() {
        // random SPD A = B^T B + 10 I in dimension 10
        let dim = 10;
        let mut rng = SplitMix64::new(7);
        let b: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let mut a = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    a[i][j] += b[k][i] * b[k][j];
                }
            }
            a[i][i] += 10.0;
        }
        let mut obj = VecObjective::new(dim, move |x| {
            let mut f = 0.0;
            let mut g = vec![0.0; dim];
            for i in 0..dim {
                for j in 0..dim {
                    f += 0.5 * x[i] * a[i][j] * x[j];
                    g[i] += a[i][j] * x[j];
                }
            }
            (f, g)
        });
        let x0: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let cfg = LbfgsConfig {
            grad_tol: 1e-10,
            ..LbfgsConfig::default()
        };
        let out = lbfgs_minimize(&mut obj, &x0, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 30, "{} iterations", out.iterations);
        assert!(out.grad_norm < 1e-10);
    }

    #[test]
    fn optimal_start_returns_immediately() {
        let mut obj = VecObjective::new(2, |x| {
            (x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]])
        });
        let out = lbfgs_minimize(&mut obj, &[0.0, 0.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn stall_detection_stops_early() {
        // objective with a flat valley floor: improvement dries up
        let mut obj = VecObjective::new(1, |x| {
            let f = 1.0 + (x[0] * x[0]).min(1e-30);
            (
                f,
                vec![2.0 * x[0] * if x[0] * x[0] < 1e-30 { 1.0 } else { 0.0 }],
            )
        });
        let cfg = LbfgsConfig {
            max_iters: 500,
            ..LbfgsConfig::default()
        };
        let out = lbfgs_minimize(&mut obj, &[1.0], &cfg).unwrap();
        assert!(out.iterations < 500);
    }

    #[test]
    fn non_spd_history_is_skipped() {
        // maximize-then-minimize shape: concave at start; the sy > 0 filter
        // must keep the recursion stable
        let mut obj = VecObjective::new(1, |x| {
            let f = x[0].powi(4) - x[0] * x[0];
            (f, vec![4.0 * x[0].powi(3) - 2.0 * x[0]])
        });
        let out = lbfgs_minimize(&mut obj, &[0.1], &LbfgsConfig::default()).unwrap();
        // minima at +-1/sqrt(2) with f = -1/4
        assert!((out.loss + 0.25).abs() < 1e-10);
    }
}
