//! First-order warm-up optimizer (Adam).

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

use super::{best_of, Objective, OptimOutcome};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 500,
            grad_tol: 1e-12,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in (0, 1)".into()));
        }
        if self.step <= 0.0 || self.eps <= 0.0 || self.grad_tol <= 0.0 {
            return Err(Error::Config(
                "adam step, eps, and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Standard Adam iteration; stops at max-iters or when the gradient norm
/// drops below tolerance. Deterministic: no randomness beyond the inputs.
pub fn adam_minimize(
    objective: &mut dyn Objective,
    init: &[f64],
    cfg: &AdamConfig,
) -> Result<OptimOutcome> {
    cfg.validate()?;
    let n = init.len();
    let mut x = init.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=cfg.max_iters {
        let (f, g) = objective.eval(&x)?;
        if !f.is_finite() {
            return Err(Error::TrainingAborted(format!(
                "non-finite loss {f} at adam iteration {t}"
            )));
        }
        history.push(f);
        best_of(&mut best, f, &x);
        grad_norm = g.iter().map(|gi| gi * gi).sum::<f64>().sqrt();
        if grad_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= cfg.step * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        iterations = t;
    }

    let (f_final, g_final) = objective.eval(&x)?;
    best_of(&mut best, f_final, &x);
    let (loss, params) = best.expect("at least one evaluation");
    Ok(OptimOutcome {
        params,
        loss,
        iterations,
        history,
        grad_norm: g_final
            .iter()
            .map(|gi| gi * gi)
            .sum::<f64>()
            .sqrt()
            .min(grad_norm),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::training::VecObjective;

    #[test]
    fn converges_on_scalar_quadratic() {
        // (theta - 3)^2 from zero, step 0.01
        let mut obj = VecObjective::new(1, |x| {
            let d = x[0] - 3.0;
            (d * d, vec![2.0 * d])
        });
        let cfg = AdamConfig {
            step: 0.01,
            max_iters: 2000,
            ..AdamConfig::default()
        };
        let out = adam_minimize(&mut obj, &[0.0], &cfg).unwrap();
        assert!(
            (out.params[0] - 3.0).abs() < 1e-4,
            "theta = {}",
            out.params[0]
        );
    }

    #[test]
    fn history_non_increasing_over_windows_on_convex_quadratics() {
        let mut rng = SplitMix64::new(55);
        for _ in 0..10 {
            // random diagonal-dominant SPD quadratic in 4 variables
            let dim = 4;
            let mut a = vec![vec![0.0; dim]; dim];
            for i in 0..dim {
                for j in 0..dim {
                    a[i][j] = rng.uniform(-0.3, 0.3);
                }
                a[i][i] = rng.uniform(1.0, 2.0);
            }
            // symmetrize
            for i in 0..dim {
                for j in 0..i {
                    let s = 0.5 * (a[i][j] + a[j][i]);
                    a[i][j] = s;
                    a[j][i] = s;
                }
            }
            let quad = move |x: &[f64]| {
                let mut f = 0.0;
                let mut g = vec![0.0; dim];
                for i in 0..dim {
                    for j in 0..dim {
                        f += 0.5 * x[i] * a[i][j] * x[j];
                        g[i] += a[i][j] * x[j];
                    }
                }
                (f, g)
            };
            let mut obj = VecObjective::new(dim, quad);
            let x0: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let cfg = AdamConfig {
                step: 0.02,
                max_iters: 400,
                ..AdamConfig::default()
            };
            let out = adam_minimize(&mut obj, &x0, &cfg).unwrap();
            for i in 0..out.history.len().saturating_sub(100) {
                assert!(
                    out.history[i + 100] <= out.history[i] + 1e-12,
                    "loss rose over window at {i}"
                );
            }
        }
    }

    #[test]
    fn flat_objective_stops_immediately() {
        let mut obj = VecObjective::new(2, |_x| (1.0, vec![0.0, 0.0]));
        let out = adam_minimize(&mut obj, &[0.3, -0.7], &AdamConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.params, vec![0.3, -0.7]);
    }
}
