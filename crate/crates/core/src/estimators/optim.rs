use nalgebra::DVector;

use crate::error::{Error, Result};

/// Settings for the full-batch backtracking gradient descent used by every fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub backtrack_factor: f64,
    pub init_step: f64,
    /// Random restarts for nonconvex objectives.
    pub restarts: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-8,
            backtrack_factor: 0.5,
            init_step: 1.0,
            restarts: 4,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.grad_tol > 0.0) || !(self.init_step > 0.0) {
            return Err(Error::InvalidConfig("optimizer needs max_iters, grad_tol, init_step > 0".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidConfig("backtrack_factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub x: DVector<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
    /// Objective value after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;

/// Minimizes `f` (returning value and gradient) by gradient descent with an
/// Armijo backtracking line search. Trial steps start from a Barzilai-Borwein
/// estimate, so every accepted step still decreases the objective.
pub(crate) fn minimize<F>(mut f: F, x0: DVector<f64>, cfg: &OptimConfig) -> Descent
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut trace = vec![fx];
    let mut step = cfg.init_step;
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        let gnorm2 = g.norm_squared();
        if gnorm2.sqrt() <= cfg.grad_tol {
            converged = true;
            break;
        }
        let mut t = step;
        let mut next = None;
        for _ in 0..80 {
            let cand = &x - &g * t;
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc <= fx - ARMIJO * t * gnorm2 {
                next = Some((cand, fc, gc));
                break;
            }
            t *= cfg.backtrack_factor;
        }
        let Some((xn, fxn, gn)) = next else {
            // Line search exhausted: no representable decrease remains.
            break;
        };
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        step = if sy > 0.0 { s.norm_squared() / sy } else { t * 2.0 };
        if !step.is_finite() || step <= 0.0 {
            step = cfg.init_step;
        }
        let rel = (fx - fxn).abs() / fx.abs().max(1e-300);
        x = xn;
        fx = fxn;
        g = gn;
        trace.push(fx);
        iters += 1;
        if rel < 1e-15 {
            converged = true;
            break;
        }
    }
    if g.norm() <= cfg.grad_tol {
        converged = true;
    }
    Descent {
        x,
        value: fx,
        iters,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges() {
        let f = |x: &DVector<f64>| {
            let g = DVector::from_vec(vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)]);
            ((x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2), g)
        };
        let d = minimize(f, DVector::zeros(2), &OptimConfig::default());
        assert!(d.converged);
        assert!((d.x[0] - 1.0).abs() < 1e-8 && (d.x[1] + 2.0).abs() < 1e-8);
        assert!(d.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_backtrack_factor() {
        let cfg = OptimConfig {
            backtrack_factor: 1.5,
            ..OptimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
