//! Pretext-task representations `phi: R^d1 -> R^d2` fitted on `S1 ∪ S3`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ntk::TwoLayerRelu;
use super::optim::{minimize, OptimConfig};
use crate::error::{Error, Result};
use crate::models::SampleBank;
use crate::numeric::ridge_solve;
use crate::rng::Seed;

/// Parametric representation `phi(x) = (2 sigmoid(2 beta^T x) - 1) mu2 = tanh(beta^T x) mu2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCi {
    pub beta: DVector<f64>,
    pub mu2hat: DVector<f64>,
}

/// Linear representation `phi(x) = B^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    /// `d1 x d2`.
    pub b_matrix: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum PretextModel {
    ParamCi(ParamCi),
    LinearMap(LinearMap),
    TwoLayerRelu(TwoLayerRelu),
}

impl PretextModel {
    pub fn input_dim(&self) -> usize {
        match self {
            PretextModel::ParamCi(p) => p.beta.len(),
            PretextModel::LinearMap(l) => l.b_matrix.nrows(),
            PretextModel::TwoLayerRelu(t) => t.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PretextModel::ParamCi(p) => p.mu2hat.len(),
            PretextModel::LinearMap(l) => l.b_matrix.ncols(),
            PretextModel::TwoLayerRelu(t) => t.output_dim(),
        }
    }

    /// `phi` applied to every row of `x1`; returns `n x d2`.
    pub fn features(&self, x1: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            PretextModel::ParamCi(p) => {
                let s = (x1 * &p.beta).map(f64::tanh);
                &s * p.mu2hat.transpose()
            }
            PretextModel::LinearMap(l) => x1 * &l.b_matrix,
            PretextModel::TwoLayerRelu(t) => t.forward(x1),
        }
    }
}

/// Mean pretext loss `(1/n) sum ||x2_i - tanh(beta^T x1_i) mu2||^2`.
pub fn pretext_objective(beta: &DVector<f64>, mu2: &DVector<f64>, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> f64 {
    let s = (x1 * beta).map(f64::tanh);
    let resid = x2 - &s * mu2.transpose();
    resid.norm_squared() / x1.nrows() as f64
}

/// Gradient of [`pretext_objective`] with respect to `beta` at fixed `mu2`.
pub fn pretext_objective_grad_beta(
    beta: &DVector<f64>,
    mu2: &DVector<f64>,
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
) -> DVector<f64> {
    let n = x1.nrows() as f64;
    let s = (x1 * beta).map(f64::tanh);
    let proj = x2 * mu2;
    let m2 = mu2.norm_squared();
    let w = DVector::from_iterator(
        s.len(),
        s.iter().zip(proj.iter()).map(|(si, pi)| -2.0 * (pi - si * m2) * (1.0 - si * si) / n),
    );
    x1.transpose() * w
}

/// Closed-form `mu2` minimizing the pretext loss for fixed scores `s`.
pub fn exact_mu2_step(s: &DVector<f64>, x2: &DMatrix<f64>) -> Option<DVector<f64>> {
    let ss = s.norm_squared();
    if ss == 0.0 {
        return None;
    }
    Some(x2.transpose() * s / ss)
}

/// Objective profiled over `mu2`, with its gradient in `beta`.
struct Profile<'a> {
    x1: &'a DMatrix<f64>,
    x2: &'a DMatrix<f64>,
    total: f64,
}

impl<'a> Profile<'a> {
    fn new(x1: &'a DMatrix<f64>, x2: &'a DMatrix<f64>) -> Self {
        Self {
            x1,
            x2,
            total: x2.norm_squared(),
        }
    }

    fn n(&self) -> f64 {
        self.x1.nrows() as f64
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        let s = (self.x1 * beta).map(f64::tanh);
        match exact_mu2_step(&s, self.x2) {
            Some(mu2) => (self.total - mu2.norm_squared() * s.norm_squared()) / self.n(),
            None => self.total / self.n(),
        }
    }

    fn value_grad(&self, beta: &DVector<f64>) -> (f64, DVector<f64>) {
        let s = (self.x1 * beta).map(f64::tanh);
        let Some(mu2) = exact_mu2_step(&s, self.x2) else {
            return (self.total / self.n(), DVector::zeros(beta.len()));
        };
        // Envelope theorem: the gradient at the exact mu2 is the partial gradient.
        let value = (self.total - mu2.norm_squared() * s.norm_squared()) / self.n();
        let proj = self.x2 * &mu2;
        let m2 = mu2.norm_squared();
        let n = self.n();
        let w = DVector::from_iterator(
            s.len(),
            s.iter().zip(proj.iter()).map(|(si, pi)| -2.0 * (pi - si * m2) * (1.0 - si * si) / n),
        );
        (value, self.x1.transpose() * w)
    }
}

/// Fit diagnostics for the parametric pretext model.
#[derive(Debug, Clone)]
pub struct ParamCiReport {
    pub model: ParamCi,
    pub objective: f64,
    /// Objective after every accepted step of the winning start.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Least-squares linear pretext map with ridge `ridge` on the mean Gram matrix.
pub fn fit_linear_map_with_ridge(x1: &DMatrix<f64>, x2: &DMatrix<f64>, ridge: f64) -> Result<LinearMap> {
    let n = x1.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("linear pretext needs at least one row in S1 ∪ S3".into()));
    }
    let gram = x1.transpose() * x1 / n as f64;
    let cross = x1.transpose() * x2 / n as f64;
    Ok(LinearMap {
        b_matrix: ridge_solve(&gram, &cross, ridge),
    })
}

pub const LINEAR_PRETEXT_RIDGE: f64 = 1e-10;

/// `phi_hat = (X1^T X1)^{-1} X1^T X2` over `S1 ∪ S3`, in its ridge limit.
pub fn fit_pretext_linear(bank: &SampleBank) -> Result<LinearMap> {
    let (x1, x2) = bank.pretext_data();
    fit_linear_map_with_ridge(&x1, &x2, LINEAR_PRETEXT_RIDGE)
}

/// Fits the parametric CI representation on `S1 ∪ S3`.
pub fn fit_pretext_param_ci(bank: &SampleBank, opt: &OptimConfig, seed: Seed) -> Result<ParamCi> {
    let (x1, x2) = bank.pretext_data();
    fit_param_ci_data(&x1, &x2, opt, seed).map(|r| r.model)
}

/// Same as [`fit_pretext_param_ci`] with the optimizer trace.
pub fn fit_param_ci_data(x1: &DMatrix<f64>, x2: &DMatrix<f64>, opt: &OptimConfig, seed: Seed) -> Result<ParamCiReport> {
    opt.validate()?;
    let (n, d1, d2) = (x1.nrows(), x1.ncols(), x2.ncols());
    if n < d1 + d2 {
        return Err(Error::InsufficientData(format!(
            "parametric pretext needs at least {} rows in S1 ∪ S3, got {n}",
            d1 + d2
        )));
    }
    let profile = Profile::new(x1, x2);

    let mut starts = Vec::with_capacity(opt.restarts + 1);
    // Warm start along the dominant direction of the linear map.
    let lin = fit_linear_map_with_ridge(x1, x2, LINEAR_PRETEXT_RIDGE)?;
    let svd = lin.b_matrix.clone().svd(false, true);
    if let Some(vt) = svd.v_t {
        let k = svd.singular_values.imax();
        let v = vt.row(k).transpose();
        let dir = &lin.b_matrix * v;
        if dir.norm() > 0.0 {
            let dir = &dir / dir.norm();
            let warm = (-3..=3)
                .map(|k| &dir * 2f64.powi(k))
                .min_by(|a, b| profile.value(a).total_cmp(&profile.value(b)))
                .expect("nonempty scale grid");
            starts.push(warm);
        }
    }
    let mut rng = seed.stream("param-ci-init", 0);
    let sd = 1.0 / (d1 as f64).sqrt();
    let draw = |rng: &mut crate::rng::StreamRng| {
        DVector::from_iterator(d1, (0..d1).map(|_| sd * rng.sample::<f64, _>(StandardNormal)))
    };
    for _ in 0..opt.restarts {
        starts.push(draw(&mut rng));
    }

    let mut best: Option<ParamCiReport> = None;
    for mut beta in starts {
        let mut tries = 0;
        while (x1 * &beta).iter().all(|v| *v == 0.0) {
            tries += 1;
            if tries > 16 {
                break;
            }
            beta = draw(&mut rng);
        }
        if (x1 * &beta).iter().all(|v| *v == 0.0) {
            continue;
        }
        let run = minimize(|b| profile.value_grad(b), beta, opt);
        let s = (x1 * &run.x).map(f64::tanh);
        let Some(mu2) = exact_mu2_step(&s, x2) else { continue };
        if best.as_ref().is_none_or(|b| run.value < b.objective) {
            best = Some(ParamCiReport {
                model: ParamCi {
                    beta: run.x,
                    mu2hat: mu2,
                },
                objective: run.value,
                trace: run.trace,
                converged: run.converged,
            });
        }
    }
    best.ok_or(Error::DegenerateScale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_mu2_is_weighted_least_squares() {
        let s = DVector::from_vec(vec![1.0, -1.0]);
        let x2 = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let mu2 = exact_mu2_step(&s, &x2).unwrap();
        assert_abs_diff_eq!(mu2[0], 1.0, epsilon = 1e-15);
        assert!(exact_mu2_step(&DVector::zeros(2), &x2).is_none());
    }

    #[test]
    fn noiseless_linear_map_is_recovered() {
        let x1 = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.5]);
        let x2 = &x1 * &b;
        let fit = fit_linear_map_with_ridge(&x1, &x2, LINEAR_PRETEXT_RIDGE).unwrap();
        assert!((fit.b_matrix - b).amax() <= 1e-8);
    }

    #[test]
    fn underdetermined_linear_map_stays_finite() {
        let x1 = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 1.0, 0.5, -1.0, 1.0, 0.0]);
        let x2 = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let fit = fit_linear_map_with_ridge(&x1, &x2, LINEAR_PRETEXT_RIDGE).unwrap();
        assert!(fit.b_matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn param_ci_features_lie_on_segment() {
        let p = ParamCi {
            beta: DVector::from_vec(vec![3.0, -1.0]),
            mu2hat: DVector::from_vec(vec![0.5, 2.0]),
        };
        let x = DMatrix::from_row_slice(3, 2, &[10.0, 0.0, -4.0, 1.0, 0.1, 0.2]);
        let f = PretextModel::ParamCi(p.clone()).features(&x);
        for i in 0..3 {
            let c = f[(i, 0)] / p.mu2hat[0];
            assert!(c.abs() <= 1.0);
            assert_abs_diff_eq!(f[(i, 1)], c * p.mu2hat[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn too_few_rows_is_insufficient() {
        let x1 = DMatrix::zeros(3, 5);
        let x2 = DMatrix::zeros(3, 2);
        let err = fit_param_ci_data(&x1, &x2, &OptimConfig::default(), Seed::new(0)).unwrap_err();
        assert_eq!(err.name(), "InsufficientData");
    }
}
