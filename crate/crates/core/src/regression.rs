//! Linear-regression version of the semi-supervised pipeline.
//!
//! `(x1, x2) ~ N(0, [[I, S], [S^T, I]])` and `y = theta0^T x1 + noise` with
//! `theta0 = S a0`, so the best predictor of `y` is linear in `E[x2 | x1]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::{fit_linear, fit_pretext_linear, Loss, OptimConfig};
use crate::models::{standard_normal_matrix, BankSizes, Covariates, LabeledPairs, LabeledTriples, SampleBank, UnlabeledPairs};
use crate::rng::Seed;

const SINGULAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RegressionModel {
    d1: usize,
    d2: usize,
    sigma12: DMatrix<f64>,
    a0: DVector<f64>,
    noise_sd: f64,
    theta0: DVector<f64>,
    chol: DMatrix<f64>,
}

impl RegressionModel {
    pub fn new(sigma12: DMatrix<f64>, a0: DVector<f64>, noise_sd: f64) -> Result<Self> {
        let (d1, d2) = sigma12.shape();
        if d1 == 0 || d2 == 0 || a0.len() != d2 {
            return Err(Error::DimensionMismatch(format!(
                "cross-covariance is {d1}x{d2} but a0 has {} entries",
                a0.len()
            )));
        }
        if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
            return Err(Error::InvalidConfig(format!("noise_sd must be finite and >= 0, got {noise_sd}")));
        }
        if sigma12.iter().all(|v| *v == 0.0) {
            return Err(Error::CiRegression);
        }
        let min_sv = sigma12.singular_values().min();
        if min_sv <= SINGULAR_FLOOR {
            return Err(Error::InvalidConfig(format!(
                "singular values of the cross-covariance must exceed {SINGULAR_FLOOR}, got {min_sv}"
            )));
        }
        let d = d1 + d2;
        let mut joint = DMatrix::identity(d, d);
        joint.view_mut((0, d1), (d1, d2)).copy_from(&sigma12);
        joint.view_mut((d1, 0), (d2, d1)).copy_from(&sigma12.transpose());
        let min_eig = joint.clone().symmetric_eigen().eigenvalues.min();
        if min_eig <= 1e-10 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
        }
        let chol = joint
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { min_eigenvalue: min_eig })?
            .l();
        let theta0 = &sigma12 * &a0;
        Ok(Self {
            d1,
            d2,
            sigma12,
            a0,
            noise_sd,
            theta0,
            chol,
        })
    }

    /// Conditional independence given `y` forces a noiseless response and a
    /// degenerate cross-covariance, so it is refused.
    pub fn conditionally_independent(_d1: usize, _d2: usize, _noise_sd: f64) -> Result<Self> {
        Err(Error::CiRegression)
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn sigma12(&self) -> &DMatrix<f64> {
        &self.sigma12
    }

    pub fn a0(&self) -> &DVector<f64> {
        &self.a0
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    fn draw<R: Rng>(&self, rng: &mut R, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let z = standard_normal_matrix(rng, n, self.d1 + self.d2);
        let x = z * self.chol.transpose();
        let x1 = x.columns(0, self.d1).into_owned();
        let x2 = x.columns(self.d1, self.d2).into_owned();
        let mut y = &x1 * &self.theta0;
        if self.noise_sd > 0.0 {
            for v in y.iter_mut() {
                *v += self.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        (x1, x2, y)
    }

    /// Draws a bank with the same four-way split as the classification model.
    pub fn sample(&self, sizes: BankSizes, seed: Seed) -> SampleBank {
        let (x1, x2, y) = self.draw(&mut seed.stream("s1", 0), sizes.n1);
        let s1 = LabeledTriples { x1, x2, y };
        let (x1, _, y) = self.draw(&mut seed.stream("s2", 0), sizes.n2);
        let s2 = LabeledPairs { x1, y };
        let (x1, x2, _) = self.draw(&mut seed.stream("s3", 0), sizes.n3);
        let s3 = UnlabeledPairs { x1, x2 };
        let (x1, _, _) = self.draw(&mut seed.stream("s4", 0), sizes.n4);
        let s4 = Covariates { x1 };
        SampleBank::from_parts(self.d1, self.d2, s1, s2, s3, s4).expect("simulated bank is consistent by construction")
    }
}

pub fn sample_regression(model: &RegressionModel, sizes: BankSizes, seed: Seed) -> SampleBank {
    model.sample(sizes, seed)
}

/// Linear pretext map on `S1 ∪ S3` composed with the least-squares
/// downstream coefficient on `S1 ∪ S2`.
pub fn ssl_regression_fit(bank: &SampleBank) -> Result<DVector<f64>> {
    let s = bank.sizes();
    let d2 = bank.d2();
    if s.n1 + s.n3 < d2 {
        return Err(Error::InsufficientData(format!("pretext needs at least {d2} rows in S1 ∪ S3")));
    }
    if s.n1 + s.n2 < d2.max(1) {
        return Err(Error::InsufficientData(format!("downstream needs at least {} rows in S1 ∪ S2", d2.max(1))));
    }
    let map = fit_pretext_linear(bank)?;
    let (x1, y) = bank.labeled_data();
    let w = fit_linear(&(&x1 * &map.b_matrix), &y, Loss::Square, &OptimConfig::default())?;
    Ok(&map.b_matrix * w)
}

/// `E(y - theta_hat^T x1)^2 - noise_sd^2 = ||theta_hat - theta0||^2`.
pub fn regression_excess_risk(theta_hat: &DVector<f64>, model: &RegressionModel) -> Result<f64> {
    if theta_hat.len() != model.d1 {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} entries, model has d1 = {}",
            theta_hat.len(),
            model.d1
        )));
    }
    Ok((theta_hat - &model.theta0).norm_squared())
}
