use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::bank::{BankSizes, Covariates, LabeledPairs, LabeledTriples, SampleBank, UnlabeledPairs};
use super::standard_normal_matrix;
use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::rng::Seed;

const PD_FLOOR: f64 = 1e-10;

/// Two-class Gaussian mixture: `y` is a fair coin and
/// `(x1, x2) | y ~ N(y [mu1; mu2], Sigma)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    d1: usize,
    d2: usize,
    mu1: DVector<f64>,
    mu2: DVector<f64>,
    sigma11: DMatrix<f64>,
    sigma12: DMatrix<f64>,
    sigma22: DMatrix<f64>,
    /// Lower Cholesky factor of the joint covariance.
    chol: DMatrix<f64>,
    /// `Sigma11^{-1} mu1`, the coefficient of the Bayes posterior.
    posterior_coef: DVector<f64>,
}

impl GaussianMixture {
    pub fn new(d1: usize, d2: usize, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = d1 + d2;
        if d1 == 0 || d2 == 0 {
            return Err(Error::DimensionMismatch("d1 and d2 must be positive".into()));
        }
        if mu.len() != d || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "expected mean of length {d} and a {d}x{d} covariance, got {} and {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let scale = sigma.amax().max(1.0);
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotSymmetric);
        }
        let min_eig = sigma.clone().symmetric_eigen().eigenvalues.min();
        if min_eig <= PD_FLOOR {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
        }
        let mu1 = mu.rows(0, d1).into_owned();
        if mu1.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateMean);
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { min_eigenvalue: min_eig })?
            .l();
        let sigma11 = sigma.view((0, 0), (d1, d1)).into_owned();
        let posterior_coef = sigma11
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { min_eigenvalue: min_eig })?
            .solve(&mu1);
        Ok(Self {
            d1,
            d2,
            mu2: mu.rows(d1, d2).into_owned(),
            mu1,
            sigma12: sigma.view((0, d1), (d1, d2)).into_owned(),
            sigma22: sigma.view((d1, d1), (d2, d2)).into_owned(),
            sigma11,
            chol,
            posterior_coef,
        })
    }

    /// The simulation model with mean `1/sqrt(d1)` in every coordinate and identity covariance.
    pub fn isotropic(d1: usize, d2: usize) -> Result<Self> {
        let d = d1 + d2;
        Self::new(
            d1,
            d2,
            DVector::from_element(d, 1.0 / (d1 as f64).sqrt()),
            DMatrix::identity(d, d),
        )
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn mu1(&self) -> &DVector<f64> {
        &self.mu1
    }

    pub fn mu2(&self) -> &DVector<f64> {
        &self.mu2
    }

    pub fn sigma11(&self) -> &DMatrix<f64> {
        &self.sigma11
    }

    pub fn sigma12(&self) -> &DMatrix<f64> {
        &self.sigma12
    }

    pub fn sigma22(&self) -> &DMatrix<f64> {
        &self.sigma22
    }

    pub fn joint_mean(&self) -> DVector<f64> {
        crate::numeric::vconcat(&self.mu1, &self.mu2)
    }

    pub fn joint_covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Conditional independence of `x1` and `x2` given `y`; here exactly `Sigma12 = 0`.
    pub fn is_ci(&self) -> bool {
        self.sigma12.iter().all(|v| *v == 0.0)
    }

    /// `Sigma11^{-1} mu1`.
    pub fn posterior_coef(&self) -> &DVector<f64> {
        &self.posterior_coef
    }

    /// `P(Y = 1 | X1 = x1) = sigmoid(2 beta^T x1)` with `beta = Sigma11^{-1} mu1`.
    pub fn posterior(&self, x1: &[f64]) -> f64 {
        let z: f64 = x1.iter().zip(self.posterior_coef.iter()).map(|(a, b)| a * b).sum();
        sigmoid(2.0 * z)
    }

    /// Draws `n` labelled joint samples: returns `(x, y)` with `x` of shape `n x (d1+d2)`.
    pub(crate) fn draw<R: Rng>(&self, rng: &mut R, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.d1 + self.d2;
        let y = DVector::from_iterator(n, (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
        let z = standard_normal_matrix(rng, n, d);
        let mut x = z * self.chol.transpose();
        let mean = self.joint_mean();
        for i in 0..n {
            for j in 0..d {
                x[(i, j)] += y[i] * mean[j];
            }
        }
        (x, y)
    }

    /// Draws `n` samples of `(x1, y)` only.
    pub(crate) fn draw_x1<R: Rng>(&self, rng: &mut R, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let (x, y) = self.draw(rng, n);
        (x.columns(0, self.d1).into_owned(), y)
    }

    /// Draws a bank with independent datasets `S1..S4`.
    pub fn sample_bank(&self, sizes: BankSizes, seed: Seed) -> SampleBank {
        let (d1, d2) = (self.d1, self.d2);
        let (x, y) = self.draw(&mut seed.stream("s1", 0), sizes.n1);
        let s1 = LabeledTriples {
            x1: x.columns(0, d1).into_owned(),
            x2: x.columns(d1, d2).into_owned(),
            y,
        };
        let (x, y) = self.draw(&mut seed.stream("s2", 0), sizes.n2);
        let s2 = LabeledPairs {
            x1: x.columns(0, d1).into_owned(),
            y,
        };
        let (x, y3) = self.draw(&mut seed.stream("s3", 0), sizes.n3);
        let s3 = UnlabeledPairs {
            x1: x.columns(0, d1).into_owned(),
            x2: x.columns(d1, d2).into_owned(),
        };
        let (x, _) = self.draw(&mut seed.stream("s4", 0), sizes.n4);
        let s4 = Covariates {
            x1: x.columns(0, d1).into_owned(),
        };
        SampleBank::from_parts(d1, d2, s1, s2, s3, s4)
            .expect("simulated bank is consistent by construction")
            .with_oracle_s3(y3)
    }
}

/// Builds a validated mixture from the joint mean and covariance split at `d1`.
pub fn make_mixture(d1: usize, d2: usize, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<GaussianMixture> {
    GaussianMixture::new(d1, d2, mu, sigma)
}

pub fn sample_bank(model: &GaussianMixture, sizes: BankSizes, seed: Seed) -> SampleBank {
    model.sample_bank(sizes, seed)
}
