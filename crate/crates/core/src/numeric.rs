//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Sign with `sign(0) = 0`.
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Stacks two matrices with equal column counts.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert!(top.nrows() == 0 || bottom.nrows() == 0 || top.ncols() == bottom.ncols());
    let ncols = top.ncols().max(bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), ncols);
    if top.nrows() > 0 {
        out.rows_mut(0, top.nrows()).copy_from(top);
    }
    if bottom.nrows() > 0 {
        out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    }
    out
}

pub fn vconcat(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(top.len() + bottom.len(), top.iter().chain(bottom.iter()).copied())
}

/// Solves `(A + ridge I) x = b` for symmetric positive semidefinite `A`.
pub fn ridge_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += ridge;
    }
    match reg.clone().cholesky() {
        Some(ch) => ch.solve(b),
        // Numerically indefinite after rounding; fall back to a pseudo-inverse.
        None => reg
            .pseudo_inverse(1e-14)
            .map(|p| p * b)
            .unwrap_or_else(|_| DMatrix::zeros(n, b.ncols())),
    }
}

/// Sample mean and unbiased variance; variance is 0 for fewer than two values.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Angle in radians between two nonzero vectors.
pub fn angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}
