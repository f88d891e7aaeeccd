//! Wide two-layer ReLU representations trained in the lazy (NTK) regime.
//!
//! Each output channel `k` is `phi_k(x) = m^{-1/2} sum_j a_jk relu(w_jk^T x)`
//! with fixed signs `a_jk` and first-layer weights started at `N(0, tau^2 I)`.
//! Training is full-batch gradient descent on the mean squared error plus
//! `lambda ||W - W0||_F^2`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::SampleBank;
use crate::rng::Seed;

#[derive(Debug, Clone, PartialEq)]
pub struct NtkTrainConfig {
    pub m: usize,
    pub tau: f64,
    pub eta: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub normalize_inputs: bool,
}

impl Default for NtkTrainConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            tau: 1.0,
            eta: 0.1,
            lambda: 1e-3,
            epochs: 100,
            normalize_inputs: true,
        }
    }
}

/// Penalty grid searched by [`fit_pretext_ntk_tuned`].
pub const NTK_LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

impl NtkTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::WidthTooSmall);
        }
        if !(self.tau > 0.0) || !(self.eta > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("NTK training needs tau > 0, eta > 0, lambda >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TwoLayerRelu {
    m: usize,
    /// One `m x d1` weight matrix per output channel.
    w: Vec<DMatrix<f64>>,
    w0: Vec<DMatrix<f64>>,
    a: Vec<DVector<f64>>,
    normalize_inputs: bool,
    /// Penalized training loss after every epoch, starting at initialization.
    trace: Vec<f64>,
}

/// Projects every nonzero row onto the unit sphere.
pub fn normalize_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

impl TwoLayerRelu {
    pub fn width(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.len()
    }

    pub fn initial_weights(&self) -> &[DMatrix<f64>] {
        &self.w0
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.w
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.trace
    }

    /// `||W_T - W_0||_F / ||W_0||_F` across all channels.
    pub fn relative_movement(&self) -> f64 {
        let moved: f64 = self.w.iter().zip(&self.w0).map(|(w, w0)| (w - w0).norm_squared()).sum();
        let base: f64 = self.w0.iter().map(|w0| w0.norm_squared()).sum();
        (moved / base).sqrt()
    }

    fn prepare(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.normalize_inputs {
            normalize_rows(x)
        } else {
            x.clone()
        }
    }

    /// Network output for every row of `x`; `n x d2`.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let x = self.prepare(x);
        forward_raw(&x, &self.w, &self.a, self.m)
    }
}

/// Row-major copy of an `n x d` matrix.
fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut out = vec![0.0; n * d];
    for c in 0..d {
        for (i, v) in x.column(c).iter().enumerate() {
            out[i * d + c] = *v;
        }
    }
    out
}

/// Fills `pre` with the hidden pre-activations for one input row and returns
/// the unscaled channel output. `wk` is `m x d` column-major.
fn hidden(xi: &[f64], wk: &[f64], ak: &[f64], pre: &mut [f64]) -> f64 {
    let m = pre.len();
    for (p, w) in pre.iter_mut().zip(&wk[..m]) {
        *p = xi[0] * w;
    }
    for (c, xv) in xi.iter().enumerate().skip(1) {
        for (p, w) in pre.iter_mut().zip(&wk[c * m..(c + 1) * m]) {
            *p += xv * w;
        }
    }
    let mut acc = [0.0; 4];
    let (pc, ac) = (pre.chunks_exact(4), ak.chunks_exact(4));
    let tail: f64 = pc.remainder().iter().zip(ac.remainder()).map(|(p, a)| a * p.max(0.0)).sum();
    for (p, a) in pc.zip(ac) {
        for l in 0..4 {
            acc[l] += a[l] * p[l].max(0.0);
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn forward_raw(x: &DMatrix<f64>, w: &[DMatrix<f64>], a: &[DVector<f64>], m: usize) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let scale = 1.0 / (m as f64).sqrt();
    let xr = row_major(x);
    let mut out = DMatrix::zeros(n, w.len());
    let mut pre = vec![0.0; m];
    for (k, (wk, ak)) in w.iter().zip(a).enumerate() {
        for i in 0..n {
            out[(i, k)] = scale * hidden(&xr[i * d..(i + 1) * d], wk.as_slice(), ak.as_slice(), &mut pre);
        }
    }
    out
}

/// Penalized loss and its gradient in every channel's weights.
fn loss_and_grad(
    x: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    w: &[DMatrix<f64>],
    w0: &[DMatrix<f64>],
    a: &[DVector<f64>],
    lambda: f64,
) -> (f64, Vec<DMatrix<f64>>) {
    let (n, d) = x.shape();
    let m = w[0].nrows();
    let scale = 1.0 / (m as f64).sqrt();
    let coef = -2.0 * scale / n as f64;
    let xr = row_major(x);
    let mut loss = 0.0;
    let mut pre = vec![0.0; m];
    let mut gate = vec![0.0; m];
    let mut grads = Vec::with_capacity(w.len());
    for k in 0..w.len() {
        let ak = a[k].as_slice();
        let mut g = DMatrix::zeros(m, d);
        let gs = g.as_mut_slice();
        for i in 0..n {
            let xi = &xr[i * d..(i + 1) * d];
            let resid = targets[(i, k)] - scale * hidden(xi, w[k].as_slice(), ak, &mut pre);
            loss += resid * resid;
            for ((gt, p), av) in gate.iter_mut().zip(&pre).zip(ak) {
                *gt = if *p > 0.0 { *av } else { 0.0 };
            }
            let c = coef * resid;
            for (col, xv) in xi.iter().enumerate() {
                let f = c * xv;
                for (gj, gt) in gs[col * m..(col + 1) * m].iter_mut().zip(&gate) {
                    *gj += f * gt;
                }
            }
        }
        grads.push(g);
    }
    let mut penalty = 0.0;
    for k in 0..w.len() {
        let diff = &w[k] - &w0[k];
        penalty += diff.norm_squared();
        grads[k] += diff * (2.0 * lambda);
    }
    (loss / n as f64 + lambda * penalty, grads)
}

/// Trains a two-layer ReLU network on `(x, targets)` by full-batch gradient
/// descent with step halving whenever the penalized loss would increase.
pub fn train_two_layer(x: &DMatrix<f64>, targets: &DMatrix<f64>, cfg: &NtkTrainConfig, seed: Seed) -> Result<TwoLayerRelu> {
    cfg.validate()?;
    if x.nrows() == 0 || x.nrows() != targets.nrows() {
        return Err(Error::InsufficientData("network training needs matching, nonempty inputs and targets".into()));
    }
    let (d1, d2, m) = (x.ncols(), targets.ncols(), cfg.m);
    let mut rng = seed.stream("ntk-init", 0);
    // Units come in pairs sharing first-layer weights with opposite output
    // signs, so the network starts at exactly zero.
    let half = m.div_ceil(2);
    let mut w0 = Vec::with_capacity(d2);
    let mut a = Vec::with_capacity(d2);
    for _ in 0..d2 {
        let base = DMatrix::from_fn(half, d1, |_, _| cfg.tau * rng.sample::<f64, _>(StandardNormal));
        let signs: Vec<f64> = (0..half).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        w0.push(DMatrix::from_fn(m, d1, |j, c| base[(j % half, c)]));
        a.push(DVector::from_fn(m, |j, _| if j < half { signs[j] } else { -signs[j - half] }));
    }
    let xs = if cfg.normalize_inputs { normalize_rows(x) } else { x.clone() };

    let mut w = w0.clone();
    let (mut loss, mut grad) = loss_and_grad(&xs, targets, &w, &w0, &a, cfg.lambda);
    let mut trace = vec![loss];
    for _ in 0..cfg.epochs {
        let mut step = cfg.eta;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<DMatrix<f64>> = w.iter().zip(&grad).map(|(wk, gk)| wk - gk * step).collect();
            let (cl, cg) = loss_and_grad(&xs, targets, &cand, &w0, &a, cfg.lambda);
            if cl <= loss {
                w = cand;
                loss = cl;
                grad = cg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            trace.push(loss);
            break;
        }
        trace.push(loss);
    }
    Ok(TwoLayerRelu {
        m,
        w,
        w0,
        a,
        normalize_inputs: cfg.normalize_inputs,
        trace,
    })
}

/// Fits the network representation on `S1 ∪ S3`.
pub fn fit_pretext_ntk(bank: &SampleBank, cfg: &NtkTrainConfig, seed: Seed) -> Result<TwoLayerRelu> {
    let (x1, x2) = bank.pretext_data();
    train_two_layer(&x1, &x2, cfg, seed)
}

/// Picks the penalty from `grid` by mean squared error on a 10% held-out
/// split of `S1 ∪ S3`, then refits on all pretext rows.
pub fn fit_pretext_ntk_tuned(bank: &SampleBank, cfg: &NtkTrainConfig, grid: &[f64], seed: Seed) -> Result<(TwoLayerRelu, f64)> {
    let (x1, x2) = bank.pretext_data();
    let lambda = select_lambda(&x1, &x2, cfg, grid, seed)?;
    let tuned = NtkTrainConfig { lambda, ..cfg.clone() };
    Ok((train_two_layer(&x1, &x2, &tuned, seed)?, lambda))
}

/// Held-out penalty selection for [`train_two_layer`].
pub fn select_lambda(x: &DMatrix<f64>, targets: &DMatrix<f64>, cfg: &NtkTrainConfig, grid: &[f64], seed: Seed) -> Result<f64> {
    let n = x.nrows();
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty penalty grid".into()));
    }
    let n_val = (n / 10).max(1);
    if n <= n_val {
        return Err(Error::InsufficientData("too few rows for a held-out split".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.stream("ntk-holdout", 0));
    let take = |rows: &[usize], m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
    let (val, train) = idx.split_at(n_val);
    let (xt, tt, xv, tv) = (take(train, x), take(train, targets), take(val, x), take(val, targets));
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let net = train_two_layer(&xt, &tt, &NtkTrainConfig { lambda, ..cfg.clone() }, seed)?;
        let mse = (net.forward(&xv) - &tv).norm_squared() / xv.nrows() as f64;
        if mse < best.0 {
            best = (mse, lambda);
        }
    }
    Ok(best.1)
}

/// `h(s, t) = s^T t (pi - arccos(s^T t)) / (2 pi)` for unit vectors.
pub fn ntk_kernel(s: &[f64], t: &[f64]) -> f64 {
    let u: f64 = s.iter().zip(t).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
    u * (std::f64::consts::PI - u.acos()) / (2.0 * std::f64::consts::PI)
}

/// Infinite-width Gram matrix `H_ij = h(x_i, x_j)` over unit-norm rows.
pub fn ntk_gram(inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = inputs.nrows();
    let rows: Vec<Vec<f64>> = inputs.row_iter().map(|r| r.iter().copied().collect()).collect();
    for (i, r) in rows.iter().enumerate() {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NotNormalized { index: i, norm });
        }
    }
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = ntk_kernel(&rows[i], &rows[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}
