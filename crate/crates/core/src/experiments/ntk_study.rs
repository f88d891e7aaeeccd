use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit_linear, select_lambda, train_two_layer, Loss, NtkTrainConfig, OptimConfig, NTK_LAMBDA_GRID};
use crate::models::{BankSizes, Covariates, LabeledPairs, LabeledTriples, SampleBank, UnlabeledPairs};
use crate::rng::Seed;

/// A mixture whose label posterior is not monotone in any direction of `x1`:
/// class `+1` puts `x1` near `+-c e1`, class `-1` near `+-c e2`, each with
/// isotropic spread. `x2 | y ~ N(y mu2, I)` independently of `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct XorMixture {
    pub d1: usize,
    pub center: f64,
    pub spread: f64,
    pub mu2: DVector<f64>,
}

impl Default for XorMixture {
    fn default() -> Self {
        Self {
            d1: 3,
            center: 1.5,
            spread: 0.6,
            mu2: DVector::from_vec(vec![1.0, -0.5]),
        }
    }
}

impl XorMixture {
    pub fn d2(&self) -> usize {
        self.mu2.len()
    }

    /// Rows of `(x1, x2, y)`.
    pub fn draw<R: Rng>(&self, rng: &mut R, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let (d1, d2) = (self.d1, self.d2());
        let mut x1 = DMatrix::zeros(n, d1);
        let mut x2 = DMatrix::zeros(n, d2);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let axis = if label > 0.0 { 0 } else { 1 };
            for j in 0..d1 {
                x1[(i, j)] = self.spread * rng.sample::<f64, _>(StandardNormal);
            }
            x1[(i, axis)] += side * self.center;
            for j in 0..d2 {
                x2[(i, j)] = label * self.mu2[j] + rng.sample::<f64, _>(StandardNormal);
            }
            y[i] = label;
        }
        (x1, x2, y)
    }

    pub fn sample_bank(&self, sizes: BankSizes, seed: Seed) -> SampleBank {
        let (x1, x2, y) = self.draw(&mut seed.stream("s1", 0), sizes.n1);
        let s1 = LabeledTriples { x1, x2, y };
        let (x1, _, y) = self.draw(&mut seed.stream("s2", 0), sizes.n2);
        let s2 = LabeledPairs { x1, y };
        let (x1, x2, _) = self.draw(&mut seed.stream("s3", 0), sizes.n3);
        let s3 = UnlabeledPairs { x1, x2 };
        let (x1, _, _) = self.draw(&mut seed.stream("s4", 0), sizes.n4);
        SampleBank::from_parts(self.d1, self.d2(), s1, s2, s3, Covariates { x1 }).expect("consistent by construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkStudyConfig {
    pub mixture: XorMixture,
    pub n1: usize,
    pub n3: usize,
    pub n_test: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub ntk: NtkTrainConfig,
    /// Penalties tried on the first seed; empty keeps `ntk.lambda`.
    pub lambda_grid: Vec<f64>,
}

impl Default for NtkStudyConfig {
    fn default() -> Self {
        Self {
            mixture: XorMixture::default(),
            n1: 50,
            n3: 20000,
            n_test: 10000,
            seeds: 10,
            master_seed: 0,
            ntk: NtkTrainConfig::default(),
            lambda_grid: NTK_LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkStudyReport {
    pub lambda: f64,
    /// Relative first-layer movement of the pretext network, per seed.
    pub movement: Vec<f64>,
    /// Per-entry test MSE of the pretext network, per seed.
    pub pretext_mse: Vec<f64>,
    /// Per-entry test MSE of the training-mean predictor, per seed.
    pub constant_mse: Vec<f64>,
    pub ssl_accuracy: Vec<f64>,
    pub labeled_accuracy: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl NtkStudyReport {
    pub fn mean_ssl_accuracy(&self) -> f64 {
        mean(&self.ssl_accuracy)
    }

    pub fn mean_labeled_accuracy(&self) -> f64 {
        mean(&self.labeled_accuracy)
    }

    pub fn max_movement(&self) -> f64 {
        self.movement.iter().copied().fold(0.0, f64::max)
    }
}

fn accuracy(scores: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let hits = scores
        .iter()
        .zip(y.iter())
        .filter(|(s, y)| (if **s >= 0.0 { 1.0 } else { -1.0 }) == **y)
        .count();
    hits as f64 / y.len() as f64
}

struct SeedOutcome {
    movement: f64,
    pretext_mse: f64,
    constant_mse: f64,
    ssl_accuracy: f64,
    labeled_accuracy: f64,
}

fn run_seed(cfg: &NtkStudyConfig, ntk: &NtkTrainConfig, k: usize) -> Result<SeedOutcome> {
    let seed = Seed::new(cfg.master_seed).child("ntk-study", k as u64);
    let bank = cfg.mixture.sample_bank(BankSizes::new(cfg.n1, 0, cfg.n3, 0), seed.child("bank", 0));
    let (tx1, tx2, ty) = cfg.mixture.draw(&mut seed.stream("test", 0), cfg.n_test);

    let (px1, px2) = bank.pretext_data();
    let net = train_two_layer(&px1, &px2, ntk, seed.child("pretext", 0))?;
    let entries = (tx2.nrows() * tx2.ncols()) as f64;
    let pretext_mse = (net.forward(&tx1) - &tx2).norm_squared() / entries;
    let centre = px2.row_mean();
    let constant_mse = tx2.row_iter().map(|r| (r - &centre).norm_squared()).sum::<f64>() / entries;

    let s1 = bank.s1();
    let w = fit_linear(&net.forward(&s1.x1), &s1.y, Loss::Square, &OptimConfig::default())?;
    let ssl_accuracy = accuracy(&(net.forward(&tx1) * w), &ty);

    let targets = DMatrix::from_column_slice(s1.y.len(), 1, s1.y.as_slice());
    let direct = train_two_layer(&s1.x1, &targets, ntk, seed.child("labeled", 0))?;
    let labeled_accuracy = accuracy(&direct.forward(&tx1).column(0).into_owned(), &ty);

    Ok(SeedOutcome {
        movement: net.relative_movement(),
        pretext_mse,
        constant_mse,
        ssl_accuracy,
        labeled_accuracy,
    })
}

/// Wide-network pretext versus a labeled-only network of the same shape, over
/// `cfg.seeds` independent draws. The penalty is chosen once, on the first
/// seed's pretext data, and reused.
pub fn ntk_study(cfg: &NtkStudyConfig, threads: Option<usize>) -> Result<NtkStudyReport> {
    if cfg.seeds == 0 || cfg.n1 == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidConfig("study needs seeds, labels and test points".into()));
    }
    let lambda = if cfg.lambda_grid.is_empty() {
        cfg.ntk.lambda
    } else {
        let seed = Seed::new(cfg.master_seed).child("ntk-study", 0);
        let bank = cfg.mixture.sample_bank(BankSizes::new(cfg.n1, 0, cfg.n3, 0), seed.child("bank", 0));
        let (x1, x2) = bank.pretext_data();
        select_lambda(&x1, &x2, &cfg.ntk, &cfg.lambda_grid, seed.child("pretext", 0))?
    };
    let ntk = NtkTrainConfig { lambda, ..cfg.ntk.clone() };
    let work = || (0..cfg.seeds).into_par_iter().map(|k| run_seed(cfg, &ntk, k)).collect::<Result<Vec<_>>>();
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(NtkStudyReport {
        lambda,
        movement: outcomes.iter().map(|o| o.movement).collect(),
        pretext_mse: outcomes.iter().map(|o| o.pretext_mse).collect(),
        constant_mse: outcomes.iter().map(|o| o.constant_mse).collect(),
        ssl_accuracy: outcomes.iter().map(|o| o.ssl_accuracy).collect(),
        labeled_accuracy: outcomes.iter().map(|o| o.labeled_accuracy).collect(),
    })
}
