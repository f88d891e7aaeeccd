//! Closed-form attacks on linear models, the soft-label adversarial empirical
//! loss, adversarial training, and the semi-supervised robust pipeline.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{
    fit_downstream, fit_pretext_linear, fit_pretext_param_ci, induced_direction, labeled_only, minimize,
    pseudolabel_probs, Loss, OptimConfig, PretextModel, PseudolabelSource,
};
use crate::models::SampleBank;
use crate::numeric::{sigmoid, sign0, softplus, vconcat, vstack};
use crate::risk::{AttackSpec, LinearClassifier, Norm};
use crate::rng::Seed;

/// How pseudolabel probabilities enter the training pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PseudolabelPolicy {
    /// Keep `p` and train on the expected loss.
    #[default]
    Soft,
    /// Store `1{p >= 1/2}`.
    HardSign,
    /// Store a Bernoulli(`p`) draw from the given stream.
    HardSample(Seed),
}

impl PseudolabelPolicy {
    pub fn apply(self, p: &DVector<f64>) -> DVector<f64> {
        match self {
            PseudolabelPolicy::Soft => p.clone(),
            PseudolabelPolicy::HardSign => p.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }),
            PseudolabelPolicy::HardSample(seed) => {
                let mut rng = seed.stream("pseudolabel-draw", 0);
                p.map(|v| if rng.random::<f64>() < v { 1.0 } else { 0.0 })
            }
        }
    }
}

/// Training rows `x1` with `P(y = +1)` weights; exact labels have `p` in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    x1: DMatrix<f64>,
    p: DVector<f64>,
}

impl LabeledPool {
    pub fn from_probs(x1: DMatrix<f64>, p: DVector<f64>) -> Result<Self> {
        if x1.nrows() != p.len() {
            return Err(Error::DimensionMismatch(format!("{} rows but {} probabilities", x1.nrows(), p.len())));
        }
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidLabel(*bad));
        }
        Ok(Self { x1, p })
    }

    /// Labels in `{-1, +1}`.
    pub fn from_labels(x1: DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::InvalidLabel(*bad));
        }
        Self::from_probs(x1, y.map(|v| (v + 1.0) / 2.0))
    }

    pub fn append(self, other: LabeledPool) -> Result<Self> {
        if !self.is_empty() && !other.is_empty() && self.x1.ncols() != other.x1.ncols() {
            return Err(Error::DimensionMismatch("pools have different widths".into()));
        }
        Ok(Self {
            x1: vstack(&self.x1, &other.x1),
            p: vconcat(&self.p, &other.p),
        })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn x1(&self) -> &DMatrix<f64> {
        &self.x1
    }

    pub fn probs(&self) -> &DVector<f64> {
        &self.p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvTrainConfig {
    pub loss: Loss,
    pub attack: AttackSpec,
    pub opt: OptimConfig,
}

/// Residual sign used by the square-loss attack; a zero residual is pushed up.
fn residual_sign(r: f64) -> f64 {
    if r >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Worst-case perturbation of `x` within the attack ball for the loss of
/// `theta` at label `y`.
pub fn attack_point(
    x: &DVector<f64>,
    y: f64,
    theta: &DVector<f64>,
    attack: &AttackSpec,
    loss: Loss,
) -> Result<DVector<f64>> {
    if y != 1.0 && y != -1.0 {
        return Err(Error::InvalidLabel(y));
    }
    if x.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!("x has {} entries, theta {}", x.len(), theta.len())));
    }
    if theta.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    if attack.eps == 0.0 {
        return Ok(x.clone());
    }
    let push = match loss {
        Loss::Logistic => y,
        Loss::Square => residual_sign(y - theta.dot(x)),
    };
    let dir = match attack.norm {
        Norm::L2 => theta / theta.norm(),
        Norm::Linf => theta.map(sign0),
    };
    Ok(x - dir * (attack.eps * push))
}

/// Clean pointwise loss at a hard label.
pub fn pointwise_loss(x: &DVector<f64>, y: f64, theta: &DVector<f64>, loss: Loss) -> f64 {
    let z = theta.dot(x);
    match loss {
        Loss::Logistic => softplus(-y * z),
        Loss::Square => (y - z).powi(2),
    }
}

/// Soft-label adversarial empirical loss and a subgradient in `theta`.
pub fn adv_empirical_loss(theta: &DVector<f64>, pool: &LabeledPool, cfg: &AdvTrainConfig) -> Result<(f64, DVector<f64>)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if pool.x1.ncols() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "pool has {} columns, theta {} entries",
            pool.x1.ncols(),
            theta.len()
        )));
    }
    Ok(loss_and_grad(theta, pool, cfg.loss, &cfg.attack))
}

fn loss_and_grad(theta: &DVector<f64>, pool: &LabeledPool, loss: Loss, attack: &AttackSpec) -> (f64, DVector<f64>) {
    let n = pool.len() as f64;
    let eps = attack.eps;
    let shift = attack.margin_shift(theta);
    let z = &pool.x1 * theta;
    let mut value = 0.0;
    let mut shift_coef = 0.0;
    let coef = DVector::from_iterator(
        pool.len(),
        z.iter().zip(pool.p.iter()).map(|(&zi, &pi)| match loss {
            Loss::Logistic => {
                let (lo, hi) = (zi - shift, zi + shift);
                value += pi * softplus(-lo) + (1.0 - pi) * softplus(hi);
                let a = -pi * sigmoid(-lo);
                let b = (1.0 - pi) * sigmoid(hi);
                shift_coef += b - a;
                a + b
            }
            Loss::Square => {
                let u = (1.0 - zi).abs() + shift;
                let v = (1.0 + zi).abs() + shift;
                value += pi * u * u + (1.0 - pi) * v * v;
                let (gu, gv) = (2.0 * pi * u, 2.0 * (1.0 - pi) * v);
                shift_coef += gu + gv;
                -gu * sign0(1.0 - zi) + gv * sign0(1.0 + zi)
            }
        }),
    );
    let mut grad = pool.x1.transpose() * coef / n;
    if eps > 0.0 {
        grad += attack.norm.dual_grad(theta) * (eps * shift_coef / n);
    }
    (value / n, grad)
}

/// Full-batch backtracking gradient descent on [`adv_empirical_loss`].
pub fn adv_train(pool: &LabeledPool, cfg: &AdvTrainConfig, theta_init: &DVector<f64>) -> Result<LinearClassifier> {
    adv_train_report(pool, cfg, theta_init).map(|r| r.classifier)
}

#[derive(Debug, Clone)]
pub struct AdvTrainReport {
    pub classifier: LinearClassifier,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iters: usize,
    pub converged: bool,
}

pub fn adv_train_report(pool: &LabeledPool, cfg: &AdvTrainConfig, theta_init: &DVector<f64>) -> Result<AdvTrainReport> {
    cfg.opt.validate()?;
    let initial_loss = adv_empirical_loss(theta_init, pool, cfg)?.0;
    if theta_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("initial direction is not finite".into()));
    }
    let d = minimize(|t| loss_and_grad(t, pool, cfg.loss, &cfg.attack), theta_init.clone(), &cfg.opt);
    Ok(AdvTrainReport {
        classifier: LinearClassifier::new(d.x)?,
        initial_loss,
        final_loss: d.value,
        iters: d.iters,
        converged: d.converged,
    })
}

/// Robust training pipelines and baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdvMethod {
    /// Semi-supervised: pseudolabel `S3` through the pretext representation.
    AdvSsl,
    /// As `AdvSsl`, also pseudolabelling `S4`.
    AdvSslS4,
    /// Adversarial training on `S1 ∪ S2` only.
    AdvLabeledOnly,
    /// Pseudolabels from a clean labeled-only fit.
    AdvPseudoClean,
    /// True labels on `S3` (simulation only).
    BenchmarkOracle,
}

/// Which representation the semi-supervised pipeline learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PretextKind {
    #[default]
    ParamCi,
    Linear,
}

/// Clean-stage settings of the semi-supervised pipeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub pretext: PretextKind,
    pub opt: OptimConfig,
}

/// Exact-label pool over `S1 ∪ S2`.
pub fn labeled_pool(bank: &SampleBank) -> Result<LabeledPool> {
    let (x1, y) = bank.labeled_data();
    LabeledPool::from_labels(x1, &y)
}

fn fit_pretext(bank: &SampleBank, pipeline: &PipelineConfig, seed: Seed) -> Result<PretextModel> {
    Ok(match pipeline.pretext {
        PretextKind::ParamCi => PretextModel::ParamCi(fit_pretext_param_ci(bank, &pipeline.opt, seed.child("pretext", 0))?),
        PretextKind::Linear => PretextModel::LinearMap(fit_pretext_linear(bank)?),
    })
}

fn pseudo_pool(x1: &DMatrix<f64>, source: PseudolabelSource<'_>, policy: PseudolabelPolicy) -> Result<LabeledPool> {
    LabeledPool::from_probs(x1.clone(), policy.apply(&pseudolabel_probs(x1, source)))
}

/// Runs one robust training pipeline on `bank` and returns the trained classifier.
pub fn run_algorithm1(
    bank: &SampleBank,
    method: AdvMethod,
    cfg: &AdvTrainConfig,
    pipeline: &PipelineConfig,
    policy: PseudolabelPolicy,
    seed: Seed,
) -> Result<LinearClassifier> {
    let labeled = labeled_pool(bank)?;
    let (pool, init) = match method {
        AdvMethod::AdvSsl | AdvMethod::AdvSslS4 => {
            let sizes = bank.sizes();
            if sizes.n3 == 0 && (method == AdvMethod::AdvSsl || sizes.n4 == 0) {
                let init = labeled_only(bank, cfg.loss, &pipeline.opt)?;
                return adv_train(&labeled, cfg, init.theta());
            }
            let pretext = fit_pretext(bank, pipeline, seed)?;
            let downstream = fit_downstream(&pretext, bank, cfg.loss, &pipeline.opt)?;
            let source = PseudolabelSource::Ssl {
                pretext: &pretext,
                downstream: &downstream,
            };
            let mut pool = labeled.append(pseudo_pool(&bank.s3().x1, source, policy)?)?;
            if method == AdvMethod::AdvSslS4 {
                let policy = match policy {
                    PseudolabelPolicy::HardSample(s) => PseudolabelPolicy::HardSample(s.child("s4", 0)),
                    other => other,
                };
                pool = pool.append(pseudo_pool(&bank.s4().x1, source, policy)?)?;
            }
            let init = induced_direction(&pretext, &downstream)?;
            (pool, init)
        }
        AdvMethod::AdvLabeledOnly => (labeled, labeled_only(bank, cfg.loss, &pipeline.opt)?),
        AdvMethod::AdvPseudoClean => {
            let clean = labeled_only(bank, cfg.loss, &pipeline.opt)?;
            let source = PseudolabelSource::CleanLabeledOnly {
                theta: &clean,
                loss: cfg.loss,
            };
            (labeled.append(pseudo_pool(&bank.s3().x1, source, policy)?)?, clean)
        }
        AdvMethod::BenchmarkOracle => {
            let y3 = bank.oracle_s3_labels().ok_or(Error::MissingOracleLabels)?;
            let truth = LabeledPool::from_labels(bank.s3().x1.clone(), y3)?;
            (labeled.append(truth)?, labeled_only(bank, cfg.loss, &pipeline.opt)?)
        }
    };
    adv_train(&pool, cfg, init.theta())
}
