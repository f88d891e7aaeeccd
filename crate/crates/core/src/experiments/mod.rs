//! Replicated sweeps over sample sizes and methods, table presets,
//! convergence-rate fits, and the pseudolabel-sensitivity and wide-network studies.

mod ntk_study;
mod presets;
mod rate;
mod sensitivity;

pub use ntk_study::{ntk_study, NtkStudyConfig, NtkStudyReport, XorMixture};
pub use presets::{preset_spec, sensitivity_spec, PresetId, REG_LARGE};
pub use rate::{fit_rate, rate_rows, RateFit, SizeField};
pub use sensitivity::{pseudolabel_sensitivity, SensitivityRow};

use std::time::Instant;

use rayon::prelude::*;

use crate::adversarial::{run_algorithm1, AdvMethod, AdvTrainConfig, PipelineConfig, PretextKind, PseudolabelPolicy};
use crate::error::{Error, Result};
use crate::estimators::{fit_downstream, fit_pretext_linear, fit_pretext_param_ci, induced_direction, labeled_only, Loss, OptimConfig, PretextModel};
use crate::models::{BankSizes, GaussianMixture};
use crate::numeric::mean_var;
use crate::regression::{regression_excess_risk, ssl_regression_fit, RegressionModel};
use crate::risk::{optimal_robust, regret_against, AttackSpec, LinearClassifier, RobustSearchConfig};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SslPlugin,
    SslLogistic,
    LabeledPlugin,
    LabeledLogistic,
    AdvSsl,
    AdvSslS4,
    AdvLabeledOnly,
    AdvPseudoClean,
    BenchmarkOracle,
    RegSsl,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::SslPlugin,
        Method::SslLogistic,
        Method::LabeledPlugin,
        Method::LabeledLogistic,
        Method::AdvSsl,
        Method::AdvSslS4,
        Method::AdvLabeledOnly,
        Method::AdvPseudoClean,
        Method::BenchmarkOracle,
        Method::RegSsl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SslPlugin => "ssl_plugin",
            Method::SslLogistic => "ssl_logistic",
            Method::LabeledPlugin => "labeled_plugin",
            Method::LabeledLogistic => "labeled_logistic",
            Method::AdvSsl => "adv_ssl",
            Method::AdvSslS4 => "adv_ssl_s4",
            Method::AdvLabeledOnly => "adv_labeled_only",
            Method::AdvPseudoClean => "adv_pseudo_clean",
            Method::BenchmarkOracle => "benchmark_oracle",
            Method::RegSsl => "reg_ssl",
        }
    }

    pub fn adversarial(self) -> Option<AdvMethod> {
        match self {
            Method::AdvSsl => Some(AdvMethod::AdvSsl),
            Method::AdvSslS4 => Some(AdvMethod::AdvSslS4),
            Method::AdvLabeledOnly => Some(AdvMethod::AdvLabeledOnly),
            Method::AdvPseudoClean => Some(AdvMethod::AdvPseudoClean),
            Method::BenchmarkOracle => Some(AdvMethod::BenchmarkOracle),
            _ => None,
        }
    }

    pub fn is_regression(self) -> bool {
        self == Method::RegSsl
    }

    /// The part of a grid point this method actually consumes.
    fn effective_sizes(self, s: BankSizes) -> BankSizes {
        match self {
            Method::LabeledPlugin | Method::LabeledLogistic | Method::AdvLabeledOnly => BankSizes::new(s.n1, s.n2, 0, 0),
            Method::AdvSslS4 => s,
            _ => BankSizes::new(s.n1, s.n2, s.n3, 0),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub enum ExperimentModel {
    Classification(GaussianMixture),
    Regression(RegressionModel),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub model: ExperimentModel,
    pub size_grid: Vec<BankSizes>,
    pub methods: Vec<Method>,
    pub attack: AttackSpec,
    /// Loss used by the adversarial methods.
    pub adv_loss: Loss,
    pub reps: usize,
    pub master_seed: u64,
    pub opt: OptimConfig,
    pub pipeline: PipelineConfig,
    pub policy: PseudolabelPolicy,
    pub robust: RobustSearchConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        if self.size_grid.is_empty() {
            return Err(Error::InvalidConfig("size grid is empty".into()));
        }
        for m in &self.methods {
            if m.adversarial().is_some() && self.attack.eps <= 0.0 {
                return Err(Error::InvalidConfig(format!("{m} needs eps > 0")));
            }
            match (&self.model, m.is_regression()) {
                (ExperimentModel::Regression(_), false) => {
                    return Err(Error::InvalidConfig(format!("{m} needs a classification model")))
                }
                (ExperimentModel::Classification(_), true) => {
                    return Err(Error::InvalidConfig(format!("{m} needs a regression model")))
                }
                _ => {}
            }
        }
        if let ExperimentModel::Regression(_) = self.model {
            if self.attack.eps != 0.0 {
                return Err(Error::InvalidConfig("regression sweeps are evaluated at eps = 0".into()));
            }
        }
        self.opt.validate()?;
        self.pipeline.opt.validate()
    }

    pub fn dims(&self) -> (usize, usize) {
        match &self.model {
            ExperimentModel::Classification(m) => (m.d1(), m.d2()),
            ExperimentModel::Regression(m) => (m.d1(), m.d2()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: Method,
    pub sizes: BankSizes,
    pub rep: usize,
    /// NaN when the trial failed.
    pub regret: f64,
    /// Error tag of a failed trial.
    pub error: Option<&'static str>,
    pub wall_time: f64,
}

impl TrialRecord {
    pub fn status(&self) -> &'static str {
        self.error.unwrap_or("ok")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub sizes: BankSizes,
    pub mean_regret: f64,
    pub var_regret: f64,
    pub n_reps: usize,
}

impl SummaryRow {
    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        (self.var_regret / self.n_reps as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<SummaryRow>,
}

/// Seed of the bank shared by every method at one grid point and repetition.
pub fn bank_seed(master: u64, size_index: usize, rep: usize) -> Seed {
    Seed::new(master).child("trial", size_index as u64).child("rep", rep as u64)
}

/// Seed of a method's own fitting randomness.
pub fn method_seed(master: u64, size_index: usize, method: Method, rep: usize) -> Seed {
    Seed::new(master)
        .child("trial", size_index as u64)
        .child(method.as_str(), rep as u64)
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    r_star: f64,
}

fn clean_ssl(ctx: &Context<'_>, model: &GaussianMixture, sizes: BankSizes, bank_seed: Seed, seed: Seed, loss: Loss) -> Result<LinearClassifier> {
    let bank = model.sample_bank(sizes, bank_seed);
    let pretext = match ctx.spec.pipeline.pretext {
        PretextKind::ParamCi => PretextModel::ParamCi(fit_pretext_param_ci(&bank, &ctx.spec.pipeline.opt, seed.child("pretext", 0))?),
        PretextKind::Linear => PretextModel::LinearMap(fit_pretext_linear(&bank)?),
    };
    let downstream = fit_downstream(&pretext, &bank, loss, &ctx.spec.opt)?;
    induced_direction(&pretext, &downstream)
}

fn run_trial(ctx: &Context<'_>, size_index: usize, method: Method, rep: usize) -> Result<f64> {
    let spec = ctx.spec;
    let grid = spec.size_grid[size_index];
    let sizes = method.effective_sizes(grid);
    let bseed = bank_seed(spec.master_seed, size_index, rep);
    let seed = method_seed(spec.master_seed, size_index, method, rep);
    match &spec.model {
        ExperimentModel::Regression(model) => {
            let bank = model.sample(sizes, bseed);
            regression_excess_risk(&ssl_regression_fit(&bank)?, model)
        }
        ExperimentModel::Classification(model) => {
            let theta = match method {
                Method::SslPlugin => clean_ssl(ctx, model, sizes, bseed, seed, Loss::Square)?,
                Method::SslLogistic => clean_ssl(ctx, model, sizes, bseed, seed, Loss::Logistic)?,
                Method::LabeledPlugin => labeled_only(&model.sample_bank(sizes, bseed), Loss::Square, &spec.opt)?,
                Method::LabeledLogistic => labeled_only(&model.sample_bank(sizes, bseed), Loss::Logistic, &spec.opt)?,
                Method::RegSsl => unreachable!("validated"),
                adv => {
                    let bank = model.sample_bank(sizes, bseed);
                    let cfg = AdvTrainConfig {
                        loss: spec.adv_loss,
                        attack: spec.attack,
                        opt: spec.opt.clone(),
                    };
                    let policy = match spec.policy {
                        PseudolabelPolicy::HardSample(_) => PseudolabelPolicy::HardSample(seed.child("pseudolabel", 0)),
                        p => p,
                    };
                    let m = adv.adversarial().expect("adversarial method");
                    run_algorithm1(&bank, m, &cfg, &spec.pipeline, policy, seed)?
                }
            };
            regret_against(&theta, model, &spec.attack, ctx.r_star)
        }
    }
}

/// Runs every `(size, method, rep)` trial and aggregates per `(method, size)`.
/// `threads` bounds the worker pool; results do not depend on it.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentResult> {
    spec.validate()?;
    let r_star = match &spec.model {
        ExperimentModel::Classification(m) => optimal_robust(m, &spec.attack, &spec.robust).risk,
        ExperimentModel::Regression(_) => 0.0,
    };
    let ctx = Context { spec, r_star };
    let tasks: Vec<(usize, Method, usize)> = (0..spec.size_grid.len())
        .flat_map(|s| spec.methods.iter().flat_map(move |&m| (0..spec.reps).map(move |r| (s, m, r))))
        .collect();
    let work = || {
        tasks
            .par_iter()
            .map(|&(s, m, r)| {
                let start = Instant::now();
                let outcome = run_trial(&ctx, s, m, r);
                let wall_time = start.elapsed().as_secs_f64();
                let (regret, error) = match outcome {
                    Ok(v) => (v, None),
                    Err(e) => (f64::NAN, Some(e.name())),
                };
                TrialRecord {
                    method: m,
                    sizes: spec.size_grid[s],
                    rep: r,
                    regret,
                    error,
                    wall_time,
                }
            })
            .collect::<Vec<_>>()
    };
    let records = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let summaries = summarize(&records);
    Ok(ExperimentResult { records, summaries })
}

/// Mean and variance of regret over successful trials, per `(method, sizes)`,
/// in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, BankSizes)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.method, r.sizes)) {
            keys.push((r.method, r.sizes));
        }
    }
    keys.into_iter()
        .map(|(method, sizes)| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.sizes == sizes && r.regret.is_finite())
                .map(|r| r.regret)
                .collect();
            let (mean_regret, var_regret) = mean_var(&values);
            SummaryRow {
                method,
                sizes,
                mean_regret,
                var_regret,
                n_reps: values.len(),
            }
        })
        .collect()
}
