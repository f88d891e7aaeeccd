//! TOML experiment files for `simulate`.
//!
//! ```toml
//! seed = 7
//! reps = 20
//! methods = ["ssl_plugin", "labeled_plugin"]
//! adv_loss = "square"      # loss of the adversarial methods
//! policy = "soft"          # soft | hard_sign | hard_sample
//! pretext = "param_ci"     # param_ci | linear
//!
//! [model]
//! kind = "mixture"         # mixture | regression
//! d1 = 5
//! d2 = 2
//! # mixture: mean = [...] (length d1 + d2), covariance = [[...], ...]
//! # regression: cross_covariance = [[...]] (d1 rows), a0 = [...], noise_sd = 1.0
//!
//! [attack]
//! norm = "l2"
//! eps = 0.0
//!
//! [grid]                   # every combination is run
//! n1 = [100]
//! n2 = [0]
//! n3 = [500, 1000]
//! n4 = [0]
//!
//! [optim]                  # all optional
//! max_iters = 5000
//! grad_tol = 1e-8
//! backtrack_factor = 0.5
//! init_step = 1.0
//! restarts = 4
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use reconlab::experiments::{ExperimentModel, ExperimentSpec, Method};
use reconlab::{
    AttackSpec, BankSizes, Error, GaussianMixture, Loss, Norm, OptimConfig, PipelineConfig, PretextKind, PseudolabelPolicy,
    RegressionModel, Result, RobustSearchConfig, Seed,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_reps")]
    reps: usize,
    methods: Vec<String>,
    #[serde(default = "default_loss")]
    adv_loss: String,
    #[serde(default = "default_policy")]
    policy: String,
    #[serde(default = "default_pretext")]
    pretext: String,
    model: ModelSection,
    #[serde(default)]
    attack: AttackSection,
    grid: GridSection,
    #[serde(default)]
    optim: OptimSection,
}

fn default_reps() -> usize {
    100
}

fn default_loss() -> String {
    "square".into()
}

fn default_policy() -> String {
    "soft".into()
}

fn default_pretext() -> String {
    "param_ci".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: String,
    d1: usize,
    d2: usize,
    mean: Option<Vec<f64>>,
    covariance: Option<Vec<Vec<f64>>>,
    cross_covariance: Option<Vec<Vec<f64>>>,
    a0: Option<Vec<f64>>,
    noise_sd: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackSection {
    norm: String,
    eps: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            norm: "l2".into(),
            eps: 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n1: Vec<usize>,
    #[serde(default = "zero")]
    n2: Vec<usize>,
    #[serde(default = "zero")]
    n3: Vec<usize>,
    #[serde(default = "zero")]
    n4: Vec<usize>,
}

fn zero() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimSection {
    max_iters: Option<usize>,
    grad_tol: Option<f64>,
    backtrack_factor: Option<f64>,
    init_step: Option<f64>,
    restarts: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(format!("`{name}` rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn build_model(m: &ModelSection) -> Result<ExperimentModel> {
    match m.kind.as_str() {
        "mixture" => {
            let d = m.d1 + m.d2;
            let mean = match &m.mean {
                Some(v) => DVector::from_vec(v.clone()),
                None => DVector::from_element(d, 1.0 / (m.d1 as f64).sqrt()),
            };
            let cov = match &m.covariance {
                Some(rows) => matrix(rows, "covariance")?,
                None => DMatrix::identity(d, d),
            };
            Ok(ExperimentModel::Classification(GaussianMixture::new(m.d1, m.d2, mean, cov)?))
        }
        "regression" => {
            let rows = m.cross_covariance.as_ref().ok_or_else(|| invalid("regression needs `cross_covariance`"))?;
            let s12 = matrix(rows, "cross_covariance")?;
            if s12.shape() != (m.d1, m.d2) {
                return Err(Error::DimensionMismatch(format!("cross_covariance must be {}x{}", m.d1, m.d2)));
            }
            let a0 = DVector::from_vec(m.a0.clone().ok_or_else(|| invalid("regression needs `a0`"))?);
            Ok(ExperimentModel::Regression(RegressionModel::new(s12, a0, m.noise_sd.unwrap_or(1.0))?))
        }
        other => Err(invalid(format!("unknown model kind `{other}`"))),
    }
}

fn parse_policy(s: &str, seed: u64) -> Result<PseudolabelPolicy> {
    match s {
        "soft" => Ok(PseudolabelPolicy::Soft),
        "hard_sign" => Ok(PseudolabelPolicy::HardSign),
        "hard_sample" => Ok(PseudolabelPolicy::HardSample(Seed::new(seed))),
        other => Err(invalid(format!("unknown policy `{other}`"))),
    }
}

/// Parses and validates an experiment file.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let f: File = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    let methods = f.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>>>()?;
    let mut size_grid = Vec::new();
    for &n1 in &f.grid.n1 {
        for &n2 in &f.grid.n2 {
            for &n3 in &f.grid.n3 {
                for &n4 in &f.grid.n4 {
                    size_grid.push(BankSizes::new(n1, n2, n3, n4));
                }
            }
        }
    }
    let defaults = OptimConfig::default();
    let opt = OptimConfig {
        max_iters: f.optim.max_iters.unwrap_or(defaults.max_iters),
        grad_tol: f.optim.grad_tol.unwrap_or(defaults.grad_tol),
        backtrack_factor: f.optim.backtrack_factor.unwrap_or(defaults.backtrack_factor),
        init_step: f.optim.init_step.unwrap_or(defaults.init_step),
        restarts: f.optim.restarts.unwrap_or(defaults.restarts),
    };
    let pretext = match f.pretext.as_str() {
        "param_ci" => PretextKind::ParamCi,
        "linear" => PretextKind::Linear,
        other => return Err(invalid(format!("unknown pretext `{other}`"))),
    };
    let spec = ExperimentSpec {
        model: build_model(&f.model)?,
        size_grid,
        methods,
        attack: AttackSpec::new(f.attack.norm.parse::<Norm>()?, f.attack.eps)?,
        adv_loss: f.adv_loss.parse::<Loss>()?,
        reps: f.reps,
        master_seed: f.seed,
        opt: opt.clone(),
        pipeline: PipelineConfig { pretext, opt },
        policy: parse_policy(&f.policy, f.seed)?,
        robust: RobustSearchConfig::default(),
    };
    spec.validate()?;
    Ok(spec)
}
