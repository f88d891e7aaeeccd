//! Downstream fits on `S1 ∪ S2`, labeled-only baselines and pseudolabel probabilities.

use nalgebra::{DMatrix, DVector};

use super::optim::{minimize, OptimConfig};
use super::pretext::PretextModel;
use crate::error::{Error, Result};
use crate::models::{GaussianMixture, SampleBank};
use crate::numeric::{ridge_solve, sigmoid, softplus};
use crate::risk::LinearClassifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    Square,
    Logistic,
}

impl Loss {
    pub fn as_str(self) -> &'static str {
        match self {
            Loss::Square => "square",
            Loss::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" | "plugin" => Ok(Loss::Square),
            "logistic" => Ok(Loss::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

/// Ridge in the square-loss normal equations; the pseudo-inverse limit.
pub const DOWNSTREAM_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DownstreamModel {
    pub w: DVector<f64>,
    pub loss: Loss,
    pub ridge: f64,
}

/// Fits `w` for scores `features * w` against labels `y`.
pub(crate) fn fit_linear(features: &DMatrix<f64>, y: &DVector<f64>, loss: Loss, opt: &OptimConfig) -> Result<DVector<f64>> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("labeled set S1 ∪ S2 is empty".into()));
    }
    let nf = n as f64;
    match loss {
        Loss::Square => {
            let gram = features.transpose() * features / nf;
            let cross = features.transpose() * y / nf;
            let cross = DMatrix::from_column_slice(cross.len(), 1, cross.as_slice());
            Ok(ridge_solve(&gram, &cross, DOWNSTREAM_RIDGE).column(0).into_owned())
        }
        Loss::Logistic => {
            opt.validate()?;
            let objective = |w: &DVector<f64>| {
                let z = features * w;
                let mut value = 0.0;
                let coef = DVector::from_iterator(
                    n,
                    z.iter().zip(y.iter()).map(|(zi, yi)| {
                        value += softplus(-yi * zi);
                        -yi * sigmoid(-yi * zi) / nf
                    }),
                );
                (value / nf, features.transpose() * coef)
            };
            Ok(minimize(objective, DVector::zeros(features.ncols()), opt).x)
        }
    }
}

/// Downstream coefficient on the pretext features over `S1 ∪ S2`.
pub fn fit_downstream(pretext: &PretextModel, bank: &SampleBank, loss: Loss, opt: &OptimConfig) -> Result<DownstreamModel> {
    let (x1, y) = bank.labeled_data();
    if x1.nrows() == 0 {
        return Err(Error::InsufficientData("downstream needs labeled rows in S1 ∪ S2".into()));
    }
    let features = pretext.features(&x1);
    let w = fit_linear(&features, &y, loss, opt)?;
    Ok(DownstreamModel {
        w,
        loss,
        ridge: if loss == Loss::Square { DOWNSTREAM_RIDGE } else { 0.0 },
    })
}

/// Orientation `sign(w^T mu2hat)`, with `+1` at zero.
fn param_ci_orientation(w: &DVector<f64>, mu2hat: &DVector<f64>) -> f64 {
    if w.dot(mu2hat) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// The linear rule implied by a linear-reducible pretext/downstream pair.
pub fn induced_direction(pretext: &PretextModel, downstream: &DownstreamModel) -> Result<LinearClassifier> {
    match pretext {
        PretextModel::ParamCi(p) => LinearClassifier::new(&p.beta * param_ci_orientation(&downstream.w, &p.mu2hat)),
        PretextModel::LinearMap(l) => LinearClassifier::new(&l.b_matrix * &downstream.w),
        PretextModel::TwoLayerRelu(_) => Err(Error::NotLinearReducible),
    }
}

/// Linear classifier fitted on raw `x1` over `S1 ∪ S2`.
pub fn labeled_only(bank: &SampleBank, loss: Loss, opt: &OptimConfig) -> Result<LinearClassifier> {
    let (x1, y) = bank.labeled_data();
    LinearClassifier::new(fit_linear(&x1, &y, loss, opt)?)
}

/// Where pseudolabel probabilities come from.
#[derive(Debug, Clone, Copy)]
pub enum PseudolabelSource<'a> {
    /// Clean SSL pipeline.
    Ssl {
        pretext: &'a PretextModel,
        downstream: &'a DownstreamModel,
    },
    /// Clean fit on labeled data only.
    CleanLabeledOnly { theta: &'a LinearClassifier, loss: Loss },
    /// True posterior of a simulation model.
    Oracle(&'a GaussianMixture),
}

fn prob_from_score(score: f64, loss: Loss) -> f64 {
    match loss {
        Loss::Logistic => sigmoid(score),
        // Square-loss scores estimate E[Y | x1] = 2p - 1.
        Loss::Square => ((1.0 + score) / 2.0).clamp(0.0, 1.0),
    }
}

/// `P(Y = 1 | x1)` estimated by `source` for every row of `x1`.
pub fn pseudolabel_probs(x1: &DMatrix<f64>, source: PseudolabelSource<'_>) -> DVector<f64> {
    match source {
        PseudolabelSource::Ssl { pretext, downstream } => match pretext {
            PretextModel::ParamCi(p) => {
                let o = param_ci_orientation(&downstream.w, &p.mu2hat);
                (x1 * &p.beta).map(|z| sigmoid(2.0 * o * z))
            }
            _ => (pretext.features(x1) * &downstream.w).map(|s| prob_from_score(s, downstream.loss)),
        },
        PseudolabelSource::CleanLabeledOnly { theta, loss } => (x1 * theta.theta()).map(|s| prob_from_score(s, loss)),
        PseudolabelSource::Oracle(model) => (x1 * model.posterior_coef()).map(|z| sigmoid(2.0 * z)),
    }
}

/// Single-point form of [`pseudolabel_probs`].
pub fn pseudolabel_prob(x1: &[f64], source: PseudolabelSource<'_>) -> f64 {
    let m = DMatrix::from_row_slice(1, x1.len(), x1);
    pseudolabel_probs(&m, source)[0]
}
