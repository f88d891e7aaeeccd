//! Pretext fits, downstream fits, labeled-only baselines and the wide-network representation.

mod downstream;
mod ntk;
mod optim;
mod pretext;

pub use downstream::{
    fit_downstream, induced_direction, labeled_only, pseudolabel_prob, pseudolabel_probs, DownstreamModel, Loss,
    PseudolabelSource, DOWNSTREAM_RIDGE,
};
pub use ntk::{
    fit_pretext_ntk, fit_pretext_ntk_tuned, normalize_rows, ntk_gram, ntk_kernel, select_lambda, train_two_layer,
    NtkTrainConfig, TwoLayerRelu, NTK_LAMBDA_GRID,
};
pub use optim::OptimConfig;
pub use pretext::{
    exact_mu2_step, fit_linear_map_with_ridge, fit_param_ci_data, fit_pretext_linear, fit_pretext_param_ci,
    pretext_objective, pretext_objective_grad_beta, LinearMap, ParamCi, ParamCiReport, PretextModel,
    LINEAR_PRETEXT_RIDGE,
};

pub(crate) use downstream::fit_linear;
pub(crate) use optim::minimize;
