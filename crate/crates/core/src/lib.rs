//! Semi-supervised and adversarially robust linear classification under a
//! Gaussian mixture with auxiliary covariates: data generation, exact risk,
//! pretext and downstream fits, adversarial training, regression and
//! experiment sweeps.

pub mod adversarial;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod models;
pub mod numeric;
pub mod oracle;
pub mod regression;
pub mod risk;
pub mod rng;

pub use adversarial::{
    adv_empirical_loss, adv_train, attack_point, run_algorithm1, AdvMethod, AdvTrainConfig, LabeledPool, PipelineConfig,
    PretextKind, PseudolabelPolicy,
};
pub use error::{Error, Result};
pub use estimators::{Loss, OptimConfig, PretextModel};
pub use experiments::{
    fit_rate, preset_spec, run_experiment, ExperimentModel, ExperimentSpec, Method, PresetId, SizeField, SummaryRow,
    TrialRecord,
};
pub use models::{BankSizes, GaussianMixture, SampleBank};
pub use regression::RegressionModel;
pub use risk::{adv_risk, optimal_robust, AttackSpec, LinearClassifier, Norm, RobustSearchConfig};
pub use rng::Seed;
