use nalgebra::{DMatrix, DVector};

use super::{ExperimentModel, ExperimentSpec, Method};
use crate::adversarial::{PipelineConfig, PseudolabelPolicy};
use crate::error::{Error, Result};
use crate::estimators::{Loss, OptimConfig};
use crate::models::{BankSizes, GaussianMixture};
use crate::regression::RegressionModel;
use crate::risk::{AttackSpec, Norm, RobustSearchConfig};

const N1: usize = 100;
const N3_GRID: [usize; 5] = [500, 1000, 5000, 10000, 20000];

/// Size of the dataset held fixed while the other one varies in the regression sweep.
pub const REG_LARGE: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetId {
    T1,
    T2,
    T3,
    T4,
    Reg,
}

impl std::str::FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "t1" => Ok(PresetId::T1),
            "2" | "t2" => Ok(PresetId::T2),
            "3" | "t3" => Ok(PresetId::T3),
            "4" | "t4" => Ok(PresetId::T4),
            "reg" => Ok(PresetId::Reg),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

fn clean_grid() -> Vec<BankSizes> {
    N3_GRID.iter().map(|&n3| BankSizes::new(N1, 0, n3, 0)).collect()
}

fn adversarial_grid() -> Vec<BankSizes> {
    N3_GRID.iter().map(|&n3| BankSizes::new(N1, 0, n3, n3)).collect()
}

/// Cross-covariance `0.5 [I2; 0]`, `a0 = (1, 1) / sqrt(2)`, unit noise.
pub fn regression_model() -> RegressionModel {
    let mut s12 = DMatrix::zeros(5, 2);
    s12[(0, 0)] = 0.5;
    s12[(1, 1)] = 0.5;
    RegressionModel::new(s12, DVector::from_element(2, 1.0 / 2f64.sqrt()), 1.0).expect("valid preset")
}

fn base(model: ExperimentModel, size_grid: Vec<BankSizes>, methods: Vec<Method>, attack: AttackSpec, adv_loss: Loss) -> ExperimentSpec {
    ExperimentSpec {
        model,
        size_grid,
        methods,
        attack,
        adv_loss,
        reps: 100,
        master_seed: 0,
        opt: OptimConfig::default(),
        pipeline: PipelineConfig::default(),
        policy: PseudolabelPolicy::Soft,
        robust: RobustSearchConfig::default(),
    }
}

fn simulation_model() -> ExperimentModel {
    ExperimentModel::Classification(GaussianMixture::isotropic(5, 2).expect("valid preset"))
}

fn l2_attack() -> AttackSpec {
    AttackSpec::new(Norm::L2, 0.1).expect("valid preset")
}

const ADV_METHODS: [Method; 5] = [
    Method::BenchmarkOracle,
    Method::AdvSsl,
    Method::AdvLabeledOnly,
    Method::AdvSslS4,
    Method::AdvPseudoClean,
];

/// Table configurations; reps default to 100 and the master seed to 0.
pub fn preset_spec(id: PresetId) -> ExperimentSpec {
    match id {
        PresetId::T1 => base(
            simulation_model(),
            clean_grid(),
            vec![Method::SslPlugin, Method::LabeledPlugin],
            AttackSpec::clean(),
            Loss::Square,
        ),
        PresetId::T2 => base(simulation_model(), adversarial_grid(), ADV_METHODS.to_vec(), l2_attack(), Loss::Square),
        PresetId::T3 => base(
            simulation_model(),
            clean_grid(),
            vec![Method::SslLogistic, Method::LabeledLogistic],
            AttackSpec::clean(),
            Loss::Logistic,
        ),
        PresetId::T4 => base(simulation_model(), adversarial_grid(), ADV_METHODS.to_vec(), l2_attack(), Loss::Logistic),
        PresetId::Reg => {
            let mut grid: Vec<BankSizes> = N3_GRID.iter().map(|&n| BankSizes::new(N1, REG_LARGE, n, 0)).collect();
            grid.extend(N3_GRID.iter().map(|&n| BankSizes::new(N1, n, REG_LARGE, 0)));
            base(
                ExperimentModel::Regression(regression_model()),
                grid,
                vec![Method::RegSsl],
                AttackSpec::clean(),
                Loss::Square,
            )
        }
    }
}

/// Adversarial logistic training with `n1 = 100`, `n3 = 5000` and L2 radius 0.1.
pub fn sensitivity_spec() -> ExperimentSpec {
    base(
        simulation_model(),
        vec![BankSizes::new(N1, 0, 5000, 0)],
        vec![Method::AdvSsl],
        l2_attack(),
        Loss::Logistic,
    )
}
