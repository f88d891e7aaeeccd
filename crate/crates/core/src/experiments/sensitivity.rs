use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{bank_seed, ExperimentModel, ExperimentSpec};
use crate::adversarial::{adv_train, labeled_pool, AdvTrainConfig, LabeledPool};
use crate::error::{Error, Result};
use crate::estimators::{labeled_only, pseudolabel_probs, PseudolabelSource};
use crate::numeric::mean_var;
use crate::risk::{optimal_robust, regret_against};

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub delta: f64,
    /// Mean over reps of `mean_i ||x1_i||^2 (p_tilde_i - p_i)^2`.
    pub distortion: f64,
    pub mean_regret: f64,
    pub se_regret: f64,
    /// Mean regret minus that of the first noise level, paired within reps.
    pub excess: f64,
    pub excess_se: f64,
}

/// Adversarial training with true-posterior pseudolabels on `S3` corrupted to
/// `clamp(p + delta Z, 0, 1)`. Banks and `Z` are shared across noise levels
/// within a repetition. Uses the first grid point and `spec.adv_loss`.
pub fn pseudolabel_sensitivity(spec: &ExperimentSpec, noise_levels: &[f64], threads: Option<usize>) -> Result<Vec<SensitivityRow>> {
    spec.validate()?;
    let ExperimentModel::Classification(model) = &spec.model else {
        return Err(Error::InvalidConfig("sensitivity study needs a classification model".into()));
    };
    if spec.attack.eps <= 0.0 {
        return Err(Error::InvalidConfig("sensitivity study needs eps > 0".into()));
    }
    if noise_levels.is_empty() || noise_levels.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidConfig("noise levels must be nonempty and >= 0".into()));
    }
    let sizes = spec.size_grid[0];
    let r_star = optimal_robust(model, &spec.attack, &spec.robust).risk;
    let cfg = AdvTrainConfig {
        loss: spec.adv_loss,
        attack: spec.attack,
        opt: spec.opt.clone(),
    };
    let trial = |rep: usize| -> Result<Vec<(f64, f64)>> {
        let seed = bank_seed(spec.master_seed, 0, rep);
        let bank = model.sample_bank(sizes, seed);
        let x3 = &bank.s3().x1;
        let p = pseudolabel_probs(x3, PseudolabelSource::Oracle(model));
        let mut rng = seed.stream("pseudolabel-noise", 0);
        let z = DVector::from_fn(p.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let sq_norms: Vec<f64> = x3.row_iter().map(|r| r.norm_squared()).collect();
        let init = labeled_only(&bank, spec.adv_loss, &spec.opt)?;
        let labeled = labeled_pool(&bank)?;
        noise_levels
            .iter()
            .map(|&delta| {
                let noisy = DVector::from_fn(p.len(), |i, _| (p[i] + delta * z[i]).clamp(0.0, 1.0));
                let distortion = if p.is_empty() {
                    0.0
                } else {
                    sq_norms.iter().zip(noisy.iter().zip(p.iter())).map(|(s, (a, b))| s * (a - b).powi(2)).sum::<f64>() / p.len() as f64
                };
                let pool = labeled.clone().append(LabeledPool::from_probs(x3.clone(), noisy)?)?;
                let theta = adv_train(&pool, &cfg, init.theta())?;
                Ok((distortion, regret_against(&theta, model, &spec.attack, r_star)?))
            })
            .collect()
    };
    let work = || (0..spec.reps).into_par_iter().map(trial).collect::<Result<Vec<_>>>();
    let per_rep = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let reps = per_rep.len() as f64;
    Ok(noise_levels
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let regrets: Vec<f64> = per_rep.iter().map(|r| r[k].1).collect();
            let diffs: Vec<f64> = per_rep.iter().map(|r| r[k].1 - r[0].1).collect();
            let (mean_regret, var) = mean_var(&regrets);
            let (excess, dvar) = mean_var(&diffs);
            SensitivityRow {
                delta,
                distortion: per_rep.iter().map(|r| r[k].0).sum::<f64>() / reps,
                mean_regret,
                se_regret: (var / reps).sqrt(),
                excess,
                excess_se: (dvar / reps).sqrt(),
            }
        })
        .collect())
}
