//! Brute-force checks for the closed-form attacks and the robust optimum.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::adversarial::{attack_point, pointwise_loss};
use crate::error::{Error, Result};
use crate::estimators::Loss;
use crate::models::GaussianMixture;
use crate::risk::{adv_risk, AttackSpec, LinearClassifier, Norm};
use crate::rng::{Seed, StreamRng};

fn gaussian(rng: &mut StreamRng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// A uniform draw from the attack ball.
pub fn sample_ball(norm: Norm, eps: f64, d: usize, rng: &mut StreamRng) -> DVector<f64> {
    match norm {
        Norm::L2 => {
            let g = gaussian(rng, d);
            let r = eps * rng.random::<f64>().powf(1.0 / d as f64);
            let n = g.norm();
            g * (r / n)
        }
        Norm::Linf => DVector::from_fn(d, |_, _| eps * (2.0 * rng.random::<f64>() - 1.0)),
    }
}

fn project(delta: DVector<f64>, norm: Norm, eps: f64) -> DVector<f64> {
    match norm {
        Norm::L2 => {
            let n = delta.norm();
            if n > eps {
                delta * (eps / n)
            } else {
                delta
            }
        }
        Norm::Linf => delta.map(|v| v.clamp(-eps, eps)),
    }
}

/// Projected gradient ascent on the perturbation; returns the best loss seen.
pub fn pgd_attack_loss(x: &DVector<f64>, y: f64, theta: &DVector<f64>, attack: &AttackSpec, loss: Loss, steps: usize) -> f64 {
    let mut delta = DVector::zeros(x.len());
    let mut best = pointwise_loss(x, y, theta, loss);
    let step = attack.eps / 10.0;
    for _ in 0..steps {
        let xd = x + &delta;
        let z = theta.dot(&xd);
        let g = match loss {
            Loss::Logistic => theta * (-y * crate::numeric::sigmoid(-y * z)),
            Loss::Square => theta * (-2.0 * (y - z)),
        };
        let dir = match attack.norm {
            Norm::L2 => {
                let n = g.norm();
                if n == 0.0 {
                    break;
                }
                g / n
            }
            Norm::Linf => g.map(crate::numeric::sign0),
        };
        delta = project(delta + dir * step, attack.norm, attack.eps);
        best = best.max(pointwise_loss(&(x + &delta), y, theta, loss));
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackInstance {
    pub x: DVector<f64>,
    pub y: f64,
    pub theta: DVector<f64>,
    pub attack: AttackSpec,
    pub loss: Loss,
}

impl AttackInstance {
    pub fn random(rng: &mut StreamRng) -> Self {
        let d = rng.random_range(2..=6);
        let norm = if rng.random::<bool>() { Norm::L2 } else { Norm::Linf };
        let loss = if rng.random::<bool>() { Loss::Logistic } else { Loss::Square };
        Self {
            x: gaussian(rng, d),
            y: if rng.random::<bool>() { 1.0 } else { -1.0 },
            theta: gaussian(rng, d),
            attack: AttackSpec {
                norm,
                eps: rng.random_range(0.01..1.0),
            },
            loss,
        }
    }

    /// Loss at the closed-form attack minus the best loss found by ball
    /// sampling and projected gradient ascent. Nonnegative when the closed
    /// form is optimal.
    pub fn margin(&self, ball_samples: usize, pgd_steps: usize, rng: &mut StreamRng) -> Result<f64> {
        let xt = attack_point(&self.x, self.y, &self.theta, &self.attack, self.loss)?;
        let closed = pointwise_loss(&xt, self.y, &self.theta, self.loss);
        let mut best = pgd_attack_loss(&self.x, self.y, &self.theta, &self.attack, self.loss, pgd_steps);
        for _ in 0..ball_samples {
            let d = sample_ball(self.attack.norm, self.attack.eps, self.x.len(), rng);
            best = best.max(pointwise_loss(&(&self.x + d), self.y, &self.theta, self.loss));
        }
        Ok(closed - best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSuiteReport {
    pub instances: usize,
    /// Smallest closed-form margin over all instances.
    pub worst_margin: f64,
    pub passed: bool,
}

/// Runs [`AttackInstance::margin`] on `instances` random cases; passes when
/// every margin is at least `-slack`.
pub fn attack_suite(instances: usize, ball_samples: usize, pgd_steps: usize, slack: f64, seed: Seed) -> Result<AttackSuiteReport> {
    let mut rng = seed.stream("attack-suite", 0);
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let inst = AttackInstance::random(&mut rng);
        worst = worst.min(inst.margin(ball_samples, pgd_steps, &mut rng)?);
    }
    Ok(AttackSuiteReport {
        instances,
        worst_margin: worst,
        passed: worst >= -slack,
    })
}

/// Lowest adversarial risk over `n` evenly spaced directions of a 2-D model.
pub fn direction_grid_search(model: &GaussianMixture, attack: &AttackSpec, n: usize) -> Result<(DVector<f64>, f64)> {
    if model.d1() != 2 {
        return Err(Error::DimensionMismatch(format!("direction grid needs d1 = 2, got {}", model.d1())));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("direction grid needs at least one point".into()));
    }
    let mut best = (DVector::zeros(2), f64::INFINITY);
    for k in 0..n {
        let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let theta = DVector::from_vec(vec![a.cos(), a.sin()]);
        let r = adv_risk(&LinearClassifier::new(theta.clone())?, model, attack)?;
        if r < best.1 {
            best = (theta, r);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = Seed::new(1).stream("t", 0);
        for _ in 0..200 {
            assert!(sample_ball(Norm::L2, 0.3, 4, &mut rng).norm() <= 0.3 + 1e-15);
            assert!(sample_ball(Norm::Linf, 0.3, 4, &mut rng).amax() <= 0.3);
        }
    }

    #[test]
    fn small_suite_passes() {
        let r = attack_suite(10, 500, 50, 1e-9, Seed::new(3)).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
