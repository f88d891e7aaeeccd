//! Exact clean and adversarial 0-1 risk of linear classifiers under the
//! Gaussian mixture, the best robust linear direction, and regret.
//!
//! For `sgn(theta^T x)` and an attack of radius `eps`, the worst-case margin
//! shrinks by `eps * q(theta)` where `q` is the dual norm of the threat model
//! (`||.||_2` for L2 balls, `||.||_1` for L-infinity boxes), so
//!
//! ```text
//! R(theta, eps) = Phi(-(theta^T mu1 - eps q(theta)) / sqrt(theta^T Sigma11 theta))
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::GaussianMixture;
use crate::numeric::{l1_norm, normal_cdf, normal_pdf, sign0};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    /// Dual norm of `theta`.
    pub fn dual(self, theta: &DVector<f64>) -> f64 {
        match self {
            Norm::L2 => theta.norm(),
            Norm::Linf => l1_norm(theta),
        }
    }

    /// A subgradient of the dual norm, zero at kinks.
    pub fn dual_grad(self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Norm::L2 => {
                let n = theta.norm();
                if n == 0.0 {
                    DVector::zeros(theta.len())
                } else {
                    theta / n
                }
            }
            Norm::Linf => theta.map(sign0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "linf" | "l-inf" | "linfty" => Ok(Norm::Linf),
            other => Err(Error::InvalidConfig(format!("unknown norm `{other}`"))),
        }
    }
}

/// Threat model: a ball of radius `eps` in `norm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub norm: Norm,
    pub eps: f64,
}

impl AttackSpec {
    pub fn new(norm: Norm, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidConfig(format!("attack radius must be finite and >= 0, got {eps}")));
        }
        Ok(Self { norm, eps })
    }

    pub const fn clean() -> Self {
        Self { norm: Norm::L2, eps: 0.0 }
    }

    /// `eps * q(theta)`.
    pub fn margin_shift(&self, theta: &DVector<f64>) -> f64 {
        if self.eps == 0.0 {
            0.0
        } else {
            self.eps * self.norm.dual(theta)
        }
    }
}

/// The rule `sgn(theta^T x)` with `sgn(0) = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    theta: DVector<f64>,
}

impl LinearClassifier {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("classifier has non-finite entries".into()));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn into_theta(self) -> DVector<f64> {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_zero(&self) -> bool {
        self.theta.iter().all(|v| *v == 0.0)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().zip(self.theta.iter()).map(|(a, b)| a * b).sum();
        if s >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Unit-norm copy.
    pub fn normalized(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::ZeroDirection);
        }
        Ok(Self {
            theta: &self.theta / self.theta.norm(),
        })
    }
}

/// Risk of `theta` for the class-conditional law `N(+-mu, sigma)`.
fn risk_raw(theta: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>, attack: &AttackSpec) -> f64 {
    let s2 = (sigma * theta).dot(theta);
    normal_cdf(-(theta.dot(mu) - attack.margin_shift(theta)) / s2.sqrt())
}

/// Value and gradient of the risk with respect to `theta`.
fn risk_and_grad(
    theta: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    attack: &AttackSpec,
) -> (f64, DVector<f64>) {
    let st = sigma * theta;
    let s2 = st.dot(theta);
    let s = s2.sqrt();
    let num = theta.dot(mu) - attack.margin_shift(theta);
    let m = num / s;
    let dnum = mu - attack.norm.dual_grad(theta) * attack.eps;
    let dm = dnum / s - st * (num / (s2 * s));
    (normal_cdf(-m), dm * (-normal_pdf(m)))
}

fn check_dims(theta: &LinearClassifier, model: &GaussianMixture) -> Result<()> {
    if theta.dim() != model.d1() {
        return Err(Error::DimensionMismatch(format!(
            "classifier has {} entries, model has d1 = {}",
            theta.dim(),
            model.d1()
        )));
    }
    if theta.is_zero() {
        return Err(Error::ZeroDirection);
    }
    Ok(())
}

/// Exact adversarial misclassification probability of `sgn(theta^T x)`.
/// With `eps = 0` this is the clean risk.
pub fn adv_risk(theta: &LinearClassifier, model: &GaussianMixture, attack: &AttackSpec) -> Result<f64> {
    check_dims(theta, model)?;
    Ok(risk_raw(theta.theta(), model.mu1(), model.sigma11(), attack))
}

/// Search settings for [`optimal_robust`].
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSearchConfig {
    /// Upper end of the ridge bracket; `None` means `1e3 * lambda_max(Sigma11)`.
    pub t_grid_max: Option<f64>,
    pub golden_tol: f64,
    pub pgd_restarts: usize,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    /// Tangent-gradient norm that counts as stationary.
    pub pgd_grad_tol: f64,
}

impl Default for RobustSearchConfig {
    fn default() -> Self {
        Self {
            t_grid_max: None,
            golden_tol: 1e-10,
            pgd_restarts: 20,
            pgd_steps: 500,
            pgd_step_size: 0.05,
            pgd_grad_tol: 1e-9,
        }
    }
}

/// Result of [`optimal_robust`].
#[derive(Debug, Clone)]
pub struct RobustOptimum {
    /// Unit-norm minimizing direction.
    pub theta: LinearClassifier,
    pub risk: f64,
    /// False when no projected-gradient run met the gradient criterion; the
    /// direction is still the best one evaluated.
    pub converged: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while (hi - lo) > tol * (1.0 + x1.abs().max(x2.abs())) && iters < 500 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        iters += 1;
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

struct Best {
    theta: DVector<f64>,
    risk: f64,
}

impl Best {
    fn offer(&mut self, theta: &DVector<f64>, risk: f64) {
        if risk < self.risk {
            self.risk = risk;
            self.theta = theta.clone();
        }
    }
}

/// Projected gradient descent on the unit sphere. Returns whether the tangent
/// gradient fell below tolerance.
fn sphere_pgd(
    start: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    attack: &AttackSpec,
    cfg: &RobustSearchConfig,
    best: &mut Best,
) -> bool {
    let mut theta = start / start.norm();
    let (mut f, mut g) = risk_and_grad(&theta, mu, sigma, attack);
    best.offer(&theta, f);
    let mut step = cfg.pgd_step_size;
    for _ in 0..cfg.pgd_steps {
        let tangent = &g - &theta * g.dot(&theta);
        if tangent.norm() <= cfg.pgd_grad_tol {
            return true;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta - &tangent * step;
            let cand = &cand / cand.norm();
            let fc = risk_raw(&cand, mu, sigma, attack);
            best.offer(&cand, fc);
            if fc < f {
                theta = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No decrease at machine resolution.
            return tangent.norm() <= cfg.pgd_grad_tol.sqrt();
        }
        let (nf, ng) = risk_and_grad(&theta, mu, sigma, attack);
        f = nf;
        g = ng;
        step *= 2.0;
    }
    let tangent = &g - &theta * g.dot(&theta);
    tangent.norm() <= cfg.pgd_grad_tol
}

/// The ridge family `theta(t) = (Sigma11 + t I)^{-1} mu1` via one eigendecomposition.
struct RidgePath {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    projected_mu: DVector<f64>,
}

impl RidgePath {
    fn new(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Self {
        let eig = sigma.clone().symmetric_eigen();
        let projected_mu = eig.eigenvectors.transpose() * mu;
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
            projected_mu,
        }
    }

    fn max_eigenvalue(&self) -> f64 {
        self.values.max()
    }

    fn at(&self, t: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.values.len(),
            self.values.iter().zip(self.projected_mu.iter()).map(|(l, m)| m / (l + t)),
        );
        let v = &self.vectors * scaled;
        // Scale-free direction: normalize to avoid underflow for large t.
        &v / v.norm()
    }
}

/// Best robust linear direction and its risk.
///
/// L2: golden-section search over the ridge family followed by projected
/// gradient refinement on the unit sphere. L-infinity: multi-start projected
/// gradient, seeded with the ridge-family answer and `Sigma11^{-1} mu1`.
pub fn optimal_robust(model: &GaussianMixture, attack: &AttackSpec, cfg: &RobustSearchConfig) -> RobustOptimum {
    optimal_robust_raw(model.mu1(), model.sigma11(), attack, cfg)
}

pub(crate) fn optimal_robust_raw(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    attack: &AttackSpec,
    cfg: &RobustSearchConfig,
) -> RobustOptimum {
    let path = RidgePath::new(mu, sigma);
    let t_max = cfg.t_grid_max.unwrap_or(1e3 * path.max_eigenvalue());
    let risk_at = |t: f64| risk_raw(&path.at(t), mu, sigma, attack);

    let bayes = path.at(0.0);
    let mut best = Best {
        risk: risk_raw(&bayes, mu, sigma, attack),
        theta: bayes.clone(),
    };
    let limit = path.at(t_max);
    best.offer(&limit, risk_raw(&limit, mu, sigma, attack));

    // Coarse log grid brackets the minimum before the golden-section stage.
    let grid: Vec<f64> = std::iter::once(0.0)
        .chain((0..=40).map(|k| t_max * 10f64.powf(-8.0 + 8.0 * k as f64 / 40.0)))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| risk_at(t)).collect();
    let k = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let (t_star, _) = golden_section(risk_at, lo, hi, cfg.golden_tol);
    let golden_theta = path.at(t_star);
    best.offer(&golden_theta, risk_raw(&golden_theta, mu, sigma, attack));

    let mut converged = false;
    let mut starts = vec![best.theta.clone(), bayes, mu / mu.norm()];
    if attack.norm == Norm::Linf {
        starts.push(mu.map(|v| if v >= 0.0 { 1.0 } else { -1.0 }));
    }
    let mut rng = Seed::new(0x5eed_0f_b0b).stream("robust-starts", mu.len() as u64);
    while starts.len() < cfg.pgd_restarts.max(1) {
        let v = DVector::from_iterator(mu.len(), (0..mu.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
        if v.norm() > 0.0 {
            starts.push(v);
        }
    }
    let runs = if attack.norm == Norm::L2 { 1 } else { starts.len() };
    for start in starts.iter().take(runs) {
        converged |= sphere_pgd(start, mu, sigma, attack, cfg, &mut best);
    }
    if !converged && attack.norm == Norm::L2 {
        for start in starts.iter().skip(1) {
            converged |= sphere_pgd(start, mu, sigma, attack, cfg, &mut best);
        }
    }
    RobustOptimum {
        theta: LinearClassifier { theta: best.theta },
        risk: best.risk,
        converged,
    }
}

/// Golden-section stage only (L2 ridge family), exposed for diagnostics.
pub fn ridge_family_optimum(model: &GaussianMixture, attack: &AttackSpec, cfg: &RobustSearchConfig) -> (DVector<f64>, f64) {
    let (mu, sigma) = (model.mu1(), model.sigma11());
    let path = RidgePath::new(mu, sigma);
    let t_max = cfg.t_grid_max.unwrap_or(1e3 * path.max_eigenvalue());
    let risk_at = |t: f64| risk_raw(&path.at(t), mu, sigma, attack);
    let (t, r) = golden_section(risk_at, 0.0, t_max, cfg.golden_tol);
    let (r0, rmax) = (risk_at(0.0), risk_at(t_max));
    if r0 <= r && r0 <= rmax {
        (path.at(0.0), r0)
    } else if rmax < r {
        (path.at(t_max), rmax)
    } else {
        (path.at(t), r)
    }
}

/// Adversarial risk of `theta` minus the best achievable robust risk,
/// clamped at zero.
pub fn regret(
    theta: &LinearClassifier,
    model: &GaussianMixture,
    attack: &AttackSpec,
    cfg: &RobustSearchConfig,
) -> Result<f64> {
    let r_star = optimal_robust(model, attack, cfg).risk;
    regret_against(theta, model, attack, r_star)
}

/// [`regret`] with a precomputed optimal risk.
pub fn regret_against(theta: &LinearClassifier, model: &GaussianMixture, attack: &AttackSpec, r_star: f64) -> Result<f64> {
    Ok((adv_risk(theta, model, attack)? - r_star).max(0.0))
}

/// Monte Carlo estimate of [`adv_risk`]: a draw counts as an error iff
/// `y theta^T x <= eps q(theta)`.
pub fn mc_risk(
    theta: &LinearClassifier,
    model: &GaussianMixture,
    attack: &AttackSpec,
    n_samples: usize,
    seed: Seed,
) -> Result<f64> {
    check_dims(theta, model)?;
    if n_samples == 0 {
        return Err(Error::InvalidConfig("mc_risk needs at least one sample".into()));
    }
    let shift = attack.margin_shift(theta.theta());
    let mut rng = seed.stream("mc-risk", 0);
    let mut errors = 0usize;
    // Chunked to bound memory for large sample counts.
    let chunk = 1 << 14;
    let mut left = n_samples;
    while left > 0 {
        let n = left.min(chunk);
        let (x1, y) = model.draw_x1(&mut rng, n);
        let scores = &x1 * theta.theta();
        errors += scores.iter().zip(y.iter()).filter(|(s, y)| *y * *s <= shift).count();
        left -= n;
    }
    Ok(errors as f64 / n_samples as f64)
}
