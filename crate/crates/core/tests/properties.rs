use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use reconlab::adversarial::{adv_empirical_loss, attack_point, pointwise_loss, AdvTrainConfig, LabeledPool};
use reconlab::estimators::{normalize_rows, ntk_gram, ntk_kernel, pretext_objective};
use reconlab::experiments::{fit_rate, Method, SizeField, SummaryRow};
use reconlab::risk::{adv_risk, optimal_robust, regret_against};
use reconlab::{
    AttackSpec, BankSizes, GaussianMixture, LinearClassifier, Loss, Norm, OptimConfig, RobustSearchConfig, Seed,
};

fn vec_of(d: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0..2.0f64, d).prop_map(DVector::from_vec)
}

fn nonzero_vec(d: usize) -> impl Strategy<Value = DVector<f64>> {
    vec_of(d).prop_filter("nonzero", |v| v.norm() > 1e-3)
}

fn norm_strategy() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L2), Just(Norm::Linf)]
}

fn loss_strategy() -> impl Strategy<Value = Loss> {
    prop_oneof![Just(Loss::Square), Just(Loss::Logistic)]
}

fn project(delta: &DVector<f64>, norm: Norm, eps: f64) -> DVector<f64> {
    match norm {
        Norm::L2 => {
            let n = delta.norm();
            if n > eps {
                delta * (eps / n)
            } else {
                delta.clone()
            }
        }
        Norm::Linf => delta.map(|v| v.clamp(-eps, eps)),
    }
}

fn isotropic_model(d1: usize, mu: &DVector<f64>) -> GaussianMixture {
    let mut full = DVector::zeros(d1 + 1);
    full.rows_mut(0, d1).copy_from(mu);
    full[d1] = 0.5;
    GaussianMixture::new(d1, 1, full, DMatrix::identity(d1 + 1, d1 + 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_attack_beats_any_ball_point(
        (x, theta, delta) in (2usize..6).prop_flat_map(|d| (vec_of(d), nonzero_vec(d), vec_of(d))),
        y in prop_oneof![Just(1.0f64), Just(-1.0)],
        eps in 0.0..1.0f64,
        norm in norm_strategy(),
        loss in loss_strategy(),
    ) {
        let attack = AttackSpec::new(norm, eps).unwrap();
        let xt = attack_point(&x, y, &theta, &attack, loss).unwrap();
        let worst = pointwise_loss(&xt, y, &theta, loss);
        let other = pointwise_loss(&(&x + project(&delta, norm, eps)), y, &theta, loss);
        prop_assert!(worst >= other - 1e-9 * (1.0 + other.abs()));
        prop_assert!(project(&(&xt - &x), norm, eps).relative_eq(&(&xt - &x), 1e-12, 1e-12));
    }

    #[test]
    fn adversarial_loss_is_convex_along_segments(
        (rows, a, b) in (2usize..5).prop_flat_map(|d| (prop::collection::vec(vec_of(d), 5..20), vec_of(d), vec_of(d))),
        probs in prop::collection::vec(0.0..1.0f64, 20),
        norm in norm_strategy(),
        loss in loss_strategy(),
        eps in 0.0..0.5f64,
        t in 0.0..1.0f64,
    ) {
        let x1 = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        let p = DVector::from_vec(probs[..rows.len()].to_vec());
        let pool = LabeledPool::from_probs(x1, p).unwrap();
        let cfg = AdvTrainConfig { loss, attack: AttackSpec::new(norm, eps).unwrap(), opt: OptimConfig::default() };
        let f = |th: &DVector<f64>| adv_empirical_loss(th, &pool, &cfg).unwrap().0;
        let mid = &a * t + &b * (1.0 - t);
        let chord = t * f(&a) + (1.0 - t) * f(&b);
        prop_assert!(f(&mid) <= chord + 1e-9 * (1.0 + chord.abs()));
    }

    #[test]
    fn hard_labels_equal_degenerate_probabilities(
        (rows, theta) in (2usize..5).prop_flat_map(|d| (prop::collection::vec(vec_of(d), 3..12), vec_of(d))),
        signs in prop::collection::vec(any::<bool>(), 12),
        loss in loss_strategy(),
        norm in norm_strategy(),
    ) {
        let n = rows.len();
        let x1 = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        let y = DVector::from_iterator(n, signs[..n].iter().map(|s| if *s { 1.0 } else { -1.0 }));
        let p = y.map(|v| (1.0 + v) / 2.0);
        let cfg = AdvTrainConfig { loss, attack: AttackSpec::new(norm, 0.2).unwrap(), opt: OptimConfig::default() };
        let hard = LabeledPool::from_labels(x1.clone(), &y).unwrap();
        let soft = LabeledPool::from_probs(x1, p).unwrap();
        let (lh, gh) = adv_empirical_loss(&theta, &hard, &cfg).unwrap();
        let (ls, gs) = adv_empirical_loss(&theta, &soft, &cfg).unwrap();
        prop_assert!((lh - ls).abs() <= 1e-12 * (1.0 + lh.abs()));
        prop_assert!((&gh - &gs).norm() <= 1e-12 * (1.0 + gh.norm()));
    }

    #[test]
    fn risk_grows_with_radius_and_ignores_scale(
        (mu, theta) in (2usize..6).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d))),
        norm in norm_strategy(),
        e1 in 0.0..1.0f64,
        e2 in 0.0..1.0f64,
        scale in 0.1..10.0f64,
    ) {
        let model = isotropic_model(mu.len(), &mu);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let th = LinearClassifier::new(theta.clone()).unwrap();
        let r_lo = adv_risk(&th, &model, &AttackSpec::new(norm, lo).unwrap()).unwrap();
        let r_hi = adv_risk(&th, &model, &AttackSpec::new(norm, hi).unwrap()).unwrap();
        prop_assert!(r_lo <= r_hi + 1e-15);
        prop_assert!((0.0..=1.0).contains(&r_hi));
        let scaled = LinearClassifier::new(theta * scale).unwrap();
        let r_scaled = adv_risk(&scaled, &model, &AttackSpec::new(norm, hi).unwrap()).unwrap();
        prop_assert!((r_scaled - r_hi).abs() <= 1e-12);
    }

    #[test]
    fn regret_is_nonnegative_and_optimum_beats_bayes_direction(
        (mu, theta) in (2usize..4).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d))),
        norm in norm_strategy(),
        eps in 0.0..0.3f64,
    ) {
        let model = isotropic_model(mu.len(), &mu);
        let attack = AttackSpec::new(norm, eps).unwrap();
        let cfg = RobustSearchConfig { pgd_restarts: 4, pgd_steps: 200, ..RobustSearchConfig::default() };
        let opt = optimal_robust(&model, &attack, &cfg);
        let bayes = LinearClassifier::new(model.posterior_coef().clone()).unwrap();
        prop_assert!(opt.risk <= adv_risk(&bayes, &model, &attack).unwrap() + 1e-12);
        let th = LinearClassifier::new(theta).unwrap();
        prop_assert!(regret_against(&th, &model, &attack, opt.risk).unwrap() >= 0.0);
    }

    #[test]
    fn ntk_gram_is_symmetric_psd(rows in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 2..15)) {
        let raw = DMatrix::from_row_iterator(rows.len(), 3, rows.iter().flatten().copied());
        prop_assume!(raw.row_iter().all(|r| r.norm() > 1e-3));
        let x = normalize_rows(&raw);
        let g = ntk_gram(&x).unwrap();
        prop_assert!((&g - g.transpose()).amax() <= 1e-15);
        prop_assert!(g.symmetric_eigen().eigenvalues.min() >= -1e-10);
        let s: Vec<f64> = x.row(0).iter().copied().collect();
        prop_assert!((ntk_kernel(&s, &s) - 0.5).abs() <= 1e-7);
    }

    #[test]
    fn pretext_objective_is_nonnegative(
        beta in vec_of(3),
        mu2 in vec_of(2),
        x1 in prop::collection::vec(-3.0..3.0f64, 30),
        x2 in prop::collection::vec(-3.0..3.0f64, 20),
    ) {
        let x1 = DMatrix::from_row_slice(10, 3, &x1);
        let x2 = DMatrix::from_row_slice(10, 2, &x2);
        prop_assert!(pretext_objective(&beta, &mu2, &x1, &x2) >= 0.0);
    }

    #[test]
    fn rate_fit_recovers_exact_power_laws(slope in -2.0..-0.2f64, c in 0.01..10.0f64, n1 in 10usize..200) {
        let rows: Vec<SummaryRow> = [500usize, 1000, 5000, 20000]
            .iter()
            .map(|&n3| SummaryRow {
                method: Method::SslPlugin,
                sizes: BankSizes::new(n1, 0, n3, 0),
                mean_regret: c * ((n1 + n3) as f64).powf(slope),
                var_regret: 0.0,
                n_reps: 10,
            })
            .collect();
        let fit = fit_rate(&rows, SizeField::N3).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-9);
    }

    #[test]
    fn seed_derivation_is_a_function_of_its_inputs(master in any::<u64>(), i in 0u64..1000, j in 0u64..1000) {
        let s = Seed::new(master);
        prop_assert_eq!(s.child("rep", i), s.child("rep", i));
        if i != j {
            prop_assert_ne!(s.child("rep", i), s.child("rep", j));
        }
        prop_assert_ne!(s.child("rep", i), s.child("trial", i));
    }

    #[test]
    fn sampled_bank_has_requested_sizes(n1 in 0usize..30, n2 in 0usize..30, n3 in 0usize..30, n4 in 0usize..30, seed in any::<u64>()) {
        let model = GaussianMixture::isotropic(3, 2).unwrap();
        let sizes = BankSizes::new(n1, n2, n3, n4);
        let a = model.sample_bank(sizes, Seed::new(seed));
        prop_assert_eq!(a.sizes(), sizes);
        let b = model.sample_bank(sizes, Seed::new(seed));
        prop_assert_eq!(a.pretext_data(), b.pretext_data());
        prop_assert!(a.has_binary_labels());
    }
}
