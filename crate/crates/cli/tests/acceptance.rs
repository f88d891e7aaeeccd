//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use reconlab::adversarial::{adv_empirical_loss, AdvTrainConfig, LabeledPool};
use reconlab::estimators::{pretext_objective, pretext_objective_grad_beta};
use reconlab::experiments::{
    fit_rate, ntk_study, preset_spec, pseudolabel_sensitivity, rate_rows, run_experiment, sensitivity_spec, Method,
    NtkStudyConfig, PresetId, SizeField, SummaryRow,
};
use reconlab::oracle::{attack_suite, direction_grid_search};
use reconlab::risk::{adv_risk, mc_risk, optimal_robust};
use reconlab::{AttackSpec, GaussianMixture, LinearClassifier, Loss, Norm, OptimConfig, RobustSearchConfig, Seed};
use reconlab_cli::io::read_summary_file;

type Outcome = Result<String, String>;

fn gauss<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn gauss_mat<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(r, c, (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn row(rows: &[SummaryRow], m: Method, n3: usize) -> Result<&SummaryRow, String> {
    rows.iter()
        .find(|r| r.method == m && r.sizes.n3 == n3)
        .ok_or_else(|| format!("no {m} row at n3={n3}"))
}

fn combined_se(a: &SummaryRow, b: &SummaryRow) -> f64 {
    (a.std_err().powi(2) + b.std_err().powi(2)).sqrt()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_table1(dir: &Path, threads: usize) -> Result<(), String> {
    let out = dir.join(format!("t1_threads{threads}.csv"));
    let status = Command::new(env!("CARGO_BIN_EXE_reconlab"))
        .args(["reproduce", "--table", "1", "--threads", &threads.to_string(), "--out"])
        .arg(&out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("reproduce exited with {status}"))
    }
}

fn table1(rows: &[SummaryRow]) -> Outcome {
    let ssl = row(rows, Method::SslPlugin, 20000)?.mean_regret;
    let lab = row(rows, Method::LabeledPlugin, 20000)?.mean_regret;
    let mut dominated = true;
    for r in rows.iter().filter(|r| r.method == Method::SslPlugin && r.sizes.n3 >= 1000) {
        dominated &= r.mean_regret < row(rows, Method::LabeledPlugin, r.sizes.n3)?.mean_regret;
    }
    check(
        (1e-4..=1e-3).contains(&ssl) && (5e-3..=1.5e-2).contains(&lab) && dominated,
        format!("ssl {ssl:.6} in [1e-4, 1e-3], labeled {lab:.6} in [5e-3, 1.5e-2], ssl below labeled for n3 >= 1000: {dominated}"),
    )
}

fn rate_t1(rows: &[SummaryRow]) -> Outcome {
    let picked = rate_rows(rows, Method::SslPlugin, SizeField::N3, 1000);
    let fit = fit_rate(&picked, SizeField::N3).map_err(|e| e.to_string())?;
    check(
        fit.n_points == 4 && (-1.35..=-0.75).contains(&fit.slope),
        format!("slope {:.4} ± {:.4} over {} points", fit.slope, fit.stderr, fit.n_points),
    )
}

fn table2() -> Outcome {
    let res = run_experiment(&preset_spec(PresetId::T2), None).map_err(|e| e.to_string())?;
    let rows = &res.summaries;
    let bench = row(rows, Method::BenchmarkOracle, 20000)?;
    let ssl = row(rows, Method::AdvSsl, 20000)?;
    let s4 = row(rows, Method::AdvSslS4, 20000)?;
    let pseudo = row(rows, Method::AdvPseudoClean, 20000)?;
    let lab = row(rows, Method::AdvLabeledOnly, 20000)?;
    let ordered = bench.mean_regret < ssl.mean_regret && ssl.mean_regret < pseudo.mean_regret.min(lab.mean_regret);
    let gap = (ssl.mean_regret - s4.mean_regret).abs();
    let tol = 2.0 * combined_se(ssl, s4);
    check(
        ordered && ssl.mean_regret <= 4e-3 && gap <= tol,
        format!(
            "benchmark {:.6} < adv_ssl {:.6} < min(pseudo {:.6}, labeled {:.6}): {ordered}; |adv_ssl - s4| {gap:.2e} <= {tol:.2e}",
            bench.mean_regret, ssl.mean_regret, pseudo.mean_regret, lab.mean_regret
        ),
    )
}

fn within_factor(x: f64, reference: f64, f: f64) -> bool {
    x <= reference * f && x >= reference / f
}

fn tables34() -> Outcome {
    let t3 = run_experiment(&preset_spec(PresetId::T3), None).map_err(|e| e.to_string())?.summaries;
    let t4 = run_experiment(&preset_spec(PresetId::T4), None).map_err(|e| e.to_string())?.summaries;
    let ssl = row(&t3, Method::SslLogistic, 20000)?.mean_regret;
    let lab = row(&t3, Method::LabeledLogistic, 20000)?.mean_regret;
    let bench = row(&t4, Method::BenchmarkOracle, 20000)?.mean_regret;
    let adv = row(&t4, Method::AdvSsl, 20000)?.mean_regret;
    let pseudo = row(&t4, Method::AdvPseudoClean, 20000)?.mean_regret;
    let adv_lab = row(&t4, Method::AdvLabeledOnly, 20000)?.mean_regret;
    let ordered = ssl < lab && bench < adv && adv < pseudo.min(adv_lab);
    let sized = ssl <= 1e-3 && adv <= 1e-3 && within_factor(ssl, 0.00015, 3.0) && within_factor(adv, 0.00020, 3.0);
    check(
        ordered && sized,
        format!("ssl_logistic {ssl:.6} < labeled {lab:.6}; benchmark {bench:.6} < adv_ssl {adv:.6} < min(pseudo {pseudo:.6}, labeled {adv_lab:.6})"),
    )
}

fn attack_oracle() -> Outcome {
    let r = attack_suite(100, 10_000, 200, 1e-9, Seed::new(0)).map_err(|e| e.to_string())?;
    check(r.passed, format!("{} instances, worst margin {:.3e}", r.instances, r.worst_margin))
}

fn random_mixture<R: Rng>(rng: &mut R, d1: usize) -> GaussianMixture {
    let d = d1 + 1;
    let a = gauss_mat(rng, d, d) * 0.5;
    let sigma = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
    let mut mu = gauss(rng, d);
    let scale = rng.random_range(0.6..1.5) / mu.rows(0, d1).norm();
    mu.rows_mut(0, d1).scale_mut(scale);
    GaussianMixture::new(d1, 1, mu, sigma).expect("random model")
}

fn mc_agreement() -> Outcome {
    let mut rng = Seed::new(6).stream("acceptance-mc", 0);
    let eps_levels = [0.0, 0.1, 0.5];
    let n = 100_000;
    let mut worst = 0.0f64;
    let mut fails = 0;
    for k in 0..50 {
        let d1 = rng.random_range(2..=5);
        let model = random_mixture(&mut rng, d1);
        let attack = AttackSpec::new(if k % 2 == 0 { Norm::L2 } else { Norm::Linf }, eps_levels[k % 3]).unwrap();
        let theta = LinearClassifier::new(model.posterior_coef() + gauss(&mut rng, d1) * 0.3).unwrap();
        let r = adv_risk(&theta, &model, &attack).map_err(|e| e.to_string())?;
        let m = mc_risk(&theta, &model, &attack, n, Seed::new(1000 + k as u64)).map_err(|e| e.to_string())?;
        let bound = 3.0 * (r * (1.0 - r) / n as f64).sqrt();
        worst = worst.max((r - m).abs() / bound);
        if (r - m).abs() > bound {
            fails += 1;
        }
    }
    check(fails == 0, format!("50 instances, largest |analytic - mc| / bound = {worst:.3}"))
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn central_diff<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|j| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[j] += h;
            m[j] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        }),
    )
}

fn kink_free(theta: &DVector<f64>, pool: &LabeledPool, cfg: &AdvTrainConfig) -> bool {
    let q = cfg.attack.margin_shift(theta);
    let coords_ok = cfg.attack.norm == Norm::L2 || theta.iter().all(|t| t.abs() > 1e-3);
    let margins_ok = cfg.loss == Loss::Logistic
        || (pool.x1() * theta).iter().all(|z| (1.0 - z).abs() > 1e-3 + q && (1.0 + z).abs() > 1e-3 + q);
    coords_ok && margins_ok
}

fn gradient_checks() -> Outcome {
    let mut rng = Seed::new(7).stream("acceptance-grad", 0);
    let h = 1e-5;
    let mut worst_adv = 0.0f64;
    let mut done = 0;
    while done < 20 {
        let d = rng.random_range(2..=5);
        let n = 30;
        let x1 = gauss_mat(&mut rng, n, d);
        let p = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(0.0..1.0)));
        let pool = LabeledPool::from_probs(x1, p).unwrap();
        let cfg = AdvTrainConfig {
            loss: if done % 2 == 0 { Loss::Logistic } else { Loss::Square },
            attack: AttackSpec::new(if done % 4 < 2 { Norm::L2 } else { Norm::Linf }, 0.1).unwrap(),
            opt: OptimConfig::default(),
        };
        let theta = gauss(&mut rng, d) * 0.5;
        if !kink_free(&theta, &pool, &cfg) {
            continue;
        }
        let (_, g) = adv_empirical_loss(&theta, &pool, &cfg).map_err(|e| e.to_string())?;
        let fd = central_diff(|t| adv_empirical_loss(t, &pool, &cfg).unwrap().0, &theta, h);
        worst_adv = worst_adv.max(rel_err(&fd, &g));
        done += 1;
    }
    let mut worst_pre = 0.0f64;
    for _ in 0..20 {
        let d1 = rng.random_range(2..=5);
        let d2 = rng.random_range(1..=3);
        let n = 40;
        let x1 = gauss_mat(&mut rng, n, d1);
        let x2 = gauss_mat(&mut rng, n, d2);
        let beta = gauss(&mut rng, d1) * 0.5;
        let mu2 = gauss(&mut rng, d2);
        let g = pretext_objective_grad_beta(&beta, &mu2, &x1, &x2);
        let fd = central_diff(|b| pretext_objective(b, &mu2, &x1, &x2), &beta, h);
        worst_pre = worst_pre.max(rel_err(&fd, &g));
    }
    check(
        worst_adv <= 1e-5 && worst_pre <= 1e-5,
        format!("max relative error: adversarial loss {worst_adv:.2e}, pretext objective {worst_pre:.2e}"),
    )
}

fn robust_oracle() -> Outcome {
    let mut rng = Seed::new(8).stream("acceptance-robust", 0);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (c, s) = (angle.cos(), angle.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, rng.random_range(0.1..0.6)]));
        let s11 = &rot * diag * rot.transpose();
        let mut sigma = DMatrix::identity(3, 3);
        sigma.view_mut((0, 0), (2, 2)).copy_from(&s11);
        let mu = DVector::from_vec(vec![rng.random_range(0.3..1.2), rng.random_range(-1.0..1.0), 0.5]);
        let model = GaussianMixture::new(2, 1, mu, sigma).unwrap();
        let norm = if k % 2 == 0 { Norm::L2 } else { Norm::Linf };
        let attack = AttackSpec::new(norm, rng.random_range(0.05..0.3)).unwrap();
        let opt = optimal_robust(&model, &attack, &RobustSearchConfig::default());
        let (_, grid) = direction_grid_search(&model, &attack, 100_000).map_err(|e| e.to_string())?;
        worst = worst.max((opt.risk - grid).abs());
    }
    check(worst <= 1e-4, format!("10 models, largest |optimum - grid| = {worst:.2e}"))
}

fn regression_rates() -> Outcome {
    let rows = run_experiment(&preset_spec(PresetId::Reg), None).map_err(|e| e.to_string())?.summaries;
    let fit3 = fit_rate(&rate_rows(&rows, Method::RegSsl, SizeField::N3, 0), SizeField::N3).map_err(|e| e.to_string())?;
    let fit2 = fit_rate(&rate_rows(&rows, Method::RegSsl, SizeField::N2, 0), SizeField::N2).map_err(|e| e.to_string())?;
    let ok = |s: f64| (-1.35..=-0.75).contains(&s);
    check(
        ok(fit3.slope) && ok(fit2.slope),
        format!("slope vs n3 {:.4} ± {:.4}, vs n2 {:.4} ± {:.4}", fit3.slope, fit3.stderr, fit2.slope, fit2.stderr),
    )
}

fn ntk_properties() -> Outcome {
    let rep = ntk_study(&NtkStudyConfig::default(), None).map_err(|e| e.to_string())?;
    let below = rep.pretext_mse.iter().zip(&rep.constant_mse).all(|(p, c)| p < c);
    let (ssl, lab) = (rep.mean_ssl_accuracy(), rep.mean_labeled_accuracy());
    check(
        rep.max_movement() <= 0.1 && below && ssl >= lab,
        format!(
            "lambda {}, max movement {:.4}, pretext below constant on every seed: {below}, accuracy ssl {ssl:.4} vs labeled {lab:.4}",
            rep.lambda,
            rep.max_movement()
        ),
    )
}

fn sensitivity() -> Outcome {
    let levels = [0.0, 0.1, 0.2, 0.4];
    let rows = pseudolabel_sensitivity(&sensitivity_spec(), &levels, None).map_err(|e| e.to_string())?;
    let monotone = rows
        .windows(2)
        .all(|w| w[1].mean_regret >= w[0].mean_regret - 2.0 * (w[0].se_regret.powi(2) + w[1].se_regret.powi(2)).sqrt());
    let last = rows.last().expect("rows");
    let strict = last.excess > 3.0 * last.excess_se;
    let means: Vec<String> = rows.iter().map(|r| format!("{:.6}", r.mean_regret)).collect();
    check(
        monotone && strict,
        format!("regret by delta [{}], excess at 0.4 = {:.2e} (se {:.2e})", means.join(", "), last.excess, last.excess_se),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let mut same = true;
    for name in ["t1_threads{}.csv", "t1_threads{}.summary.csv"] {
        let a = std::fs::read(dir.join(name.replace("{}", "1"))).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.join(name.replace("{}", "8"))).map_err(|e| e.to_string())?;
        same &= a == b;
    }
    check(same, format!("trial and summary CSVs byte-identical across 1 and 8 threads: {same}"))
}

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut failures = 0;
    let mut report = |id: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d} [{secs:.0}s]"),
            Err(d) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {d} [{secs:.0}s]");
            }
        }
    };

    let t = Instant::now();
    let t1_runs = run_table1(dir.path(), 1).and_then(|_| run_table1(dir.path(), 8));
    let t1_rows: Result<Vec<SummaryRow>, String> = t1_runs.clone().and_then(|_| {
        read_summary_file(&dir.path().join("t1_threads1.summary.csv"))
            .map(|v| v.into_iter().map(|s| s.row).collect())
            .map_err(|e| e.to_string())
    });
    report(1, "table 1", t, t1_rows.as_deref().map_err(Clone::clone).and_then(table1));
    let t = Instant::now();
    report(2, "table 1 rate", t, t1_rows.as_deref().map_err(Clone::clone).and_then(rate_t1));
    let t = Instant::now();
    report(3, "table 2", t, table2());
    let t = Instant::now();
    report(4, "tables 3 and 4", t, tables34());
    let t = Instant::now();
    report(5, "closed-form attack", t, attack_oracle());
    let t = Instant::now();
    report(6, "analytic vs Monte Carlo risk", t, mc_agreement());
    let t = Instant::now();
    report(7, "gradient checks", t, gradient_checks());
    let t = Instant::now();
    report(8, "robust optimum vs grid", t, robust_oracle());
    let t = Instant::now();
    report(9, "regression rates", t, regression_rates());
    let t = Instant::now();
    report(10, "two-layer network properties", t, ntk_properties());
    let t = Instant::now();
    report(11, "pseudolabel sensitivity", t, sensitivity());
    let t = Instant::now();
    report(12, "thread-count determinism", t, t1_runs.and_then(|_| determinism(dir.path())));

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
