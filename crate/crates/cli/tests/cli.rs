use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand_distr::StandardNormal;
use reconlab::Seed;

fn reconlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reconlab")).args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 3
reps = 4
methods = ["ssl_plugin", "labeled_plugin", "adv_ssl"]

[model]
kind = "mixture"
d1 = 3
d2 = 1

[attack]
norm = "l2"
eps = 0.1

[grid]
n1 = [60]
n3 = [200, 400, 800]
"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn simulate(dir: &Path, cfg: &str, name: &str, threads: &str) -> String {
    let out = dir.join(name);
    let o = reconlab(&["simulate", "--config", cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(reconlab(&["--help"]).status.code(), Some(0));
    assert_eq!(reconlab(&["--version"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = reconlab(&["reproduce", "--table", "1", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn bad_flag_value_is_usage_error() {
    let o = reconlab(&["reproduce", "--table", "9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--table"));
    let o = reconlab(&["reproduce", "--table", "1", "--norm", "l3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_file_is_runtime_error() {
    let o = reconlab(&["plot", "--in", "/nonexistent/x.summary.csv", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("IoError"));
}

#[test]
fn invalid_config_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, SMALL.replace("reps = 4", "reps = 4\nunknown_key = 1")).unwrap();
    let o = reconlab(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("InvalidConfig"));
}

#[test]
fn simulate_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = simulate(dir.path(), &cfg, "run.csv", "1");
    let trials = std::fs::read_to_string(&out).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("run.summary.csv")).unwrap();
    // 3 methods x 3 sizes x 4 reps, plus header
    assert_eq!(trials.lines().count(), 1 + 36);
    assert_eq!(summary.lines().count(), 1 + 9);
    assert!(trials.starts_with("method,n1,n2,n3,n4,d1,d2,eps,norm,rep,regret,status\n"));
    assert!(trials.lines().skip(1).all(|l| l.ends_with(",ok")));
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = simulate(dir.path(), &cfg, "a.csv", "1");
    let b = simulate(dir.path(), &cfg, "b.csv", "3");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.summary.csv")).unwrap(),
        std::fs::read(dir.path().join("b.summary.csv")).unwrap()
    );
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = simulate(dir.path(), &cfg, "a.csv", "1");
    let out = dir.path().join("c.csv");
    let o = reconlab(&["simulate", "--config", &cfg, "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(a).unwrap(), std::fs::read(out).unwrap());
}

#[test]
fn rate_check_and_plot_read_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    simulate(dir.path(), &cfg, "run.csv", "1");
    let summary = dir.path().join("run.summary.csv");
    let o = reconlab(&["rate-check", "--in", summary.to_str().unwrap(), "--method", "ssl_plugin", "--vary", "n3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("slope"));
    assert!(stdout(&o).contains("over 3 points"));

    let prefix = dir.path().join("fig");
    let o = reconlab(&["plot", "--in", summary.to_str().unwrap(), "--out", prefix.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let script = std::fs::read_to_string(dir.path().join("fig.gp")).unwrap();
    assert_eq!(script.matches("yerrorlines").count(), 3);
    assert!(dir.path().join("fig.csv").exists());
}

#[test]
fn rate_check_with_too_few_points_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    simulate(dir.path(), &cfg, "run.csv", "1");
    let summary = dir.path().join("run.summary.csv");
    let o = reconlab(&["rate-check", "--in", summary.to_str().unwrap(), "--method", "ssl_plugin", "--min-n", "800"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attack_check_passes() {
    let o = reconlab(&["attack-check", "--instances", "10", "--ball-samples", "500", "--pgd-steps", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS"));
}

fn write_mixture_csv(path: &Path, n: usize) {
    let mut rng = Seed::new(11).stream("cli-test-csv", 0);
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["a", "b", "aux", "label", "split"]).unwrap();
    for i in 0..n {
        let y: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut z = || rng.sample::<f64, _>(StandardNormal);
        let (a, b, aux) = (y + z(), 0.5 * y + z(), y + z());
        let split = match i % 10 {
            0 => 1,
            1 => 0,
            _ => 3,
        };
        w.write_record([a.to_string(), b.to_string(), aux.to_string(), y.to_string(), split.to_string()])
            .unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn fit_on_csv_reports_direction_and_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_mixture_csv(&data, 3000);
    let o = reconlab(&[
        "fit", "--data", data.to_str().unwrap(), "--x1-cols", "0..2", "--x2-cols", "2..3", "--y-col", "3", "--split-col", "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("S1 300"), "{text}");
    let acc: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("holdout accuracy: "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.75, "{text}");
}

#[test]
fn fit_rejects_malformed_range() {
    let o = reconlab(&["fit", "--data", "x.csv", "--x1-cols", "3..1", "--x2-cols", "0..1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--x1-cols"));
}
