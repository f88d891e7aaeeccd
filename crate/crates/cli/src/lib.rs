//! Command-line driver: table reproduction, custom sweeps, rate checks,
//! attack checks, fitting on CSV data and plot emission.

pub mod config;
pub mod io;
pub mod plot;

use std::ffi::OsString;
use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use reconlab::experiments::{fit_rate, preset_spec, rate_rows, run_experiment, ExperimentSpec, Method, PresetId, SizeField};
use reconlab::models::{ingest_csv_with_holdout, CsvSchema, SplitAssignment};
use reconlab::oracle::attack_suite;
use reconlab::{
    run_algorithm1, AdvMethod, AdvTrainConfig, AttackSpec, Error, Loss, Norm, OptimConfig, PipelineConfig, PretextKind,
    PseudolabelPolicy, Result, Seed,
};
use reconlab::estimators::{fit_downstream, fit_pretext_linear, fit_pretext_param_ci, induced_direction, PretextModel};

use crate::io::{write_results, RunLabels};

#[derive(Debug, Parser)]
#[command(name = "reconlab", version, about = "Semi-supervised robust classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a table preset (1, 2, 3, 4 or reg) and write trial and summary CSVs.
    Reproduce(ReproduceArgs),
    /// Run a sweep described by a TOML file (see the crate docs for keys).
    Simulate(SimulateArgs),
    /// Fit the log-log slope of mean regret against n1 + n_vary.
    RateCheck(RateCheckArgs),
    /// Compare closed-form attacks with ball sampling and projected gradient ascent.
    AttackCheck(AttackCheckArgs),
    /// Run the semi-supervised pipeline on a CSV file.
    Fit(FitArgs),
    /// Emit a gnuplot script and data file from a summary CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct RunFlags {
    /// Master seed (presets default to 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per grid point and method.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Trial CSV path; the summary goes to the `.summary.csv` sibling.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Attack radius override.
    #[arg(long)]
    eps: Option<f64>,
    /// Attack norm override.
    #[arg(long, value_parser = parse_norm)]
    norm: Option<Norm>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long, value_parser = parse_preset)]
    table: PresetId,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct RateCheckArgs {
    /// Summary CSV.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value = "n3", value_parser = parse_size_field)]
    vary: SizeField,
    /// Ignore rows whose varied size is below this.
    #[arg(long, default_value_t = 0)]
    min_n: usize,
}

#[derive(Debug, Args)]
struct AttackCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 10_000)]
    ball_samples: usize,
    #[arg(long, default_value_t = 200)]
    pgd_steps: usize,
    #[arg(long, default_value_t = 1e-9)]
    slack: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Zero-based half-open column range of x1, e.g. `0..5`.
    #[arg(long = "x1-cols", value_parser = parse_range)]
    x1_cols: Range<usize>,
    /// Zero-based half-open column range of x2.
    #[arg(long = "x2-cols", value_parser = parse_range)]
    x2_cols: Range<usize>,
    /// Label column (values > 0 map to +1, others to -1).
    #[arg(long = "y-col")]
    y_col: Option<usize>,
    /// Column holding 1-4 for S1..S4 and 0 for holdout.
    #[arg(long = "split-col", conflicts_with = "fractions")]
    split_col: Option<usize>,
    /// Fractions of rows sent to S1..S4; the rest is holdout.
    #[arg(long, value_parser = parse_fractions, default_value = "0.1,0,0.7,0")]
    fractions: [f64; 4],
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "linear", value_parser = parse_pretext)]
    pretext: PretextKind,
    #[arg(long, default_value = "square", value_parser = parse_loss)]
    loss: Loss,
    /// Attack radius; positive values run adversarial training on pseudolabels.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value = "l2", value_parser = parse_norm)]
    norm: Norm,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Summary CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output prefix; writes PREFIX.csv and PREFIX.gp.
    #[arg(long)]
    out: PathBuf,
}

fn parse_norm(s: &str) -> std::result::Result<Norm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_loss(s: &str) -> std::result::Result<Loss, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<PresetId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_size_field(s: &str) -> std::result::Result<SizeField, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pretext(s: &str) -> std::result::Result<PretextKind, String> {
    match s {
        "linear" => Ok(PretextKind::Linear),
        "param_ci" | "param-ci" => Ok(PretextKind::ParamCi),
        other => Err(format!("unknown pretext `{other}` (expected linear or param_ci)")),
    }
}

fn parse_range(s: &str) -> std::result::Result<Range<usize>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if b <= a {
        return Err(format!("empty range `{s}`"));
    }
    Ok(a..b)
}

fn parse_fractions(s: &str) -> std::result::Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad fraction `{p}`")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 4]>::try_from(parts).map_err(|_| format!("expected four fractions, got `{s}`"))
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns 0 on success, 1 on usage errors and 2 on runtime errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Reproduce(a) => run_sweep(preset_spec(a.table), &a.run),
        Command::Simulate(a) => {
            let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Io(format!("{}: {e}", a.config.display())))?;
            run_sweep(config::parse_spec(&text)?, &a.run)
        }
        Command::RateCheck(a) => rate_check(&a),
        Command::AttackCheck(a) => {
            let r = attack_suite(a.instances, a.ball_samples, a.pgd_steps, a.slack, Seed::new(a.seed))?;
            println!(
                "attack-check: {} ({} instances, worst closed-form margin {:e})",
                if r.passed { "PASS" } else { "FAIL" },
                r.instances,
                r.worst_margin
            );
            if r.passed {
                Ok(())
            } else {
                Err(Error::InvalidConfig("closed-form attack was beaten".into()))
            }
        }
        Command::Fit(a) => fit(&a),
        Command::Plot(a) => {
            let rows = io::read_summary_file(&a.input)?;
            let (data, script) = plot::render_plot(&rows, &a.out)?;
            println!("wrote {} and {}", data.display(), script.display());
            Ok(())
        }
    }
}

fn run_sweep(mut spec: ExperimentSpec, run: &RunFlags) -> Result<()> {
    if let Some(r) = run.reps {
        spec.reps = r;
    }
    if let Some(s) = run.seed {
        spec.master_seed = s;
    }
    if run.eps.is_some() || run.norm.is_some() {
        spec.attack = AttackSpec::new(run.norm.unwrap_or(spec.attack.norm), run.eps.unwrap_or(spec.attack.eps))?;
    }
    let out = run_experiment(&spec, run.threads)?;
    let (d1, d2) = spec.dims();
    let labels = RunLabels {
        d1,
        d2,
        eps: spec.attack.eps,
        norm: spec.attack.norm.as_str(),
    };
    println!("method,n1,n2,n3,n4,mean_regret,var_regret,n_reps");
    for s in &out.summaries {
        println!(
            "{},{},{},{},{},{},{},{}",
            s.method,
            s.sizes.n1,
            s.sizes.n2,
            s.sizes.n3,
            s.sizes.n4,
            io::fmt_g9(s.mean_regret),
            io::fmt_g9(s.var_regret),
            s.n_reps
        );
    }
    if let Some(path) = &run.out {
        let sp = write_results(&out.records, &out.summaries, path, labels)?;
        println!("wrote {} and {}", path.display(), sp.display());
    }
    Ok(())
}

fn rate_check(a: &RateCheckArgs) -> Result<()> {
    let stored = io::read_summary_file(&a.input)?;
    let rows: Vec<_> = stored.into_iter().map(|s| s.row).collect();
    let picked = rate_rows(&rows, a.method, a.vary, a.min_n);
    let fit = fit_rate(&picked, a.vary)?;
    println!(
        "{} vs log(n1 + {}): slope {:.4} ± {:.4} over {} points",
        a.method,
        match a.vary {
            SizeField::N1 => "0",
            SizeField::N2 => "n2",
            SizeField::N3 => "n3",
            SizeField::N4 => "n4",
        },
        fit.slope,
        fit.stderr,
        fit.n_points
    );
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let split = match a.split_col {
        Some(c) => SplitAssignment::Column(c),
        None => SplitAssignment::Fractions {
            fractions: a.fractions,
            seed: a.seed,
        },
    };
    let schema = CsvSchema {
        x1_columns: a.x1_cols.clone(),
        x2_columns: a.x2_cols.clone(),
        y_column: a.y_col,
        split,
    };
    let (bank, holdout) = ingest_csv_with_holdout(&a.data, &schema)?;
    let sizes = bank.sizes();
    println!("rows: S1 {} S2 {} S3 {} S4 {} holdout {}", sizes.n1, sizes.n2, sizes.n3, sizes.n4, holdout.y.len());
    let opt = OptimConfig::default();
    let seed = Seed::new(a.seed);
    let theta = if a.eps > 0.0 {
        let cfg = AdvTrainConfig {
            loss: a.loss,
            attack: AttackSpec::new(a.norm, a.eps)?,
            opt: opt.clone(),
        };
        let pipeline = PipelineConfig { pretext: a.pretext, opt };
        run_algorithm1(&bank, AdvMethod::AdvSsl, &cfg, &pipeline, PseudolabelPolicy::Soft, seed)?
    } else {
        let pretext = match a.pretext {
            PretextKind::Linear => PretextModel::LinearMap(fit_pretext_linear(&bank)?),
            PretextKind::ParamCi => PretextModel::ParamCi(fit_pretext_param_ci(&bank, &opt, seed)?),
        };
        let downstream = fit_downstream(&pretext, &bank, a.loss, &opt)?;
        induced_direction(&pretext, &downstream)?
    };
    let coords: Vec<String> = theta.theta().iter().map(|v| io::fmt_g9(*v)).collect();
    println!("direction: [{}]", coords.join(", "));
    if !holdout.y.is_empty() {
        let scores = &holdout.x1 * theta.theta();
        let hits = scores
            .iter()
            .zip(holdout.y.iter())
            .filter(|(s, y)| (if **s >= 0.0 { 1.0 } else { -1.0 }) == **y)
            .count();
        println!("holdout accuracy: {} ({} rows)", io::fmt_g9(hits as f64 / holdout.y.len() as f64), holdout.y.len());
    }
    Ok(())
}
