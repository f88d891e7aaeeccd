//! Result CSV emission and summary parsing.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use reconlab::experiments::{Method, SummaryRow, TrialRecord};
use reconlab::{BankSizes, Error, Result};

pub const TRIAL_HEADER: [&str; 12] = ["method", "n1", "n2", "n3", "n4", "d1", "d2", "eps", "norm", "rep", "regret", "status"];
pub const SUMMARY_HEADER: [&str; 10] = ["method", "n1", "n2", "n3", "n4", "eps", "norm", "mean_regret", "var_regret", "n_reps"];

/// `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        let m = trim(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Sibling path `stem.summary.csv` for `stem.csv`.
pub fn summary_path(trials: &Path) -> PathBuf {
    let stem = trials.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    trials.with_file_name(format!("{stem}.summary.csv"))
}

fn size_key(s: &BankSizes) -> (usize, usize, usize, usize) {
    (s.n3, s.n2, s.n1, s.n4)
}

/// Labels shared by every row of one sweep.
#[derive(Debug, Clone, Copy)]
pub struct RunLabels {
    pub d1: usize,
    pub d2: usize,
    pub eps: f64,
    pub norm: &'static str,
}

pub fn write_trials<W: Write>(out: W, records: &[TrialRecord], labels: RunLabels) -> Result<()> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.method.as_str(), a.sizes.n3, a.rep, a.sizes.n2, a.sizes.n1, a.sizes.n4)
            .cmp(&(b.method.as_str(), b.sizes.n3, b.rep, b.sizes.n2, b.sizes.n1, b.sizes.n4))
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER).map_err(io_err)?;
    for r in sorted {
        let s = r.sizes;
        w.write_record([
            r.method.as_str().to_string(),
            s.n1.to_string(),
            s.n2.to_string(),
            s.n3.to_string(),
            s.n4.to_string(),
            labels.d1.to_string(),
            labels.d2.to_string(),
            fmt_g9(labels.eps),
            labels.norm.to_string(),
            r.rep.to_string(),
            fmt_g9(r.regret),
            r.status().to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_summaries<W: Write>(out: W, rows: &[SummaryRow], labels: RunLabels) -> Result<()> {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (a.method.as_str(), size_key(&a.sizes)).cmp(&(b.method.as_str(), size_key(&b.sizes))));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(io_err)?;
    for r in sorted {
        let s = r.sizes;
        w.write_record([
            r.method.as_str().to_string(),
            s.n1.to_string(),
            s.n2.to_string(),
            s.n3.to_string(),
            s.n4.to_string(),
            fmt_g9(labels.eps),
            labels.norm.to_string(),
            fmt_g9(r.mean_regret),
            fmt_g9(r.var_regret),
            r.n_reps.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes `path` (trials) and its `.summary.csv` sibling; returns the summary path.
pub fn write_results(records: &[TrialRecord], summaries: &[SummaryRow], path: &Path, labels: RunLabels) -> Result<PathBuf> {
    write_trials(File::create(path).map_err(io_err)?, records, labels)?;
    let sp = summary_path(path);
    write_summaries(File::create(&sp).map_err(io_err)?, summaries, labels)?;
    Ok(sp)
}

/// A summary row as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSummary {
    pub row: SummaryRow,
    pub eps: f64,
    pub norm: String,
}

fn parse_err(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::ParseError {
        row,
        column,
        message: message.into(),
    }
}

pub fn read_summaries<R: std::io::Read>(input: R) -> Result<Vec<StoredSummary>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers().map_err(|e| parse_err(0, 0, e.to_string()))?.clone();
    let mut idx = [0usize; 10];
    for (slot, name) in idx.iter_mut().zip(SUMMARY_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(0, 0, format!("missing column `{name}`")))?;
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, 0, e.to_string()))?;
        let field = |k: usize| -> Result<&str> {
            rec.get(idx[k])
                .map(str::trim)
                .ok_or_else(|| parse_err(row, idx[k], format!("missing value for `{}`", SUMMARY_HEADER[k])))
        };
        let int = |k: usize| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| parse_err(row, idx[k], format!("`{}` is not an integer", SUMMARY_HEADER[k])))
        };
        let real = |k: usize| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| parse_err(row, idx[k], format!("`{}` is not a number", SUMMARY_HEADER[k])))
        };
        let method: Method = field(0)?.parse().map_err(|e: Error| parse_err(row, idx[0], e.to_string()))?;
        out.push(StoredSummary {
            row: SummaryRow {
                method,
                sizes: BankSizes::new(int(1)?, int(2)?, int(3)?, int(4)?),
                mean_regret: real(7)?,
                var_regret: real(8)?,
                n_reps: int(9)?,
            },
            eps: real(5)?,
            norm: field(6)?.to_string(),
        });
    }
    Ok(out)
}

pub fn read_summary_file(path: &Path) -> Result<Vec<StoredSummary>> {
    read_summaries(File::open(path).map_err(io_err)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.000312345678912), "0.000312345679");
        assert_eq!(fmt_g9(1.0), "1");
        assert_eq!(fmt_g9(0.1), "0.1");
        assert_eq!(fmt_g9(1.5e-7), "1.5e-07");
        assert_eq!(fmt_g9(2.41986802e-5), "2.41986802e-05");
        assert_eq!(fmt_g9(123456789012.0), "1.23456789e+11");
        assert_eq!(fmt_g9(f64::NAN), "NaN");
        assert_eq!(fmt_g9(0.0), "0");
        assert_eq!(fmt_g9(-2.5), "-2.5");
    }

    #[test]
    fn summary_path_sibling() {
        assert_eq!(summary_path(Path::new("out/r.csv")), PathBuf::from("out/r.summary.csv"));
    }

    #[test]
    fn missing_column_is_named() {
        let data = "method,n1,n2,n3,n4,eps,norm,var_regret,n_reps\n";
        match read_summaries(data.as_bytes()).unwrap_err() {
            Error::ParseError { message, .. } => assert!(message.contains("mean_regret")),
            e => panic!("{e:?}"),
        }
    }
}
