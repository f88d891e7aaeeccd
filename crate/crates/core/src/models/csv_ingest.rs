//! Tabular ingestion into the `S1..S4` partition.

use std::io::Read;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::bank::{Covariates, LabeledPairs, LabeledTriples, SampleBank, UnlabeledPairs};
use crate::error::{Error, Result};
use crate::rng::Seed;

/// How rows are routed to datasets.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitAssignment {
    /// Column holding `1..=4` for `S1..S4`, or `0` for the holdout set.
    Column(usize),
    /// Shuffled allocation with these fractions of rows for `S1..S4`; the
    /// remainder (when the fractions sum below one) becomes the holdout set.
    Fractions { fractions: [f64; 4], seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub x1_columns: Range<usize>,
    pub x2_columns: Range<usize>,
    pub y_column: Option<usize>,
    pub split: SplitAssignment,
}

/// Labeled rows withheld from every dataset.
#[derive(Debug, Clone)]
pub struct Holdout {
    pub x1: DMatrix<f64>,
    pub y: DVector<f64>,
}

fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    !a.is_empty() && !b.is_empty() && a.start < b.end && b.start < a.end
}

impl CsvSchema {
    fn validate(&self) -> Result<()> {
        if self.x1_columns.is_empty() {
            return Err(Error::SchemaViolation("x1 column range is empty".into()));
        }
        if overlaps(&self.x1_columns, &self.x2_columns) {
            return Err(Error::SchemaViolation("x1 and x2 column ranges overlap".into()));
        }
        let mut singles = vec![];
        if let Some(y) = self.y_column {
            singles.push(("y", y));
        }
        if let SplitAssignment::Column(c) = self.split {
            singles.push(("split", c));
        }
        for (name, c) in &singles {
            if self.x1_columns.contains(c) || self.x2_columns.contains(c) {
                return Err(Error::SchemaViolation(format!("{name} column {c} overlaps a feature range")));
            }
        }
        if singles.len() == 2 && singles[0].1 == singles[1].1 {
            return Err(Error::SchemaViolation("y and split columns coincide".into()));
        }
        if let SplitAssignment::Fractions { fractions, .. } = &self.split {
            if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || fractions.iter().sum::<f64>() > 1.0 + 1e-12 {
                return Err(Error::SchemaViolation("split fractions must lie in [0,1] and sum to at most 1".into()));
            }
        }
        Ok(())
    }

    fn required_width(&self) -> usize {
        let mut w = self.x1_columns.end.max(self.x2_columns.end);
        if let Some(y) = self.y_column {
            w = w.max(y + 1);
        }
        if let SplitAssignment::Column(c) = self.split {
            w = w.max(c + 1);
        }
        w
    }
}

/// Reads a numeric table. A first row with any non-numeric cell is treated as a header.
fn read_table<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::ParseError {
            row: i,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, usize>> = rec
            .iter()
            .enumerate()
            .map(|(j, c)| c.parse::<f64>().map_err(|_| j))
            .collect();
        if i == 0 && parsed.iter().any(|c| c.is_err()) {
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for cell in parsed {
            match cell {
                Ok(v) => row.push(v),
                Err(j) => {
                    return Err(Error::ParseError {
                        row: i,
                        column: j,
                        message: format!("non-numeric cell `{}`", &rec[j]),
                    })
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    S1,
    S2,
    S3,
    S4,
    Holdout,
}

fn assign(rows: &[Vec<f64>], split: &SplitAssignment) -> Result<Vec<Target>> {
    match split {
        SplitAssignment::Column(c) => rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r[*c] {
                1.0 => Ok(Target::S1),
                2.0 => Ok(Target::S2),
                3.0 => Ok(Target::S3),
                4.0 => Ok(Target::S4),
                0.0 => Ok(Target::Holdout),
                v => Err(Error::SchemaViolation(format!("row {i}: split value {v} is not in 0..=4"))),
            })
            .collect(),
        SplitAssignment::Fractions { fractions, seed } => {
            let n = rows.len();
            // Largest-remainder rounding so counts sum to round(n * total).
            let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
            let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
            let target = (raw.iter().sum::<f64>() + 1e-9).floor() as usize;
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
            let mut k = 0;
            while counts.iter().sum::<usize>() < target.min(n) {
                counts[order[k % 4]] += 1;
                k += 1;
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut Seed::new(*seed).stream("csv-split", 0));
            let mut out = vec![Target::Holdout; n];
            let targets = [Target::S1, Target::S2, Target::S3, Target::S4];
            let mut pos = 0;
            for (t, c) in targets.iter().zip(counts) {
                for &row in &idx[pos..pos + c] {
                    out[row] = *t;
                }
                pos += c;
            }
            Ok(out)
        }
    }
}

fn gather(rows: &[&Vec<f64>], cols: &Range<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols.start + j])
}

fn labels(rows: &[&Vec<f64>], col: usize) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|r| if r[col] > 0.0 { 1.0 } else { -1.0 }))
}

/// Parses a table from any reader and maps it onto a bank plus holdout rows.
pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<(SampleBank, Holdout)> {
    schema.validate()?;
    let rows = read_table(reader)?;
    let width = schema.required_width();
    for (i, r) in rows.iter().enumerate() {
        if r.len() < width {
            return Err(Error::ParseError {
                row: i,
                column: r.len(),
                message: format!("row has {} cells, schema needs {width}", r.len()),
            });
        }
    }
    let targets = assign(&rows, &schema.split)?;
    let pick = |t: Target| -> Vec<&Vec<f64>> {
        rows.iter().zip(&targets).filter(|(_, tt)| **tt == t).map(|(r, _)| r).collect()
    };
    let (r1, r2, r3, r4, rh) = (
        pick(Target::S1),
        pick(Target::S2),
        pick(Target::S3),
        pick(Target::S4),
        pick(Target::Holdout),
    );
    let needs_y = !r1.is_empty() || !r2.is_empty();
    let y_col = match schema.y_column {
        Some(c) => Some(c),
        None if needs_y => {
            return Err(Error::SchemaViolation("rows assigned to S1/S2 need a y column".into()))
        }
        None => None,
    };
    if (!r1.is_empty() || !r3.is_empty()) && schema.x2_columns.is_empty() {
        return Err(Error::SchemaViolation("rows assigned to S1/S3 need x2 columns".into()));
    }
    let (d1, d2) = (schema.x1_columns.len(), schema.x2_columns.len());
    let y_or_empty = |r: &[&Vec<f64>]| y_col.map(|c| labels(r, c)).unwrap_or_else(|| DVector::zeros(0));
    let bank = SampleBank::from_parts(
        d1,
        d2,
        LabeledTriples {
            x1: gather(&r1, &schema.x1_columns),
            x2: gather(&r1, &schema.x2_columns),
            y: y_or_empty(&r1),
        },
        LabeledPairs {
            x1: gather(&r2, &schema.x1_columns),
            y: y_or_empty(&r2),
        },
        UnlabeledPairs {
            x1: gather(&r3, &schema.x1_columns),
            x2: gather(&r3, &schema.x2_columns),
        },
        Covariates {
            x1: gather(&r4, &schema.x1_columns),
        },
    )?;
    let holdout = match y_col {
        Some(c) => Holdout {
            x1: gather(&rh, &schema.x1_columns),
            y: labels(&rh, c),
        },
        None => Holdout {
            x1: DMatrix::zeros(0, d1),
            y: DVector::zeros(0),
        },
    };
    Ok((bank, holdout))
}

pub fn ingest_csv_with_holdout(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(SampleBank, Holdout)> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

/// Reads a CSV file into a bank. Labels are coerced: values `> 0` become `+1`, all others `-1`.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SampleBank> {
    ingest_csv_with_holdout(path, schema).map(|(bank, _)| bank)
}
