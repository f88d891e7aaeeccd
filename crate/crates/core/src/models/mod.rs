//! Generative models and the four-way sample bank.
//!
//! Data come in four shapes: `S1` carries `(x1, x2, y)`, `S2` carries
//! `(x1, y)`, `S3` carries `(x1, x2)` and `S4` carries `x1` only. Simulated
//! banks are drawn from a [`GaussianMixture`]; external tables are mapped onto
//! the same partition by [`ingest_csv`].

mod bank;
mod csv_ingest;
mod mixture;

pub use bank::{BankSizes, Covariates, LabeledPairs, LabeledTriples, SampleBank, UnlabeledPairs};
pub use csv_ingest::{ingest_csv, ingest_csv_with_holdout, ingest_reader, CsvSchema, Holdout, SplitAssignment};
pub use mixture::{make_mixture, sample_bank, GaussianMixture};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Fills an `n x d` matrix with i.i.d. standard normals, row by row.
pub(crate) fn standard_normal_matrix<R: Rng>(rng: &mut R, n: usize, d: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    z
}
