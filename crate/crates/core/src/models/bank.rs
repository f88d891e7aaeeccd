use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{vconcat, vstack};

/// Sizes of the four datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BankSizes {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
}

impl BankSizes {
    pub const fn new(n1: usize, n2: usize, n3: usize, n4: usize) -> Self {
        Self { n1, n2, n3, n4 }
    }
}

/// `S1`: `(x1, x2, y)` rows.
#[derive(Debug, Clone)]
pub struct LabeledTriples {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// `S2`: `(x1, y)` rows.
#[derive(Debug, Clone)]
pub struct LabeledPairs {
    pub x1: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// `S3`: `(x1, x2)` rows.
#[derive(Debug, Clone)]
pub struct UnlabeledPairs {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
}

/// `S4`: `x1` rows.
#[derive(Debug, Clone)]
pub struct Covariates {
    pub x1: DMatrix<f64>,
}

/// The four datasets sharing one `(d1, d2)`. Each matrix stores one sample per row.
///
/// Simulated banks also carry the hidden labels of `S3`, used only by the
/// omniscient benchmark. Ingested banks never have them.
#[derive(Debug, Clone)]
pub struct SampleBank {
    d1: usize,
    d2: usize,
    s1: LabeledTriples,
    s2: LabeledPairs,
    s3: UnlabeledPairs,
    s4: Covariates,
    oracle_s3: Option<DVector<f64>>,
}

fn check(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || (rows > 0 && m.ncols() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "{name}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn empty(d: usize) -> DMatrix<f64> {
    DMatrix::zeros(0, d)
}

impl SampleBank {
    pub fn from_parts(
        d1: usize,
        d2: usize,
        s1: LabeledTriples,
        s2: LabeledPairs,
        s3: UnlabeledPairs,
        s4: Covariates,
    ) -> Result<Self> {
        check("s1.x1", &s1.x1, s1.y.len(), d1)?;
        check("s1.x2", &s1.x2, s1.y.len(), d2)?;
        check("s2.x1", &s2.x1, s2.y.len(), d1)?;
        check("s3.x1", &s3.x1, s3.x1.nrows(), d1)?;
        check("s3.x2", &s3.x2, s3.x1.nrows(), d2)?;
        check("s4.x1", &s4.x1, s4.x1.nrows(), d1)?;
        Ok(Self {
            d1,
            d2,
            s1,
            s2,
            s3,
            s4,
            oracle_s3: None,
        })
    }

    pub fn empty(d1: usize, d2: usize) -> Self {
        Self {
            d1,
            d2,
            s1: LabeledTriples {
                x1: empty(d1),
                x2: empty(d2),
                y: DVector::zeros(0),
            },
            s2: LabeledPairs {
                x1: empty(d1),
                y: DVector::zeros(0),
            },
            s3: UnlabeledPairs {
                x1: empty(d1),
                x2: empty(d2),
            },
            s4: Covariates { x1: empty(d1) },
            oracle_s3: None,
        }
    }

    pub(crate) fn with_oracle_s3(mut self, y: DVector<f64>) -> Self {
        debug_assert_eq!(y.len(), self.s3.x1.nrows());
        self.oracle_s3 = Some(y);
        self
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn s1(&self) -> &LabeledTriples {
        &self.s1
    }

    pub fn s2(&self) -> &LabeledPairs {
        &self.s2
    }

    pub fn s3(&self) -> &UnlabeledPairs {
        &self.s3
    }

    pub fn s4(&self) -> &Covariates {
        &self.s4
    }

    pub fn sizes(&self) -> BankSizes {
        BankSizes::new(
            self.s1.y.len(),
            self.s2.y.len(),
            self.s3.x1.nrows(),
            self.s4.x1.nrows(),
        )
    }

    /// Hidden labels of `S3`; present only for simulated banks.
    pub fn oracle_s3_labels(&self) -> Option<&DVector<f64>> {
        self.oracle_s3.as_ref()
    }

    /// True when every label is exactly -1 or +1.
    pub fn has_binary_labels(&self) -> bool {
        self.s1
            .y
            .iter()
            .chain(self.s2.y.iter())
            .all(|v| *v == 1.0 || *v == -1.0)
    }

    /// `(X1, X2)` over `S1 ∪ S3`, the pretext training set.
    pub fn pretext_data(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (vstack(&self.s1.x1, &self.s3.x1), vstack(&self.s1.x2, &self.s3.x2))
    }

    /// `(X1, y)` over `S1 ∪ S2`, the downstream training set.
    pub fn labeled_data(&self) -> (DMatrix<f64>, DVector<f64>) {
        (vstack(&self.s1.x1, &self.s2.x1), vconcat(&self.s1.y, &self.s2.y))
    }
}
