use super::{Method, SummaryRow};
use crate::error::{Error, Result};
use crate::models::BankSizes;

/// Which dataset size a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeField {
    N1,
    N2,
    N3,
    N4,
}

impl SizeField {
    pub fn get(self, s: &BankSizes) -> usize {
        match self {
            SizeField::N1 => s.n1,
            SizeField::N2 => s.n2,
            SizeField::N3 => s.n3,
            SizeField::N4 => s.n4,
        }
    }

    /// Sample count the rate is expressed in: `n1` plus the varied size.
    pub fn total(self, s: &BankSizes) -> usize {
        match self {
            SizeField::N1 => s.n1,
            other => s.n1 + other.get(s),
        }
    }

    fn without(self, s: &BankSizes) -> BankSizes {
        let mut s = *s;
        match self {
            SizeField::N1 => s.n1 = 0,
            SizeField::N2 => s.n2 = 0,
            SizeField::N3 => s.n3 = 0,
            SizeField::N4 => s.n4 = 0,
        }
        s
    }
}

impl std::str::FromStr for SizeField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n1" => Ok(SizeField::N1),
            "n2" => Ok(SizeField::N2),
            "n3" => Ok(SizeField::N3),
            "n4" => Ok(SizeField::N4),
            other => Err(Error::InvalidConfig(format!("unknown size field `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub n_points: usize,
}

/// Rows of `method` forming the largest sweep over `vary` with every other
/// size held fixed, ordered by the varied size, keeping only sizes `>= min_n`.
pub fn rate_rows(rows: &[SummaryRow], method: Method, vary: SizeField, min_n: usize) -> Vec<SummaryRow> {
    let mut groups: Vec<(BankSizes, Vec<SummaryRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.method == method && vary.get(&r.sizes) >= min_n) {
        let key = vary.without(&r.sizes);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r.clone()),
            None => groups.push((key, vec![r.clone()])),
        }
    }
    let mut best: Vec<SummaryRow> = Vec::new();
    for (_, g) in groups {
        if g.len() > best.len() {
            best = g;
        }
    }
    best.sort_by_key(|r| vary.get(&r.sizes));
    best
}

/// Least-squares slope of `log(mean_regret)` on `log(n1 + n_vary)` with its standard error.
pub fn fit_rate(rows: &[SummaryRow], vary: SizeField) -> Result<RateFit> {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for r in rows {
        if !(r.mean_regret > 0.0) {
            return Err(Error::NonPositiveMean(r.mean_regret));
        }
        let n = vary.total(&r.sizes);
        if n == 0 {
            return Err(Error::InvalidConfig("rate fit needs positive sample counts".into()));
        }
        points.push(((n as f64).ln(), r.mean_regret.ln()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 || points.len() < 3 {
        return Err(Error::InsufficientPoints(xs.len()));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        stderr,
        n_points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(n3: usize, mean: f64) -> SummaryRow {
        SummaryRow {
            method: Method::SslPlugin,
            sizes: BankSizes::new(100, 0, n3, 0),
            mean_regret: mean,
            var_regret: 0.0,
            n_reps: 100,
        }
    }

    #[test]
    fn inverse_law_has_unit_slope() {
        let rows: Vec<_> = [500, 1000, 5000, 20000].iter().map(|&n| row(n, 3.0 / (100 + n) as f64)).collect();
        let fit = fit_rate(&rows, SizeField::N3).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.stderr, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_rows_are_flat() {
        let rows: Vec<_> = [500, 1000, 5000].iter().map(|&n| row(n, 0.01)).collect();
        assert_abs_diff_eq!(fit_rate(&rows, SizeField::N3).unwrap().slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_regret_column() {
        let rows = vec![row(1000, 0.00529), row(5000, 0.00104), row(10000, 0.00042), row(20000, 0.00031)];
        let fit = fit_rate(&rows, SizeField::N3).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0168, epsilon = 1e-4);
    }

    #[test]
    fn errors() {
        let rows = vec![row(1000, 0.1), row(5000, 0.01)];
        assert_eq!(fit_rate(&rows, SizeField::N3).unwrap_err(), Error::InsufficientPoints(2));
        let rows = vec![row(1000, 0.1), row(5000, 0.0), row(10000, 0.01)];
        assert_eq!(fit_rate(&rows, SizeField::N3).unwrap_err(), Error::NonPositiveMean(0.0));
    }

    #[test]
    fn sweep_selection_picks_the_varying_group() {
        let mut rows = vec![row(500, 1.0), row(1000, 0.5), row(5000, 0.1)];
        let mut other = row(20000, 0.2);
        other.sizes.n2 = 500;
        rows.push(other);
        let picked = rate_rows(&rows, Method::SslPlugin, SizeField::N3, 1000);
        assert_eq!(picked.iter().map(|r| r.sizes.n3).collect::<Vec<_>>(), vec![1000, 5000]);
    }
}
