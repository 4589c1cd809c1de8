//! Synthetic populations, bucketization into `k` bins and CSV ingestion.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Exp, Normal, Poisson, Triangular, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Distribution, DistributionRole};

pub const GAUSSIAN_MEAN: f64 = 1000.0;
/// Standard deviation; the variance is 100.
pub const GAUSSIAN_STD: f64 = 10.0;
pub const EXPONENTIAL_RATE: f64 = 1.0;
pub const UNIFORM_RANGE: (f64, f64) = (100.0, 10_000.0);
pub const POISSON_MEAN: f64 = 5.0;
/// `(low, mode, high)`.
pub const TRIANGULAR: (f64, f64, f64) = (100.0, 4500.0, 10_000.0);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Gaussian,
    Exponential,
    Uniform,
    Poisson,
    Triangular,
    CsvColumn {
        path: PathBuf,
        column: String,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_delimiter() -> char {
    ','
}

impl DataKind {
    pub const SYNTHETIC: [DataKind; 5] = [
        DataKind::Gaussian,
        DataKind::Exponential,
        DataKind::Uniform,
        DataKind::Poisson,
        DataKind::Triangular,
    ];

    /// Short label used in result files.
    pub fn label(&self) -> String {
        match self {
            DataKind::Gaussian => "gaussian".into(),
            DataKind::Exponential => "exponential".into(),
            DataKind::Uniform => "uniform".into(),
            DataKind::Poisson => "poisson".into(),
            DataKind::Triangular => "triangular".into(),
            DataKind::CsvColumn { column, .. } => format!("csv:{column}"),
        }
    }

    pub fn synthetic_from_label(label: &str) -> Option<DataKind> {
        DataKind::SYNTHETIC
            .into_iter()
            .find(|d| d.label().eq_ignore_ascii_case(label.trim()))
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DataKind,
    pub n: usize,
    pub k: usize,
}

impl DistributionSpec {
    pub fn new(kind: DataKind, n: usize, k: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::Config("sample count n must be at least 1".into()));
        }
        if k < 2 {
            return Err(Error::InvalidDomainSize(k));
        }
        Ok(DistributionSpec { kind, n, k })
    }
}

/// Draw `spec.n` values, or read the CSV column (subsampling `n` rows
/// without replacement when the column is longer).
pub fn sample<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R) -> Result<Vec<f64>> {
    let n = spec.n;
    // Parameters are compile-time constants, so construction cannot fail.
    Ok(match &spec.kind {
        DataKind::Gaussian => draw(Normal::new(GAUSSIAN_MEAN, GAUSSIAN_STD).unwrap(), n, rng),
        DataKind::Exponential => draw(Exp::new(EXPONENTIAL_RATE).unwrap(), n, rng),
        DataKind::Uniform => draw(
            Uniform::new_inclusive(UNIFORM_RANGE.0, UNIFORM_RANGE.1).unwrap(),
            n,
            rng,
        ),
        DataKind::Poisson => draw(Poisson::new(POISSON_MEAN).unwrap(), n, rng),
        DataKind::Triangular => {
            let (lo, mode, hi) = TRIANGULAR;
            draw(Triangular::new(lo, hi, mode).unwrap(), n, rng)
        }
        DataKind::CsvColumn {
            path,
            column,
            delimiter,
        } => {
            let values = read_csv_column(path, column, *delimiter)?;
            subsample(&values, n, rng)
        }
    })
}

/// `n` values drawn without replacement, kept in file order; the whole
/// column when it has at most `n` rows.
pub fn subsample<R: Rng + ?Sized>(values: &[f64], n: usize, rng: &mut R) -> Vec<f64> {
    if values.len() <= n {
        return values.to_vec();
    }
    let mut picked = index::sample(rng, values.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| values[i]).collect()
}

fn draw<D: rand_distr::Distribution<f64>, R: Rng + ?Sized>(
    d: D,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Read one numeric column, selected by header name.
pub fn read_csv_column(path: &Path, column: &str, delimiter: char) -> Result<Vec<f64>> {
    if !delimiter.is_ascii() {
        return Err(Error::Config(format!(
            "delimiter {delimiter:?} must be ASCII"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(delimiter as u8)
        .from_path(path)
        .map_err(|e| Error::CsvParse(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse(e.to_string()))?;
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::ColumnMissing(column.to_string()))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvParse(e.to_string()))?;
        let cell = record.get(idx).unwrap_or("").trim();
        let value: f64 = cell.parse().map_err(|_| {
            Error::CsvParse(format!(
                "row {}: non-numeric value {cell:?} in column {column:?}",
                row + 2
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::CsvParse(format!(
                "row {}: non-finite value in column {column:?}",
                row + 2
            )));
        }
        out.push(value);
    }
    if out.is_empty() {
        return Err(Error::CsvParse(format!("column {column:?} has no rows")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucketized {
    pub indices: Vec<usize>,
    /// Empirical distribution of `indices`: the ground truth for metrics.
    pub truth: Distribution,
    /// Set when every sample was equal and all users landed in bin 0.
    pub constant: bool,
}

/// Equal-width binning over `[min, max]` of the samples; the maximum falls
/// in the last bin.
pub fn bucketize(samples: &[f64], k: usize) -> Result<Bucketized> {
    if samples.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    if k < 2 {
        return Err(Error::InvalidDomainSize(k));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let constant = lo == hi;
    let width = (hi - lo) / k as f64;
    let indices: Vec<usize> = samples
        .iter()
        .map(|&x| {
            if constant {
                0
            } else {
                (((x - lo) / width) as usize).min(k - 1)
            }
        })
        .collect();
    let mut counts = vec![0usize; k];
    for &i in &indices {
        counts[i] += 1;
    }
    let n = samples.len() as f64;
    let truth = Distribution::new(
        counts.iter().map(|&c| c as f64 / n).collect(),
        DistributionRole::True,
    )?;
    Ok(Bucketized {
        indices,
        truth,
        constant,
    })
}
