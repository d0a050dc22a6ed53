//! Validated loss samples: construction, order statistics, and the
//! left-continuous empirical quantile.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Minimum sample size; keeps every threshold rank k in [2, n-2] feasible.
pub const MIN_OBSERVATIONS: usize = 4;

/// An immutable, sorted, non-negative loss sample.
///
/// Values are stored in non-decreasing order with ties preserved. All
/// accessors are pure, so a `Sample` can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    source: String,
}

impl Sample {
    /// Build a sample from raw observations.
    ///
    /// Rejects empty input, non-finite or negative entries (reported with
    /// the index into the raw input), and fewer than [`MIN_OBSERVATIONS`]
    /// values. The sort is stable; duplicates are kept.
    pub fn from_values(raw: &[f64], source: impl Into<String>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (i, &x) in raw.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFiniteValue(i));
            }
            if x < 0.0 {
                return Err(Error::NegativeValue(i));
            }
        }
        if raw.len() < MIN_OBSERVATIONS {
            return Err(Error::TooFewObservations(raw.len()));
        }
        let mut values = raw.to_vec();
        values.sort_by(|a, b| a.total_cmp(b));
        Ok(Self {
            values,
            source: source.into(),
        })
    }

    /// Read a sample from a CSV stream: one numeric per line, blank lines
    /// skipped, an optional single header line auto-detected (first
    /// non-blank line that does not parse as a number). Any later parse
    /// failure is an error naming the 1-based line number.
    pub fn from_csv_reader<R: BufRead>(reader: R, source: impl Into<String>) -> Result<Self> {
        let mut values = Vec::new();
        let mut saw_data_or_header = false;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let field = line.trim();
            if field.is_empty() {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) => {
                    saw_data_or_header = true;
                    values.push(v);
                }
                Err(e) => {
                    if !saw_data_or_header {
                        // header line
                        saw_data_or_header = true;
                    } else {
                        return Err(Error::Csv {
                            line: line_no,
                            msg: format!("cannot parse {field:?} as a number: {e}"),
                        });
                    }
                }
            }
        }
        Self::from_values(&values, source)
    }

    /// Read a sample from a CSV file on disk.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(
            std::io::BufReader::new(file),
            path.display().to_string(),
        )
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Sorted values, non-decreasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// j-th smallest value, 1-based: X_(j:n).
    pub fn order_statistic(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.values.len() {
            return Err(Error::RankOutOfRange {
                rank: j,
                max: self.values.len(),
            });
        }
        Ok(self.values[j - 1])
    }

    /// Left-continuous empirical quantile Q_n(u) = X_(ceil(n u):n).
    ///
    /// A relative guard protects the rank against rounding in `n * u`, so
    /// that `empirical_quantile(j/n)` lands exactly on rank j.
    pub fn empirical_quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        let n = self.values.len();
        let x = u * n as f64;
        let j = (x - 1e-9 * x.max(1.0)).ceil() as usize;
        let j = j.clamp(1, n);
        Ok(self.values[j - 1])
    }
}
