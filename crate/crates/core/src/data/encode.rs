use std::f64::consts::TAU;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(sin, cos)` pairs for hour of day (period 24), weekday with Monday = 0
/// (period 7) and month − 1 (period 12).
pub fn encode_cyclic(ts: DateTime<Utc>) -> [(f64, f64); 3] {
    let pair = |v: u32, period: f64| {
        let a = TAU * v as f64 / period;
        (a.sin(), a.cos())
    };
    [
        pair(ts.hour(), 24.0),
        pair(ts.weekday().num_days_from_monday(), 7.0),
        pair(ts.month0(), 12.0),
    ]
}

/// Per-column min-max scaler. Columns whose fitted range is empty are
/// flagged constant and passed through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub constant: Vec<bool>,
}

impl MinMaxScaler {
    /// Fits on row-major `rows × columns` data.
    pub fn fit(data: &[f64], columns: usize) -> Result<Self> {
        if columns == 0 || data.is_empty() || data.len() % columns != 0 {
            return Err(Error::invalid("min-max fit needs a non-empty rows × columns block"));
        }
        let mut min = vec![f64::INFINITY; columns];
        let mut max = vec![f64::NEG_INFINITY; columns];
        for row in data.chunks(columns) {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::data(format!("non-finite value {v} in column {j}")));
                }
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        let constant: Vec<bool> = min.iter().zip(&max).map(|(a, b)| b <= a).collect();
        for (j, c) in constant.iter().enumerate() {
            if *c {
                log::warn!("column {j} is constant on the fit range; passing it through unscaled");
            }
        }
        Ok(Self { min, max, constant })
    }

    pub fn fit_column(values: &[f64]) -> Result<Self> {
        Self::fit(values, 1)
    }

    pub fn columns(&self) -> usize {
        self.min.len()
    }

    pub fn apply_value(&self, j: usize, x: f64) -> f64 {
        if self.constant[j] {
            x
        } else {
            (x - self.min[j]) / (self.max[j] - self.min[j])
        }
    }

    pub fn invert_value(&self, j: usize, x: f64) -> f64 {
        if self.constant[j] {
            x
        } else {
            x * (self.max[j] - self.min[j]) + self.min[j]
        }
    }

    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        let c = self.columns();
        data.iter().enumerate().map(|(i, x)| self.apply_value(i % c, *x)).collect()
    }

    pub fn invert(&self, data: &[f64]) -> Vec<f64> {
        let c = self.columns();
        data.iter().enumerate().map(|(i, x)| self.invert_value(i % c, *x)).collect()
    }
}

/// Vocabulary built from training values. Index 0 is reserved for values
/// never seen during fitting; known values map to `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub values: Vec<String>,
}

impl Vocabulary {
    pub fn fit<I, S>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: std::collections::BTreeSet<String> = values.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::invalid("cannot build a vocabulary from no values"));
        }
        Ok(Self {
            values: set.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of `value`, or 0 (logged) when it was not seen in fitting.
    pub fn index(&self, value: &str) -> usize {
        match self.values.binary_search_by(|v| v.as_str().cmp(value)) {
            Ok(i) => i + 1,
            Err(_) => {
                log::debug!("unseen category `{value}` mapped to out-of-vocabulary index 0");
                0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CategoricalEncoding {
    /// One column per known value; unseen values encode as all zeros.
    OneHot { columns: usize },
    /// Index into an embedding table of `rows = |vocab| + 1`.
    Embedding { rows: usize, dim: usize },
    /// High-cardinality multi-hot compressed by a linear autoencoder.
    Autoencoder { inputs: usize },
}

impl CategoricalEncoding {
    /// Up to 5 values one-hot, 6 to 10 embedded with `ceil(n / 2)` dims,
    /// more than 10 autoencoded.
    pub fn plan(vocab: &Vocabulary) -> Result<Self> {
        let n = vocab.len();
        match n {
            0 => Err(Error::invalid("empty vocabulary")),
            1..=5 => Ok(Self::OneHot { columns: n }),
            6..=10 => Ok(Self::Embedding {
                rows: n + 1,
                dim: n.div_ceil(2),
            }),
            _ => Ok(Self::Autoencoder { inputs: n }),
        }
    }
}

/// One-hot row for `value`.
pub fn one_hot(vocab: &Vocabulary, value: &str) -> Vec<f64> {
    let mut row = vec![0.0; vocab.len()];
    let i = vocab.index(value);
    if i > 0 {
        row[i - 1] = 1.0;
    }
    row
}
