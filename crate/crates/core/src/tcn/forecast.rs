use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `horizon × |Q|` matrix of quantile predictions for one forecast origin.
/// `origin` is the timestamp of the first forecast hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    values: Vec<f64>,
    quantile_levels: Vec<f64>,
    origin: DateTime<Utc>,
}

impl QuantileForecast {
    pub fn new(values: Vec<f64>, quantile_levels: Vec<f64>, origin: DateTime<Utc>) -> Result<Self> {
        if quantile_levels.is_empty() || values.len() % quantile_levels.len() != 0 {
            return Err(Error::invalid(format!(
                "{} values do not fill whole rows of {} quantiles",
                values.len(),
                quantile_levels.len()
            )));
        }
        Ok(Self {
            values,
            quantile_levels,
            origin,
        })
    }

    pub fn horizon(&self) -> usize {
        self.values.len() / self.quantile_levels.len()
    }

    pub fn num_quantiles(&self) -> usize {
        self.quantile_levels.len()
    }

    /// `(horizon, |Q|)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.horizon(), self.num_quantiles())
    }

    pub fn quantile_levels(&self) -> &[f64] {
        &self.quantile_levels
    }

    pub fn origin(&self) -> DateTime<Utc> {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, step: usize, q: usize) -> f64 {
        self.values[step * self.num_quantiles() + q]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        let n = self.num_quantiles();
        &self.values[step * n..(step + 1) * n]
    }

    pub fn column(&self, q: usize) -> Vec<f64> {
        (0..self.horizon()).map(|s| self.get(s, q)).collect()
    }

    /// Index of the quantile level closest to `level`, if within 1e-9.
    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.quantile_levels
            .iter()
            .position(|q| (q - level).abs() < 1e-9)
    }

    pub fn map_values(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.values.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    /// Number of horizon steps whose quantiles are not non-decreasing.
    pub fn crossings(&self) -> usize {
        (0..self.horizon())
            .filter(|s| self.row(*s).windows(2).any(|w| w[1] < w[0]))
            .count()
    }

    /// Sorts each horizon step ascending so lower levels never exceed higher
    /// ones.
    pub fn sort_quantiles(mut self) -> Self {
        let n = self.num_quantiles();
        for row in self.values.chunks_mut(n) {
            row.sort_by(f64::total_cmp);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
