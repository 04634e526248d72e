//! Training, blocked cross-validation, final fit and held-out evaluation.

mod cv;
mod run;
mod train;

pub use cv::{
    cross_validate, cross_validate_trials, final_fit_and_test, seasonal_naive, seasonal_naive_forecasts,
    CvResult, FinalResult, GuardedFrame, TrialResult,
};
pub use run::{quantile_label, write_atomic, write_curves_csv, write_forecasts_csv, write_json, RunDir};
pub use train::{
    forecast_kwh, train, validation_loss, window_actuals_kwh, EpochRecord, TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::FeaturePlan;
use crate::error::{Error, Result};
use crate::tcn::{doubling_dilations, validate_quantiles, TcnConfig};

/// Sub-seed for a named purpose, stable across platforms.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    pub quantiles: Vec<f64>,
    pub lookback: usize,
    pub horizon: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            patience: 20,
            seed: 0,
            quantiles: vec![0.05, 0.5, 0.9],
            lookback: 168,
            horizon: 24,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.epochs > 0 && self.patience >= self.epochs {
            return Err(Error::invalid("patience must be smaller than the epoch budget"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and >= 0"));
        }
        if self.lookback == 0 || self.horizon == 0 {
            return Err(Error::invalid("lookback and horizon must be >= 1"));
        }
        validate_quantiles(&self.quantiles)
    }
}

/// Architecture and optimizer settings chosen by the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub blocks: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub head_hidden: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            blocks: 3,
            channels: 32,
            kernel_size: 3,
            dropout: 0.1,
            lr: 1e-3,
            batch_size: 32,
            head_hidden: 32,
        }
    }
}

impl HyperParams {
    pub fn model_config(&self, plan: &FeaturePlan, config: &TrainConfig) -> TcnConfig {
        let mut c = TcnConfig::new(
            plan.input_names(),
            plan.embeddings(),
            config.lookback,
            config.horizon,
            config.quantiles.clone(),
        );
        c.channels = vec![self.channels; self.blocks];
        c.dilations = doubling_dilations(self.blocks);
        c.kernel_size = self.kernel_size;
        c.dropout = self.dropout;
        c.head_hidden = self.head_hidden;
        c
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            ..base.clone()
        }
    }
}

/// Random-search space. Every list must be non-empty; `lr` is sampled
/// log-uniformly from the closed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub blocks: Vec<usize>,
    pub channels: Vec<usize>,
    pub kernel_size: Vec<usize>,
    pub dropout: Vec<f64>,
    pub lr: (f64, f64),
    pub batch_size: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            blocks: vec![2, 3],
            channels: vec![16, 32],
            kernel_size: vec![2, 3],
            dropout: vec![0.0, 0.1],
            lr: (1e-3, 5e-3),
            batch_size: vec![32, 64],
            head_hidden: vec![16, 32],
            budget: 4,
            seed: 0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty()
            || self.channels.is_empty()
            || self.kernel_size.is_empty()
            || self.dropout.is_empty()
            || self.batch_size.is_empty()
            || self.head_hidden.is_empty()
        {
            return Err(Error::invalid("every search range must be non-empty"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("trial budget must be >= 1"));
        }
        if !(self.lr.0 > 0.0 && self.lr.0 <= self.lr.1) {
            return Err(Error::invalid("learning-rate range must satisfy 0 < low <= high"));
        }
        Ok(())
    }

    /// Trial `k` depends only on `(seed, k)`, so a larger budget extends the
    /// same trial sequence.
    pub fn sample(&self, k: usize) -> HyperParams {
        let mut rng = rng_for(self.seed, &format!("trial-{k}"));
        let mut pick = |v: &[usize]| v[rng.random_range(0..v.len())];
        let blocks = pick(&self.blocks);
        let channels = pick(&self.channels);
        let kernel_size = pick(&self.kernel_size);
        let batch_size = pick(&self.batch_size);
        let head_hidden = pick(&self.head_hidden);
        let dropout = self.dropout[rng.random_range(0..self.dropout.len())];
        let (lo, hi) = (self.lr.0.ln(), self.lr.1.ln());
        let lr = if hi > lo { rng.random_range(lo..=hi).exp() } else { self.lr.0 };
        HyperParams {
            blocks,
            channels,
            kernel_size,
            dropout,
            lr,
            batch_size,
            head_hidden,
        }
    }

    pub fn trials(&self) -> Vec<HyperParams> {
        (0..self.budget).map(|k| self.sample(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn trial_sequence_is_a_prefix() {
        let small = SearchSpace {
            budget: 3,
            ..Default::default()
        };
        let big = SearchSpace {
            budget: 8,
            ..Default::default()
        };
        assert_eq!(small.trials()[..], big.trials()[..3]);
        for t in big.trials() {
            assert!(t.lr >= 1e-3 && t.lr <= 5e-3);
        }
    }

    #[test]
    fn train_config_invariants() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            patience: 200,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
