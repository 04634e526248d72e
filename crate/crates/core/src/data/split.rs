use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub folds: usize,
    /// Share of each fold's span used for training.
    pub train_frac: f64,
    /// Every train and validation segment must hold at least this many
    /// hours (typically `p + δ` so each holds one window).
    pub min_segment: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.10,
            folds: 5,
            train_frac: 0.8,
            min_segment: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub val: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub total: usize,
    pub test: Range<usize>,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    /// Hours available for model selection and the final fit.
    pub fn development(&self) -> Range<usize> {
        0..self.test.start
    }

    /// Checks blocked ordering and test exclusion.
    pub fn verify(&self) -> Result<()> {
        if self.test.end != self.total {
            return Err(Error::Leakage("test range is not the series tail".into()));
        }
        for (k, f) in self.folds.iter().enumerate() {
            if f.train.is_empty() || f.val.is_empty() {
                return Err(Error::Leakage(format!("fold {k} has an empty segment")));
            }
            if f.train.end > f.val.start {
                return Err(Error::Leakage(format!("fold {k} trains on hours at or after validation")));
            }
            if f.val.end > self.test.start {
                return Err(Error::Leakage(format!("fold {k} reaches into the test range")));
            }
        }
        Ok(())
    }
}

/// Blocked expanding-origin splits. The last `ceil(test_frac · T)` hours
/// are the test set. Fold `k` of `K` spans the first `(k + 1)/K` of the
/// remaining hours, training on the first `train_frac` of that span and
/// validating on the rest.
pub fn plan_splits(total: usize, config: SplitConfig) -> Result<SplitPlan> {
    if !(0.0 < config.test_frac && config.test_frac < 1.0) || !(0.0 < config.train_frac && config.train_frac < 1.0) {
        return Err(Error::invalid("test_frac and train_frac must lie in (0, 1)"));
    }
    if config.folds == 0 {
        return Err(Error::invalid("at least one fold is required"));
    }
    let test_len = ((total as f64 * config.test_frac) - 1e-9).ceil().max(1.0) as usize;
    if test_len >= total {
        return Err(Error::TooShort {
            required: test_len + 2,
            actual: total,
        });
    }
    let dev = total - test_len;
    let min = config.min_segment.max(1);
    let mut folds = Vec::with_capacity(config.folds);
    for k in 0..config.folds {
        let span_end = dev * (k + 1) / config.folds;
        let train_end = (span_end as f64 * config.train_frac).floor() as usize;
        let fold = Fold {
            train: 0..train_end,
            val: train_end..span_end,
        };
        if fold.train.len() < min || fold.val.len() < min {
            // Fold 0 is the smallest; this bound makes every fold feasible.
            let required = ((min as f64 / (1.0 - config.train_frac)).ceil() as usize * config.folds) as f64
                / (1.0 - config.test_frac);
            return Err(Error::TooShort {
                required: required.ceil() as usize,
                actual: total,
            });
        }
        folds.push(fold);
    }
    let plan = SplitPlan {
        total,
        test: dev..total,
        folds,
    };
    plan.verify()?;
    Ok(plan)
}
