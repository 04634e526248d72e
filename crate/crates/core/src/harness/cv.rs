use std::cell::Cell;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{forecast_kwh, train, window_actuals_kwh, EpochRecord, TrainOutcome};
use super::{derive_seed, HyperParams, SearchSpace, TrainConfig};
use crate::data::{
    forecast_windows, make_windows, make_windows_in, FeatureFrame, FeatureOptions, FeaturePlan, SplitPlan,
    WindowSample,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_forecasts, normalized_deviation, IntervalSpec, MetricsReport};
use crate::tcn::{QuantileForecast, TcnModel};

const SEASON: usize = 168;

/// A frame whose test-range targets cannot be read until it is unsealed.
#[derive(Debug)]
pub struct GuardedFrame {
    frame: FeatureFrame,
    split: SplitPlan,
    reads: Cell<usize>,
}

impl GuardedFrame {
    pub fn new(frame: FeatureFrame, split: SplitPlan) -> Result<Self> {
        if split.total != frame.len() {
            return Err(Error::invalid(format!(
                "split covers {} hours but the frame has {}",
                split.total,
                frame.len()
            )));
        }
        split.verify()?;
        Ok(Self {
            frame,
            split,
            reads: Cell::new(0),
        })
    }

    pub fn split(&self) -> &SplitPlan {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    /// Number of target reads served so far.
    pub fn reads(&self) -> usize {
        self.reads.get()
    }

    /// Target values for `range`; any overlap with the test range fails.
    pub fn targets(&self, range: Range<usize>) -> Result<&[f64]> {
        if range.end > self.split.test.start {
            return Err(Error::Leakage(format!(
                "read of hours {range:?} touches the sealed test range {:?}",
                self.split.test
            )));
        }
        self.reads.set(self.reads.get() + 1);
        Ok(&self.frame.target[range])
    }

    /// Raw copy of everything before the test range.
    pub fn development(&self) -> Result<FeatureFrame> {
        let end = self.split.test.start;
        self.targets(0..end)?;
        Ok(self.frame.slice_raw(0, end))
    }

    /// Releases the full frame for final evaluation.
    pub fn unseal(self) -> (FeatureFrame, SplitPlan) {
        (self.frame, self.split)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub hyper_params: HyperParams,
    /// Best validation pinball per fold, kWh.
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
    pub param_count: usize,
    pub best_epochs: Vec<usize>,
    pub curves: Vec<Vec<EpochRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub trials: Vec<TrialResult>,
    pub best: usize,
}

impl CvResult {
    pub fn best_trial(&self) -> &TrialResult {
        &self.trials[self.best]
    }

    pub fn best_loss(&self) -> f64 {
        self.best_trial().mean_loss
    }

    /// Mean best epoch of the winning trial, at least 1.
    pub fn final_epochs(&self) -> usize {
        let e = &self.best_trial().best_epochs;
        if e.is_empty() {
            return 1;
        }
        (e.iter().sum::<usize>() as f64 / e.len() as f64).round().max(1.0) as usize
    }
}

struct FoldData {
    train: Vec<WindowSample>,
    val: Vec<WindowSample>,
    /// kWh per normalized target unit.
    scale: f64,
    plan: FeaturePlan,
}

fn prepare_folds(guard: &GuardedFrame, options: &FeatureOptions, config: &TrainConfig) -> Result<Vec<FoldData>> {
    let dev = guard.development()?;
    guard
        .split
        .folds
        .iter()
        .map(|fold| {
            let plan = FeaturePlan::fit(&dev, fold.train.clone(), options.clone())?;
            let encoded = plan.apply(&dev)?;
            let (p, d) = (config.lookback, config.horizon);
            let s = &plan.target_scaler;
            Ok(FoldData {
                train: make_windows_in(&encoded, fold.train.clone(), p, d, 1)?,
                val: make_windows_in(&encoded, fold.val.clone(), p, d, 1)?,
                scale: if s.constant[0] { 1.0 } else { s.max[0] - s.min[0] },
                plan,
            })
        })
        .collect()
}

fn run_trial(index: usize, hp: &HyperParams, folds: &[FoldData], config: &TrainConfig) -> TrialResult {
    let tc = hp.train_config(config);
    let mut result = TrialResult {
        index,
        hyper_params: hp.clone(),
        fold_losses: Vec::new(),
        mean_loss: f64::INFINITY,
        param_count: 0,
        best_epochs: Vec::new(),
        curves: Vec::new(),
        error: None,
    };
    for (f, fold) in folds.iter().enumerate() {
        let outcome = (|| -> Result<(TrainOutcome, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("fold-{f}")));
            let mut model = TcnModel::new(hp.model_config(&fold.plan, config), &mut rng)?;
            let fold_config = TrainConfig {
                seed: derive_seed(config.seed, &format!("fold-{f}-train")),
                ..tc.clone()
            };
            let outcome = train(&mut model, &fold.train, Some(&fold.val), &fold_config)?;
            Ok((outcome, model.param_count()))
        })();
        match outcome {
            Ok((o, params)) => {
                result.param_count = params;
                result.fold_losses.push(o.best_val_loss.expect("validation windows present") * fold.scale);
                result.best_epochs.push(o.best_epoch);
                result.curves.push(o.curves);
            }
            Err(e) => {
                log::warn!("trial {index} fold {f} failed: {e}");
                result.error = Some(e.to_string());
                return result;
            }
        }
    }
    result.mean_loss = result.fold_losses.iter().sum::<f64>() / result.fold_losses.len() as f64;
    result
}

/// Blocked CV of an explicit trial list. Trials run on up to `jobs`
/// threads; results are keyed by trial index.
pub fn cross_validate_trials(
    guard: &GuardedFrame,
    options: &FeatureOptions,
    trials: &[HyperParams],
    config: &TrainConfig,
    jobs: usize,
) -> Result<CvResult> {
    config.validate()?;
    if trials.is_empty() {
        return Err(Error::invalid("at least one trial is required"));
    }
    let folds = prepare_folds(guard, options, config)?;
    let slots: Mutex<Vec<Option<TrialResult>>> = Mutex::new(vec![None; trials.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= trials.len() {
            break;
        }
        let r = run_trial(k, &trials[k], &folds, config);
        slots.lock().expect("no worker panics while holding the lock")[k] = Some(r);
    };
    let jobs = jobs.clamp(1, trials.len());
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let trials: Vec<TrialResult> = slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|t| t.expect("every trial ran"))
        .collect();
    let best = trials
        .iter()
        .min_by(|a, b| {
            a.mean_loss
                .total_cmp(&b.mean_loss)
                .then(a.param_count.cmp(&b.param_count))
                .then(a.index.cmp(&b.index))
        })
        .expect("non-empty")
        .index;
    if !trials[best].mean_loss.is_finite() {
        return Err(Error::Numerical("every trial failed".into()));
    }
    Ok(CvResult { trials, best })
}

/// Random search over `space` with blocked CV.
pub fn cross_validate(
    guard: &GuardedFrame,
    options: &FeatureOptions,
    space: &SearchSpace,
    config: &TrainConfig,
    jobs: usize,
) -> Result<CvResult> {
    space.validate()?;
    cross_validate_trials(guard, options, &space.trials(), config, jobs)
}

#[derive(Debug, Clone)]
pub struct FinalResult {
    pub model: TcnModel,
    pub plan: FeaturePlan,
    pub outcome: TrainOutcome,
    pub report: MetricsReport,
    pub forecasts: Vec<QuantileForecast>,
    pub actuals: Vec<Vec<f64>>,
    /// ND of the same-hour-last-week forecast over the same test steps.
    pub baseline_nd: f64,
    pub test: Range<usize>,
}

/// Refits features and model on all development hours for `epochs` epochs,
/// then unseals the frame and scores forecasts tiling the test range.
pub fn final_fit_and_test(
    guard: GuardedFrame,
    options: &FeatureOptions,
    hp: &HyperParams,
    config: &TrainConfig,
    epochs: usize,
    sort_quantiles: bool,
) -> Result<FinalResult> {
    let dev = guard.development()?;
    let plan = FeaturePlan::fit(&dev, 0..dev.len(), options.clone())?;
    let (p, d) = (config.lookback, config.horizon);
    let train_windows = make_windows(&plan.apply(&dev)?, p, d, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "final"));
    let mut model = TcnModel::new(hp.model_config(&plan, config), &mut rng)?;
    model.scaler_hash = plan.hash();
    let tc = TrainConfig {
        epochs,
        patience: 0,
        seed: derive_seed(config.seed, "final-train"),
        ..hp.train_config(config)
    };
    let outcome = train(&mut model, &train_windows, None, &tc)?;

    let (frame, split) = guard.unseal();
    let encoded = plan.apply(&frame)?;
    let test_windows = forecast_windows(&encoded, split.test.clone(), p, d, d)?;
    let forecasts = forecast_kwh(&model, &plan, &test_windows, sort_quantiles)?;
    let actuals = window_actuals_kwh(&frame, &test_windows);
    let report = evaluate_forecasts(&forecasts, &actuals, IntervalSpec::default())?;
    let naive = seasonal_naive_forecasts(&frame.target, &test_windows)?;
    let baseline_nd = normalized_deviation(&actuals.concat(), &naive.concat())?;
    Ok(FinalResult {
        model,
        plan,
        outcome,
        report,
        forecasts,
        actuals,
        baseline_nd,
        test: split.test,
    })
}

/// Same hour last week: `ŷ[origin + i] = y[origin + i − 168]`.
pub fn seasonal_naive(series: &[f64], origin: usize, horizon: usize) -> Result<Vec<f64>> {
    if origin < SEASON || horizon > SEASON {
        return Err(Error::TooShort {
            required: SEASON + horizon,
            actual: origin.min(series.len()) + horizon,
        });
    }
    if origin > series.len() {
        return Err(Error::invalid(format!("origin {origin} beyond series of {}", series.len())));
    }
    Ok((0..horizon).map(|i| series[origin + i - SEASON]).collect())
}

/// Seasonal-naive forecasts for each window's horizon.
pub fn seasonal_naive_forecasts(series: &[f64], windows: &[WindowSample]) -> Result<Vec<Vec<f64>>> {
    windows
        .iter()
        .map(|w| seasonal_naive(series, w.horizon_range().start, w.horizon.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{plan_splits, SplitConfig};
    use chrono::{TimeZone, Utc};

    fn frame(y: Vec<f64>) -> FeatureFrame {
        FeatureFrame::raw("a", Utc.with_ymd_and_hms(2020, 1, 6, 0, 0, 0).unwrap(), y)
    }

    #[test]
    fn seasonal_naive_examples() {
        let weekly: Vec<f64> = (0..600).map(|t| ((t % 168) as f64).sqrt()).collect();
        let f = seasonal_naive(&weekly, 400, 24).unwrap();
        assert_eq!(normalized_deviation(&weekly[400..424], &f).unwrap(), 0.0);
        let flat = vec![3.0; 400];
        let f = seasonal_naive(&flat, 300, 24).unwrap();
        assert_eq!(normalized_deviation(&flat[300..324], &f).unwrap(), 0.0);
        assert!(matches!(seasonal_naive(&flat, 100, 24), Err(Error::TooShort { .. })));
    }

    #[test]
    fn guard_blocks_test_reads() {
        let split = plan_splits(1000, SplitConfig::default()).unwrap();
        let g = GuardedFrame::new(frame(vec![1.0; 1000]), split).unwrap();
        assert!(g.targets(0..900).is_ok());
        assert!(matches!(g.targets(850..901), Err(Error::Leakage(_))));
        assert!(matches!(g.targets(950..960), Err(Error::Leakage(_))));
        let dev = g.development().unwrap();
        assert_eq!(dev.len(), 900);
        assert_eq!(g.reads(), 2);
        let (full, _) = g.unseal();
        assert_eq!(full.len(), 1000);
    }
}
