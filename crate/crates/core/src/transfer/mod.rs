//! Source-site selection by DTW and head-replacement transfer learning.

mod dtw;

pub use dtw::{
    downsample, dtw_brute_force, dtw_distance, rank_sources, z_normalize, DtwResult, RankedSource, RankingConfig,
};

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    forecast_windows, make_windows_in, FeatureFrame, FeatureOptions, FeaturePlan, SplitConfig, WindowSample,
};
use crate::error::{Error, Result};
use crate::harness::{
    derive_seed, forecast_kwh, train, window_actuals_kwh, HyperParams, TrainConfig, TrainOutcome,
};
use crate::metrics::{evaluate_forecasts, IntervalSpec, MetricsReport};
use crate::tcn::{AdapterSpec, ParamReport, QuantileForecast, ResidualBlock, TcnModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    /// New trainable blocks stacked on the copied trunk.
    pub appended_blocks: usize,
    /// Width of appended blocks; defaults to the trunk's output width.
    pub appended_channels: Option<usize>,
    pub horizon: usize,
    /// Target lookback; defaults to the source lookback.
    pub lookback: Option<usize>,
    pub quantiles: Vec<f64>,
    /// Hidden width of the fresh heads; defaults to the source heads' width.
    pub head_hidden: Option<usize>,
    /// Number of top source blocks left trainable.
    pub unfreeze_top: usize,
    /// Target hours available for fine-tuning.
    pub budget_hours: usize,
    pub epochs: usize,
    /// Early-stopping patience; by default the whole budget runs and the
    /// best validation epoch is kept.
    pub patience: Option<usize>,
    pub batch_size: usize,
    /// Fine-tune learning rate as a multiple of the source rate.
    pub lr_factor: f64,
    pub source_lr: f64,
    pub seed: u64,
}

impl Default for TransferPlan {
    fn default() -> Self {
        Self {
            appended_blocks: 0,
            appended_channels: None,
            horizon: 24,
            lookback: None,
            quantiles: vec![0.05, 0.5, 0.9],
            head_hidden: None,
            unfreeze_top: 0,
            budget_hours: 336,
            epochs: 200,
            patience: None,
            batch_size: 32,
            lr_factor: 1.0,
            source_lr: 1e-3,
            seed: 0,
        }
    }
}

impl TransferPlan {
    pub fn fine_tune_config(&self, lookback: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.source_lr * self.lr_factor,
            patience: self.patience.unwrap_or(self.epochs.saturating_sub(1)),
            seed: derive_seed(self.seed, "fine-tune"),
            quantiles: self.quantiles.clone(),
            lookback,
            horizon: self.horizon,
        }
    }
}

/// Copies the source trunk (embeddings and blocks), freezes it except the
/// top `unfreeze_top` blocks, appends fresh blocks with continued doubling
/// dilations and attaches fresh heads for the target horizon and levels.
/// When `target_inputs` differs from the source's dense inputs, a trainable
/// 1×1 adapter initialized to copy shared columns is placed in front.
pub fn build_transfer_model(source: &TcnModel, plan: &TransferPlan, target_inputs: &[String]) -> Result<TcnModel> {
    if plan.unfreeze_top > source.blocks.len() {
        return Err(Error::invalid(format!(
            "cannot unfreeze {} of {} source blocks",
            plan.unfreeze_top,
            source.blocks.len()
        )));
    }
    let mut config = source.config.clone();
    config.horizon = plan.horizon;
    config.quantiles = plan.quantiles.clone();
    config.head_hidden = plan.head_hidden.unwrap_or(source.config.head_hidden);
    if let Some(p) = plan.lookback {
        config.lookback = p;
    }
    let width = plan.appended_channels.unwrap_or(config.trunk_output_channels());
    let mut d = config.dilations.last().copied().unwrap_or(1);
    for _ in 0..plan.appended_blocks {
        d *= 2;
        config.channels.push(width);
        config.dilations.push(d);
    }
    let reuse_adapter = source
        .config
        .adapter
        .as_ref()
        .is_some_and(|a| a.input_names == target_inputs);
    config.adapter = (reuse_adapter || target_inputs != source.config.input_names).then(|| AdapterSpec {
        input_names: target_inputs.to_vec(),
    });
    if config.adapter.is_some() && !target_inputs.iter().any(|n| config.input_names.contains(n)) {
        return Err(Error::invalid(
            "target inputs share no channel with the source trunk; an adapter cannot be initialized",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, "transfer-init"));
    let mut model = TcnModel::new(config, &mut rng)?;
    let n = source.blocks.len();
    if reuse_adapter {
        model.adapter = source.adapter.clone();
    }
    if let Some(a) = model.adapter.as_mut().filter(|_| reuse_adapter) {
        a.weight.set_requires_grad(false);
        a.bias.set_requires_grad(false);
    }
    model.embeddings = source.embeddings.clone();
    if model.embeddings.iter().zip(&source.config.embeddings).any(|(t, e)| t.shape() != [e.rows, e.dim]) {
        return Err(Error::invalid("source embedding tables do not match their specs"));
    }
    model.set_embeddings_trainable(false);
    for (i, b) in source.blocks.iter().enumerate() {
        model.blocks[i] = b.clone();
        model.blocks[i].set_trainable(i + plan.unfreeze_top >= n);
    }
    model.scaler_hash = source.scaler_hash.clone();
    Ok(model)
}

fn frozen_snapshot(model: &TcnModel) -> Vec<(String, Vec<f64>)> {
    model
        .parameters()
        .into_iter()
        .filter(|(_, t)| !t.requires_grad())
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect()
}

/// Trains only unfrozen parameters, then verifies every frozen tensor is
/// bitwise unchanged and carries no gradient.
pub fn fine_tune(
    model: &mut TcnModel,
    train_windows: &[WindowSample],
    val_windows: Option<&[WindowSample]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let before = frozen_snapshot(model);
    let outcome = train(model, train_windows, val_windows, config)?;
    let after = frozen_snapshot(model);
    if before != after {
        return Err(Error::Numerical("a frozen parameter changed during fine-tuning".into()));
    }
    for (name, t) in model.parameters() {
        if !t.requires_grad() && t.grad().is_some() {
            return Err(Error::Numerical(format!("frozen parameter `{name}` received a gradient")));
        }
    }
    Ok(outcome)
}

/// Target site prepared for fine-tuning: the budget hours just before the
/// test tail, split 80/20 into train and validation horizons.
#[derive(Debug, Clone)]
pub struct TargetData {
    pub plan: FeaturePlan,
    pub encoded: FeatureFrame,
    pub budget: Range<usize>,
    pub test: Range<usize>,
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test_windows: Vec<WindowSample>,
}

/// `template` is refitted (vocabularies kept) when given, otherwise a new
/// plan is fitted. Scalers see only the budget hours.
pub fn prepare_target(
    frame: &FeatureFrame,
    template: Option<&FeaturePlan>,
    options: &FeatureOptions,
    budget_hours: usize,
    lookback: usize,
    horizon: usize,
    test_frac: f64,
) -> Result<TargetData> {
    let split = crate::data::plan_splits(
        frame.len(),
        SplitConfig {
            test_frac,
            folds: 1,
            ..Default::default()
        },
    )?;
    let test = split.test;
    if test.start < budget_hours {
        return Err(Error::TooShort {
            required: budget_hours + test.len(),
            actual: frame.len(),
        });
    }
    let budget = test.start - budget_hours..test.start;
    let plan = match template {
        Some(t) => t.refit(frame, budget.clone())?,
        None => FeaturePlan::fit(frame, budget.clone(), options.clone())?,
    };
    let encoded = plan.apply(frame)?;
    let cut = budget.start + (budget_hours as f64 * 0.8).floor() as usize;
    let train = make_windows_in(&encoded, budget.start..cut, lookback, horizon, 1)?;
    let val = if cut - budget.start >= lookback && budget.end - cut >= horizon {
        forecast_windows(&encoded, cut..budget.end, lookback, horizon, 1)?
            .into_iter()
            .filter(|w| w.start >= budget.start)
            .collect()
    } else {
        Vec::new()
    };
    let test_windows = forecast_windows(&encoded, test.clone(), lookback, horizon, horizon)?;
    Ok(TargetData {
        plan,
        encoded,
        budget,
        test,
        train,
        val,
        test_windows,
    })
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    pub model: TcnModel,
    /// Feature plan fitted on the target budget.
    pub plan: FeaturePlan,
    pub params: ParamReport,
    pub outcome: TrainOutcome,
    pub report: MetricsReport,
    pub forecasts: Vec<QuantileForecast>,
    pub actuals: Vec<Vec<f64>>,
}

fn evaluate(model: TcnModel, outcome: TrainOutcome, data: &TargetData, frame: &FeatureFrame) -> Result<TransferResult> {
    let forecasts = forecast_kwh(&model, &data.plan, &data.test_windows, false)?;
    let actuals = window_actuals_kwh(frame, &data.test_windows);
    let report = evaluate_forecasts(&forecasts, &actuals, IntervalSpec::default())?;
    Ok(TransferResult {
        params: model.param_report(),
        model,
        plan: data.plan.clone(),
        outcome,
        report,
        forecasts,
        actuals,
    })
}

/// Head replacement on `source`, fine-tuned on the target budget.
pub fn transfer_to_target(
    source: &TcnModel,
    source_plan: &FeaturePlan,
    frame: &FeatureFrame,
    plan: &TransferPlan,
    test_frac: f64,
) -> Result<TransferResult> {
    let p = plan.lookback.unwrap_or(source.config.lookback);
    let data = prepare_target(frame, Some(source_plan), &source_plan.options, plan.budget_hours, p, plan.horizon, test_frac)?;
    let mut model = build_transfer_model(source, plan, &data.plan.input_names())?;
    model.scaler_hash = data.plan.hash();
    let config = plan.fine_tune_config(p);
    let val = (!data.val.is_empty()).then_some(data.val.as_slice());
    let outcome = fine_tune(&mut model, &data.train, val, &config)?;
    evaluate(model, outcome, &data, frame)
}

/// Same architecture and budget trained from random initialization.
pub fn scratch_on_target(
    frame: &FeatureFrame,
    options: &FeatureOptions,
    hp: &HyperParams,
    plan: &TransferPlan,
    lookback: usize,
    test_frac: f64,
) -> Result<TransferResult> {
    let data = prepare_target(frame, None, options, plan.budget_hours, lookback, plan.horizon, test_frac)?;
    let base = TrainConfig {
        lr: hp.lr,
        ..plan.fine_tune_config(lookback)
    };
    let mut hp = hp.clone();
    hp.head_hidden = plan.head_hidden.unwrap_or(hp.head_hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, "scratch-init"));
    let mut model = TcnModel::new(hp.model_config(&data.plan, &base), &mut rng)?;
    model.scaler_hash = data.plan.hash();
    let val = (!data.val.is_empty()).then_some(data.val.as_slice());
    let outcome = train(&mut model, &data.train, val, &TrainConfig { batch_size: plan.batch_size, ..base })?;
    evaluate(model, outcome, &data, frame)
}

/// Number of parameters a from-scratch model of the transfer model's full
/// architecture would train.
pub fn scratch_param_count(model: &TcnModel) -> Result<usize> {
    let mut config = model.config.clone();
    config.adapter = None;
    Ok(TcnModel::new(config, &mut ChaCha8Rng::seed_from_u64(0))?.param_count())
}

/// Trunk blocks of `model` that came from the source (the first `n`).
pub fn source_blocks(model: &TcnModel, n: usize) -> &[ResidualBlock] {
    &model.blocks[..n.min(model.blocks.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcn::{EmbeddingSpec, TcnConfig};
    use chrono::{TimeZone, Utc};
    use rand::Rng;

    fn source() -> TcnModel {
        let mut c = TcnConfig::new(
            vec!["a".into(), "b".into(), "target".into()],
            vec![EmbeddingSpec {
                name: "dow".into(),
                rows: 8,
                dim: 4,
            }],
            24,
            24,
            vec![0.05, 0.5, 0.9],
        )
        .with_blocks(2, 8);
        c.head_hidden = 8;
        c.dropout = 0.0;
        let mut m = TcnModel::new(c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        m.scaler_hash = "h".into();
        m
    }

    fn window(p: usize, nf: usize, seed: u64) -> WindowSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WindowSample {
            origin: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            start: 0,
            num_features: nf,
            features: (0..nf * p).map(|_| rng.random::<f64>()).collect(),
            num_categorical: 1,
            categorical: (0..p).map(|t| 1 + t % 7).collect(),
            past_target: (0..p).map(|_| rng.random::<f64>()).collect(),
            horizon: vec![0.0; 24],
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn head_only_transfer_trains_exactly_the_heads() {
        let src = source();
        let plan = TransferPlan {
            appended_blocks: 0,
            head_hidden: Some(8),
            ..Default::default()
        };
        let m = build_transfer_model(&src, &plan, &names(&["a", "b", "target"])).unwrap();
        assert!(m.adapter.is_none());
        let r = m.param_report();
        assert_eq!(r.trainable, m.head_param_count());
        assert_eq!(r.total, src.param_count());
        assert_ne!(m.heads, src.heads);
    }

    #[test]
    fn appended_blocks_continue_dilations_and_keep_trunk_function() {
        let src = source();
        let plan = TransferPlan {
            appended_blocks: 2,
            appended_channels: Some(6),
            ..Default::default()
        };
        let m = build_transfer_model(&src, &plan, &names(&["a", "b", "target"])).unwrap();
        assert_eq!(m.config.dilations, vec![1, 2, 4, 8]);
        let w = window(24, 2, 3);
        let before = src.block_outputs(&w).unwrap();
        let after = m.block_outputs(&w).unwrap();
        assert_eq!(before[..], after[..2]);
        let scratch = scratch_param_count(&m).unwrap();
        assert!(m.param_report().trainable < scratch);
        assert_eq!(m.param_report().total, scratch);
    }

    #[test]
    fn horizons_and_unfreezing() {
        let src = source();
        for h in [1, 4, 24] {
            let plan = TransferPlan {
                horizon: h,
                ..Default::default()
            };
            let m = build_transfer_model(&src, &plan, &names(&["a", "b", "target"])).unwrap();
            let mut w = window(24, 2, 4);
            w.horizon = vec![0.0; h];
            assert_eq!(m.forward(&w).unwrap().shape(), (h, 3));
        }
        let plan = TransferPlan {
            unfreeze_top: 1,
            appended_blocks: 0,
            ..Default::default()
        };
        let m = build_transfer_model(&src, &plan, &names(&["a", "b", "target"])).unwrap();
        assert!(!m.blocks[0].conv1.weight.requires_grad());
        assert!(m.blocks[1].conv1.weight.requires_grad());
    }

    #[test]
    fn adapter_bridges_feature_sets() {
        let src = source();
        let target = names(&["a", "c", "d", "target"]);
        let m = build_transfer_model(&src, &TransferPlan::default(), &target).unwrap();
        let a = m.adapter.as_ref().unwrap();
        assert_eq!(a.weight.shape(), &[1, 4, 3]);
        assert_eq!(&a.weight.data()[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&a.weight.data()[9..], &[0.0, 0.0, 1.0]);
        assert!(a.weight.requires_grad());
        assert_eq!(m.forward(&window(24, 3, 5)).unwrap().shape(), (24, 3));
        assert!(build_transfer_model(&src, &TransferPlan::default(), &names(&["x", "y"])).is_err());
    }

    #[test]
    fn fine_tune_leaves_frozen_weights_bitwise_equal() {
        let src = source();
        let plan = TransferPlan {
            appended_blocks: 1,
            ..Default::default()
        };
        let mut m = build_transfer_model(&src, &plan, &names(&["a", "b", "target"])).unwrap();
        let windows: Vec<WindowSample> = (0..20)
            .map(|s| {
                let mut w = window(24, 2, s);
                w.horizon = (0..24).map(|i| (i as f64 / 5.0).sin()).collect();
                w
            })
            .collect();
        let config = TrainConfig {
            epochs: 3,
            patience: 1,
            lookback: 24,
            horizon: 24,
            lr: 1e-2,
            ..Default::default()
        };
        let heads_before = m.heads.clone();
        fine_tune(&mut m, &windows, None, &config).unwrap();
        let data = |m: &TcnModel| -> Vec<Vec<f64>> {
            m.parameters()
                .into_iter()
                .filter(|(n, _)| n.starts_with("embeddings") || n.starts_with("blocks.0") || n.starts_with("blocks.1"))
                .map(|(_, t)| t.data().to_vec())
                .collect()
        };
        assert_eq!(data(&m), data(&src));
        assert_ne!(m.heads, heads_before);

        let mut m0 = build_transfer_model(&src, &plan, &names(&["a", "b", "target"])).unwrap();
        let fresh = m0.clone();
        let zero = TrainConfig {
            epochs: 0,
            patience: 0,
            ..config
        };
        fine_tune(&mut m0, &windows, None, &zero).unwrap();
        assert_eq!(m0, fresh);
    }
}
