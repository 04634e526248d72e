use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{rng_for, TrainConfig};
use crate::data::{FeatureFrame, FeaturePlan, WindowSample};
use crate::error::{Error, Result};
use crate::metrics::pinball_graph;
use crate::tcn::{Batch, ForwardMode, QuantileForecast, TcnModel};
use crate::tensor::{Adam, AdamConfig, Graph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training pinball over the epoch's batches (`None` for the
    /// pre-training evaluation at epoch 0).
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub curves: Vec<EpochRecord>,
    /// Epoch whose weights were kept (0 = initial weights).
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub epochs_run: usize,
}

fn batch_loss(model: &TcnModel, windows: &[&WindowSample], mode: &mut ForwardMode<'_>) -> Result<(Graph, crate::tcn::ModelVars, crate::tensor::Var)> {
    let batch = Batch::from_windows(windows)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let heads = model.forward_graph(&mut g, &vars, &batch, mode)?;
    let targets = g.constant(vec![batch.size, batch.horizon], batch.targets)?;
    let loss = pinball_graph(&mut g, &heads, targets, &model.config.quantiles)?;
    Ok((g, vars, loss))
}

/// Mean multi-quantile pinball (normalized scale) with dropout off.
pub fn validation_loss(model: &TcnModel, windows: &[WindowSample]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::invalid("no validation windows"));
    }
    let mut total = 0.0;
    for chunk in windows.chunks(128) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let (g, _, loss) = batch_loss(model, &refs, &mut ForwardMode::Eval)?;
        total += g.value(loss)[0] * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Mini-batch Adam on mean pinball. With validation windows, stops after
/// `patience` epochs without improvement and restores the best weights
/// (the initial weights count as epoch 0). Without them, runs every epoch
/// and keeps the final weights.
pub fn train(
    model: &mut TcnModel,
    train_windows: &[WindowSample],
    val_windows: Option<&[WindowSample]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_windows.is_empty() {
        return Err(Error::invalid("training needs at least one window"));
    }
    let mut shuffle_rng = rng_for(config.seed, "shuffle");
    let mut dropout_rng = rng_for(config.seed, "dropout");
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr));
    let val_windows = val_windows.filter(|v| !v.is_empty());

    let initial_val = val_windows.map(|v| validation_loss(model, v)).transpose()?;
    let mut curves = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        val_loss: initial_val,
    }];
    let mut best = (0usize, initial_val, val_windows.map(|_| model.clone()));
    let mut last_finite: Option<usize> = None;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            let refs: Vec<&WindowSample> = idx.iter().map(|&i| &train_windows[i]).collect();
            let (mut g, vars, loss) = batch_loss(model, &refs, &mut ForwardMode::Train(&mut dropout_rng))?;
            let value = g.value(loss)[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, last_finite });
            }
            sum += value * refs.len() as f64;
            g.backward(loss)?;
            model.zero_grad();
            model.accumulate_grads(&g, &vars)?;
            let mut params: Vec<(String, &mut crate::tensor::Tensor)> =
                model.parameters_mut().into_iter().filter(|(_, t)| t.requires_grad()).collect();
            let mut named: Vec<(&str, &mut crate::tensor::Tensor)> =
                params.iter_mut().map(|(n, t)| (n.as_str(), &mut **t)).collect();
            adam.step(&mut named)?;
        }
        model.zero_grad();
        let train_loss = sum / train_windows.len() as f64;
        let val_loss = val_windows.map(|v| validation_loss(model, v)).transpose()?;
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, last_finite });
        }
        last_finite = Some(epoch);
        epochs_run = epoch;
        curves.push(EpochRecord {
            epoch,
            train_loss: Some(train_loss),
            val_loss,
        });
        match (val_loss, best.1) {
            (Some(v), Some(b)) if v < b => best = (epoch, Some(v), Some(model.clone())),
            (Some(_), Some(_)) => {
                if epoch - best.0 >= config.patience {
                    break;
                }
            }
            _ => best.0 = epoch,
        }
    }
    let (best_epoch, best_val_loss, best_model) = best;
    if let Some(m) = best_model {
        *model = m;
    }
    Ok(TrainOutcome {
        curves,
        best_epoch,
        best_val_loss,
        epochs_run,
    })
}

/// Forecasts on the kWh scale, optionally with per-step quantile sorting.
pub fn forecast_kwh(
    model: &TcnModel,
    plan: &FeaturePlan,
    windows: &[WindowSample],
    sort_quantiles: bool,
) -> Result<Vec<QuantileForecast>> {
    let refs: Vec<&WindowSample> = windows.iter().collect();
    Ok(model
        .predict(&refs)?
        .into_iter()
        .map(|f| {
            let f = f.map_values(|v| plan.invert_target(v));
            if sort_quantiles {
                f.sort_quantiles()
            } else {
                f
            }
        })
        .collect())
}

/// Unscaled horizon targets of each window, read from `frame`.
pub fn window_actuals_kwh(frame: &FeatureFrame, windows: &[WindowSample]) -> Vec<Vec<f64>> {
    windows.iter().map(|w| frame.target[w.horizon_range()].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, FeatureOptions};
    use crate::harness::HyperParams;
    use chrono::{TimeZone, Utc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(target: impl Fn(usize) -> f64, hours: usize, p: usize, delta: usize) -> (FeaturePlan, Vec<WindowSample>, TrainConfig, HyperParams) {
        let f = FeatureFrame::raw(
            "a",
            Utc.with_ymd_and_hms(2020, 1, 6, 0, 0, 0).unwrap(),
            (0..hours).map(target).collect(),
        );
        let plan = FeaturePlan::fit(&f, 0..hours, FeatureOptions::default()).unwrap();
        let e = plan.apply(&f).unwrap();
        let windows = make_windows(&e, p, delta, 1).unwrap();
        let config = TrainConfig {
            epochs: 10,
            patience: 5,
            lookback: p,
            horizon: delta,
            lr: 1e-2,
            batch_size: 16,
            ..Default::default()
        };
        let hp = HyperParams {
            blocks: 1,
            channels: 4,
            head_hidden: 4,
            dropout: 0.0,
            ..Default::default()
        };
        (plan, windows, config, hp)
    }

    #[test]
    fn constant_target_heads_converge_to_the_constant() {
        let c = 5.0;
        let (plan, windows, mut config, hp) = setup(|_| c, 200, 8, 1);
        // A constant column passes through unscaled, so heads must reach c.
        assert!(plan.target_scaler.constant[0]);
        config.epochs = 400;
        config.patience = 399;
        config.lr = 5e-3;
        config.batch_size = 16;
        let mut model = TcnModel::new(hp.model_config(&plan, &config), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        train(&mut model, &windows, None, &config).unwrap();
        let f = forecast_kwh(&model, &plan, &windows[..5], false).unwrap();
        for fc in f {
            for v in fc.values() {
                assert!((v - c).abs() < 0.01 * c, "{:?}", fc.values());
            }
        }
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let (plan, windows, mut config, hp) = setup(|t| (t % 24) as f64, 120, 12, 2);
        config.epochs = 0;
        config.patience = 0;
        let mut model = TcnModel::new(hp.model_config(&plan, &config), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let before = model.clone();
        let out = train(&mut model, &windows, Some(&windows[..10]), &config).unwrap();
        assert_eq!(model, before);
        assert_eq!(out.epochs_run, 0);
    }

    #[test]
    fn same_seed_same_curves_and_best_is_restored() {
        let (plan, windows, config, hp) = setup(|t| ((t % 24) as f64).sin() + 2.0, 200, 12, 2);
        let (tr, va) = windows.split_at(150);
        let run = || {
            let mut m = TcnModel::new(hp.model_config(&plan, &config), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            let out = train(&mut m, tr, Some(va), &config).unwrap();
            (m, out)
        };
        let (m1, o1) = run();
        let (m2, o2) = run();
        assert_eq!(o1, o2);
        assert_eq!(m1, m2);
        let best = o1.best_val_loss.unwrap();
        assert_eq!(validation_loss(&m1, va).unwrap(), best);
        for r in &o1.curves[..=o1.best_epoch] {
            assert!(best <= r.val_loss.unwrap());
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (plan, mut windows, config, hp) = setup(|t| (t % 24) as f64, 120, 12, 2);
        windows[7].horizon[1] = f64::NAN;
        let mut model = TcnModel::new(hp.model_config(&plan, &config), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        match train(&mut model, &windows, None, &config) {
            Err(Error::Divergence { epoch: 1, last_finite: None }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
