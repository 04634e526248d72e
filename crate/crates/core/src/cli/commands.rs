use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, Duration};
use serde_json::json;

use super::{emit_plot_data, Job, Task};
use crate::checkpoint::Checkpoint;
use crate::data::{
    aggregate_hourly, compress_station_activity, filter_anomalies, forecast_windows, plan_splits, read_frame_csv,
    read_sessions, sidecar_path, write_frame_csv, write_sessions_csv, AnomalyConfig, CompressionConfig,
    FeatureFrame, FeatureOptions, FeaturePlan, FrameSidecar, HolidayCalendar, SplitConfig, SplitPlan, WindowSample,
};
use crate::data::session::timestamp;
use crate::error::{Error, Result};
use crate::harness::{
    cross_validate, derive_seed, final_fit_and_test, forecast_kwh, seasonal_naive_forecasts, window_actuals_kwh,
    write_atomic, write_curves_csv, write_forecasts_csv, write_json, FinalResult, GuardedFrame, RunDir,
};
use crate::metrics::{evaluate_forecasts, normalized_deviation, IntervalSpec, MetricsReport};
use crate::synth::{fixed_holidays, generate_sessions, shifted_profile, SiteProfile};
use crate::tcn::TcnModel;
use crate::transfer::{rank_sources, scratch_on_target, scratch_param_count, transfer_to_target, TransferPlan};

#[derive(Default)]
pub(super) struct Output {
    pub artifacts: Vec<String>,
    pub report: Option<MetricsReport>,
    pub messages: Vec<String>,
}

impl Output {
    fn add(&mut self, name: impl Into<String>) {
        self.artifacts.push(name.into());
    }
}

pub(super) fn run(job: &Job, dir: &RunDir) -> Result<Output> {
    match job.task {
        Task::Synth => synth(job, dir),
        Task::Ingest => ingest(job, dir),
        Task::Train | Task::Cv => fit(job, dir),
        Task::Evaluate => evaluate(job, dir),
        Task::Dtw => dtw(job, dir),
        Task::Transfer => transfer(job, dir),
        Task::Forecast => forecast(job, dir),
    }
}

fn parse_ts(s: &str) -> Result<chrono::DateTime<chrono::Utc>> {
    timestamp::parse(s).ok_or_else(|| Error::invalid(format!("`{s}` is not an RFC 3339 timestamp")))
}

fn holidays(job: &Job) -> Result<HolidayCalendar> {
    job.optional_input("holidays")
        .map_or_else(|| Ok(HolidayCalendar::default()), HolidayCalendar::read_csv)
}

fn csv_to_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    write_atomic(path, &bytes)
}

fn synth(job: &Job, dir: &RunDir) -> Result<Output> {
    let s = &job.config.synth;
    let start = parse_ts(&s.start)?;
    let mut profile = SiteProfile::new(s.site_id.clone(), derive_seed(job.config.seed, "synth"));
    profile.sessions_per_day = s.sessions_per_day;
    profile.station_count = s.station_count;
    profile.holidays = fixed_holidays(start.year(), start.year() + s.months.div_ceil(12) as i32);
    if s.hour_shift != 0 || s.scale != 1.0 {
        profile = shifted_profile(&profile, s.hour_shift, s.scale)?;
    }
    let sessions = generate_sessions(&profile, start, s.months)?;
    csv_to_file(&dir.path("sessions.csv"), |b| write_sessions_csv(b, &sessions))?;
    HolidayCalendar::new(profile.holidays.iter().copied()).write_csv(&dir.path("holidays.csv"))?;
    let mut out = Output::default();
    out.add("sessions.csv");
    out.add("holidays.csv");
    out.messages.push(format!("{} sessions for site {}", sessions.len(), s.site_id));
    Ok(out)
}

fn feature_options(job: &Job, frame: &FeatureFrame, split: &SplitPlan) -> Result<FeatureOptions> {
    let f = &job.config.features;
    let station_encoder = match f.station_bottleneck {
        Some(b) => Some(compress_station_activity(
            &[(frame, split.development())],
            CompressionConfig {
                bottleneck: b,
                epochs: f.station_epochs,
                lr: 1e-2,
                seed: derive_seed(job.config.seed, "station-encoder"),
            },
        )?),
        None => None,
    };
    Ok(FeatureOptions {
        holidays: holidays(job)?,
        active_stations: f.active_stations,
        station_encoder,
        weekday_embedding: f.weekday_embedding,
    })
}

fn ingest(job: &Job, dir: &RunDir) -> Result<Output> {
    let c = &job.config;
    let sessions = read_sessions(job.input("sessions")?)?;
    let site = match &c.site_id {
        Some(s) => s.clone(),
        None => {
            let sites: BTreeSet<&str> = sessions.iter().map(|s| s.site_id.as_str()).collect();
            match sites.len() {
                1 => sites.into_iter().next().expect("one site").to_string(),
                _ => {
                    return Err(Error::invalid(format!(
                        "sessions cover several sites {sites:?}; choose one with --site"
                    )))
                }
            }
        }
    };
    let mut frame = aggregate_hourly(&sessions, &site)?;
    let mut clips = Vec::new();
    if c.anomaly.enabled {
        (frame, clips) = filter_anomalies(
            &frame,
            AnomalyConfig {
                window: c.anomaly.window,
                k: c.anomaly.k,
            },
        )?;
    }
    let split = plan_splits(frame.len(), c.split)?;
    let options = feature_options(job, &frame, &split)?;
    let plan = FeaturePlan::fit(&frame, split.development(), options)?;
    let encoded = plan.apply(&frame)?;
    let csv_path = dir.path("frame.csv");
    csv_to_file(&csv_path, |b| write_frame_csv(b, &encoded))?;
    let sidecar = FrameSidecar {
        site_id: site.clone(),
        start: frame.start,
        hours: frame.len(),
        stations: frame.stations.clone(),
        feature_names: encoded.feature_names.clone(),
        plan: Some(serde_json::to_value(&plan)?),
        plan_hash: Some(plan.hash()),
        encoder_hash: plan.options.station_encoder.as_ref().map(|e| e.hash()),
    };
    write_json(&sidecar_path(&csv_path), &sidecar)?;
    write_json(&dir.path("anomalies.json"), &clips)?;
    let mut out = Output::default();
    out.add("frame.csv");
    out.add("frame.json");
    out.add("anomalies.json");
    out.messages.push(format!(
        "site {site}: {} hours from {}, {} stations, {} clipped hours",
        frame.len(),
        frame.start,
        frame.stations.len(),
        clips.len()
    ));
    Ok(out)
}

fn write_final(dir: &RunDir, out: &mut Output, site: &str, r: &FinalResult, job: &Job, hp: &crate::harness::HyperParams) -> Result<()> {
    let ckpt = Checkpoint::new(site, &r.model, &r.plan, Some(hp.clone()), Some(job.config.train_config()));
    ckpt.save(&dir.path("best.ckpt"))?;
    write_json(&dir.path("report.json"), &r.report)?;
    write_forecasts_csv(&dir.path("forecasts.csv"), &r.forecasts, Some(&r.actuals))?;
    write_curves_csv(&dir.path("curves.csv"), std::slice::from_ref(&r.outcome.curves))?;
    emit_plot_data(&r.forecasts, &r.actuals, &dir.root)?;
    write_json(
        &dir.path("summary.json"),
        &json!({
            "site_id": site,
            "test": [r.test.start, r.test.end],
            "windows": r.forecasts.len(),
            "epochs": r.outcome.epochs_run,
            "param_count": r.model.param_count(),
            "receptive_field": r.model.receptive_field(),
            "baseline_nd": r.baseline_nd,
            "nd": r.report.nd,
        }),
    )?;
    for a in ["best.ckpt", "report.json", "forecasts.csv", "curves.csv", "plot_data.csv", "coverage.csv", "summary.json"] {
        out.add(a);
    }
    out.messages.push(format!(
        "test hours {}..{}: q50 ND {:.4} vs seasonal-naive ND {:.4}",
        r.test.start, r.test.end, r.report.nd, r.baseline_nd
    ));
    out.report = Some(r.report);
    Ok(())
}

fn fit(job: &Job, dir: &RunDir) -> Result<Output> {
    let c = &job.config;
    let frame = read_frame_csv(job.input("frame")?)?;
    let site = frame.site_id.clone();
    let mut split_config = c.split;
    if job.task == Task::Cv {
        split_config.min_segment = split_config.min_segment.max(c.lookback + c.horizon);
    }
    let split = plan_splits(frame.len(), split_config)?;
    let options = feature_options(job, &frame, &split)?;
    write_json(&dir.path("folds.json"), &split)?;
    let mut out = Output::default();
    out.add("folds.json");
    let tc = c.train_config();
    let guard = GuardedFrame::new(frame, split)?;
    let (hp, epochs) = if job.task == Task::Cv {
        let cv = cross_validate(&guard, &options, &c.search_space(), &tc, c.jobs)?;
        for t in &cv.trials {
            let d = dir.trial_dir(t.index)?;
            write_curves_csv(&d.join("curves.csv"), &t.curves)?;
            write_json(&d.join("trial.json"), t)?;
            out.add(format!("trial-{}/curves.csv", t.index));
            out.add(format!("trial-{}/trial.json", t.index));
        }
        let losses: Vec<_> = cv
            .trials
            .iter()
            .map(|t| json!({"index": t.index, "mean_loss": t.mean_loss, "param_count": t.param_count, "error": t.error}))
            .collect();
        write_json(
            &dir.path("cv.json"),
            &json!({"best": cv.best, "final_epochs": cv.final_epochs(), "trials": losses}),
        )?;
        out.add("cv.json");
        out.messages.push(format!(
            "best trial {} of {}: mean validation pinball {:.4} kWh, final fit {} epochs",
            cv.best,
            cv.trials.len(),
            cv.best_loss(),
            cv.final_epochs()
        ));
        (cv.best_trial().hyper_params.clone(), cv.final_epochs())
    } else {
        (c.hyper_params.clone(), c.epochs)
    };
    let result = final_fit_and_test(guard, &options, &hp, &tc, epochs, c.sort_quantiles)?;
    write_final(dir, &mut out, &site, &result, job, &hp)?;
    Ok(out)
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, TcnModel)> {
    let ckpt = Checkpoint::load(path)?;
    let model = ckpt.model()?;
    Ok((ckpt, model))
}

fn evaluate(job: &Job, dir: &RunDir) -> Result<Output> {
    let (ckpt, model) = load_checkpoint(job.input("ckpt")?)?;
    let frame = read_frame_csv(job.input("frame")?)?;
    let split = plan_splits(frame.len(), SplitConfig { folds: 1, ..job.config.split })?;
    let encoded = ckpt.plan.apply(&frame)?;
    let (p, d) = (model.config.lookback, model.config.horizon);
    let windows = forecast_windows(&encoded, split.test.clone(), p, d, d)?;
    let forecasts = forecast_kwh(&model, &ckpt.plan, &windows, job.config.sort_quantiles)?;
    let actuals = window_actuals_kwh(&frame, &windows);
    let report = evaluate_forecasts(&forecasts, &actuals, IntervalSpec::default())?;
    write_json(&dir.path("report.json"), &report)?;
    write_forecasts_csv(&dir.path("forecasts.csv"), &forecasts, Some(&actuals))?;
    emit_plot_data(&forecasts, &actuals, &dir.root)?;
    let mut out = Output::default();
    for a in ["report.json", "forecasts.csv", "plot_data.csv", "coverage.csv"] {
        out.add(a);
    }
    if let Ok(naive) = seasonal_naive_forecasts(&frame.target, &windows) {
        let nd = normalized_deviation(&actuals.concat(), &naive.concat())?;
        out.messages.push(format!("seasonal-naive ND {nd:.4}"));
    }
    out.report = Some(report);
    Ok(out)
}

fn dtw(job: &Job, dir: &RunDir) -> Result<Output> {
    let target = read_frame_csv(job.input("target")?)?;
    let candidates = job
        .inputs_of("candidate")
        .into_iter()
        .map(read_frame_csv)
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FeatureFrame> = candidates.iter().collect();
    let ranked = rank_sources(&target, &refs, &job.config.ranking)?;
    write_json(&dir.path("ranking.json"), &ranked)?;
    let mut out = Output::default();
    out.add("ranking.json");
    for (i, r) in ranked.iter().enumerate() {
        out.messages
            .push(format!("{:>2}. {:<24} DTW {:.4} over {} h", i + 1, r.site_id, r.distance, r.hours_compared));
    }
    Ok(out)
}

fn transfer(job: &Job, dir: &RunDir) -> Result<Output> {
    let c = &job.config;
    let t = &c.transfer;
    let (ckpt, source) = load_checkpoint(job.input("source")?)?;
    let frame = read_frame_csv(job.input("target")?)?;
    let source_lr = ckpt.hyper_params.as_ref().map_or(c.hyper_params.lr, |h| h.lr);
    let plan = TransferPlan {
        appended_blocks: t.appended_blocks,
        appended_channels: t.appended_channels,
        horizon: c.horizon,
        lookback: None,
        quantiles: c.quantiles.clone(),
        head_hidden: t.head_hidden,
        unfreeze_top: t.unfreeze_top,
        budget_hours: t.budget_hours,
        epochs: t.epochs,
        patience: t.patience,
        batch_size: t.batch_size,
        lr_factor: t.lr_factor,
        source_lr,
        seed: c.seed,
    };
    let r = transfer_to_target(&source, &ckpt.plan, &frame, &plan, c.split.test_frac)?;
    let scratch_total = scratch_param_count(&r.model)?;
    let mut params = json!({
        "source_blocks": source.blocks.len(),
        "appended_blocks": t.appended_blocks,
        "total": r.params.total,
        "trainable": r.params.trainable,
        "frozen": r.params.frozen,
        "head_params": r.model.head_param_count(),
        "scratch_total": scratch_total,
        "trainable_fraction": r.params.trainable as f64 / scratch_total as f64,
    });
    let mut out = Output::default();
    if t.compare_scratch {
        let hp = ckpt.hyper_params.clone().unwrap_or_else(|| c.hyper_params.clone());
        let s = scratch_on_target(&frame, &ckpt.plan.options, &hp, &plan, source.config.lookback, c.split.test_frac)?;
        write_json(&dir.path("scratch_report.json"), &s.report)?;
        out.add("scratch_report.json");
        params["scratch_trainable"] = json!(s.params.trainable);
        out.messages.push(format!(
            "pinball: transfer {:.4} vs scratch {:.4}",
            r.report.pinball, s.report.pinball
        ));
    }
    Checkpoint::new(frame.site_id.clone(), &r.model, &r.plan, None, None).save(&dir.path("transfer.ckpt"))?;
    write_json(&dir.path("report.json"), &r.report)?;
    write_json(&dir.path("params.json"), &params)?;
    write_forecasts_csv(&dir.path("forecasts.csv"), &r.forecasts, Some(&r.actuals))?;
    write_curves_csv(&dir.path("curves.csv"), std::slice::from_ref(&r.outcome.curves))?;
    emit_plot_data(&r.forecasts, &r.actuals, &dir.root)?;
    for a in ["transfer.ckpt", "report.json", "params.json", "forecasts.csv", "curves.csv", "plot_data.csv", "coverage.csv"] {
        out.add(a);
    }
    out.messages.push(format!(
        "parameters: {} trainable, {} frozen ({:.1}% of a from-scratch model's {})",
        r.params.trainable,
        r.params.frozen,
        100.0 * r.params.trainable as f64 / scratch_total as f64,
        scratch_total
    ));
    out.report = Some(r.report);
    Ok(out)
}

fn forecast(job: &Job, dir: &RunDir) -> Result<Output> {
    let (ckpt, model) = load_checkpoint(job.input("ckpt")?)?;
    let frame = read_frame_csv(job.input("frame")?)?;
    let origin = parse_ts(job.config.origin.as_deref().ok_or_else(|| Error::invalid("--origin is required"))?)?;
    let (p, d) = (model.config.lookback, model.config.horizon);
    if origin < frame.start || origin > frame.end() || (origin - frame.start).num_seconds() % 3600 != 0 {
        return Err(Error::data(format!(
            "origin {origin} must be an hour in {}..={} of the frame",
            frame.start,
            frame.end()
        )));
    }
    let h0 = (origin - frame.start).num_hours() as usize;
    if h0 < p {
        return Err(Error::TooShort { required: p, actual: h0 });
    }
    // Hours past the frame end are zero-padded; the model reads only the lookback.
    let padded_len = frame.len().max(h0 + d);
    let mut padded = frame.clone();
    padded.target.resize(padded_len, 0.0);
    padded.activity.resize(padded_len, Vec::new());
    let encoded = ckpt.plan.apply(&padded)?;
    let mut window: WindowSample = forecast_windows(&encoded, h0..h0 + d, p, d, d)?.remove(0);
    let available = frame.len().saturating_sub(h0).min(d);
    window.horizon.truncate(available);
    window.horizon.resize(d, 0.0);
    let forecasts = forecast_kwh(&model, &ckpt.plan, &[window], job.config.sort_quantiles)?;
    let actuals = (available == d).then(|| vec![frame.target[h0..h0 + d].to_vec()]);
    write_forecasts_csv(&dir.path("forecasts.csv"), &forecasts, actuals.as_deref())?;
    let mut out = Output::default();
    out.add("forecasts.csv");
    out.messages.push(format!(
        "{d} hours from {} to {}",
        origin,
        origin + Duration::hours(d as i64 - 1)
    ));
    Ok(out)
}
