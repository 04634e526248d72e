//! End-to-end acceptance criteria. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use mqtcn::data::{
    aggregate_hourly, make_windows, make_windows_in, plan_splits, FeatureFrame, FeatureOptions, FeaturePlan,
    HolidayCalendar, SplitConfig, WindowSample,
};
use mqtcn::harness::{
    final_fit_and_test, validation_loss, GuardedFrame, HyperParams, TrainConfig,
};
use mqtcn::metrics::{mean_pinball, normalized_deviation, picp, pinball_graph, pinball_loss, winkler};
use mqtcn::synth::{fixed_holidays, generate_sessions, shifted_profile, SiteProfile};
use mqtcn::tcn::{Batch, EmbeddingSpec, ForwardMode, TcnConfig, TcnModel};
use mqtcn::tensor::Graph;
use mqtcn::transfer::{
    build_transfer_model, dtw_brute_force, dtw_distance, fine_tune, rank_sources, scratch_on_target,
    scratch_param_count, transfer_to_target, RankingConfig, TransferPlan,
};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap()
}

fn holidays() -> Vec<chrono::NaiveDate> {
    fixed_holidays(2019, 2020)
}

fn profile(id: &str, seed: u64) -> SiteProfile {
    let mut p = SiteProfile::new(id, seed);
    p.holidays = holidays();
    p
}

fn site_frame(p: &SiteProfile, months: u32) -> FeatureFrame {
    aggregate_hourly(&generate_sessions(p, start(), months).unwrap(), &p.site_id).unwrap()
}

fn options() -> FeatureOptions {
    FeatureOptions {
        holidays: HolidayCalendar::new(holidays()),
        ..Default::default()
    }
}

fn small_config(p: usize, horizon: usize) -> TcnConfig {
    let mut c = TcnConfig::new(
        vec!["a".into(), "b".into(), "c".into(), "target".into()],
        vec![EmbeddingSpec {
            name: "day_of_week".into(),
            rows: 8,
            dim: 4,
        }],
        p,
        horizon,
        vec![0.05, 0.5, 0.9],
    )
    .with_blocks(2, 8);
    c.head_hidden = 8;
    c.dropout = 0.0;
    c
}

fn random_window(p: usize, horizon: usize, rng: &mut ChaCha8Rng) -> WindowSample {
    WindowSample {
        origin: start(),
        start: 0,
        num_features: 3,
        features: (0..3 * p).map(|_| rng.random_range(-1.0..1.0)).collect(),
        num_categorical: 1,
        categorical: (0..p).map(|_| rng.random_range(0..8)).collect(),
        past_target: (0..p).map(|_| rng.random_range(0.0..1.0)).collect(),
        horizon: (0..horizon).map(|_| rng.random_range(0.0..1.0)).collect(),
    }
}

fn ac1_gradients() -> Result<String, String> {
    let (p, horizon) = (24, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = TcnModel::new(small_config(p, horizon), &mut rng).map_err(|e| e.to_string())?;
    ensure(model.config.dilations == [1, 2] && model.config.kernel_size == 3, || "wrong architecture".into())?;
    let windows: Vec<WindowSample> = (0..4).map(|_| random_window(p, horizon, &mut rng)).collect();
    let refs: Vec<&WindowSample> = windows.iter().collect();

    let batch = Batch::from_windows(&refs).unwrap();
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let heads = model.forward_graph(&mut g, &vars, &batch, &mut ForwardMode::Eval).unwrap();
    let targets = g.constant(vec![batch.size, batch.horizon], batch.targets.clone()).unwrap();
    let loss = pinball_graph(&mut g, &heads, targets, &model.config.quantiles).unwrap();
    g.backward(loss).unwrap();
    model.zero_grad();
    model.accumulate_grads(&g, &vars).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|(_, t)| t.grad().expect("every parameter is trainable").to_vec())
        .collect();
    model.zero_grad();

    let eps = 1e-6;
    let floor = 1e-8;
    let mut errors = Vec::new();
    let n_tensors = analytic.len();
    for k in 0..n_tensors {
        for i in 0..analytic[k].len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.parameters_mut()[k].1.data_mut()[i] += delta;
                validation_loss(&m, &windows).unwrap()
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = analytic[k][i];
            errors.push((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
        }
    }
    let n = errors.len();
    let within = errors.iter().filter(|e| **e < 1e-4).count();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let share = within as f64 / n as f64;
    ensure(share >= 0.99 && worst < 1e-3, || {
        format!("{within}/{n} parameters below 1e-4, worst relative error {worst:.3e}")
    })?;
    Ok(format!("{n} parameters, {:.2}% below 1e-4, worst {worst:.2e}", 100.0 * share))
}

fn ac2_causality() -> Result<String, String> {
    let (p, horizon) = (40, 4);
    let mut sensitive = 0;
    let mut rf = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let model = TcnModel::new(small_config(p, horizon), &mut rng).unwrap();
        rf = model.receptive_field();
        let base = random_window(p, horizon, &mut rng);
        let perturb = |pos: usize| {
            let mut w = base.clone();
            for f in 0..3 {
                w.features[pos * 3 + f] += 0.7;
            }
            w.past_target[pos] += 0.7;
            w.categorical[pos] = (w.categorical[pos] + 3) % 8;
            w
        };
        let trunk = model.trunk_activations(&base).unwrap();
        let c = model.config.trunk_output_channels();
        for pos in [3, 17, p - 2] {
            let t = model.trunk_activations(&perturb(pos)).unwrap();
            ensure(t.data()[..pos * c] == trunk.data()[..pos * c], || {
                format!("seed {seed}: perturbing step {pos} changed earlier activations")
            })?;
        }
        let out = model.forward(&base).unwrap();
        for dist in rf..p {
            let f = model.forward(&perturb(p - 1 - dist)).unwrap();
            ensure(f.values() == out.values(), || {
                format!("seed {seed}: input {dist} steps back changed the output (receptive field {rf})")
            })?;
        }
        let f = model.forward(&perturb(p - rf)).unwrap();
        if f.values() != out.values() {
            sensitive += 1;
        }
    }
    ensure(sensitive >= 4, || format!("output sensitive at distance rf-1 for only {sensitive}/5 seeds"))?;
    Ok(format!("receptive field {rf}; invariant beyond it; sensitive at rf-1 in {sensitive}/5 seeds"))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn brute_winkler(y: f64, l: f64, u: f64, alpha: f64) -> f64 {
    let w = u - l;
    if y < l {
        w + 2.0 * (l - y) / alpha
    } else if y > u {
        w + 2.0 * (y - u) / alpha
    } else {
        w
    }
}

fn ac3_metric_oracles() -> Result<String, String> {
    let checks = [
        ("pinball y=ŷ", pinball_loss(0.3, 4.0, 4.0).unwrap(), 0.0),
        ("pinball under", pinball_loss(0.9, 10.0, 8.0).unwrap(), 1.8),
        ("pinball over", pinball_loss(0.9, 8.0, 10.0).unwrap(), 0.2),
        ("picp all inside", picp(&[1.0, 2.0], &[0.0, 0.0], &[3.0, 3.0]).unwrap(), 100.0),
        (
            "picp 2/3",
            picp(&[1.0, 5.0, 9.0], &[0.0, 6.0, 8.0], &[2.0, 7.0, 10.0]).unwrap(),
            200.0 / 3.0,
        ),
        ("picp boundary", picp(&[5.0], &[2.0], &[5.0]).unwrap(), 100.0),
        ("winkler inside", winkler(&[3.0], &[2.0], &[5.0], 0.15).unwrap(), 3.0),
        ("winkler above", winkler(&[6.0], &[2.0], &[5.0], 0.15).unwrap(), 3.0 + 2.0 / 0.15),
        ("winkler below", winkler(&[1.0], &[2.0], &[5.0], 0.15).unwrap(), 3.0 + 2.0 / 0.15),
        ("nd perfect", normalized_deviation(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 0.0),
        ("nd half", normalized_deviation(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5),
        ("nd zero forecast", normalized_deviation(&[2.0, 5.0], &[0.0, 0.0]).unwrap(), 1.0),
    ];
    for (name, got, want) in checks {
        ensure(close(got, want), || format!("{name}: {got} != {want}"))?;
    }
    ensure(normalized_deviation(&[0.0, 0.0], &[1.0, 1.0]).is_err(), || "nd accepted zero actuals".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let n = rng.random_range(1..20);
        let mut y = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-5.0..5.0);
            let b: f64 = a + rng.random_range(0.0..4.0);
            l.push(a);
            u.push(b);
            // A share of actuals sits exactly on a bound.
            y.push(match rng.random_range(0..4) {
                0 => a,
                1 => b,
                _ => rng.random_range(-8.0..8.0),
            });
        }
        let ws = winkler(&y, &l, &u, 0.15).unwrap();
        let width = u.iter().zip(&l).map(|(u, l)| u - l).sum::<f64>() / n as f64;
        let brute_ws = (0..n).map(|j| brute_winkler(y[j], l[j], u[j], 0.15)).sum::<f64>() / n as f64;
        let covered = (0..n).filter(|&j| l[j] <= y[j] && y[j] <= u[j]).count();
        let brute_picp = 100.0 * covered as f64 / n as f64;
        ensure(ws >= width - 1e-12, || format!("instance {i}: winkler {ws} below width {width}"))?;
        ensure((ws - brute_ws).abs() < 1e-9, || format!("instance {i}: winkler {ws} vs {brute_ws}"))?;
        let pc = picp(&y, &l, &u).unwrap();
        ensure((pc - brute_picp).abs() < 1e-9, || format!("instance {i}: picp {pc} vs {brute_picp}"))?;
        ensure((covered == n) == ((ws - width).abs() < 1e-12), || {
            format!("instance {i}: winkler equals width iff covered violated")
        })?;
    }
    Ok(format!("{} oracle values exact; 1000 random instances agree", checks.len()))
}

fn ac4_quantile_consistency() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut parts = Vec::new();
    for q in [0.05, 0.5, 0.9] {
        let (mut best, mut best_loss) = (f64::NAN, f64::INFINITY);
        for k in 0..=6000 {
            let c = -3.0 + k as f64 * 0.001;
            let loss = mean_pinball(q, &samples, &vec![c; samples.len()]).unwrap();
            if loss < best_loss {
                best_loss = loss;
                best = c;
            }
        }
        let truth = normal.inverse_cdf(q);
        ensure((best - truth).abs() <= 0.05, || format!("q={q}: minimizer {best:.3} vs {truth:.3}"))?;
        parts.push(format!("q{q}: {best:.3} vs {truth:.3}"));
    }
    Ok(parts.join(", "))
}

fn ac5_end_to_end() -> Result<String, String> {
    let frame = site_frame(&profile("site", 5), 6);
    let split = plan_splits(frame.len(), SplitConfig::default()).unwrap();
    let hp = HyperParams {
        blocks: 3,
        channels: 16,
        kernel_size: 3,
        dropout: 0.0,
        lr: 5e-3,
        batch_size: 32,
        head_hidden: 16,
    };
    let tc = TrainConfig {
        lookback: 48,
        horizon: 24,
        epochs: 30,
        patience: 10,
        seed: 5,
        ..Default::default()
    };
    let guard = GuardedFrame::new(frame, split).unwrap();
    let r = final_fit_and_test(guard, &options(), &hp, &tc, 30, false).map_err(|e| e.to_string())?;
    let m = r.report;
    let detail = format!(
        "PICP {:.2}% over N={}, q50 ND {:.4} vs seasonal-naive {:.4}",
        m.picp, m.n, m.nd, r.baseline_nd
    );
    ensure((78.0..=92.0).contains(&m.picp) && m.nd < r.baseline_nd, || detail.clone())?;
    Ok(detail)
}

fn ac6_cv_integrity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (p, horizon) = (6, 3);
    let mut checked = 0;
    for case in 0..100 {
        let t = rng.random_range(300..2000);
        let folds = rng.random_range(1..=6);
        let config = SplitConfig {
            folds,
            min_segment: p + horizon,
            ..Default::default()
        };
        let split = plan_splits(t, config).map_err(|e| format!("case {case}: T={t} folds={folds}: {e}"))?;
        let test_len = t.div_ceil(10);
        ensure(split.test == (t - test_len..t), || format!("case {case}: test {:?} for T={t}", split.test))?;
        let frame = FeatureFrame::raw("cv", start(), (0..t).map(|i| (i % 24) as f64).collect());
        let encoded = FeaturePlan::fit(&frame, 0..t, FeatureOptions::default())
            .unwrap()
            .apply(&frame)
            .unwrap();
        for (k, fold) in split.folds.iter().enumerate() {
            ensure(fold.train.end <= fold.val.start && fold.val.end <= split.test.start, || {
                format!("case {case} fold {k}: train {:?} val {:?}", fold.train, fold.val)
            })?;
            let tw = make_windows_in(&encoded, fold.train.clone(), p, horizon, 1).unwrap();
            let vw = make_windows_in(&encoded, fold.val.clone(), p, horizon, 1).unwrap();
            let max_train = tw.iter().map(|w| w.span().end - 1).max().unwrap();
            let min_val = vw.iter().map(|w| w.span().start).min().unwrap();
            ensure(max_train < min_val, || format!("case {case} fold {k}: train reaches {max_train}, val starts {min_val}"))?;
            for w in tw.iter() {
                ensure(w.span().start >= fold.train.start && w.span().end <= fold.train.end, || {
                    format!("case {case} fold {k}: train window {:?} straddles", w.span())
                })?;
            }
            for w in vw.iter() {
                ensure(w.span().start >= fold.val.start && w.span().end <= fold.val.end, || {
                    format!("case {case} fold {k}: val window {:?} straddles", w.span())
                })?;
            }
            checked += 1;
        }
        let all = make_windows(&encoded, p, horizon, 1).unwrap();
        ensure(!all.is_empty(), || "no windows".into())?;
    }
    Ok(format!("100 configurations, {checked} folds verified"))
}

fn ac7_dtw() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let n = rng.random_range(1..=5);
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
        })
        .collect();
    let mut pairs = 0;
    for a in &batch {
        for b in &batch {
            let dp = dtw_distance(a, b, None).unwrap().distance;
            let brute = dtw_brute_force(a, b);
            ensure((dp - brute).abs() < 1e-9, || format!("{a:?} vs {b:?}: {dp} != {brute}"))?;
            pairs += 1;
        }
        ensure(dtw_distance(a, a, None).unwrap().distance == 0.0, || format!("dtw(x,x) != 0 for {a:?}"))?;
    }
    let base = profile("target", 70);
    let target = site_frame(&base, 2);
    let mut near = shifted_profile(&base, 1, 1.0).unwrap();
    near.site_id = "shift-01".into();
    near.seed = 71;
    let mut far = shifted_profile(&base, 12, 1.0).unwrap();
    far.site_id = "shift-12".into();
    far.seed = 72;
    let (near, far) = (site_frame(&near, 2), site_frame(&far, 2));
    let ranked = rank_sources(&target, &[&far, &near], &RankingConfig::default()).unwrap();
    ensure(ranked[0].site_id == "shift-01", || format!("ranking {ranked:?}"))?;
    Ok(format!(
        "{pairs} pairs match enumeration; shift-1 {:.2} < shift-12 {:.2}",
        ranked[0].distance, ranked[1].distance
    ))
}

struct Source {
    model: TcnModel,
    plan: FeaturePlan,
    hp: HyperParams,
}

fn source_model() -> Source {
    let src = profile("source", 8);
    let frame = site_frame(&src, 6);
    let split = plan_splits(frame.len(), SplitConfig::default()).unwrap();
    let hp = HyperParams {
        blocks: 3,
        channels: 16,
        kernel_size: 3,
        dropout: 0.0,
        lr: 5e-3,
        batch_size: 32,
        head_hidden: 16,
    };
    let tc = TrainConfig {
        lookback: 48,
        horizon: 24,
        epochs: 30,
        patience: 10,
        seed: 8,
        ..Default::default()
    };
    let r = final_fit_and_test(GuardedFrame::new(frame, split).unwrap(), &options(), &hp, &tc, 30, false).unwrap();
    Source {
        model: r.model,
        plan: r.plan,
        hp,
    }
}

fn transfer_plan(seed: u64, lr: f64) -> TransferPlan {
    TransferPlan {
        budget_hours: 336,
        source_lr: lr,
        seed,
        ..Default::default()
    }
}

fn ac8_transfer_advantage() -> Result<String, String> {
    let source = source_model();
    let base = profile("source", 8);
    let mut wins = 0;
    let mut lines = Vec::new();
    let mut fraction = 0.0;
    for seed in 0..5u64 {
        let mut tp = shifted_profile(&base, 1, 0.8).unwrap();
        tp.site_id = "target".into();
        tp.seed = 800 + seed;
        let target = site_frame(&tp, 6);
        let plan = transfer_plan(seed, source.hp.lr);
        let tl = transfer_to_target(&source.model, &source.plan, &target, &plan, 0.1).map_err(|e| e.to_string())?;
        let scratch = scratch_on_target(&target, &options(), &source.hp, &plan, 48, 0.1).map_err(|e| e.to_string())?;
        fraction = tl.params.trainable as f64 / scratch_param_count(&tl.model).unwrap() as f64;
        if tl.report.pinball < scratch.report.pinball {
            wins += 1;
        }
        lines.push(format!("{:.3}/{:.3}", tl.report.pinball, scratch.report.pinball));
    }
    let detail = format!(
        "TL beats scratch in {wins}/5 seeds (pinball TL/scratch {}); trainable share {:.1}%",
        lines.join(" "),
        100.0 * fraction
    );
    ensure(wins >= 4 && fraction < 0.5, || detail.clone())?;
    Ok(detail)
}

fn ac9_freeze_contract() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let source = TcnModel::new(small_config(24, 24), &mut rng).unwrap();
    let names = source.config.input_names.clone();
    let plan = TransferPlan {
        appended_blocks: 1,
        head_hidden: Some(8),
        horizon: 4,
        ..Default::default()
    };
    let mut model = build_transfer_model(&source, &plan, &names).unwrap();
    let probe = random_window(24, 4, &mut rng);
    let before = source.block_outputs(&probe).unwrap();
    let after = model.block_outputs(&probe).unwrap();
    ensure(before[..] == after[..source.blocks.len()], || "trunk activations changed by head surgery".into())?;

    let frozen: Vec<(String, Vec<f64>)> = model
        .parameters()
        .into_iter()
        .filter(|(_, t)| !t.requires_grad())
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let windows: Vec<WindowSample> = (0..24).map(|_| random_window(24, 4, &mut rng)).collect();
    let config = TrainConfig {
        epochs: 5,
        patience: 2,
        lookback: 24,
        horizon: 4,
        lr: 1e-2,
        ..Default::default()
    };
    let trainable_before: Vec<Vec<f64>> = model
        .parameters()
        .into_iter()
        .filter(|(_, t)| t.requires_grad())
        .map(|(_, t)| t.data().to_vec())
        .collect();
    fine_tune(&mut model, &windows, None, &config).map_err(|e| e.to_string())?;
    let frozen_after: Vec<(String, Vec<f64>)> = model
        .parameters()
        .into_iter()
        .filter(|(_, t)| !t.requires_grad())
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    ensure(frozen == frozen_after, || "a frozen parameter changed".into())?;
    let trainable_after: Vec<Vec<f64>> = model
        .parameters()
        .into_iter()
        .filter(|(_, t)| t.requires_grad())
        .map(|(_, t)| t.data().to_vec())
        .collect();
    ensure(trainable_before != trainable_after, || "fine-tuning did not update anything".into())?;
    let after_tune = model.block_outputs(&probe).unwrap();
    ensure(before[..] == after_tune[..source.blocks.len()], || "source-block activations drifted".into())?;
    Ok(format!("{} frozen tensors bitwise equal; trunk activations identical", frozen.len()))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let code = mqtcn::cli::run(std::iter::once("mqtcn").chain(args.iter().copied()));
    ensure(code == 0, || format!("`mqtcn {}` exited {code}", args.join(" ")))
}

fn ac10_reproducibility() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"lookback": 48, "epochs": 3, "patience": 1, "synth": {"months": 2},
            "search": {"budget": 2, "blocks": [2], "channels": [8], "head_hidden": [8], "batch_size": [64]},
            "split": {"folds": 2}}"#,
    )
    .unwrap();
    let c = config.to_string_lossy().into_owned();
    cli(&["synth", "--config", &c, "--seed", "10", "--out", &d("synth")])?;
    cli(&[
        "ingest",
        "--sessions",
        &d("synth/sessions.csv"),
        "--holidays",
        &d("synth/holidays.csv"),
        "--out",
        &d("frame"),
    ])?;
    cli(&[
        "cv",
        "--config",
        &c,
        "--seed",
        "10",
        "--frame",
        &d("frame/frame.csv"),
        "--holidays",
        &d("synth/holidays.csv"),
        "--out",
        &d("run"),
    ])?;
    let manifest = d("run/manifest.json");
    cli(&["replay", "--manifest", &manifest, "--out", &d("replay-a")])?;
    cli(&["replay", "--manifest", &manifest, "--out", &d("replay-b")])?;
    let read = |p: &str| std::fs::read(Path::new(&d(p))).map_err(|e| e.to_string());
    let (orig, a, b) = (read("run/report.json")?, read("replay-a/report.json")?, read("replay-b/report.json")?);
    ensure(a == b && a == orig, || "report.json differs between runs".into())?;
    Ok(format!("report.json identical across 3 runs ({} bytes)", a.len()))
}

fn main() {
    let criteria: [(&str, Check, u64); 10] = [
        ("AC1 gradient correctness", ac1_gradients, 30),
        ("AC2 causality and receptive field", ac2_causality, 60),
        ("AC3 metric oracles", ac3_metric_oracles, 60),
        ("AC4 quantile consistency", ac4_quantile_consistency, 60),
        ("AC5 end-to-end coverage", ac5_end_to_end, 180),
        ("AC6 blocked-CV integrity", ac6_cv_integrity, 120),
        ("AC7 DTW oracle", ac7_dtw, 60),
        ("AC8 transfer advantage", ac8_transfer_advantage, 240),
        ("AC9 freeze contract", ac9_freeze_contract, 60),
        ("AC10 reproducibility", ac10_reproducibility, 120),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let result = result.and_then(|d| {
            if elapsed > Duration::from_secs(limit) {
                Err(format!("{d}; took {elapsed:.1?}, limit {limit}s"))
            } else {
                Ok(d)
            }
        });
        match result {
            Ok(d) => println!("PASS {name}: {d} [{:.1}s]", elapsed.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{:.1}s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
