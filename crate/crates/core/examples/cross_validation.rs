//! Random hyperparameter search with blocked expanding-origin CV. The test
//! range stays sealed until the final fit.
//!
//! cargo run --release --example cross_validation

use chrono::{TimeZone, Utc};
use mqtcn::data::{aggregate_hourly, plan_splits, FeatureOptions, HolidayCalendar, SplitConfig};
use mqtcn::harness::{cross_validate, final_fit_and_test, GuardedFrame, SearchSpace, TrainConfig};
use mqtcn::synth::{fixed_holidays, generate_sessions, SiteProfile};

fn main() -> mqtcn::Result<()> {
    let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut site = SiteProfile::new("site", 9);
    site.holidays = fixed_holidays(2019, 2019);
    let frame = aggregate_hourly(&generate_sessions(&site, start, 3)?, "site")?;
    let (p, d) = (48, 24);
    let split = plan_splits(
        frame.len(),
        SplitConfig {
            folds: 3,
            min_segment: p + d,
            ..Default::default()
        },
    )?;
    for (k, f) in split.folds.iter().enumerate() {
        println!("fold {k}: train {:?} validate {:?}", f.train, f.val);
    }
    println!("test {:?}", split.test);

    let options = FeatureOptions {
        holidays: HolidayCalendar::new(site.holidays.clone()),
        ..Default::default()
    };
    let space = SearchSpace {
        blocks: vec![2, 3],
        channels: vec![8, 16],
        kernel_size: vec![3],
        dropout: vec![0.0],
        head_hidden: vec![16],
        budget: 3,
        seed: 1,
        ..Default::default()
    };
    let config = TrainConfig {
        lookback: p,
        horizon: d,
        epochs: 15,
        patience: 5,
        ..Default::default()
    };
    let guard = GuardedFrame::new(frame, split)?;
    let cv = cross_validate(&guard, &options, &space, &config, 1)?;
    for t in &cv.trials {
        println!(
            "trial {}: {} blocks × {} ch, lr {:.4}: mean val pinball {:.4} kWh",
            t.index, t.hyper_params.blocks, t.hyper_params.channels, t.hyper_params.lr, t.mean_loss
        );
    }
    let best = cv.best_trial().hyper_params.clone();
    let r = final_fit_and_test(guard, &options, &best, &config, cv.final_epochs(), false)?;
    println!("best trial {} refit for {} epochs:\n{}", cv.best, cv.final_epochs(), r.report.table());
    Ok(())
}
