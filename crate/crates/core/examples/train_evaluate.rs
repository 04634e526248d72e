//! Trains a multi-quantile TCN on six synthetic months, evaluates the last
//! 10% and compares the median with a seasonal-naive forecast.
//!
//! cargo run --release --example train_evaluate

use chrono::{TimeZone, Utc};
use mqtcn::data::{aggregate_hourly, plan_splits, FeatureOptions, HolidayCalendar, SplitConfig};
use mqtcn::harness::{final_fit_and_test, GuardedFrame, HyperParams, TrainConfig};
use mqtcn::synth::{fixed_holidays, generate_sessions, SiteProfile};

fn main() -> mqtcn::Result<()> {
    let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut site = SiteProfile::new("site", 5);
    site.holidays = fixed_holidays(2019, 2019);
    let frame = aggregate_hourly(&generate_sessions(&site, start, 6)?, "site")?;
    let split = plan_splits(frame.len(), SplitConfig::default())?;
    let options = FeatureOptions {
        holidays: HolidayCalendar::new(site.holidays.clone()),
        ..Default::default()
    };
    let hp = HyperParams {
        blocks: 3,
        channels: 16,
        dropout: 0.0,
        lr: 5e-3,
        head_hidden: 16,
        ..Default::default()
    };
    let config = TrainConfig {
        lookback: 48,
        horizon: 24,
        seed: 5,
        ..Default::default()
    };
    let r = final_fit_and_test(GuardedFrame::new(frame, split)?, &options, &hp, &config, 30, false)?;
    println!("{} parameters, receptive field {} h", r.model.param_count(), r.model.receptive_field());
    println!("{}", r.report.table());
    println!("seasonal-naive ND: {:.4}", r.baseline_nd);
    let f = &r.forecasts[0];
    println!("first test day from {}:", f.origin());
    for s in (0..f.horizon()).step_by(4) {
        println!("  +{s:>2} h  actual {:>6.2}  forecast {:?}", r.actuals[0][s], f.row(s));
    }
    Ok(())
}
