//! Transfers a source-site model to a target site with two weeks of data by
//! freezing the trunk and training fresh quantile heads, then compares it
//! with a model trained from scratch on the same two weeks.
//!
//! cargo run --release --example transfer

use chrono::{TimeZone, Utc};
use mqtcn::data::{aggregate_hourly, plan_splits, FeatureOptions, HolidayCalendar, SplitConfig};
use mqtcn::harness::{final_fit_and_test, GuardedFrame, HyperParams, TrainConfig};
use mqtcn::synth::{fixed_holidays, generate_sessions, shifted_profile, SiteProfile};
use mqtcn::transfer::{scratch_on_target, scratch_param_count, transfer_to_target, TransferPlan};

fn main() -> mqtcn::Result<()> {
    let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut source = SiteProfile::new("source", 3);
    source.holidays = fixed_holidays(2019, 2019);
    let source_frame = aggregate_hourly(&generate_sessions(&source, start, 6)?, "source")?;
    let options = FeatureOptions {
        holidays: HolidayCalendar::new(source.holidays.clone()),
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
        ..Default::default()
    };
    let split = plan_splits(source_frame.len(), SplitConfig::default())?;
    let src = final_fit_and_test(GuardedFrame::new(source_frame, split)?, &options, &hp, &config, 30, false)?;
    println!("source model test pinball {:.4}", src.report.pinball);

    let mut target = shifted_profile(&source, 1, 0.8)?;
    target.site_id = "target".into();
    target.seed = 30;
    let target_frame = aggregate_hourly(&generate_sessions(&target, start, 6)?, "target")?;
    let plan = TransferPlan {
        budget_hours: 336,
        source_lr: hp.lr,
        ..Default::default()
    };
    let tl = transfer_to_target(&src.model, &src.plan, &target_frame, &plan, 0.1)?;
    let scratch = scratch_on_target(&target_frame, &options, &hp, &plan, 48, 0.1)?;
    let total = scratch_param_count(&tl.model)?;
    println!(
        "transfer: {} of {} parameters trainable ({:.1}% of a from-scratch model)",
        tl.params.trainable,
        tl.params.total,
        100.0 * tl.params.trainable as f64 / total as f64
    );
    println!("transfer:\n{}", tl.report.table());
    println!("from scratch:\n{}", scratch.report.table());
    Ok(())
}
