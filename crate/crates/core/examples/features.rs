//! Fits the feature plan on a training range, encodes a site and slices it
//! into supervised windows.
//!
//! cargo run --release --example features

use chrono::{TimeZone, Utc};
use mqtcn::data::{
    aggregate_hourly, encode_cyclic, filter_anomalies, make_windows, AnomalyConfig, FeatureOptions, FeaturePlan,
    HolidayCalendar,
};
use mqtcn::synth::{fixed_holidays, generate_sessions, SiteProfile};

fn main() -> mqtcn::Result<()> {
    let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut site = SiteProfile::new("site", 7);
    site.holidays = fixed_holidays(2019, 2019);
    let raw = aggregate_hourly(&generate_sessions(&site, start, 3)?, "site")?;
    let (clean, clips) = filter_anomalies(&raw, AnomalyConfig::default())?;
    println!("{} hours, {} clipped as anomalous", clean.len(), clips.len());

    let options = FeatureOptions {
        holidays: HolidayCalendar::new(site.holidays.clone()),
        ..Default::default()
    };
    let fit_range = 0..clean.len() * 9 / 10;
    let plan = FeaturePlan::fit(&clean, fit_range, options)?;
    let encoded = plan.apply(&clean)?;
    println!("dense inputs: {:?}", plan.input_names());
    for e in plan.embeddings() {
        println!("embedding {}: {} rows × {} dims", e.name, e.rows, e.dim);
    }
    println!("cyclic encoding of {}: {:?}", encoded.timestamp(13), encode_cyclic(encoded.timestamp(13)));

    let windows = make_windows(&encoded, 168, 24, 1)?;
    let w = &windows[0];
    println!(
        "{} windows of 168 h → 24 h; first covers hours {:?}, forecasting from {}",
        windows.len(),
        w.span(),
        w.origin
    );
    Ok(())
}
