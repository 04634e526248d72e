//! Generates six months of charging sessions for a synthetic workplace site
//! and prints its mean hourly load profile.
//!
//! cargo run --release --example synth_site

use chrono::{TimeZone, Utc};
use mqtcn::data::aggregate_hourly;
use mqtcn::synth::{fixed_holidays, generate_sessions, hour_of_day_means, shifted_profile, SiteProfile};

fn main() -> mqtcn::Result<()> {
    let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut site = SiteProfile::new("workplace", 42);
    site.holidays = fixed_holidays(2019, 2019);
    let sessions = generate_sessions(&site, start, 6)?;
    let frame = aggregate_hourly(&sessions, &site.site_id)?;
    println!("{} sessions → {} hourly rows from {}", sessions.len(), frame.len(), frame.start);

    let shifted = shifted_profile(&site, 3, 0.8)?;
    let other = aggregate_hourly(&generate_sessions(&shifted, start, 6)?, &site.site_id)?;
    let base = hour_of_day_means(&frame.target, frame.start);
    let moved = hour_of_day_means(&other.target, other.start);
    println!("hour   base kWh   shift+3 ×0.8 kWh");
    for h in 0..24 {
        println!("{h:>4} {:>10.2} {:>18.2}", base[h], moved[h]);
    }
    Ok(())
}
