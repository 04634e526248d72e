//! Ranks candidate source sites by DTW distance to a target site's load.
//!
//! cargo run --release --example dtw_ranking

use chrono::{TimeZone, Utc};
use mqtcn::data::aggregate_hourly;
use mqtcn::synth::{fixed_holidays, generate_sessions, shifted_profile, SiteProfile};
use mqtcn::transfer::{dtw_distance, rank_sources, RankingConfig};

fn main() -> mqtcn::Result<()> {
    let r = dtw_distance(&[0.0, 1.0, 2.0, 1.0], &[0.0, 0.0, 1.0, 2.0, 1.0], None)?;
    println!("toy DTW distance {} over a path of {} steps", r.distance, r.path_length);

    let start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut target = SiteProfile::new("target", 1);
    target.holidays = fixed_holidays(2019, 2019);
    let frame = |p: &SiteProfile| aggregate_hourly(&generate_sessions(p, start, 2)?, &p.site_id);
    let target_frame = frame(&target)?;
    let mut candidates = Vec::new();
    for shift in [1, 4, 12] {
        let mut p = shifted_profile(&target, shift, 1.0)?;
        p.site_id = format!("shift-{shift:02}");
        p.seed = 10 + shift as u64;
        candidates.push(frame(&p)?);
    }
    let refs: Vec<_> = candidates.iter().collect();
    for (rank, s) in rank_sources(&target_frame, &refs, &RankingConfig::default())?.iter().enumerate() {
        println!("{}. {}  distance {:.2} over {} hours", rank + 1, s.site_id, s.distance, s.hours_compared);
    }
    Ok(())
}
