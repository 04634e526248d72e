//! Seeded synthetic charging sites.

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::SessionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteProfile {
    pub site_id: String,
    pub seed: u64,
    /// Share of a day's sessions starting in each hour; sums to 1.
    pub shape: [f64; 24],
    pub weekday_multiplier: f64,
    pub weekend_multiplier: f64,
    pub holiday_multiplier: f64,
    pub holidays: Vec<NaiveDate>,
    /// Lognormal σ of per-session energy.
    pub sigma: f64,
    pub mean_energy_kwh: f64,
    pub charge_power_kw: f64,
    pub station_count: usize,
    pub sessions_per_day: f64,
    /// Relative growth of the session rate per year.
    pub trend_per_year: f64,
}

/// Workplace-style daily shape: a morning arrival peak and a smaller
/// early-afternoon one.
pub fn workplace_shape() -> [f64; 24] {
    let mut w = [0.0; 24];
    for (h, v) in w.iter_mut().enumerate() {
        let h = h as f64;
        *v = 0.02 + (-((h - 9.0) / 2.0).powi(2)).exp() + 0.5 * (-((h - 14.0) / 2.5).powi(2)).exp();
    }
    normalize(w)
}

fn normalize(mut w: [f64; 24]) -> [f64; 24] {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

impl SiteProfile {
    pub fn new(site_id: impl Into<String>, seed: u64) -> Self {
        Self {
            site_id: site_id.into(),
            seed,
            shape: workplace_shape(),
            weekday_multiplier: 1.0,
            weekend_multiplier: 0.3,
            holiday_multiplier: 0.2,
            holidays: Vec::new(),
            sigma: 0.4,
            mean_energy_kwh: 8.0,
            charge_power_kw: 11.0,
            station_count: 20,
            sessions_per_day: 40.0,
            trend_per_year: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.iter().any(|v| !v.is_finite() || *v < 0.0) || (self.shape.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("daily shape must be nonnegative and sum to 1"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        if !(self.sessions_per_day > 0.0) || self.station_count == 0 {
            return Err(Error::invalid("sessions_per_day and station_count must be positive"));
        }
        if !(self.mean_energy_kwh > 0.0 && self.charge_power_kw > 0.0) {
            return Err(Error::invalid("mean energy and charge power must be positive"));
        }
        for m in [self.weekday_multiplier, self.weekend_multiplier, self.holiday_multiplier] {
            if !(m >= 0.0) {
                return Err(Error::invalid("day multipliers must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn day_multiplier(&self, date: NaiveDate) -> f64 {
        if self.holidays.contains(&date) {
            self.holiday_multiplier
        } else if matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            self.weekend_multiplier
        } else {
            self.weekday_multiplier
        }
    }

    /// Expected sessions starting in the hour beginning at `ts`.
    pub fn rate(&self, ts: DateTime<Utc>, start: DateTime<Utc>) -> f64 {
        let years = (ts - start).num_seconds() as f64 / (365.25 * 86400.0);
        let trend = (1.0 + self.trend_per_year * years).max(0.0);
        self.sessions_per_day * self.shape[ts.hour() as usize] * self.day_multiplier(ts.date_naive()) * trend
    }

    /// Expected energy started in the hour beginning at `ts`.
    pub fn expected_energy(&self, ts: DateTime<Utc>, start: DateTime<Utc>) -> f64 {
        self.rate(ts, start) * self.mean_energy_kwh
    }
}

/// Sessions for `months` calendar months from `start` (truncated to the
/// hour). Counts per hour are Poisson, energies lognormal with the
/// configured mean, connect times uniform within the hour and durations
/// `energy / power`.
pub fn generate_sessions(profile: &SiteProfile, start: DateTime<Utc>, months: u32) -> Result<Vec<SessionRecord>> {
    profile.validate()?;
    if months == 0 {
        return Err(Error::invalid("months must be >= 1"));
    }
    let start = start
        .with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("hour truncation is always valid");
    let end = start
        .checked_add_months(Months::new(months))
        .ok_or_else(|| Error::invalid("end date out of range"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mu = profile.mean_energy_kwh.ln() - profile.sigma * profile.sigma / 2.0;
    let energy = LogNormal::new(mu, profile.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let stations: Vec<String> = (0..profile.station_count)
        .map(|j| format!("{}-st{j:02}", profile.site_id))
        .collect();
    let mut out = Vec::new();
    let mut ts = start;
    while ts < end {
        let lambda = profile.rate(ts, start);
        let count = if lambda > 0.0 {
            Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let kwh = energy.sample(&mut rng);
            let offset = rng.random_range(0..3600);
            let connect = ts + Duration::seconds(offset);
            let secs = (kwh / profile.charge_power_kw * 3600.0).round() as i64;
            out.push(SessionRecord {
                site_id: profile.site_id.clone(),
                station_id: stations[rng.random_range(0..stations.len())].clone(),
                connect_utc: connect,
                disconnect_utc: connect + Duration::seconds(secs),
                energy_kwh: kwh,
            });
        }
        ts += Duration::hours(1);
    }
    Ok(out)
}

/// Rotates the daily shape by `hour_shift` hours (`new[h] = old[h − shift]`)
/// and scales the session rate.
pub fn shifted_profile(profile: &SiteProfile, hour_shift: usize, scale: f64) -> Result<SiteProfile> {
    if hour_shift > 23 {
        return Err(Error::invalid("hour_shift must lie in 0..=23"));
    }
    let mut p = profile.clone();
    for h in 0..24 {
        p.shape[h] = profile.shape[(h + 24 - hour_shift) % 24];
    }
    p.sessions_per_day *= scale;
    Ok(p)
}

/// Mean of `values` per hour of day, with hour 0 of `values` at `start`.
pub fn hour_of_day_means(values: &[f64], start: DateTime<Utc>) -> [f64; 24] {
    let mut sum = [0.0; 24];
    let mut n = [0usize; 24];
    for (t, v) in values.iter().enumerate() {
        let h = (start + Duration::hours(t as i64)).hour() as usize;
        sum[h] += v;
        n[h] += 1;
    }
    let mut out = [0.0; 24];
    for h in 0..24 {
        if n[h] > 0 {
            out[h] = sum[h] / n[h] as f64;
        }
    }
    out
}

/// New Year, Independence Day and Christmas for each year touched.
pub fn fixed_holidays(from_year: i32, to_year: i32) -> Vec<NaiveDate> {
    (from_year..=to_year)
        .flat_map(|y| [(1, 1), (7, 4), (12, 25)].map(|(m, d)| NaiveDate::from_ymd_opt(y, m, d).expect("fixed dates exist")))
        .collect()
}
