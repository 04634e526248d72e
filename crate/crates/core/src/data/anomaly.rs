use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::FeatureFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyClip {
    #[serde(with = "super::session::timestamp")]
    pub timestamp: DateTime<Utc>,
    pub original: f64,
    pub clipped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyConfig {
    pub window: usize,
    pub k: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self { window: 168, k: 3.0 }
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// IQR fence `[Q1 − k·IQR, Q3 + k·IQR]` of `values`, or `None` when the IQR
/// is zero.
pub fn iqr_fence(values: &[f64], k: f64) -> Option<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    (iqr > 0.0).then(|| (q1 - k * iqr, q3 + k * iqr))
}

/// Clips each hour's target to the IQR fence of the `window` hours before
/// it. The first `window` hours are judged against the opening window.
/// Reference windows always use original (unclipped) values.
pub fn filter_anomalies(frame: &FeatureFrame, config: AnomalyConfig) -> Result<(FeatureFrame, Vec<AnomalyClip>)> {
    let n = frame.len();
    if config.window < 4 {
        return Err(Error::invalid("anomaly window must hold at least 4 hours"));
    }
    if n < config.window {
        return Err(Error::TooShort {
            required: config.window,
            actual: n,
        });
    }
    if config.k.is_nan() || config.k < 0.0 {
        return Err(Error::invalid("anomaly k must be >= 0"));
    }
    let mut out = frame.clone();
    let mut log = Vec::new();
    if config.k.is_infinite() {
        return Ok((out, log));
    }
    let y = &frame.target;
    let mut cached: Option<(f64, f64)> = None;
    for t in 0..n {
        let fence = if t <= config.window {
            if t == 0 {
                cached = iqr_fence(&y[..config.window], config.k);
            }
            cached
        } else {
            iqr_fence(&y[t - config.window..t], config.k)
        };
        let Some((lo, hi)) = fence else { continue };
        let clipped = y[t].clamp(lo, hi);
        if clipped != y[t] {
            log.push(AnomalyClip {
                timestamp: frame.timestamp(t),
                original: y[t],
                clipped,
            });
            out.target[t] = clipped;
        }
    }
    if !log.is_empty() {
        log::info!("{}: clipped {} anomalous hours", frame.site_id, log.len());
    }
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn frame(y: Vec<f64>) -> FeatureFrame {
        FeatureFrame::raw("s", Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), y)
    }

    #[test]
    fn constant_series_untouched() {
        let f = frame(vec![5.0; 400]);
        let (out, log) = filter_anomalies(&f, AnomalyConfig::default()).unwrap();
        assert!(log.is_empty());
        assert_eq!(out, f);
    }

    #[test]
    fn spike_is_clipped_and_logged() {
        let mut y: Vec<f64> = (0..400).map(|t| 5.0 + 0.5 * ((t % 4) as f64 - 1.5)).collect();
        y[300] = 100.0;
        let f = frame(y.clone());
        let (out, log) = filter_anomalies(&f, AnomalyConfig::default()).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].original, 100.0);
        // Window values are 4.25, 4.75, 5.25, 5.75 repeated: Q1 = 4.625,
        // Q3 = 5.375, fence top = 5.375 + 3 × 0.75.
        let (_, hi) = iqr_fence(&y[300 - 168..300], 3.0).unwrap();
        assert!((hi - 7.625).abs() < 1e-12, "{hi}");
        assert_eq!(log[0].clipped, hi);
        assert_eq!(out.target[300], hi);
        assert_eq!(log[0].timestamp, f.timestamp(300));
    }

    #[test]
    fn infinite_k_is_identity() {
        let mut y = vec![1.0, 2.0, 3.0, 4.0].repeat(60);
        y[200] = 1e6;
        let f = frame(y);
        let (out, log) = filter_anomalies(&f, AnomalyConfig { window: 168, k: f64::INFINITY }).unwrap();
        assert!(log.is_empty());
        assert_eq!(out, f);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            filter_anomalies(&frame(vec![1.0; 100]), AnomalyConfig::default()),
            Err(Error::TooShort { required: 168, .. })
        ));
    }
}
