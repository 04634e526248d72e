use std::ops::Range;

use chrono::{DateTime, Utc};

use super::FeatureFrame;
use crate::error::{Error, Result};

/// One supervised example: `p` hours of inputs then `δ` hours of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Timestamp of the first horizon hour.
    pub origin: DateTime<Utc>,
    /// Frame index of the first lookback hour.
    pub start: usize,
    pub num_features: usize,
    /// Row-major `p × num_features`.
    pub features: Vec<f64>,
    pub num_categorical: usize,
    /// Row-major `p × num_categorical`.
    pub categorical: Vec<usize>,
    /// Scaled target over the lookback.
    pub past_target: Vec<f64>,
    /// Scaled target over the horizon.
    pub horizon: Vec<f64>,
}

impl WindowSample {
    pub fn lookback(&self) -> usize {
        self.past_target.len()
    }

    /// Frame indices covered, lookback and horizon together.
    pub fn span(&self) -> Range<usize> {
        self.start..self.start + self.lookback() + self.horizon.len()
    }

    pub fn horizon_range(&self) -> Range<usize> {
        self.start + self.lookback()..self.span().end
    }
}

fn sample(frame: &FeatureFrame, start: usize, p: usize, delta: usize) -> WindowSample {
    let d = frame.num_features();
    let nc = frame.embeddings.len();
    let h0 = start + p;
    WindowSample {
        origin: frame.timestamp(h0),
        start,
        num_features: d,
        features: frame.features[start * d..h0 * d].to_vec(),
        num_categorical: nc,
        categorical: frame.categorical[start * nc..h0 * nc].to_vec(),
        past_target: frame.scaled_target[start..h0].to_vec(),
        horizon: frame.scaled_target[h0..h0 + delta].to_vec(),
    }
}

fn check(frame: &FeatureFrame, p: usize, delta: usize, stride: usize) -> Result<()> {
    if p == 0 || delta == 0 || stride == 0 {
        return Err(Error::invalid("lookback, horizon and stride must be >= 1"));
    }
    if !frame.is_encoded() {
        return Err(Error::invalid("frame must be encoded by a feature plan before windowing"));
    }
    Ok(())
}

/// Number of windows `make_windows` yields for a series of length `t`.
pub fn window_count(t: usize, p: usize, delta: usize, stride: usize) -> usize {
    if t < p + delta {
        0
    } else {
        (t - p - delta) / stride + 1
    }
}

/// All windows over the frame, starting every `stride` hours.
pub fn make_windows(frame: &FeatureFrame, p: usize, delta: usize, stride: usize) -> Result<Vec<WindowSample>> {
    make_windows_in(frame, 0..frame.len(), p, delta, stride)
}

/// Windows lying entirely inside `range`.
pub fn make_windows_in(
    frame: &FeatureFrame,
    range: Range<usize>,
    p: usize,
    delta: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    check(frame, p, delta, stride)?;
    if range.end > frame.len() {
        return Err(Error::invalid(format!("range {range:?} outside 0..{}", frame.len())));
    }
    let len = range.len();
    if len < p + delta {
        return Err(Error::TooShort {
            required: p + delta,
            actual: len,
        });
    }
    Ok((0..window_count(len, p, delta, stride))
        .map(|i| sample(frame, range.start + i * stride, p, delta))
        .collect())
}

/// Windows whose horizons tile `range` every `stride` hours. The lookback
/// reads the `p` hours before each horizon, which may precede `range`.
pub fn forecast_windows(
    frame: &FeatureFrame,
    range: Range<usize>,
    p: usize,
    delta: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    check(frame, p, delta, stride)?;
    if range.end > frame.len() {
        return Err(Error::invalid(format!("range {range:?} outside 0..{}", frame.len())));
    }
    if range.start < p {
        return Err(Error::TooShort {
            required: p,
            actual: range.start,
        });
    }
    if range.len() < delta {
        return Err(Error::TooShort {
            required: delta,
            actual: range.len(),
        });
    }
    Ok((0..window_count(range.len(), 0, delta, stride))
        .map(|i| sample(frame, range.start + i * stride - p, p, delta))
        .collect())
}
