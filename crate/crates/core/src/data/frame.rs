use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Duration, DurationRound, Utc};
use serde::{Deserialize, Serialize};

use super::session::{timestamp, SessionRecord};
use crate::error::{Error, Result};
use crate::tcn::EmbeddingSpec;

const HOUR_SECS: i64 = 3600;

/// Hourly design matrix for one site.
///
/// The raw part (`target`, `stations`, `activity`) comes from
/// [`aggregate_hourly`]. The encoded part (`features`, `categorical`,
/// `scaled_target`) is filled by a fitted
/// [`FeaturePlan`](super::FeaturePlan) and is empty until then.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub site_id: String,
    /// Start of hour 0; hour `t` starts at `start + t` hours.
    pub start: DateTime<Utc>,
    /// Energy consumed in each hour, kWh.
    pub target: Vec<f64>,
    /// Station vocabulary of this site, sorted.
    pub stations: Vec<String>,
    /// Indices into `stations` of the stations active in each hour.
    pub activity: Vec<Vec<u32>>,
    pub feature_names: Vec<String>,
    /// Row-major `T × feature_names.len()`.
    pub features: Vec<f64>,
    pub embeddings: Vec<EmbeddingSpec>,
    /// Row-major `T × embeddings.len()` vocabulary indices.
    pub categorical: Vec<usize>,
    pub scaled_target: Vec<f64>,
}

impl FeatureFrame {
    pub fn raw(site_id: impl Into<String>, start: DateTime<Utc>, target: Vec<f64>) -> Self {
        let n = target.len();
        Self {
            site_id: site_id.into(),
            start,
            target,
            stations: Vec::new(),
            activity: vec![Vec::new(); n],
            feature_names: Vec::new(),
            features: Vec::new(),
            embeddings: Vec::new(),
            categorical: Vec::new(),
            scaled_target: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        self.start + Duration::hours(t as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_encoded(&self) -> bool {
        self.scaled_target.len() == self.len() && self.features.len() == self.len() * self.num_features()
    }

    pub fn feature_row(&self, t: usize) -> &[f64] {
        let d = self.num_features();
        &self.features[t * d..(t + 1) * d]
    }

    pub fn feature_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.feature_names.iter().position(|n| n == name)?;
        let d = self.num_features();
        Some((0..self.len()).map(|t| self.features[t * d + j]).collect())
    }

    /// Index of the hour starting at `ts`, if inside the frame.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let secs = (ts - self.start).num_seconds();
        if secs < 0 || secs % HOUR_SECS != 0 {
            return None;
        }
        let t = (secs / HOUR_SECS) as usize;
        (t < self.len()).then_some(t)
    }

    /// Hours `[from, to)` as a new raw frame (encoded columns dropped).
    pub fn slice_raw(&self, from: usize, to: usize) -> Self {
        Self {
            site_id: self.site_id.clone(),
            start: self.timestamp(from),
            target: self.target[from..to].to_vec(),
            stations: self.stations.clone(),
            activity: self.activity[from..to].to_vec(),
            ..Self::raw(self.site_id.clone(), self.timestamp(from), Vec::new())
        }
    }

    pub fn active_station_names(&self, t: usize) -> impl Iterator<Item = &str> {
        self.activity[t].iter().map(|i| self.stations[*i as usize].as_str())
    }
}

/// Buckets a site's sessions into contiguous hourly energy.
///
/// Each session's energy is spread over the hours it overlaps in proportion
/// to the overlap (constant power). Hours with no session are zero. The frame
/// runs from the hour of the first connect to the hour of the last
/// disconnect.
pub fn aggregate_hourly(sessions: &[SessionRecord], site: &str) -> Result<FeatureFrame> {
    let site_sessions: Vec<&SessionRecord> = sessions.iter().filter(|s| s.site_id == site).collect();
    if site_sessions.is_empty() {
        return Err(Error::data(format!("no sessions for site `{site}`")));
    }
    for s in &site_sessions {
        s.validate()?;
    }
    let first = site_sessions.iter().map(|s| s.connect_utc).min().expect("non-empty");
    let start = first
        .duration_trunc(Duration::hours(1))
        .map_err(|e| Error::data(e.to_string()))?;
    let offset = |t: DateTime<Utc>| (t - start).num_seconds();
    let hours = site_sessions
        .iter()
        .map(|s| {
            let end = offset(s.disconnect_utc);
            let last = if s.duration_secs() == 0 { end / HOUR_SECS + 1 } else { (end + HOUR_SECS - 1) / HOUR_SECS };
            last.max(offset(s.connect_utc) / HOUR_SECS + 1)
        })
        .max()
        .expect("non-empty") as usize;

    let stations: Vec<String> = site_sessions
        .iter()
        .map(|s| s.station_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut target = vec![0.0; hours];
    let mut active: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); hours];
    for s in site_sessions {
        let station = stations.binary_search(&s.station_id).expect("vocabulary built from sessions") as u32;
        let (a, b) = (offset(s.connect_utc), offset(s.disconnect_utc));
        let duration = b - a;
        if duration == 0 {
            let h = (a / HOUR_SECS) as usize;
            target[h] += s.energy_kwh;
            active[h].insert(station);
            continue;
        }
        let (h0, h1) = (a / HOUR_SECS, (b - 1) / HOUR_SECS);
        for h in h0..=h1 {
            let lo = a.max(h * HOUR_SECS);
            let hi = b.min((h + 1) * HOUR_SECS);
            if hi > lo {
                target[h as usize] += s.energy_kwh * (hi - lo) as f64 / duration as f64;
                active[h as usize].insert(station);
            }
        }
    }
    let mut frame = FeatureFrame::raw(site, start, target);
    frame.stations = stations;
    frame.activity = active.into_iter().map(|s| s.into_iter().collect()).collect();
    Ok(frame)
}

/// Sidecar metadata written next to a frame CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub site_id: String,
    #[serde(with = "timestamp")]
    pub start: DateTime<Utc>,
    pub hours: usize,
    pub stations: Vec<String>,
    pub feature_names: Vec<String>,
    /// Fitted feature plan (scalers, vocabularies, encoder) if one was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<serde_json::Value>,
    #[serde(default)]
    pub plan_hash: Option<String>,
    #[serde(default)]
    pub encoder_hash: Option<String>,
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes the columnar CSV (`timestamp, target_kwh, station_ids`, then
/// any encoded feature columns) the frame loader reads back.
pub fn write_frame_csv<W: std::io::Write>(writer: W, frame: &FeatureFrame) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string(), "target_kwh".into(), "station_ids".into()];
    let encoded = frame.is_encoded();
    if encoded {
        header.extend(frame.feature_names.iter().cloned());
        header.extend(frame.embeddings.iter().map(|e| format!("idx:{}", e.name)));
    }
    w.write_record(&header)?;
    let nc = frame.embeddings.len();
    for t in 0..frame.len() {
        let mut rec = vec![
            frame.timestamp(t).to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            frame.target[t].to_string(),
            frame.active_station_names(t).collect::<Vec<_>>().join(";"),
        ];
        if encoded {
            rec.extend(frame.feature_row(t).iter().map(|v| v.to_string()));
            rec.extend(frame.categorical[t * nc..(t + 1) * nc].iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads the raw part of a frame CSV. Encoded columns are ignored; they are
/// recomputed by a feature plan fitted on the caller's training range.
pub fn read_frame_csv(path: &Path) -> Result<FeatureFrame> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("{}: missing column `{name}`", path.display())))
    };
    let (ts_col, y_col) = (col("timestamp")?, col("target_kwh")?);
    let act_col = headers.iter().position(|h| h == "station_ids");
    let mut times = Vec::new();
    let mut target = Vec::new();
    let mut names: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ts = timestamp::parse(&rec[ts_col])
            .ok_or_else(|| Error::data(format!("bad timestamp `{}`", &rec[ts_col])))?;
        let y: f64 = rec[y_col]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("bad target value `{}`", &rec[y_col])))?;
        times.push(ts);
        target.push(y);
        names.push(match act_col {
            Some(c) if !rec[c].is_empty() => rec[c].split(';').map(str::to_string).collect(),
            _ => Vec::new(),
        });
    }
    let start = *times
        .first()
        .ok_or_else(|| Error::data(format!("{}: empty frame", path.display())))?;
    for (t, ts) in times.iter().enumerate() {
        if *ts != start + Duration::hours(t as i64) {
            return Err(Error::data(format!(
                "{}: hour {t} is {ts}, frames must be contiguous hourly",
                path.display()
            )));
        }
    }
    let site_id = std::fs::read_to_string(sidecar_path(path))
        .ok()
        .and_then(|s| serde_json::from_str::<FrameSidecar>(&s).ok())
        .map(|s| s.site_id)
        .unwrap_or_else(|| path.file_stem().and_then(|s| s.to_str()).unwrap_or("site").to_string());
    let stations: Vec<String> = names.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let activity = names
        .iter()
        .map(|hour| {
            hour.iter()
                .map(|n| stations.binary_search(n).expect("collected above") as u32)
                .collect()
        })
        .collect();
    let mut frame = FeatureFrame::raw(site_id, start, target);
    frame.stations = stations;
    frame.activity = activity;
    Ok(frame)
}
