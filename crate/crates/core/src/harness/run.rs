use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::train::EpochRecord;
use crate::error::{Error, Result};
use crate::tcn::QuantileForecast;

/// Writes `bytes` to `path` through a temporary sibling so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::file(&tmp, e))?;
    f.sync_all().map_err(|e| Error::file(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Column label for a quantile level, e.g. `0.05 → q05`, `0.9 → q90`.
pub fn quantile_label(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("q{:02}", pct.round() as u32)
    } else {
        format!("q{pct}")
    }
}

/// `origin, step, q.., actual` with one row per forecast step.
pub fn write_forecasts_csv(path: &Path, forecasts: &[QuantileForecast], actuals: Option<&[Vec<f64>]>) -> Result<()> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::invalid("no forecasts to write"))?;
    if let Some(a) = actuals {
        if a.len() != forecasts.len() || a.iter().zip(forecasts).any(|(y, f)| y.len() != f.horizon()) {
            return Err(Error::invalid("actuals are not aligned with forecasts"));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["origin".to_string(), "step".into()];
    header.extend(first.quantile_levels().iter().map(|q| quantile_label(*q)));
    if actuals.is_some() {
        header.push("actual".into());
    }
    w.write_record(&header)?;
    for (i, f) in forecasts.iter().enumerate() {
        let origin = f.origin().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        for s in 0..f.horizon() {
            let mut rec = vec![origin.clone(), (s + 1).to_string()];
            rec.extend(f.row(s).iter().map(|v| v.to_string()));
            if let Some(a) = actuals {
                rec.push(a[i][s].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn write_curves_csv(path: &Path, curves: &[Vec<EpochRecord>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["fold", "epoch", "train_loss", "val_loss"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (fold, c) in curves.iter().enumerate() {
        for r in c {
            w.write_record([fold.to_string(), r.epoch.to_string(), opt(r.train_loss), opt(r.val_loss)])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Output directory of one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::file(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn trial_dir(&self, k: usize) -> Result<PathBuf> {
        let d = self.root.join(format!("trial-{k}"));
        std::fs::create_dir_all(&d).map_err(|e| Error::file(&d, e))?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn labels() {
        assert_eq!(quantile_label(0.05), "q05");
        assert_eq!(quantile_label(0.5), "q50");
        assert_eq!(quantile_label(0.9), "q90");
    }

    #[test]
    fn forecasts_csv_layout_and_atomicity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecasts.csv");
        assert!(write_forecasts_csv(&path, &[], None).is_err());
        assert!(!path.exists());
        let origin = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let f = QuantileForecast::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.05, 0.5, 0.9], origin).unwrap();
        write_forecasts_csv(&path, &[f], Some(&[vec![2.5, 4.5]])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "origin,step,q05,q50,q90,actual");
        assert_eq!(lines[2], "2020-01-01T00:00:00Z,2,4,5,6,4.5");
    }
}
