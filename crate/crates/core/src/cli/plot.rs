use std::path::{Path, PathBuf};

use chrono::{Duration, SecondsFormat};

use crate::error::{Error, Result};
use crate::harness::{quantile_label, write_atomic};
use crate::tcn::QuantileForecast;

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

/// Writes `plot_data.csv` (long format: timestamp, series, value_kwh with
/// series `actual` and one per quantile) and `coverage.csv` (empirical
/// coverage and mean width of every nested quantile interval).
pub fn emit_plot_data(forecasts: &[QuantileForecast], actuals: &[Vec<f64>], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let first = forecasts.first().ok_or_else(|| Error::invalid("no forecasts to plot"))?;
    if actuals.len() != forecasts.len()
        || forecasts
            .iter()
            .zip(actuals)
            .any(|(f, a)| a.len() != f.horizon() || f.quantile_levels() != first.quantile_levels())
    {
        return Err(Error::invalid("forecasts and actuals have misaligned lengths"));
    }
    let levels = first.quantile_levels();
    let labels: Vec<String> = levels.iter().map(|q| quantile_label(*q)).collect();

    let mut long = vec![vec!["timestamp".to_string(), "series".into(), "value_kwh".into()]];
    for (f, a) in forecasts.iter().zip(actuals) {
        for (s, &y) in a.iter().enumerate() {
            let ts = (f.origin() + Duration::hours(s as i64)).to_rfc3339_opts(SecondsFormat::Secs, true);
            long.push(vec![ts.clone(), "actual".into(), y.to_string()]);
            for (q, label) in labels.iter().enumerate() {
                long.push(vec![ts.clone(), label.clone(), f.get(s, q).to_string()]);
            }
        }
    }

    let mut coverage = vec![["lower", "upper", "nominal", "n", "covered", "picp", "mean_width"]
        .map(String::from)
        .to_vec()];
    for lo in 0..levels.len() {
        for hi in lo + 1..levels.len() {
            let (mut n, mut covered, mut width) = (0usize, 0usize, 0.0);
            for (f, a) in forecasts.iter().zip(actuals) {
                for (s, &y) in a.iter().enumerate() {
                    let (l, u) = (f.get(s, lo), f.get(s, hi));
                    let (l, u) = (l.min(u), l.max(u));
                    n += 1;
                    covered += usize::from(l <= y && y <= u);
                    width += u - l;
                }
            }
            coverage.push(vec![
                labels[lo].clone(),
                labels[hi].clone(),
                (((levels[hi] - levels[lo]) * 1e8).round() / 1e6).to_string(),
                n.to_string(),
                covered.to_string(),
                (100.0 * covered as f64 / n as f64).to_string(),
                (width / n as f64).to_string(),
            ]);
        }
    }

    let long = csv_bytes(long)?;
    let coverage = csv_bytes(coverage)?;
    let (a, b) = (out_dir.join("plot_data.csv"), out_dir.join("coverage.csv"));
    write_atomic(&a, &long)?;
    write_atomic(&b, &coverage)?;
    Ok(vec![a, b])
}
