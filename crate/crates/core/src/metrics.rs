//! Pinball loss and probabilistic forecast metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tcn::QuantileForecast;
use crate::tensor::{Graph, Var};

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("quantile level {q} must lie in (0, 1)")))
    }
}

/// `max(q·e, (q − 1)·e)` with `e = y − ŷ`.
pub fn pinball_loss(q: f64, y: f64, y_hat: f64) -> Result<f64> {
    check_level(q)?;
    let e = y - y_hat;
    Ok((q * e).max((q - 1.0) * e))
}

/// Mean pinball over paired series at one level.
pub fn mean_pinball(q: f64, actuals: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(&[actuals, predicted])?;
    let mut total = 0.0;
    for (y, p) in actuals.iter().zip(predicted) {
        total += pinball_loss(q, *y, *p)?;
    }
    Ok(total / actuals.len() as f64)
}

/// Mean multi-quantile pinball on a graph: `preds[i]` and `targets` share a
/// shape and the result averages over every element and level.
///
/// Uses `q·e + relu(−e)`, equal to the pinball form for `q ∈ (0, 1)`.
pub fn pinball_graph(g: &mut Graph, preds: &[Var], targets: Var, quantiles: &[f64]) -> Result<Var> {
    if preds.len() != quantiles.len() || preds.is_empty() {
        return Err(Error::invalid("one prediction node per quantile level is required"));
    }
    let mut total: Option<Var> = None;
    for (p, &q) in preds.iter().zip(quantiles) {
        check_level(q)?;
        let e = g.sub(targets, *p)?;
        let lin = g.scale(e, q);
        let neg = g.scale(e, -1.0);
        let hinge = g.relu(neg);
        let l = g.add(lin, hinge)?;
        let m = g.mean(l);
        total = Some(match total {
            Some(t) => g.add(t, m)?,
            None => m,
        });
    }
    Ok(g.scale(total.expect("non-empty"), 1.0 / preds.len() as f64))
}

fn check_lengths(series: &[&[f64]]) -> Result<()> {
    let n = series[0].len();
    if n == 0 {
        return Err(Error::invalid("metrics need at least one observation"));
    }
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::invalid(format!(
            "series lengths differ: {:?}",
            series.iter().map(|s| s.len()).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// Percentage of actuals inside the closed interval `[lower, upper]`.
pub fn picp(actuals: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64> {
    check_lengths(&[actuals, lower, upper])?;
    let covered = actuals
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(y, (l, u))| *l <= *y && *y <= *u)
        .count();
    Ok(100.0 * covered as f64 / actuals.len() as f64)
}

fn winkler_scores(actuals: &[f64], lower: &[f64], upper: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_lengths(&[actuals, lower, upper])?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} must lie in (0, 1)")));
    }
    actuals
        .iter()
        .zip(lower.iter().zip(upper))
        .enumerate()
        .map(|(i, (&y, (&l, &u)))| {
            if u < l {
                return Err(Error::invalid(format!(
                    "crossed interval at step {i}: upper {u} < lower {l}; sort quantiles first"
                )));
            }
            let width = u - l;
            Ok(if y < l {
                width + 2.0 * (l - y) / alpha
            } else if y > u {
                width + 2.0 * (y - u) / alpha
            } else {
                width
            })
        })
        .collect()
}

/// Mean Winkler score.
pub fn winkler(actuals: &[f64], lower: &[f64], upper: &[f64], alpha: f64) -> Result<f64> {
    let s = winkler_scores(actuals, lower, upper, alpha)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Winkler score summed over steps.
pub fn winkler_sum(actuals: &[f64], lower: &[f64], upper: &[f64], alpha: f64) -> Result<f64> {
    Ok(winkler_scores(actuals, lower, upper, alpha)?.iter().sum())
}

/// `Σ|y − ŷ| / Σ|y|`.
pub fn normalized_deviation(actuals: &[f64], point: &[f64]) -> Result<f64> {
    check_lengths(&[actuals, point])?;
    let denom: f64 = actuals.iter().map(|y| y.abs()).sum();
    if denom == 0.0 {
        return Err(Error::Numerical(
            "normalized deviation undefined: actuals sum to zero (division by zero)".into(),
        ));
    }
    let num: f64 = actuals.iter().zip(point).map(|(y, p)| (y - p).abs()).sum();
    Ok(num / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub lower: f64,
    pub upper: f64,
}

impl Default for IntervalSpec {
    fn default() -> Self {
        Self {
            lower: 0.05,
            upper: 0.90,
        }
    }
}

impl IntervalSpec {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 < lower && lower < upper && upper < 1.0) {
            return Err(Error::invalid(format!("interval levels must satisfy 0 < {lower} < {upper} < 1")));
        }
        Ok(Self { lower, upper })
    }

    pub fn alpha(&self) -> f64 {
        1.0 - (self.upper - self.lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub picp: f64,
    pub pinball: f64,
    pub winkler: f64,
    pub nd: f64,
    pub quantile_crossings: usize,
    pub n: usize,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        [self.picp, self.pinball, self.winkler, self.nd].iter().all(|v| v.is_finite())
    }

    /// Aligned table with the usual column names.
    pub fn table(&self) -> String {
        format!(
            "{:>8} {:>12} {:>10} {:>8} {:>10} {:>6}\n{:>8.2} {:>12.4} {:>10.4} {:>8.4} {:>10} {:>6}",
            "PICP", "PinBall Loss", "WS", "ND", "Crossings", "N",
            self.picp, self.pinball, self.winkler, self.nd, self.quantile_crossings, self.n
        )
    }
}

/// Scores kWh-scale forecasts against aligned actuals (`actuals[i]` has one
/// value per horizon step of `forecasts[i]`).
///
/// Pinball averages every level and step. PICP and Winkler use the interval
/// levels of `spec`; ND uses the median head. Crossed steps are counted; when
/// an interval is crossed the Winkler score uses its min/max bounds.
pub fn evaluate_forecasts(
    forecasts: &[QuantileForecast],
    actuals: &[Vec<f64>],
    spec: IntervalSpec,
) -> Result<MetricsReport> {
    if forecasts.is_empty() || forecasts.len() != actuals.len() {
        return Err(Error::invalid(format!(
            "{} forecasts vs {} actual blocks",
            forecasts.len(),
            actuals.len()
        )));
    }
    let levels = forecasts[0].quantile_levels();
    let find = |level: f64| {
        forecasts[0]
            .level_index(level)
            .ok_or_else(|| Error::invalid(format!("forecast has no quantile level {level}; levels are {levels:?}")))
    };
    let (li, ui, mi) = (find(spec.lower)?, find(spec.upper)?, find(0.5)?);
    let (mut ys, mut lo, mut hi, mut med) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut pinball_total = 0.0;
    let mut crossings = 0;
    for (f, y) in forecasts.iter().zip(actuals) {
        if f.horizon() != y.len() || f.quantile_levels() != levels {
            return Err(Error::invalid("forecasts and actuals are misaligned"));
        }
        crossings += f.crossings();
        for (s, &actual) in y.iter().enumerate() {
            for (q, &level) in levels.iter().enumerate() {
                pinball_total += pinball_loss(level, actual, f.get(s, q))?;
            }
            let (l, u) = (f.get(s, li), f.get(s, ui));
            ys.push(actual);
            lo.push(l.min(u));
            hi.push(l.max(u));
            med.push(f.get(s, mi));
        }
    }
    let n = ys.len();
    Ok(MetricsReport {
        picp: picp(&ys, &lo, &hi)?,
        pinball: pinball_total / (n * levels.len()) as f64,
        winkler: winkler(&ys, &lo, &hi, spec.alpha())?,
        nd: normalized_deviation(&ys, &med)?,
        quantile_crossings: crossings,
        n,
    })
}
