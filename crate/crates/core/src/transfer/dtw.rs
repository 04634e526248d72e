use serde::{Deserialize, Serialize};

use crate::data::FeatureFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub distance: f64,
    /// Cells on the optimal warping path.
    pub path_length: usize,
    pub band: Option<usize>,
}

/// Dynamic time warping with squared pointwise cost, anchored at both ends,
/// steps (1,0), (0,1), (1,1). `band` limits `|i − j|` (Sakoe-Chiba).
pub fn dtw_distance(a: &[f64], b: &[f64], band: Option<usize>) -> Result<DtwResult> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::invalid("DTW needs two non-empty series"));
    }
    if let Some(w) = band {
        if w < n.abs_diff(m) {
            return Err(Error::invalid(format!(
                "band {w} is narrower than the length difference {}",
                n.abs_diff(m)
            )));
        }
    }
    let inside = |i: usize, j: usize| band.is_none_or(|w| i.abs_diff(j) <= w);
    let inf = f64::INFINITY;
    // cost[i][j] over the (n+1) × (m+1) table with a sentinel row/column.
    let mut cost = vec![inf; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    cost[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            if !inside(i - 1, j - 1) {
                continue;
            }
            let d = (a[i - 1] - b[j - 1]).powi(2);
            let best = cost[at(i - 1, j - 1)].min(cost[at(i - 1, j)]).min(cost[at(i, j - 1)]);
            cost[at(i, j)] = d + best;
        }
    }
    let (mut i, mut j, mut len) = (n, m, 1);
    while (i, j) != (1, 1) {
        let diag = if i > 1 && j > 1 { cost[at(i - 1, j - 1)] } else { inf };
        let up = if i > 1 { cost[at(i - 1, j)] } else { inf };
        let left = if j > 1 { cost[at(i, j - 1)] } else { inf };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        len += 1;
    }
    Ok(DtwResult {
        distance: cost[at(n, m)],
        path_length: len,
        band,
    })
}

/// Minimum warping cost found by enumerating every admissible path.
/// Exponential; meant for checking the dynamic program on tiny inputs.
pub fn dtw_brute_force(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).powi(2);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// `(x − mean) / std`; a constant series maps to zeros.
pub fn z_normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - mean) / sd).collect()
    }
}

/// Block means reducing `x` to at most `max_points` values.
pub fn downsample(x: &[f64], max_points: usize) -> Vec<f64> {
    if max_points == 0 || x.len() <= max_points {
        return x.to_vec();
    }
    let block = x.len().div_ceil(max_points);
    x.chunks(block).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    pub window_days: usize,
    pub max_points: usize,
    pub band: Option<usize>,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            window_days: 28,
            max_points: 672,
            band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSource {
    pub site_id: String,
    pub target_id: String,
    pub distance: f64,
    pub path_length: usize,
    pub band: Option<usize>,
    pub hours_compared: usize,
}

/// Candidates ordered by DTW distance to the target over their most recent
/// shared `window_days`, ties broken by site id.
pub fn rank_sources(target: &FeatureFrame, candidates: &[&FeatureFrame], config: &RankingConfig) -> Result<Vec<RankedSource>> {
    if candidates.is_empty() {
        return Err(Error::invalid("at least one candidate source is required"));
    }
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        let start = target.start.max(c.start);
        let end = target.end().min(c.end());
        if end <= start {
            return Err(Error::data(format!(
                "site `{}` shares no hours with target `{}`",
                c.site_id, target.site_id
            )));
        }
        let shared = ((end - start).num_hours() as usize).min(config.window_days * 24);
        let from = end - chrono::Duration::hours(shared as i64);
        let slice = |f: &FeatureFrame| {
            let i = f.index_of(from).expect("inside the overlap");
            z_normalize(&downsample(&f.target[i..i + shared], config.max_points))
        };
        let r = dtw_distance(&slice(target), &slice(c), config.band)?;
        out.push(RankedSource {
            site_id: c.site_id.clone(),
            target_id: target.site_id.clone(),
            distance: r.distance,
            path_length: r.path_length,
            band: r.band,
            hours_compared: shared,
        });
    }
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.site_id.cmp(&b.site_id)));
    Ok(out)
}
