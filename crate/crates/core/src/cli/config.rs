use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SplitConfig;
use crate::error::{Error, Result};
use crate::harness::{HyperParams, SearchSpace, TrainConfig};
use crate::transfer::RankingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub active_stations: bool,
    pub weekday_embedding: bool,
    /// Compress per-station activity to this many columns.
    pub station_bottleneck: Option<usize>,
    pub station_epochs: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            active_stations: true,
            weekday_embedding: true,
            station_bottleneck: None,
            station_epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySettings {
    pub enabled: bool,
    pub window: usize,
    pub k: f64,
}

impl Default for AnomalySettings {
    fn default() -> Self {
        Self {
            enabled: true,
            window: 168,
            k: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub site_id: String,
    /// RFC 3339 start of the first generated hour.
    pub start: String,
    pub months: u32,
    pub hour_shift: usize,
    pub scale: f64,
    pub sessions_per_day: f64,
    pub station_count: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            site_id: "synth".into(),
            start: "2019-01-01T00:00:00Z".into(),
            months: 6,
            hour_shift: 0,
            scale: 1.0,
            sessions_per_day: 40.0,
            station_count: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub budget_hours: usize,
    pub appended_blocks: usize,
    pub appended_channels: Option<usize>,
    pub unfreeze_top: usize,
    pub head_hidden: Option<usize>,
    pub epochs: usize,
    pub patience: Option<usize>,
    pub batch_size: usize,
    pub lr_factor: f64,
    /// Also train a from-scratch model on the same budget for comparison.
    pub compare_scratch: bool,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            budget_hours: 336,
            appended_blocks: 0,
            appended_channels: None,
            unfreeze_top: 0,
            head_hidden: None,
            epochs: 200,
            patience: None,
            batch_size: 32,
            lr_factor: 1.0,
            compare_scratch: false,
        }
    }
}

/// Every setting of a run with defaults materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub lookback: usize,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    pub epochs: usize,
    pub patience: usize,
    pub sort_quantiles: bool,
    pub jobs: usize,
    pub site_id: Option<String>,
    /// RFC 3339 forecast origin for `forecast`.
    pub origin: Option<String>,
    pub split: SplitConfig,
    pub hyper_params: HyperParams,
    pub search: SearchSpace,
    pub features: FeatureConfig,
    pub anomaly: AnomalySettings,
    pub synth: SynthSettings,
    pub transfer: TransferSettings,
    pub ranking: RankingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tc = TrainConfig::default();
        Self {
            seed: 0,
            lookback: tc.lookback,
            horizon: tc.horizon,
            quantiles: tc.quantiles,
            epochs: tc.epochs,
            patience: tc.patience,
            sort_quantiles: false,
            jobs: 1,
            site_id: None,
            origin: None,
            split: SplitConfig::default(),
            hyper_params: HyperParams::default(),
            search: SearchSpace::default(),
            features: FeatureConfig::default(),
            anomaly: AnomalySettings::default(),
            synth: SynthSettings::default(),
            transfer: TransferSettings::default(),
            ranking: RankingConfig::default(),
        }
    }
}

/// Overlays `patch` on `base`, rejecting keys `base` does not have.
fn merge(base: &mut Value, patch: Value, at: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() => merge(slot, v, &path)?,
                    Some(slot) => *slot = v,
                    None => return Err(Error::invalid(format!("unknown config key `{path}`"))),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p;
            Ok(())
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with a JSON object. A run manifest is accepted too;
    /// its `config` member is used.
    pub fn from_json_value(mut patch: Value) -> Result<Self> {
        if patch.get("subcommand").is_some() {
            if let Some(inner) = patch.get_mut("config").map(Value::take) {
                patch = inner;
            }
        }
        if !patch.is_object() {
            return Err(Error::invalid("config must be a JSON object"));
        }
        let mut base = serde_json::to_value(Self::default())?;
        merge(&mut base, patch, "")?;
        serde_json::from_value(base).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        Self::from_json_value(v)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.hyper_params.batch_size,
            lr: self.hyper_params.lr,
            patience: self.patience,
            seed: self.seed,
            quantiles: self.quantiles.clone(),
            lookback: self.lookback,
            horizon: self.horizon,
        }
    }

    /// Search space whose trial draws derive from the run seed.
    pub fn search_space(&self) -> SearchSpace {
        SearchSpace {
            seed: crate::harness::derive_seed(self.seed, "search"),
            ..self.search.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.jobs == 0 {
            return Err(Error::invalid("--jobs must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn file_values_override_defaults_and_unknown_keys_fail() {
        let c = RunConfig::from_json_value(json!({"horizon": 4, "search": {"budget": 2}})).unwrap();
        assert_eq!(c.horizon, 4);
        assert_eq!(c.search.budget, 2);
        assert_eq!(c.search.blocks, SearchSpace::default().blocks);
        assert_eq!(c.lookback, 168);
        assert!(RunConfig::from_json_value(json!({"horizn": 4})).is_err());
        assert!(RunConfig::from_json_value(json!({"search": {"budgt": 4}})).is_err());
        let m = RunConfig::from_json_value(json!({"subcommand": "cv", "config": {"seed": 9}})).unwrap();
        assert_eq!(m.seed, 9);
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(RunConfig::from_json_value(v).unwrap(), c);
    }
}
