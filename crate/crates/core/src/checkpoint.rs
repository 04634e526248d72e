//! Model checkpoints bundling weights with the feature plan they expect.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeaturePlan;
use crate::error::{Error, Result};
use crate::harness::{write_atomic, HyperParams, TrainConfig};
use crate::tcn::{TcnModel, TcnState};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub site_id: String,
    pub model: TcnState,
    pub plan: FeaturePlan,
    pub plan_hash: String,
    #[serde(default)]
    pub hyper_params: Option<HyperParams>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn new(
        site_id: impl Into<String>,
        model: &TcnModel,
        plan: &FeaturePlan,
        hyper_params: Option<HyperParams>,
        train_config: Option<TrainConfig>,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            site_id: site_id.into(),
            model: model.to_state(),
            plan: plan.clone(),
            plan_hash: plan.hash(),
            hyper_params,
            train_config,
        }
    }

    /// Rebuilds the model after checking it matches the bundled plan.
    pub fn model(&self) -> Result<TcnModel> {
        if self.plan.hash() != self.plan_hash {
            return Err(Error::data("checkpoint feature plan does not match its recorded hash"));
        }
        let model = TcnModel::from_state(self.model.clone())?;
        if !model.scaler_hash.is_empty() && model.scaler_hash != self.plan_hash {
            return Err(Error::data("model was trained against a different feature plan"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: not a checkpoint: {e}", path.display())))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::data(format!(
                "{}: unsupported checkpoint version {}",
                path.display(),
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
