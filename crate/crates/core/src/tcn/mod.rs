//! Multi-quantile temporal convolutional network.
//!
//! A stack of dilated causal residual blocks reads a `lookback × d` window;
//! the final time step of the trunk feeds one small MLP head per quantile
//! level, and each head emits the whole horizon at once.

mod forecast;
mod model;

pub use forecast::QuantileForecast;
pub use model::{
    Batch, Conv1d, Dense, ForwardMode, ModelVars, NamedTensor, ParamReport, QuantileHead,
    ResidualBlock, TcnModel, TcnState, TCN_FORMAT_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

/// Embedding table for one categorical input. `rows` includes the reserved
/// out-of-vocabulary row 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub name: String,
    pub rows: usize,
    pub dim: usize,
}

/// 1×1 input adapter used when a target domain's dense feature set differs
/// from the one the trunk was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub input_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    /// Names of the dense channels the trunk expects (numeric features then
    /// the scaled past target).
    pub input_names: Vec<String>,
    pub embeddings: Vec<EmbeddingSpec>,
    #[serde(default)]
    pub adapter: Option<AdapterSpec>,
    pub kernel_size: usize,
    pub channels: Vec<usize>,
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub lookback: usize,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    pub head_hidden: usize,
    #[serde(default)]
    pub final_activation: Activation,
}

/// `1 + Σ 2·(k−1)·d_l`: two causal convolutions per block.
pub fn receptive_field(kernel_size: usize, dilations: &[usize]) -> usize {
    1 + dilations
        .iter()
        .map(|d| 2 * kernel_size.saturating_sub(1) * d)
        .sum::<usize>()
}

/// Dilation schedule 1, 2, 4, … for `blocks` blocks.
pub fn doubling_dilations(blocks: usize) -> Vec<usize> {
    (0..blocks).map(|l| 1usize << l).collect()
}

impl TcnConfig {
    /// Three 32-channel blocks, k = 3, dilations 1/2/4, dropout 0.1.
    pub fn new(
        input_names: Vec<String>,
        embeddings: Vec<EmbeddingSpec>,
        lookback: usize,
        horizon: usize,
        quantiles: Vec<f64>,
    ) -> Self {
        Self {
            input_names,
            embeddings,
            adapter: None,
            kernel_size: 3,
            channels: vec![32; 3],
            dilations: doubling_dilations(3),
            dropout: 0.1,
            lookback,
            horizon,
            quantiles,
            head_hidden: 32,
            final_activation: Activation::Relu,
        }
    }

    pub fn with_blocks(mut self, blocks: usize, channels: usize) -> Self {
        self.channels = vec![channels; blocks];
        self.dilations = doubling_dilations(blocks);
        self
    }

    pub fn num_blocks(&self) -> usize {
        self.channels.len()
    }

    /// Width of the dense input the trunk sees after the optional adapter.
    pub fn dense_channels(&self) -> usize {
        self.input_names.len()
    }

    /// Width of the dense input a caller must supply.
    pub fn supplied_dense_channels(&self) -> usize {
        self.adapter
            .as_ref()
            .map_or(self.input_names.len(), |a| a.input_names.len())
    }

    pub fn trunk_input_channels(&self) -> usize {
        self.dense_channels() + self.embeddings.iter().map(|e| e.dim).sum::<usize>()
    }

    pub fn trunk_output_channels(&self) -> usize {
        self.channels.last().copied().unwrap_or(0)
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.kernel_size, &self.dilations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_names.is_empty() {
            return Err(Error::invalid("at least one dense input channel is required"));
        }
        if self.kernel_size < 2 {
            return Err(Error::invalid("kernel_size must be >= 2"));
        }
        if self.channels.is_empty() || self.channels.len() != self.dilations.len() {
            return Err(Error::invalid(
                "channels and dilations must list one entry per block (>= 1 block)",
            ));
        }
        if self.channels.contains(&0) {
            return Err(Error::invalid("block channel counts must be positive"));
        }
        if self.dilations.contains(&0) || self.dilations.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(
                "dilations must be positive and non-decreasing",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if self.lookback == 0 || self.horizon == 0 {
            return Err(Error::invalid("lookback and horizon must be >= 1"));
        }
        if self.head_hidden == 0 {
            return Err(Error::invalid("head_hidden must be >= 1"));
        }
        validate_quantiles(&self.quantiles)?;
        for e in &self.embeddings {
            if e.rows < 1 || e.dim < 1 {
                return Err(Error::invalid(format!("embedding `{}` is empty", e.name)));
            }
        }
        Ok(())
    }
}

pub fn validate_quantiles(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::invalid("at least one quantile level is required"));
    }
    if q.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::invalid(format!("quantile levels must lie in (0, 1): {q:?}")));
    }
    if q.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "quantile levels must be strictly increasing: {q:?}"
        )));
    }
    Ok(())
}
