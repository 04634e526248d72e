use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, QuantileForecast, TcnConfig};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub const TCN_FORMAT_VERSION: u32 = 1;

/// Causal dilated convolution layer. `weight` is `[k, c_in, c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(kernel: usize, c_in: usize, c_out: usize, dilation: usize, rng: &mut R) -> Self {
        let bound = (1.0 / (kernel * c_in) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[kernel, c_in, c_out], bound, rng).with_grad(true),
            bias: Tensor::uniform(&[c_out], bound, rng).with_grad(true),
            dilation,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (1.0 / inputs as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[inputs, outputs], bound, rng).with_grad(true),
            bias: Tensor::uniform(&[outputs], bound, rng).with_grad(true),
        }
    }
}

/// conv → ReLU → dropout → conv → ReLU → dropout, plus a residual path that
/// is the identity or a 1×1 convolution when the widths differ.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub downsample: Option<Conv1d>,
}

impl ResidualBlock {
    pub fn new<R: Rng>(kernel: usize, c_in: usize, c_out: usize, dilation: usize, rng: &mut R) -> Self {
        let conv1 = Conv1d::new(kernel, c_in, c_out, dilation, rng);
        let conv2 = Conv1d::new(kernel, c_out, c_out, dilation, rng);
        let downsample = (c_in != c_out).then(|| Conv1d::new(1, c_in, c_out, 1, rng));
        Self {
            conv1,
            conv2,
            downsample,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.conv1.tensors_mut());
        out.extend(self.conv2.tensors_mut());
        if let Some(ds) = &mut self.downsample {
            out.extend(ds.tensors_mut());
        }
        out
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for t in self.tensors_mut() {
            t.set_requires_grad(trainable);
        }
    }
}

/// Two-layer MLP emitting the full horizon for one quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileHead {
    pub level: f64,
    pub hidden: Dense,
    pub output: Dense,
}

impl QuantileHead {
    pub fn new<R: Rng>(level: f64, inputs: usize, hidden: usize, horizon: usize, rng: &mut R) -> Self {
        Self {
            level,
            hidden: Dense::new(inputs, hidden, rng),
            output: Dense::new(hidden, horizon, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden.weight.len() + self.hidden.bias.len() + self.output.weight.len() + self.output.bias.len()
    }
}

/// Mini-batch of windows laid out for the network: dense `[B, p, d]`
/// (numeric features followed by the scaled past target), categorical
/// indices `[B, p, n_cat]` and optional horizon targets `[B, δ]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub lookback: usize,
    pub dense_channels: usize,
    pub dense: Vec<f64>,
    pub categorical_columns: usize,
    pub categorical: Vec<usize>,
    pub horizon: usize,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn from_windows(windows: &[&WindowSample]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::invalid("empty batch"))?;
        let lookback = first.lookback();
        let nf = first.num_features;
        let nc = first.num_categorical;
        let horizon = first.horizon.len();
        let dense_channels = nf + 1;
        let mut dense = Vec::with_capacity(windows.len() * lookback * dense_channels);
        let mut categorical = Vec::with_capacity(windows.len() * lookback * nc);
        let mut targets = Vec::with_capacity(windows.len() * horizon);
        for w in windows {
            if w.lookback() != lookback || w.num_features != nf || w.num_categorical != nc || w.horizon.len() != horizon {
                return Err(Error::invalid("windows in a batch must share their layout"));
            }
            for t in 0..lookback {
                dense.extend_from_slice(&w.features[t * nf..(t + 1) * nf]);
                dense.push(w.past_target[t]);
            }
            categorical.extend_from_slice(&w.categorical);
            targets.extend_from_slice(&w.horizon);
        }
        Ok(Self {
            size: windows.len(),
            lookback,
            dense_channels,
            dense,
            categorical_columns: nc,
            categorical,
            horizon,
            targets,
        })
    }
}

pub enum ForwardMode<'a> {
    Eval,
    /// Dropout active, masks drawn from the supplied generator.
    Train(&'a mut ChaCha8Rng),
}

/// Graph leaves bound to every parameter, in [`TcnModel::parameters`] order.
#[derive(Debug, Clone)]
pub struct ModelVars {
    all: Vec<Var>,
    embeddings: Vec<Var>,
    adapter: Option<(Var, Var)>,
    blocks: Vec<BlockVars>,
    heads: Vec<[Var; 4]>,
}

#[derive(Debug, Clone)]
struct BlockVars {
    conv1: (Var, Var),
    conv2: (Var, Var),
    downsample: Option<(Var, Var)>,
}

impl ModelVars {
    pub fn all(&self) -> &[Var] {
        &self.all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamReport {
    pub total: usize,
    pub trainable: usize,
    pub frozen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
}

/// Serializable model: config plus every parameter by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnState {
    pub format_version: u32,
    pub config: TcnConfig,
    pub params: Vec<NamedTensor>,
    pub scaler_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcnModel {
    pub config: TcnConfig,
    pub embeddings: Vec<Tensor>,
    pub adapter: Option<Conv1d>,
    pub blocks: Vec<ResidualBlock>,
    pub heads: Vec<QuantileHead>,
    /// Hash of the feature scaling metadata the model was trained against.
    pub scaler_hash: String,
}

impl TcnModel {
    pub fn new(config: TcnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let embeddings = config
            .embeddings
            .iter()
            .map(|e| Tensor::uniform(&[e.rows, e.dim], 0.05, rng).with_grad(true))
            .collect();
        let adapter = config
            .adapter
            .as_ref()
            .map(|a| identity_adapter(&a.input_names, &config.input_names));
        let mut blocks = Vec::with_capacity(config.num_blocks());
        let mut c_in = config.trunk_input_channels();
        for (&c_out, &d) in config.channels.iter().zip(&config.dilations) {
            blocks.push(ResidualBlock::new(config.kernel_size, c_in, c_out, d, rng));
            c_in = c_out;
        }
        let heads = config
            .quantiles
            .iter()
            .map(|&q| QuantileHead::new(q, c_in, config.head_hidden, config.horizon, rng))
            .collect();
        Ok(Self {
            config,
            embeddings,
            adapter,
            blocks,
            heads,
            scaler_hash: String::new(),
        })
    }

    pub fn receptive_field(&self) -> usize {
        self.config.receptive_field()
    }

    /// Every parameter with its stable dotted name.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, e) in self.embeddings.iter().enumerate() {
            out.push((format!("embeddings.{i}"), e));
        }
        if let Some(a) = &self.adapter {
            out.push(("adapter.weight".to_string(), &a.weight));
            out.push(("adapter.bias".to_string(), &a.bias));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.conv1.weight"), &b.conv1.weight));
            out.push((format!("blocks.{i}.conv1.bias"), &b.conv1.bias));
            out.push((format!("blocks.{i}.conv2.weight"), &b.conv2.weight));
            out.push((format!("blocks.{i}.conv2.bias"), &b.conv2.bias));
            if let Some(ds) = &b.downsample {
                out.push((format!("blocks.{i}.downsample.weight"), &ds.weight));
                out.push((format!("blocks.{i}.downsample.bias"), &ds.bias));
            }
        }
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("heads.{i}.hidden.weight"), &h.hidden.weight));
            out.push((format!("heads.{i}.hidden.bias"), &h.hidden.bias));
            out.push((format!("heads.{i}.output.weight"), &h.output.weight));
            out.push((format!("heads.{i}.output.bias"), &h.output.bias));
        }
        out
    }

    /// Mutable view in the same order as [`TcnModel::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.parameters().into_iter().map(|(n, _)| n).collect();
        let mut tensors: Vec<&mut Tensor> = Vec::with_capacity(names.len());
        tensors.extend(self.embeddings.iter_mut());
        if let Some(a) = &mut self.adapter {
            tensors.extend(a.tensors_mut());
        }
        for b in &mut self.blocks {
            tensors.extend(b.tensors_mut());
        }
        for h in &mut self.heads {
            tensors.extend([
                &mut h.hidden.weight,
                &mut h.hidden.bias,
                &mut h.output.weight,
                &mut h.output.bias,
            ]);
        }
        names.into_iter().zip(tensors).collect()
    }

    pub fn param_report(&self) -> ParamReport {
        let (mut total, mut trainable) = (0, 0);
        for (_, t) in self.parameters() {
            total += t.len();
            if t.requires_grad() {
                trainable += t.len();
            }
        }
        ParamReport {
            total,
            trainable,
            frozen: total - trainable,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_report().total
    }

    pub fn head_param_count(&self) -> usize {
        self.heads.iter().map(QuantileHead::param_count).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.parameters_mut() {
            t.zero_grad();
        }
    }

    /// Binds every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> ModelVars {
        let mut all = Vec::new();
        let mut leaf = |g: &mut Graph, t: &Tensor| {
            let v = g.leaf(t);
            all.push(v);
            v
        };
        let embeddings = self.embeddings.iter().map(|e| leaf(g, e)).collect();
        let adapter = self
            .adapter
            .as_ref()
            .map(|a| (leaf(g, &a.weight), leaf(g, &a.bias)));
        let blocks = self
            .blocks
            .iter()
            .map(|b| BlockVars {
                conv1: (leaf(g, &b.conv1.weight), leaf(g, &b.conv1.bias)),
                conv2: (leaf(g, &b.conv2.weight), leaf(g, &b.conv2.bias)),
                downsample: b
                    .downsample
                    .as_ref()
                    .map(|d| (leaf(g, &d.weight), leaf(g, &d.bias))),
            })
            .collect();
        let heads = self
            .heads
            .iter()
            .map(|h| {
                [
                    leaf(g, &h.hidden.weight),
                    leaf(g, &h.hidden.bias),
                    leaf(g, &h.output.weight),
                    leaf(g, &h.output.bias),
                ]
            })
            .collect();
        ModelVars {
            all,
            embeddings,
            adapter,
            blocks,
            heads,
        }
    }

    /// Folds gradients from a swept graph into the trainable parameters.
    /// Trainable parameters the loss never reached receive a zero gradient.
    pub fn accumulate_grads(&mut self, g: &Graph, vars: &ModelVars) -> Result<()> {
        let all = vars.all.clone();
        for ((_, t), v) in self.parameters_mut().into_iter().zip(all) {
            if !t.requires_grad() {
                continue;
            }
            match g.grad(v) {
                Some(grad) => t.accumulate_grad(grad)?,
                None => t.accumulate_grad(&vec![0.0; t.len()])?,
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.lookback != self.config.lookback {
            return Err(Error::invalid(format!(
                "lookback mismatch: model expects {} steps, window has {}",
                self.config.lookback, batch.lookback
            )));
        }
        if batch.dense_channels != self.config.supplied_dense_channels() {
            return Err(Error::invalid(format!(
                "feature width mismatch: model expects {} dense channels, window has {}",
                self.config.supplied_dense_channels(),
                batch.dense_channels
            )));
        }
        if batch.categorical_columns != self.config.embeddings.len() {
            return Err(Error::invalid(format!(
                "model has {} embedding tables, window has {} categorical columns",
                self.config.embeddings.len(),
                batch.categorical_columns
            )));
        }
        Ok(())
    }

    fn dropout(&self, g: &mut Graph, x: Var, mode: &mut ForwardMode<'_>) -> Result<Var> {
        let p = self.config.dropout;
        match mode {
            ForwardMode::Train(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let n = g.value(x).len();
                let mask = (0..n)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                g.mask(x, mask)
            }
            _ => Ok(x),
        }
    }

    fn block_graph(
        &self,
        g: &mut Graph,
        block: &ResidualBlock,
        bv: &BlockVars,
        x: Var,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Var> {
        let h = g.conv1d(x, bv.conv1.0, bv.conv1.1, block.conv1.dilation)?;
        let h = g.relu(h);
        let h = self.dropout(g, h, mode)?;
        let h = g.conv1d(h, bv.conv2.0, bv.conv2.1, block.conv2.dilation)?;
        let h = g.relu(h);
        let h = self.dropout(g, h, mode)?;
        let residual = match bv.downsample {
            Some((w, b)) => g.conv1d(x, w, b, 1)?,
            None => x,
        };
        let o = g.add(h, residual)?;
        Ok(match self.config.final_activation {
            Activation::Relu => g.relu(o),
            Activation::Identity => o,
        })
    }

    /// Builds the trunk input `[B, p, d + Σ emb]` and runs every block.
    /// Returns the output of each block in order.
    pub fn trunk_graph(
        &self,
        g: &mut Graph,
        vars: &ModelVars,
        batch: &Batch,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Vec<Var>> {
        self.check_batch(batch)?;
        let (b, p) = (batch.size, batch.lookback);
        let mut x = g.constant(vec![b, p, batch.dense_channels], batch.dense.clone())?;
        if let (Some(a), Some((w, bias))) = (&self.adapter, vars.adapter) {
            x = g.conv1d(x, w, bias, a.dilation)?;
        }
        let mut parts = vec![x];
        for (c, (spec, table)) in self.config.embeddings.iter().zip(&vars.embeddings).enumerate() {
            let idx: Vec<usize> = batch
                .categorical
                .iter()
                .skip(c)
                .step_by(batch.categorical_columns)
                .copied()
                .collect();
            let e = g.gather(*table, &idx)?;
            parts.push(g.reshape(e, &[b, p, spec.dim])?);
        }
        let mut h = if parts.len() == 1 {
            parts[0]
        } else {
            g.concat(&parts, 2)?
        };
        let mut outputs = Vec::with_capacity(self.blocks.len());
        for (block, bv) in self.blocks.iter().zip(&vars.blocks) {
            h = self.block_graph(g, block, bv, h, mode)?;
            outputs.push(h);
        }
        Ok(outputs)
    }

    /// Runs trunk and heads; returns one `[B, δ]` node per quantile level.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        vars: &ModelVars,
        batch: &Batch,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Vec<Var>> {
        let trunk = *self
            .trunk_graph(g, vars, batch, mode)?
            .last()
            .expect("at least one block");
        let c = self.config.trunk_output_channels();
        let last = g.slice(trunk, 1, batch.lookback - 1, 1)?;
        let last = g.reshape(last, &[batch.size, c])?;
        let mut outs = Vec::with_capacity(self.heads.len());
        for hv in &vars.heads {
            let h = g.matmul(last, hv[0])?;
            let h = g.add_bias(h, hv[1])?;
            let h = g.relu(h);
            let o = g.matmul(h, hv[2])?;
            outs.push(g.add_bias(o, hv[3])?);
        }
        Ok(outs)
    }

    /// Inference on a batch of windows; forecasts stay on the normalized
    /// target scale.
    pub fn predict(&self, windows: &[&WindowSample]) -> Result<Vec<QuantileForecast>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(64) {
            let batch = Batch::from_windows(chunk)?;
            let mut g = Graph::new();
            let vars = self.bind(&mut g);
            let heads = self.forward_graph(&mut g, &vars, &batch, &mut ForwardMode::Eval)?;
            let (nq, h) = (self.heads.len(), self.config.horizon);
            for (i, w) in chunk.iter().enumerate() {
                let mut values = vec![0.0; h * nq];
                for (q, hv) in heads.iter().enumerate() {
                    let row = &g.value(*hv)[i * h..(i + 1) * h];
                    for (s, v) in row.iter().enumerate() {
                        values[s * nq + q] = *v;
                    }
                }
                out.push(QuantileForecast::new(values, self.config.quantiles.clone(), w.origin)?);
            }
        }
        Ok(out)
    }

    /// Single-window forward pass (normalized scale).
    pub fn forward(&self, window: &WindowSample) -> Result<QuantileForecast> {
        Ok(self.predict(&[window])?.remove(0))
    }

    /// Output of every residual block for one window, `[1, p, c_l]` each.
    pub fn block_outputs(&self, window: &WindowSample) -> Result<Vec<Tensor>> {
        let batch = Batch::from_windows(&[window])?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let outs = self.trunk_graph(&mut g, &vars, &batch, &mut ForwardMode::Eval)?;
        Ok(outs.into_iter().map(|v| g.tensor(v)).collect())
    }

    /// Final trunk activations for one window, `[1, p, c]`.
    pub fn trunk_activations(&self, window: &WindowSample) -> Result<Tensor> {
        Ok(self.block_outputs(window)?.pop().expect("at least one block"))
    }

    /// Marks the embeddings, adapter and the given blocks frozen or
    /// trainable.
    pub fn set_block_trainable(&mut self, block: usize, trainable: bool) {
        if let Some(b) = self.blocks.get_mut(block) {
            b.set_trainable(trainable);
        }
    }

    pub fn set_embeddings_trainable(&mut self, trainable: bool) {
        for e in &mut self.embeddings {
            e.set_requires_grad(trainable);
        }
    }

    pub fn to_state(&self) -> TcnState {
        TcnState {
            format_version: TCN_FORMAT_VERSION,
            config: self.config.clone(),
            params: self
                .parameters()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                    trainable: t.requires_grad(),
                })
                .collect(),
            scaler_hash: self.scaler_hash.clone(),
        }
    }

    pub fn from_state(state: TcnState) -> Result<Self> {
        if state.format_version != TCN_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported model format version {}",
                state.format_version
            )));
        }
        // Parameter shapes come from the config; values are overwritten below.
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Self::new(state.config, &mut rng)?;
        model.scaler_hash = state.scaler_hash;
        let mut params = model.parameters_mut();
        if params.len() != state.params.len() {
            return Err(Error::data(format!(
                "checkpoint lists {} tensors, config implies {}",
                state.params.len(),
                params.len()
            )));
        }
        for ((name, t), saved) in params.iter_mut().zip(state.params) {
            if *name != saved.name || t.shape() != saved.shape.as_slice() {
                return Err(Error::data(format!(
                    "checkpoint tensor `{}` {:?} does not match expected `{}` {:?}",
                    saved.name,
                    saved.shape,
                    name,
                    t.shape()
                )));
            }
            **t = Tensor::new(saved.shape, saved.data)?.with_grad(saved.trainable);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_state())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_state(serde_json::from_str(s)?)
    }
}

/// Adapter weight that copies each shared column and zeroes the rest.
fn identity_adapter(from: &[String], to: &[String]) -> Conv1d {
    let mut w = vec![0.0; from.len() * to.len()];
    for (i, name) in from.iter().enumerate() {
        if let Some(j) = to.iter().position(|t| t == name) {
            w[i * to.len() + j] = 1.0;
        }
    }
    Conv1d {
        weight: Tensor::new(vec![1, from.len(), to.len()], w)
            .expect("sized above")
            .with_grad(true),
        bias: Tensor::zeros(&[to.len()]).with_grad(true),
        dilation: 1,
    }
}
