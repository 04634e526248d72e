use std::collections::BTreeSet;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FeatureFrame;
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

/// `x → W₁x + b₁ → W₂h + b₂`, trained on squared reconstruction error.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAutoencoder {
    pub enc_weight: Tensor,
    pub enc_bias: Tensor,
    pub dec_weight: Tensor,
    pub dec_bias: Tensor,
}

impl LinearAutoencoder {
    pub fn new(inputs: usize, bottleneck: usize, rng: &mut ChaCha8Rng) -> Self {
        let be = (1.0 / inputs as f64).sqrt();
        let bd = (1.0 / bottleneck as f64).sqrt();
        Self {
            enc_weight: Tensor::uniform(&[inputs, bottleneck], be, rng).with_grad(true),
            enc_bias: Tensor::uniform(&[bottleneck], be, rng).with_grad(true),
            dec_weight: Tensor::uniform(&[bottleneck, inputs], bd, rng).with_grad(true),
            dec_bias: Tensor::uniform(&[inputs], bd, rng).with_grad(true),
        }
    }

    pub fn inputs(&self) -> usize {
        self.enc_weight.shape()[0]
    }

    pub fn bottleneck(&self) -> usize {
        self.enc_weight.shape()[1]
    }

    /// Mean squared reconstruction error of row-major `rows × inputs` data.
    pub fn loss(&self, data: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let (loss, _) = self.loss_graph(&mut g, data)?;
        Ok(g.value(loss)[0])
    }

    fn loss_graph(&self, g: &mut Graph, data: &[f64]) -> Result<(crate::tensor::Var, [crate::tensor::Var; 4])> {
        let n = self.inputs();
        let x = g.constant(vec![data.len() / n, n], data.to_vec())?;
        let vars = [
            g.leaf(&self.enc_weight),
            g.leaf(&self.enc_bias),
            g.leaf(&self.dec_weight),
            g.leaf(&self.dec_bias),
        ];
        let h = g.matmul(x, vars[0])?;
        let h = g.add_bias(h, vars[1])?;
        let r = g.matmul(h, vars[2])?;
        let r = g.add_bias(r, vars[3])?;
        let e = g.sub(r, x)?;
        let sq = g.mul(e, e)?;
        Ok((g.mean(sq), vars))
    }

    /// Full-batch Adam; returns the loss before each epoch's update.
    pub fn train(&mut self, data: &[f64], epochs: usize, lr: f64) -> Result<Vec<f64>> {
        if data.is_empty() || data.len() % self.inputs() != 0 {
            return Err(Error::invalid("autoencoder data must be rows × inputs"));
        }
        let mut adam = Adam::new(AdamConfig::with_lr(lr));
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut g = Graph::new();
            let (loss, vars) = self.loss_graph(&mut g, data)?;
            losses.push(g.value(loss)[0]);
            g.backward(loss)?;
            let params = [
                &mut self.enc_weight,
                &mut self.enc_bias,
                &mut self.dec_weight,
                &mut self.dec_bias,
            ];
            for (t, v) in params.into_iter().zip(vars) {
                t.zero_grad();
                t.accumulate_grad(g.grad(v).expect("reached by loss"))?;
            }
            adam.step(&mut [
                ("enc_weight", &mut self.enc_weight),
                ("enc_bias", &mut self.enc_bias),
                ("dec_weight", &mut self.dec_weight),
                ("dec_bias", &mut self.dec_bias),
            ])?;
        }
        Ok(losses)
    }

    pub fn encode_row(&self, x: &[f64]) -> Vec<f64> {
        let (n, b) = (self.inputs(), self.bottleneck());
        let w = self.enc_weight.data();
        let mut h = self.enc_bias.data().to_vec();
        for (i, xi) in x.iter().enumerate().take(n) {
            if *xi != 0.0 {
                for j in 0..b {
                    h[j] += xi * w[i * b + j];
                }
            }
        }
        h
    }
}

/// Station-activity features shared across sites: either the multi-hot
/// vector itself (small vocabularies) or its autoencoder bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEncoder {
    pub stations: Vec<String>,
    pub bottleneck: usize,
    /// `None` means pass-through multi-hot.
    pub weights: Option<EncoderWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    pub bottleneck: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            bottleneck: 30,
            epochs: 200,
            lr: 1e-2,
            seed: 0,
        }
    }
}

fn multi_hot(frame: &FeatureFrame, t: usize, stations: &[String]) -> Vec<f64> {
    let mut row = vec![0.0; stations.len()];
    for name in frame.active_station_names(t) {
        if let Ok(i) = stations.binary_search_by(|s| s.as_str().cmp(name)) {
            row[i] = 1.0;
        }
    }
    row
}

/// Fits a station encoder on the given training range of each frame.
pub fn compress_station_activity(
    frames: &[(&FeatureFrame, Range<usize>)],
    config: CompressionConfig,
) -> Result<StationEncoder> {
    let stations: Vec<String> = frames
        .iter()
        .flat_map(|(f, _)| f.stations.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if stations.is_empty() {
        return Err(Error::data("no station activity to encode"));
    }
    if stations.len() < config.bottleneck {
        return Ok(StationEncoder {
            bottleneck: stations.len(),
            stations,
            weights: None,
        });
    }
    let mut data = Vec::new();
    for (f, range) in frames {
        for t in range.clone() {
            data.extend(multi_hot(f, t, &stations));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = LinearAutoencoder::new(stations.len(), config.bottleneck, &mut rng);
    ae.train(&data, config.epochs, config.lr)?;
    Ok(StationEncoder {
        stations,
        bottleneck: config.bottleneck,
        weights: Some(EncoderWeights {
            weight: ae.enc_weight.data().to_vec(),
            bias: ae.enc_bias.data().to_vec(),
        }),
    })
}

impl StationEncoder {
    pub fn dims(&self) -> usize {
        self.bottleneck
    }

    pub fn encode_hour(&self, frame: &FeatureFrame, t: usize) -> Vec<f64> {
        let x = multi_hot(frame, t, &self.stations);
        match &self.weights {
            None => x,
            Some(w) => {
                let b = self.bottleneck;
                let mut h = w.bias.clone();
                for (i, xi) in x.iter().enumerate() {
                    if *xi != 0.0 {
                        for j in 0..b {
                            h[j] += xi * w.weight[i * b + j];
                        }
                    }
                }
                h
            }
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use rand::Rng;

    #[test]
    fn loss_decreases_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..50 * 40).map(|_| if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 }).collect();
        let mut ae = LinearAutoencoder::new(40, 30, &mut rng);
        let losses = ae.train(&data, 11, 1e-3).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    fn frame_with_stations(n: usize, hours: usize) -> FeatureFrame {
        let mut f = FeatureFrame::raw("a", Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), vec![0.0; hours]);
        f.stations = (0..n).map(|i| format!("st{i:03}")).collect();
        f.activity = (0..hours)
            .map(|t| if t % 5 == 0 { vec![] } else { vec![(t % n) as u32, ((t * 7) % n) as u32] })
            .collect();
        for a in &mut f.activity {
            a.sort();
            a.dedup();
        }
        f
    }

    #[test]
    fn large_vocabulary_compresses_to_bottleneck() {
        let f = frame_with_stations(186, 200);
        let enc = compress_station_activity(
            &[(&f, 0..200)],
            CompressionConfig {
                epochs: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(enc.dims(), 30);
        assert_eq!(enc.encode_hour(&f, 1).len(), 30);
        // Hour 0 has no active station.
        assert_eq!(enc.encode_hour(&f, 0), enc.weights.as_ref().unwrap().bias);
        assert_eq!(enc.encode_hour(&f, 0), enc.encode_hour(&f, 5));
    }

    #[test]
    fn small_vocabulary_passes_through() {
        let f = frame_with_stations(12, 20);
        let enc = compress_station_activity(&[(&f, 0..20)], CompressionConfig::default()).unwrap();
        assert!(enc.weights.is_none());
        assert_eq!(enc.dims(), 12);
        let row = enc.encode_hour(&f, 1);
        assert_eq!(row.iter().sum::<f64>(), 2.0);
    }
}
