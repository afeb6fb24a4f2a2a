//! Dense rectifier network stored as one flat parameter vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::loss::{log_softmax, smoothed_cross_entropy};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};

/// Weights and biases of every layer, laid out layer by layer as a row-major
/// `out x in` weight block followed by an `out` bias block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
        }
        let len = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Gaussian init with variance `2 / fan_in`, zero biases.
    pub fn kaiming(dims: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in 0..params.layer_count() {
            let fan_in = params.dims[layer];
            let std = (2.0 / fan_in as f64).sqrt();
            let (w, _) = params.layer_mut(layer);
            for v in w {
                *v = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(params)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn offset(&self, layer: usize) -> usize {
        self.dims[..=layer]
            .windows(2)
            .take(layer)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// (weights, biases) of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.offset(layer);
        let (w, rest) = self.data[start..].split_at(i * o);
        (w, &rest[..o])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.offset(layer);
        let (w, rest) = self.data[start..].split_at_mut(i * o);
        (w, &mut rest[..o])
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                features.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer for one input.
    pub fn pre_activations(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(features)?;
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layer_count());
        for layer in 0..self.layer_count() {
            let (w, b) = self.layer(layer);
            let z = match zs.last() {
                None => affine(w, b, features),
                Some(prev) => {
                    let a: Vec<f64> = prev.iter().map(|&v| relu(v)).collect();
                    affine(w, b, &a)
                }
            };
            zs.push(z);
        }
        Ok(zs)
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pre_activations(features)?.pop().expect("non-empty"))
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        let logits = self.logits(features)?;
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Unsmoothed cross-entropy of one example.
    pub fn example_loss(&self, ex: &Example) -> Result<f64> {
        let logits = self.logits(&ex.features)?;
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!("logits for example {}", ex.id)));
        }
        Ok((-log_softmax(&logits)[ex.label]).max(0.0))
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("accuracy of an empty dataset"));
        }
        let mut correct = 0usize;
        for ex in data.examples() {
            if self.predict(&ex.features)? == ex.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Mean loss over `batch` and its exact gradient with respect to every
/// parameter, returned in the same layout as `params`.
pub fn forward_backward(
    params: &ModelParams,
    batch: &[&Example],
    smoothing: bool,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = ModelParams {
        dims: params.dims.clone(),
        data: vec![0.0; params.data.len()],
    };
    let offsets: Vec<usize> = (0..params.layer_count())
        .map(|l| params.offset(l))
        .collect();
    let mut total_loss = 0.0;

    for ex in batch {
        if ex.label >= params.output_dim() {
            return Err(Error::Shape(format!(
                "label {} exceeds {} outputs",
                ex.label,
                params.output_dim()
            )));
        }
        let zs = params.pre_activations(&ex.features)?;
        let (loss, mut delta) =
            smoothed_cross_entropy(zs.last().expect("non-empty"), ex.label, smoothing)?;
        total_loss += loss;

        for layer in (0..params.layer_count()).rev() {
            let n_in = params.dims[layer];
            let n_out = params.dims[layer + 1];
            let input: Vec<f64> = if layer == 0 {
                ex.features.clone()
            } else {
                zs[layer - 1].iter().map(|&v| relu(v)).collect()
            };
            let start = offsets[layer];
            {
                let (gw, gb) =
                    grads.data[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(&input) {
                        *g += d * a;
                    }
                }
            }
            if layer > 0 {
                let (w, _) = params.layer(layer);
                let prev_z = &zs[layer - 1];
                let mut next = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (acc, &wv) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *acc += d * wv;
                    }
                }
                for (v, &z) in next.iter_mut().zip(prev_z) {
                    if z <= 0.0 {
                        *v = 0.0;
                    }
                }
                delta = next;
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads.data {
        *g *= scale;
    }
    Ok((total_loss * scale, grads))
}

/// Mean loss only.
pub fn batch_loss(params: &ModelParams, batch: &[&Example], smoothing: bool) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for ex in batch {
        let logits = params.logits(&ex.features)?;
        total += smoothed_cross_entropy(&logits, ex.label, smoothing)?.0;
    }
    Ok(total / batch.len() as f64)
}
