//! Deterministic dense-network trainer.
//!
//! A run is a pure function of the training/validation data and the
//! configuration (including its seed): initialization, shuffling and
//! augmentation each draw from their own seeded stream.

mod config;
mod gradcheck;
mod loss;
mod network;
mod optim;
mod schedule;

use std::borrow::Cow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{Depth, HyperparamConfig, OptimizerKind};
pub use gradcheck::{
    check_gradients, gradient_check, relative_error, GradCheckOptions, GradCheckReport,
};
pub use loss::{log_softmax, smoothed_cross_entropy, target_distribution, SMOOTHED_TARGET};
pub use network::{batch_loss, forward_backward, ModelParams};
pub use optim::OptimizerState;
pub use schedule::one_cycle_lr;

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    /// Loss or gradient became non-finite; remaining epochs repeat the last
    /// observed accuracy.
    Diverged,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset_id: String,
    pub proxy_id: String,
    pub config_id: String,
    pub seed: u64,
    pub epoch_val_acc: Vec<f64>,
    pub best_val_acc: f64,
    pub cost_units: f64,
    pub wall_ms: u64,
    pub status: RunStatus,
}

impl RunRecord {
    /// (dataset_id, proxy_id, config_id) joined with `/`.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.dataset_id, self.proxy_id, self.config_id)
    }

    /// Validation accuracy after `epoch` (1-based).
    pub fn acc_at(&self, epoch: usize) -> Option<f64> {
        epoch
            .checked_sub(1)
            .and_then(|i| self.epoch_val_acc.get(i))
            .copied()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub params: ModelParams,
}

/// With probability `augment_prob` return the example with its feature
/// order reversed.
pub fn augment<'a>(ex: &'a Example, augment_prob: f64, rng: &mut impl Rng) -> Cow<'a, Example> {
    if augment_prob > 0.0 && rng.random::<f64>() < augment_prob {
        let mut flipped = ex.clone();
        flipped.features.reverse();
        Cow::Owned(flipped)
    } else {
        Cow::Borrowed(ex)
    }
}

/// Train `config` on `train`, evaluating validation accuracy after every
/// epoch. The returned record's `proxy_id` is `"full"`; callers training
/// proxies overwrite it.
pub fn train_model(
    train: &Dataset,
    val: &Dataset,
    config: &HyperparamConfig,
) -> Result<TrainedRun> {
    train_with_shuffle_seed(train, val, config, config.seed)
}

/// As [`train_model`] but with the shuffle stream seeded separately.
pub fn train_with_shuffle_seed(
    train: &Dataset,
    val: &Dataset,
    config: &HyperparamConfig,
    shuffle_seed: u64,
) -> Result<TrainedRun> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    if train.feature_dim() != val.feature_dim() || train.class_count() != val.class_count() {
        return Err(Error::Shape(
            "training and validation sets disagree on feature_dim or class_count".into(),
        ));
    }
    let started = Instant::now();
    let dims = config.layer_dims(train.feature_dim(), train.class_count());
    let mut params = ModelParams::kaiming(&dims, seed::derive(config.seed, "init", 0))?;
    let mut optimizer = OptimizerState::new(config.optimizer, params.len());

    let n = train.len();
    let batch_size = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch_size);
    let total_steps = steps_per_epoch * config.epochs;

    let mut accs = Vec::with_capacity(config.epochs);
    let mut last_acc = params.accuracy(val)?;
    let mut status = RunStatus::Ok;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..n).collect();

    'epochs: for epoch in 0..config.epochs {
        if batch_size < n {
            order.sort_unstable();
            let mut shuffle_rng =
                ChaCha8Rng::seed_from_u64(seed::derive(shuffle_seed, "shuffle", epoch as u64));
            order.shuffle(&mut shuffle_rng);
        }
        let mut aug_rng =
            ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "augment", epoch as u64));
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Cow<Example>> = chunk
                .iter()
                .map(|&i| augment(&train.examples()[i], config.augment_prob, &mut aug_rng))
                .collect();
            let refs: Vec<&Example> = batch.iter().map(|c| c.as_ref()).collect();
            let lr = one_cycle_lr(step, total_steps, config.learning_rate)?;
            step += 1;
            let outcome = forward_backward(&params, &refs, config.label_smoothing)
                .and_then(|(_, grads)| optimizer.step(params.as_mut_slice(), grads.as_slice(), lr));
            match outcome {
                Ok(()) => {}
                Err(Error::NonFinite(what)) => {
                    log::warn!(
                        "config {} diverged at epoch {} step {step}: non-finite {what}",
                        config.config_id(),
                        epoch + 1
                    );
                    status = RunStatus::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        last_acc = params.accuracy(val)?;
        accs.push(last_acc);
    }
    accs.resize(config.epochs, last_acc);

    let best_val_acc = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let record = RunRecord {
        dataset_id: train.id().to_string(),
        proxy_id: "full".to_string(),
        config_id: config.config_id(),
        seed: config.seed,
        epoch_val_acc: accs,
        best_val_acc,
        cost_units: (n * config.epochs) as f64,
        wall_ms: started.elapsed().as_millis() as u64,
        status,
    };
    Ok(TrainedRun { record, params })
}
