use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Capacity knob. Each step adds one hidden layer of width `stem_width_2`
/// after the two stem layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Depth {
    Small,
    Default,
    Large,
}

impl Depth {
    pub fn extra_hidden_layers(self) -> usize {
        match self {
            Depth::Small => 0,
            Depth::Default => 1,
            Depth::Large => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
    Rmsprop,
}

/// One training configuration, serialized as a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamConfig {
    pub depth: Depth,
    pub learning_rate: f64,
    pub stem_width_1: usize,
    pub stem_width_2: usize,
    pub augment_prob: f64,
    pub optimizer: OptimizerKind,
    pub label_smoothing: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HyperparamConfig {
    fn default() -> Self {
        Self {
            depth: Depth::Default,
            learning_rate: 0.003,
            stem_width_1: 32,
            stem_width_2: 32,
            augment_prob: 0.5,
            optimizer: OptimizerKind::Adam,
            label_smoothing: true,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl HyperparamConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero learning rate is accepted: it is the "untrained model" control.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate must be a non-negative number",
            ));
        }
        if self.stem_width_1 == 0 || self.stem_width_2 == 0 {
            return Err(Error::invalid("stem widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.augment_prob) {
            return Err(Error::invalid("augment_prob must lie in [0, 1]"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        Ok(())
    }

    /// Stable id over every field except `seed`, so the same hyperparameters
    /// keep their id when run under different seeds.
    pub fn config_id(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seed");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        seed::short_digest(canonical.as_bytes())
    }

    /// Layer widths from input to logits.
    pub fn layer_dims(&self, feature_dim: usize, class_count: usize) -> Vec<usize> {
        let mut dims = vec![feature_dim, self.stem_width_1, self.stem_width_2];
        dims.extend(std::iter::repeat_n(
            self.stem_width_2,
            self.depth.extra_hidden_layers(),
        ));
        dims.push(class_count);
        dims
    }
}
