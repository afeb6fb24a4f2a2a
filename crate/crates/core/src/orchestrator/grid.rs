use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::trainer::HyperparamConfig;

/// Defaults plus, per field, the alternative values to try one at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub defaults: HyperparamConfig,
    #[serde(default)]
    pub variations: IndexMap<String, Vec<Value>>,
}

/// A config together with the field it varies (`None` for the defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub config: HyperparamConfig,
    pub varied_field: Option<String>,
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn new(defaults: HyperparamConfig) -> Self {
        Self {
            defaults,
            variations: IndexMap::new(),
        }
    }

    pub fn vary(mut self, field: &str, values: Vec<Value>) -> Self {
        self.variations.insert(field.to_string(), values);
        self
    }

    /// Grid modelled on the published search space: two alternative depths,
    /// four alternative learning rates, two widths for each stem layer, two
    /// augmentation probabilities, two optimizers, and smoothing off.
    pub fn standard_sixteen(defaults: HyperparamConfig) -> Self {
        use serde_json::json;
        Self::new(defaults)
            .vary("depth", vec![json!("small"), json!("large")])
            .vary(
                "learning_rate",
                vec![json!(0.001), json!(0.007), json!(0.01), json!(0.1)],
            )
            .vary("stem_width_1", vec![json!(4), json!(48)])
            .vary("stem_width_2", vec![json!(4), json!(48)])
            .vary("augment_prob", vec![json!(0.0), json!(0.25)])
            .vary("optimizer", vec![json!("sgd"), json!("rmsprop")])
            .vary("label_smoothing", vec![json!(false)])
    }
}

/// The defaults first, then one config per (field, value) with every other
/// field at its default.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<HyperparamConfig>> {
    Ok(generate_grid_entries(spec)?
        .into_iter()
        .map(|e| e.config)
        .collect())
}

pub fn generate_grid_entries(spec: &GridSpec) -> Result<Vec<GridEntry>> {
    spec.defaults.validate()?;
    let base = serde_json::to_value(&spec.defaults)?;
    let base_obj = base.as_object().expect("config is an object");
    let mut entries = vec![GridEntry {
        config: spec.defaults.clone(),
        varied_field: None,
    }];
    let mut seen: HashSet<String> = HashSet::from([spec.defaults.config_id()]);

    for (field, values) in &spec.variations {
        if field == "seed" || !base_obj.contains_key(field) {
            return Err(Error::invalid(format!("unknown grid field {field:?}")));
        }
        for value in values {
            let mut obj = base_obj.clone();
            obj.insert(field.clone(), value.clone());
            let config: HyperparamConfig = serde_json::from_value(Value::Object(obj))
                .map_err(|e| Error::invalid(format!("bad value {value} for {field}: {e}")))?;
            config.validate()?;
            if !seen.insert(config.config_id()) {
                return Err(Error::invalid(format!(
                    "value {value} for {field} duplicates another config (equal to the default?)"
                )));
            }
            entries.push(GridEntry {
                config,
                varied_field: Some(field.clone()),
            });
        }
    }
    Ok(entries)
}
