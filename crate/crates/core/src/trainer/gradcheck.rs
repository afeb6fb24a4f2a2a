//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::HyperparamConfig;
use super::network::{batch_loss, forward_backward, ModelParams};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale. At
/// h = 1e-4 the central-difference truncation error is around 1e-10, which
/// swamps the relative error of a gradient that is (near) zero.
pub const MAGNITUDE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub coordinates_checked: usize,
    /// Coordinates whose perturbation moved some rectifier across its kink.
    pub coordinates_skipped: usize,
    pub max_relative_error: f64,
    pub worst_coordinate: Option<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub coordinates: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            tolerance: 1e-4,
            coordinates: 100,
            seed: 0,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

fn hidden_signs(params: &ModelParams, batch: &[&Example]) -> Result<Vec<bool>> {
    let mut signs = Vec::new();
    for ex in batch {
        let zs = params.pre_activations(&ex.features)?;
        for z in &zs[..zs.len() - 1] {
            signs.extend(z.iter().map(|&v| v > 0.0));
        }
    }
    Ok(signs)
}

/// Compare `analytic` against central differences of the mean batch loss at
/// randomly chosen coordinates of `params`.
pub fn check_gradients(
    params: &ModelParams,
    batch: &[&Example],
    smoothing: bool,
    analytic: &[f64],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if analytic.len() != params.len() {
        return Err(Error::Shape("analytic gradient length".into()));
    }
    let base_signs = hidden_signs(params, batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // Draw extra candidates so kink skips still leave enough checked coordinates.
    let pool = (opts.coordinates * 4).min(params.len());
    let candidates = sample(&mut rng, params.len(), pool);

    let mut probe = params.clone();
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = (0.0f64, None);
    for coord in candidates.iter() {
        if checked == opts.coordinates {
            break;
        }
        let original = probe.as_slice()[coord];
        probe.as_mut_slice()[coord] = original + opts.step;
        let up = batch_loss(&probe, batch, smoothing)?;
        let up_signs = hidden_signs(&probe, batch)?;
        probe.as_mut_slice()[coord] = original - opts.step;
        let down = batch_loss(&probe, batch, smoothing)?;
        let down_signs = hidden_signs(&probe, batch)?;
        probe.as_mut_slice()[coord] = original;
        if up_signs != base_signs || down_signs != base_signs {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * opts.step);
        let err = relative_error(analytic[coord], numeric);
        if err > worst.0 || worst.1.is_none() {
            worst = (err, Some(coord));
        }
        checked += 1;
    }
    Ok(GradCheckReport {
        coordinates_checked: checked,
        coordinates_skipped: skipped,
        max_relative_error: worst.0,
        worst_coordinate: worst.1,
        tolerance: opts.tolerance,
        passed: checked > 0 && worst.0 < opts.tolerance,
    })
}

/// Gradient check of a freshly initialized network for `config` on up to 16
/// examples of `data`. Intended for small networks.
pub fn gradient_check(
    config: &HyperparamConfig,
    data: &Dataset,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let dims = config.layer_dims(data.feature_dim(), data.class_count());
    let params = ModelParams::kaiming(&dims, seed::derive(config.seed, "init", 0))?;
    let batch: Vec<&Example> = data.examples().iter().take(16).collect();
    let (_, grads) = forward_backward(&params, &batch, config.label_smoothing)?;
    check_gradients(
        &params,
        &batch,
        config.label_smoothing,
        grads.as_slice(),
        GradCheckOptions {
            tolerance,
            seed: seed::derive(config.seed, "gradcheck", 0),
            ..GradCheckOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, SynthSpec};
    use crate::trainer::config::Depth;

    fn tiny() -> (HyperparamConfig, Dataset) {
        let cfg = HyperparamConfig {
            stem_width_1: 8,
            stem_width_2: 6,
            depth: Depth::Default,
            ..HyperparamConfig::default()
        };
        let data = synth_generate(&SynthSpec {
            class_count: 4,
            feature_dim: 5,
            examples_per_class: 5,
            class_separation: 2.0,
            noise_lo: 0.5,
            noise_hi: 1.0,
            label_flip_fraction: 0.0,
            seed: 3,
        })
        .unwrap();
        (cfg, data)
    }

    #[test]
    fn default_tiny_config_passes() {
        let (cfg, data) = tiny();
        let report = gradient_check(&cfg, &data, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.coordinates_checked, 100);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (cfg, data) = tiny();
        let dims = cfg.layer_dims(5, 4);
        let params = ModelParams::kaiming(&dims, 1).unwrap();
        let batch: Vec<&Example> = data.examples().iter().collect();
        let (_, grads) = forward_backward(&params, &batch, true).unwrap();
        let corrupted: Vec<f64> = grads.as_slice().iter().map(|g| g * 1.01 + 1e-3).collect();
        let opts = GradCheckOptions {
            coordinates: params.len(),
            ..GradCheckOptions::default()
        };
        let report = check_gradients(&params, &batch, true, &corrupted, opts).unwrap();
        assert!(!report.passed, "{report:?}");
    }

    #[test]
    fn zero_inputs_give_zero_first_layer_gradient() {
        let (cfg, _) = tiny();
        let dims = cfg.layer_dims(5, 4);
        let params = ModelParams::kaiming(&dims, 2).unwrap();
        let zeros: Vec<Example> = (0..4)
            .map(|i| Example {
                id: i,
                features: vec![0.0; 5],
                label: i as usize,
            })
            .collect();
        let batch: Vec<&Example> = zeros.iter().collect();
        let (_, grads) = forward_backward(&params, &batch, false).unwrap();
        assert!(grads.layer(0).0.iter().all(|&g| g == 0.0));
        let opts = GradCheckOptions {
            coordinates: params.len(),
            ..GradCheckOptions::default()
        };
        let report = check_gradients(&params, &batch, false, grads.as_slice(), opts).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
