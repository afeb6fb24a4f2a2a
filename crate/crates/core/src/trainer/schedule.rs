use crate::error::{Error, Result};

pub const PCT_START: f64 = 0.25;
pub const DIV: f64 = 25.0;
pub const FINAL_DIV: f64 = 1e4;

fn cosine(from: f64, to: f64, progress: f64) -> f64 {
    to + (from - to) * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
}

/// One-cycle learning rate: cosine warmup from `lr_max / 25` to `lr_max`
/// over the first quarter of the steps, then cosine anneal down to
/// `lr_max / 1e4` at the final step.
pub fn one_cycle_lr(step: usize, total_steps: usize, lr_max: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::invalid("one-cycle schedule needs at least one step"));
    }
    if step >= total_steps {
        return Err(Error::invalid(format!(
            "step {step} outside schedule of {total_steps} steps"
        )));
    }
    let start = lr_max / DIV;
    let end = lr_max / FINAL_DIV;
    let peak = ((PCT_START * total_steps as f64).round() as usize).min(total_steps - 1);
    if step <= peak {
        if peak == 0 {
            return Ok(start);
        }
        Ok(cosine(start, lr_max, step as f64 / peak as f64))
    } else {
        let down = (total_steps - 1 - peak) as f64;
        Ok(cosine(lr_max, end, (step - peak) as f64 / down))
    }
}
