use crate::error::{Error, Result};

/// Probability placed on the labeled class when smoothing is on.
pub const SMOOTHED_TARGET: f64 = 0.9;

/// Target distribution: one-hot, or 0.9 on `label` with the remaining 0.1
/// spread evenly over the other classes.
pub fn target_distribution(class_count: usize, label: usize, smoothing: bool) -> Vec<f64> {
    if smoothing && class_count > 1 {
        let off = (1.0 - SMOOTHED_TARGET) / (class_count - 1) as f64;
        let mut t = vec![off; class_count];
        t[label] = SMOOTHED_TARGET;
        t
    } else {
        let mut t = vec![0.0; class_count];
        t[label] = 1.0;
        t
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Softmax cross entropy against the (optionally smoothed) target. Returns
/// the loss and its gradient with respect to the logits.
pub fn smoothed_cross_entropy(
    logits: &[f64],
    label: usize,
    smoothing: bool,
) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let target = target_distribution(logits.len(), label, smoothing);
    let log_p = log_softmax(logits);
    let loss = -target
        .iter()
        .zip(&log_p)
        .map(|(t, lp)| if *t == 0.0 { 0.0 } else { t * lp })
        .sum::<f64>();
    let grad = log_p
        .iter()
        .zip(&target)
        .map(|(lp, t)| lp.exp() - t)
        .collect();
    Ok((loss.max(0.0), grad))
}
