use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(Error::invalid(format!(
            "need at least {min_len} values, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("statistic input".into()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant input to correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Population z-score: mean 0, standard deviation 1.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::invalid("z-score needs at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("z-score input".into()));
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    if var <= 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

/// Regression of `target` on `proxy` through the origin: returns
/// `(beta, r2)` with `beta = Σxy / Σx²` and `r2 = 1 - Σ(y - βx)² / Σy²`.
/// Inputs are expected to be z-scored, in which case `r2` is the squared
/// Pearson correlation.
pub fn r2_no_intercept(proxy: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    check_pair(proxy, target, 3)?;
    let sxy: f64 = proxy.iter().zip(target).map(|(x, y)| x * y).sum();
    let sxx: f64 = proxy.iter().map(|x| x * x).sum();
    let syy: f64 = target.iter().map(|y| y * y).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("all-zero regression input".into()));
    }
    let beta = sxy / sxx;
    let sse: f64 = proxy
        .iter()
        .zip(target)
        .map(|(x, y)| (y - beta * x).powi(2))
        .sum();
    Ok((beta, 1.0 - sse / syy))
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}
