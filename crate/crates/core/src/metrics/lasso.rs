//! Lasso by cyclic coordinate descent with k-fold cross-validated lambda.
//!
//! Minimizes `(1/2n) ||y - b0 - X b||² + lambda ||b||₁` with an unpenalized
//! intercept. Columns are standardized internally (population standard
//! deviation) and coefficients are reported on the original scale.

use serde::Serialize;

use crate::error::{Error, Result};

pub const COORDINATE_TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 1_000_000;
pub const GRID_SIZE: usize = 50;
pub const GRID_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoCv {
    pub fit: LassoFit,
    pub lambdas: Vec<f64>,
    /// Mean held-out squared error per lambda.
    pub cv_mse: Vec<f64>,
    pub folds: usize,
}

/// Standardized design: centered, unit-variance columns plus the centering
/// and scaling needed to map coefficients back.
struct Standardized {
    columns: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_centered: Vec<f64>,
    y_mean: f64,
}

impl Standardized {
    #[allow(clippy::needless_range_loop)]
    fn new(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> Self {
        let n = rows.len() as f64;
        let p = x[0].len();
        let y_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
        let mut columns = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        for j in 0..p {
            let raw: Vec<f64> = rows.iter().map(|&i| x[i][j]).collect();
            let m = raw.iter().sum::<f64>() / n;
            let var = raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let col = if sd > 0.0 {
                raw.iter().map(|v| (v - m) / sd).collect()
            } else {
                vec![0.0; rows.len()]
            };
            columns.push(col);
            means.push(m);
            scales.push(sd);
        }
        Self {
            columns,
            means,
            scales,
            y_centered: rows.iter().map(|&i| y[i] - y_mean).collect(),
            y_mean,
        }
    }

    fn lambda_max(&self) -> f64 {
        let n = self.y_centered.len() as f64;
        self.columns
            .iter()
            .map(|c| {
                (c.iter()
                    .zip(&self.y_centered)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / n)
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Coordinate descent from `beta` (standardized scale), in place.
    fn descend(&self, lambda: f64, beta: &mut [f64]) -> usize {
        let n = self.y_centered.len() as f64;
        let mut residual = self.y_centered.clone();
        for (col, &b) in self.columns.iter().zip(beta.iter()) {
            if b != 0.0 {
                for (r, z) in residual.iter_mut().zip(col) {
                    *r -= z * b;
                }
            }
        }
        for sweep in 1..=MAX_SWEEPS {
            let mut max_change = 0.0f64;
            for (j, col) in self.columns.iter().enumerate() {
                if self.scales[j] == 0.0 {
                    beta[j] = 0.0;
                    continue;
                }
                let rho = col.iter().zip(&residual).map(|(z, r)| z * r).sum::<f64>() / n + beta[j];
                let updated = soft_threshold(rho, lambda);
                let delta = updated - beta[j];
                if delta != 0.0 {
                    for (r, z) in residual.iter_mut().zip(col) {
                        *r -= z * delta;
                    }
                    beta[j] = updated;
                }
                max_change = max_change.max(delta.abs());
            }
            if max_change < COORDINATE_TOLERANCE {
                return sweep;
            }
        }
        log::warn!("lasso did not converge in {MAX_SWEEPS} sweeps at lambda {lambda}");
        MAX_SWEEPS
    }

    fn to_original(&self, beta: &[f64], lambda: f64, sweeps: usize) -> LassoFit {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean
            - coefficients
                .iter()
                .zip(&self.means)
                .map(|(b, m)| b * m)
                .sum::<f64>();
        LassoFit {
            intercept,
            coefficients,
            lambda,
            sweeps,
        }
    }
}

pub fn soft_threshold(value: f64, lambda: f64) -> f64 {
    if value > lambda {
        value - lambda
    } else if value < -lambda {
        value + lambda
    } else {
        0.0
    }
}

fn check_design(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("lasso needs at least two rows"));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::Shape(
            "design rows must share a positive width".into(),
        ));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input".into()));
    }
    Ok(())
}

/// Lasso at a single lambda on all rows.
pub fn lasso_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoFit> {
    check_design(x, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let rows: Vec<usize> = (0..x.len()).collect();
    let std = Standardized::new(x, y, &rows);
    let mut beta = vec![0.0; x[0].len()];
    let sweeps = std.descend(lambda, &mut beta);
    Ok(std.to_original(&beta, lambda, sweeps))
}

/// `GRID_SIZE` log-spaced values from `lambda_max` down to
/// `GRID_RATIO * lambda_max`, where `lambda_max = max|Xᵀy| / n` on the
/// standardized design. Empty when `y` is constant.
pub fn default_lambda_grid(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    check_design(x, y)?;
    let rows: Vec<usize> = (0..x.len()).collect();
    let lmax = Standardized::new(x, y, &rows).lambda_max();
    if lmax <= 0.0 {
        return Ok(Vec::new());
    }
    let (hi, lo) = (lmax.ln(), (lmax * GRID_RATIO).ln());
    Ok((0..GRID_SIZE)
        .map(|i| (hi + (lo - hi) * i as f64 / (GRID_SIZE - 1) as f64).exp())
        .collect())
}

/// Contiguous fold boundaries, as evenly sized as possible.
fn fold_ranges(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds)
        .map(|f| (f * n / folds, (f + 1) * n / folds))
        .collect()
}

/// Choose lambda by minimum mean k-fold held-out squared error (ties go to
/// the larger lambda), then refit on all rows. `folds` is capped at `n`.
/// Without an explicit grid the default path is used, extended by a final
/// unpenalized point so exactly linear data is fitted exactly.
pub fn lasso_cv(
    x: &[Vec<f64>],
    y: &[f64],
    lambda_grid: Option<&[f64]>,
    folds: usize,
) -> Result<LassoCv> {
    check_design(x, y)?;
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    let n = x.len();
    let folds = folds.min(n);
    let mut lambdas: Vec<f64> = match lambda_grid {
        Some(grid) => grid.to_vec(),
        None => {
            let mut grid = default_lambda_grid(x, y)?;
            grid.push(0.0);
            grid
        }
    };
    if lambdas.is_empty() {
        // constant target: every lambda gives the intercept-only model
        lambdas.push(0.0);
    }
    if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid("lambda grid must be non-negative"));
    }
    lambdas.sort_by(|a, b| b.total_cmp(a));

    let mut sq_err = vec![0.0; lambdas.len()];
    for (start, end) in fold_ranges(n, folds) {
        let train_rows: Vec<usize> = (0..n).filter(|i| *i < start || *i >= end).collect();
        let std = Standardized::new(x, y, &train_rows);
        let mut beta = vec![0.0; x[0].len()];
        for (k, &lambda) in lambdas.iter().enumerate() {
            let sweeps = std.descend(lambda, &mut beta);
            let fit = std.to_original(&beta, lambda, sweeps);
            sq_err[k] += (start..end)
                .map(|i| (y[i] - fit.predict(&x[i])).powi(2))
                .sum::<f64>();
        }
    }
    let cv_mse: Vec<f64> = sq_err.iter().map(|e| e / n as f64).collect();
    let best = cv_mse
        .iter()
        .enumerate()
        .fold(0, |best, (k, &e)| if e < cv_mse[best] { k } else { best });

    let rows: Vec<usize> = (0..n).collect();
    let std = Standardized::new(x, y, &rows);
    let mut beta = vec![0.0; x[0].len()];
    // warm start down the path to the chosen lambda
    let mut sweeps = 0;
    for &lambda in &lambdas[..=best] {
        sweeps = std.descend(lambda, &mut beta);
    }
    let fit = std.to_original(&beta, lambdas[best], sweeps);
    Ok(LassoCv {
        fit,
        lambdas,
        cv_mse,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_target() {
        let x = vec![
            vec![1.0, 2.0],
            vec![2.0, 0.5],
            vec![3.0, 1.0],
            vec![4.0, 7.0],
        ];
        let y = vec![2.5; 4];
        let cv = lasso_cv(&x, &y, None, 5).unwrap();
        assert_eq!(cv.fit.coefficients, vec![0.0, 0.0]);
        assert_relative_eq!(cv.fit.intercept, 2.5);
        assert_eq!(cv.folds, 4);
    }

    #[test]
    fn perfect_line_small_lambda() {
        // One standardized feature: b_std = S(cov, lambda), so b = 2 - lambda / sd.
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let lambda = 1e-3;
        let fit = lasso_fit(&x, &y, lambda).unwrap();
        let sd = (99.0f64 / 12.0).sqrt(); // population sd of 0..9
        assert_relative_eq!(fit.coefficients[0], 2.0 - lambda / sd, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn large_lambda_zeroes_everything() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| 1.0 + 0.5 * i as f64).collect();
        let grid = default_lambda_grid(&x, &y).unwrap();
        assert_eq!(grid.len(), GRID_SIZE);
        assert_relative_eq!(grid[GRID_SIZE - 1] / grid[0], GRID_RATIO, epsilon = 1e-12);
        let fit = lasso_fit(&x, &y, grid[0]).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0), "{fit:?}");
        let fit = lasso_fit(&x, &y, grid[1]).unwrap();
        assert!(fit.coefficients.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn cv_prefers_small_lambda_on_clean_linear_data() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 1.0).collect();
        let cv = lasso_cv(&x, &y, None, 5).unwrap();
        assert_eq!(cv.cv_mse.len(), GRID_SIZE + 1);
        assert_relative_eq!(cv.fit.coefficients[0], 3.0, epsilon = 1e-2);
        assert_relative_eq!(cv.fit.coefficients[1], -2.0, epsilon = 1e-2);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(lasso_fit(&[vec![1.0]], &[1.0], 0.0).is_err());
        assert!(lasso_fit(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0], 0.0).is_err());
        assert!(lasso_fit(&[vec![1.0], vec![2.0]], &[1.0], 0.0).is_err());
        assert!(lasso_cv(&[vec![1.0], vec![2.0]], &[1.0, 2.0], None, 1).is_err());
        assert!(lasso_fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], -1.0).is_err());
    }
}
