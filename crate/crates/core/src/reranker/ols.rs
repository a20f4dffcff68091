//! Ordinary least squares with an unpenalized intercept.
//!
//! The design matrix is centered so the intercept absorbs the means, then
//! the slope is the minimum-norm least-squares solution taken from an SVD of
//! the centered matrix. This stays well defined when there are more features
//! than rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: Vec<f64>,
}

impl OlsFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.slope.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Fits `y ≈ b + X w`. With `ridge > 0` the slope minimizes
/// `|Xc w - yc|² + ridge |w|²` instead.
pub fn fit(rows: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<OlsFit> {
    if rows.len() != y.len() {
        return Err(Error::Dimension { expected: rows.len(), actual: y.len() });
    }
    if rows.len() < 2 {
        return Err(Error::Validation(format!("least squares needs at least 2 rows, got {}", rows.len())));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge {ridge} must be finite and non-negative")));
    }
    let p = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != p) {
        return Err(Error::Dimension { expected: p, actual: bad.len() });
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in regression data".into()));
    }
    let n = rows.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(OlsFit { intercept: y_mean, slope: Vec::new() });
    }

    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let col_means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - col_means[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);

    let svd = xc.svd(true, true);
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Validation("SVD did not converge".into())),
    };
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let tol = n.max(p) as f64 * sigma_max * f64::EPSILON;

    // w = V diag(s / (s² + ridge)) Uᵀ yc, dropping singular values under tol
    let uty = u.transpose() * &yc;
    let scaled = DVector::from_fn(sigma.len(), |k, _| {
        let s = sigma[k];
        if s <= tol {
            0.0
        } else {
            uty[k] * s / (s * s + ridge)
        }
    });
    let w = v_t.transpose() * scaled;
    let slope: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - slope.iter().zip(&col_means).map(|(a, b)| a * b).sum::<f64>();
    Ok(OlsFit { intercept, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.7 - 2.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 + 3.0 * r[0]).collect();
        let fit = fit(&rows, &y, 0.0).unwrap();
        for (r, t) in rows.iter().zip(&y) {
            assert!((fit.predict(r) - t).abs() < 1e-8);
        }
        assert!((fit.predict(&[1.0]) - 5.0).abs() < 1e-8);
    }

    #[test]
    fn constant_target_predicts_constant() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
        let fit = fit(&rows, &[4.0; 6], 0.0).unwrap();
        assert!((fit.predict(&[100.0, -3.0, 7.0]) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn duplicate_columns_split_weight_evenly() {
        // min-norm: y = 2x with x duplicated gives w = (1, 1)
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64).collect();
        let fit = fit(&rows, &y, 0.0).unwrap();
        assert!((fit.slope[0] - 1.0).abs() < 1e-10);
        assert!((fit.slope[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(fit(&[vec![1.0]], &[1.0], 0.0).is_err());
        assert!(fit(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0], 0.0).is_err());
        assert!(fit(&[vec![1.0], vec![2.0]], &[1.0], 0.0).is_err());
    }

    #[test]
    fn ridge_shrinks() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64).collect();
        let plain = fit(&rows, &y, 0.0).unwrap();
        let shrunk = fit(&rows, &y, 100.0).unwrap();
        assert!(shrunk.slope[0].abs() < plain.slope[0].abs());
    }
}
