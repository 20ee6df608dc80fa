//! Small numeric helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{IcpcError, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by n).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (divides by n - 1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Automatic Newey-West lag truncation `floor(4 * (T/100)^(2/9))`.
pub fn auto_bandwidth(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    Some(symmetrize(&inv))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Ordinary least squares fit `y = X b + e`.
#[derive(Debug, Clone)]
pub(crate) struct OlsFit {
    pub coef: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
}

pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    if x.nrows() != y.len() {
        return Err(IcpcError::Misaligned(format!(
            "{} design rows vs {} responses",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < x.ncols() {
        return Err(IcpcError::InsufficientSample(format!(
            "{} observations for {} coefficients",
            x.nrows(),
            x.ncols()
        )));
    }
    let xtx = x.transpose() * x;
    let xtx_inv = spd_inverse(&xtx)
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| IcpcError::RankDeficient("X'X is not positive definite".into()))?;
    let coef = &xtx_inv * (x.transpose() * y);
    let residuals = y - x * &coef;
    Ok(OlsFit {
        coef,
        xtx_inv,
        residuals,
    })
}

/// OLS of `y` on a constant and `x`, returning (intercept, slope, r2,
/// intercept se, slope se) with classical standard errors.
pub(crate) fn simple_regression(x: &[f64], y: &[f64]) -> Result<SimpleFit> {
    let n = x.len();
    if n != y.len() {
        return Err(IcpcError::Misaligned(format!("{n} x values vs {} y values", y.len())));
    }
    if n < 3 {
        return Err(IcpcError::InsufficientSample(format!("{n} points, need at least 3")));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(IcpcError::Degenerate("regressor has no variation".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - intercept - slope * a)
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let r2 = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    let s2 = ssr / (n as f64 - 2.0);
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt();
    Ok(SimpleFit {
        intercept,
        slope,
        r2,
        intercept_se,
        slope_se,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct SimpleFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_rule() {
        assert_eq!(auto_bandwidth(100), 4);
        assert_eq!(auto_bandwidth(52), 3);
        assert_eq!(auto_bandwidth(5000), 9);
    }

    #[test]
    fn simple_regression_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let fit = simple_regression(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 0.5).abs() < 1e-14);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn ols_flags_collinear_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ols(&x, &y), Err(IcpcError::RankDeficient(_))));
    }
}
