//! Newey-West long-run covariance with Bartlett weights.
//!
//! ```text
//! S = Gamma_0 + sum_{j=1..bw} (1 - j/(bw+1)) (Gamma_j + Gamma_j')
//! Gamma_j = (1/T) sum_{t>j} (g_t - g_bar)(g_{t-j} - g_bar)'
//! ```

use nalgebra::DMatrix;

use crate::error::{IcpcError, Result};

/// Long-run covariance of the rows of `moments` (T x L).
pub fn newey_west(moments: &DMatrix<f64>, bandwidth: usize) -> Result<DMatrix<f64>> {
    let t = moments.nrows();
    if t == 0 {
        return Err(IcpcError::InsufficientSample("no moment rows".into()));
    }
    if bandwidth >= t {
        return Err(IcpcError::invalid(
            "bandwidth",
            format!("{bandwidth} must be smaller than T = {t}"),
        ));
    }
    let means = moments.row_mean();
    let mut centered = moments.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let tf = t as f64;
    let mut s = centered.transpose() * &centered / tf;
    for j in 1..=bandwidth {
        let lead = centered.rows(j, t - j);
        let lag = centered.rows(0, t - j);
        let gamma = lead.transpose() * lag / tf;
        let w = 1.0 - j as f64 / (bandwidth as f64 + 1.0);
        s += (&gamma + gamma.transpose()) * w;
    }
    Ok(crate::stats::symmetrize(&s))
}
