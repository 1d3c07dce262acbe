use nalgebra::DMatrix;

use crate::numerics::conformal_quantile_sorted;
use crate::{Error, Result};

/// Per-timestep, per-coordinate tailwise offsets: the prediction set for a
/// prediction `p` is `[p + lower, p + upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBand {
    /// `n_steps x n_coords`.
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub alpha: f64,
    pub n_calibration: usize,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

/// Calibrates each timestep and coordinate independently: the lower offset
/// is the conformal quantile of the signed residuals at `alpha / 2`, the
/// upper offset the one at `1 - alpha / 2`.
pub fn calibrate_band(residuals: &[DMatrix<f64>], alpha: f64) -> Result<CalibrationBand> {
    check_alpha(alpha)?;
    let Some(first) = residuals.first() else {
        return Err(Error::EmptyCalibration);
    };
    let (n, d) = first.shape();
    if n == 0 {
        return Err(Error::EmptyCalibration);
    }
    let steps = residuals.len();
    let mut lower = DMatrix::zeros(steps, d);
    let mut upper = DMatrix::zeros(steps, d);
    let mut col = vec![0.0; n];
    for (t, r) in residuals.iter().enumerate() {
        if r.shape() != (n, d) {
            return Err(Error::Shape(format!(
                "timestep {t} has {}x{} residuals, expected {n}x{d}",
                r.nrows(),
                r.ncols()
            )));
        }
        for j in 0..d {
            col.copy_from_slice(r.column(j).as_slice());
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteScore);
            }
            col.sort_by(f64::total_cmp);
            lower[(t, j)] = conformal_quantile_sorted(&col, alpha / 2.0);
            upper[(t, j)] = conformal_quantile_sorted(&col, 1.0 - alpha / 2.0);
        }
    }
    Ok(CalibrationBand {
        lower,
        upper,
        alpha,
        n_calibration: n,
    })
}

impl CalibrationBand {
    pub fn n_steps(&self) -> usize {
        self.lower.nrows()
    }

    pub fn n_coords(&self) -> usize {
        self.lower.ncols()
    }

    /// Per-coordinate membership of a signed residual at timestep `t`
    /// (closed interval).
    pub fn contains_residual(&self, t: usize, residual: &[f64]) -> Result<Vec<bool>> {
        if t >= self.n_steps() {
            return Err(Error::InvalidArgument(format!("timestep {t} outside the band")));
        }
        if residual.len() != self.n_coords() {
            return Err(Error::DimensionMismatch {
                expected: self.n_coords(),
                got: residual.len(),
            });
        }
        Ok(residual
            .iter()
            .enumerate()
            .map(|(j, r)| self.lower[(t, j)] <= *r && *r <= self.upper[(t, j)])
            .collect())
    }

    /// Per-coordinate membership of `truth` in the band around `prediction`.
    pub fn contains(&self, prediction: &[f64], truth: &[f64], t: usize) -> Result<Vec<bool>> {
        if prediction.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: prediction.len(),
                got: truth.len(),
            });
        }
        let r: Vec<f64> = truth.iter().zip(prediction).map(|(y, p)| y - p).collect();
        self.contains_residual(t, &r)
    }
}
