use nalgebra::{DMatrix, DVector};

use crate::numerics::truncated_svd;
use crate::{Error, Result};

/// Tolerance on the row sum accepted by encoders.
pub const ROW_SUM_TOL: f64 = 1e-6;

pub(crate) fn check_normalized(row: &[f64], n_bins: usize) -> Result<()> {
    if row.len() != n_bins {
        return Err(Error::DimensionMismatch {
            expected: n_bins,
            got: row.len(),
        });
    }
    let s: f64 = row.iter().sum();
    if !((s - 1.0).abs() <= ROW_SUM_TOL) {
        return Err(Error::InvalidArgument(format!(
            "input row is not normalised (sum = {s})"
        )));
    }
    Ok(())
}

/// Clips negative entries and rescales to unit sum. An all-zero row maps to
/// the uniform distribution.
pub(crate) fn project_to_simplex(mut v: DVector<f64>) -> DVector<f64> {
    v.apply(|x| *x = x.max(0.0));
    let s = v.sum();
    if s > 0.0 && s.is_finite() {
        v / s
    } else {
        let n = v.len();
        DVector::from_element(n, 1.0 / n as f64)
    }
}

/// Linear encoder/decoder from the leading POD modes of training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PodCodec {
    pub mean: DVector<f64>,
    /// `n_bins x rank`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// All singular values of the centred training snapshots.
    pub singular_values: Vec<f64>,
}

impl PodCodec {
    /// Fits the codec to `snapshots`, one normalised row per snapshot.
    pub fn fit(snapshots: &DMatrix<f64>, rank: usize) -> Result<Self> {
        let svd = truncated_svd(&snapshots.transpose(), rank)?;
        let (lead, last) = (svd.singular_values[0], svd.singular_values[rank - 1]);
        if !(last > 1e-10 * lead) {
            return Err(Error::RankDeficient(format!(
                "snapshots span fewer than {rank} directions (singular value {last:.3e} vs {lead:.3e})"
            )));
        }
        Ok(Self {
            mean: svd.mean,
            basis: svd.basis,
            singular_values: svd.singular_values,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Projection of the mean-centred row onto the basis.
    pub fn encode(&self, row: &[f64]) -> Result<DVector<f64>> {
        check_normalized(row, self.n_bins())?;
        Ok(self.encode_unchecked(&DVector::from_column_slice(row)))
    }

    pub(crate) fn encode_unchecked(&self, row: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(&(row - &self.mean))
    }

    /// `mean + basis * coords` before projection onto the simplex.
    pub fn decode_linear(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        if coords.len() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                got: coords.len(),
            });
        }
        Ok(&self.mean + &self.basis * coords)
    }

    /// Reconstruction clipped to non-negative values and renormalised.
    pub fn decode(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(project_to_simplex(self.decode_linear(coords)?))
    }
}
