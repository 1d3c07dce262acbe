use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Rank-truncated SVD of mean-centred snapshot data.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    /// Orthonormal columns spanning the leading left singular subspace.
    pub basis: DMatrix<f64>,
    /// All singular values of the centred data, descending.
    pub singular_values: Vec<f64>,
    /// Per-feature mean that was subtracted before decomposition.
    pub mean: DVector<f64>,
}

/// Decomposes `data`, which holds one snapshot per column, after removing
/// the mean snapshot. Basis vector signs are fixed so that the entry of
/// largest magnitude is positive, which makes the result deterministic.
pub fn truncated_svd(data: &DMatrix<f64>, rank: usize) -> Result<TruncatedSvd> {
    let (rows, cols) = data.shape();
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} must be in 1..={} for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("snapshot data contains non-finite values".into()));
    }
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }

    let svd = centered.svd(true, false);
    let u = svd.u.expect("left singular vectors were requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut basis = DMatrix::zeros(rows, rank);
    for (k, &i) in order.iter().take(rank).enumerate() {
        let mut v = u.column(i).clone_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(k, &v);
    }
    Ok(TruncatedSvd {
        basis,
        singular_values,
        mean,
    })
}

impl TruncatedSvd {
    /// Projects snapshots (columns) onto the basis and maps them back.
    pub fn reconstruct(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        let coeffs = self.basis.tr_mul(&centered);
        let mut out = &self.basis * coeffs;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}
