use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const DEGENERATE_JITTER: f64 = 1e-12;

/// Signed residuals, one calibration sample per row and one output
/// coordinate per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix(DMatrix<f64>);

impl ResidualMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyCalibration);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore);
        }
        Ok(Self(values))
    }

    /// Builds the matrix from per-sample residual rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyCalibration);
        };
        let d = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.0.row(i).transpose()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Symmetric positive-definite covariance estimate with its Cholesky factor
/// and inverse cached.
#[derive(Debug, Clone)]
pub struct ShrunkCovariance {
    matrix: DMatrix<f64>,
    shrinkage: f64,
    degenerate: bool,
    chol_l: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl PartialEq for ShrunkCovariance {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
            && self.shrinkage == other.shrinkage
            && self.degenerate == other.degenerate
    }
}

impl ShrunkCovariance {
    /// Wraps an already-shrunk matrix, e.g. one read back from disk.
    pub fn from_parts(matrix: DMatrix<f64>, shrinkage: f64, degenerate: bool) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Shape(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !(0.0..=1.0).contains(&shrinkage) {
            return Err(Error::InvalidArgument(format!(
                "shrinkage intensity {shrinkage} outside [0, 1]"
            )));
        }
        let chol = matrix.clone().cholesky().ok_or_else(|| {
            Error::InvalidArgument("covariance matrix is not positive definite".into())
        })?;
        let inverse = chol.inverse();
        Ok(Self {
            chol_l: chol.l(),
            inverse,
            matrix,
            shrinkage,
            degenerate,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn shrinkage_intensity(&self) -> f64 {
        self.shrinkage
    }

    /// Set when jitter had to be added to obtain a positive-definite matrix.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn determinant(&self) -> f64 {
        self.chol_l.diagonal().iter().map(|l| l * l).product()
    }
}

/// Ledoit-Wolf shrinkage toward `mu * I`, with `mu = trace(S) / d`.
///
/// `S` is the centred empirical covariance with population normalisation.
/// The intensity follows the closed form of the 2004 estimator (the same
/// expression scikit-learn uses), clipped to `[0, 1]`.
pub fn ledoit_wolf(residuals: &ResidualMatrix) -> Result<ShrunkCovariance> {
    let x = residuals.values();
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance estimation needs at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let df = d as f64;
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }

    let s = centered.tr_mul(&centered) / nf;
    let trace = s.trace();
    let mu = trace / df;

    if s.iter().all(|v| *v == 0.0) {
        let matrix = DMatrix::identity(d, d) * DEGENERATE_JITTER;
        return ShrunkCovariance::from_parts(matrix, 1.0, true);
    }

    let sq = centered.map(|v| v * v);
    let beta_sum = sq.tr_mul(&sq).sum();
    let s_frob2 = s.norm_squared();
    let mut beta = (beta_sum / nf - s_frob2) / (df * nf);
    let delta = (s_frob2 - 2.0 * mu * trace + df * mu * mu) / df;
    beta = beta.min(delta);
    let shrinkage = if beta <= 0.0 || delta <= 0.0 {
        0.0
    } else {
        (beta / delta).clamp(0.0, 1.0)
    };

    let mut matrix = &s * (1.0 - shrinkage);
    for i in 0..d {
        matrix[(i, i)] += shrinkage * mu;
    }
    let matrix = (&matrix + matrix.transpose()) * 0.5;

    // A rank-deficient S with (near) zero intensity is only semi-definite.
    let floor = DEGENERATE_JITTER * mu;
    let min_eig = matrix.clone().symmetric_eigenvalues().min();
    if min_eig > floor {
        return ShrunkCovariance::from_parts(matrix, shrinkage, false);
    }
    let mut jitter = floor - min_eig.min(0.0);
    for _ in 0..16 {
        let candidate = &matrix + DMatrix::identity(d, d) * jitter;
        if candidate.clone().cholesky().is_some() {
            return ShrunkCovariance::from_parts(candidate, shrinkage, true);
        }
        jitter *= 10.0;
    }
    Err(Error::InvalidArgument(
        "could not regularise covariance to positive definite".into(),
    ))
}

/// Squared Mahalanobis distance `r^T cov^{-1} r`, evaluated through the
/// Cholesky factor so the result is non-negative and zero only for `r = 0`.
pub fn mahalanobis_sq(residual: &[f64], cov: &ShrunkCovariance) -> Result<f64> {
    if residual.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            got: residual.len(),
        });
    }
    let r = DVector::from_column_slice(residual);
    let y = cov
        .chol_l
        .solve_lower_triangular(&r)
        .expect("cholesky factor has a positive diagonal");
    Ok(y.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Brute-force Ledoit-Wolf straight from the defining sums:
    /// d^2 = ||S - mu I||^2 / p, bbar^2 = sum_k ||x_k x_k^T - S||^2 / (p n^2).
    fn brute_force_lw(x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, p) = x.shape();
        let mut mean = vec![0.0; p];
        for i in 0..n {
            for j in 0..p {
                mean[j] += x[(i, j)] / n as f64;
            }
        }
        let c: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..p).map(|j| x[(i, j)] - mean[j]).collect())
            .collect();
        let mut s = vec![vec![0.0; p]; p];
        for row in &c {
            for a in 0..p {
                for b in 0..p {
                    s[a][b] += row[a] * row[b] / n as f64;
                }
            }
        }
        let mu = (0..p).map(|a| s[a][a]).sum::<f64>() / p as f64;
        let mut d2 = 0.0;
        for a in 0..p {
            for b in 0..p {
                let t = if a == b { mu } else { 0.0 };
                d2 += (s[a][b] - t).powi(2);
            }
        }
        d2 /= p as f64;
        let mut b2bar = 0.0;
        for row in &c {
            for a in 0..p {
                for b in 0..p {
                    b2bar += (row[a] * row[b] - s[a][b]).powi(2);
                }
            }
        }
        b2bar /= p as f64 * (n as f64).powi(2);
        let b2 = b2bar.min(d2);
        let rho = if d2 > 0.0 { b2 / d2 } else { 0.0 };
        DMatrix::from_fn(p, p, |a, b| {
            (1.0 - rho) * s[a][b] + if a == b { rho * mu } else { 0.0 }
        })
    }

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, scales: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(n, scales.len(), |_, j| {
            let g: f64 = StandardNormal.sample(rng);
            scales[j] * g
        })
    }

    #[test]
    fn zero_residuals_give_jittered_identity() {
        let r = ResidualMatrix::new(DMatrix::zeros(5, 3)).unwrap();
        let cov = ledoit_wolf(&r).unwrap();
        assert!(cov.is_degenerate());
        assert_eq!(cov.matrix(), &(DMatrix::identity(3, 3) * 1e-12));
    }

    #[test]
    fn single_column_target_equals_sample_variance() {
        let r = ResidualMatrix::new(DMatrix::from_column_slice(2, 1, &[-1.0, 1.0])).unwrap();
        let cov = ledoit_wolf(&r).unwrap();
        assert_relative_eq!(cov.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn anisotropic_gaussian_matches_brute_force_within_ten_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gaussian(&mut rng, 200, &[2.0, 1.0, 1.0, 1.0]);
        let cov = ledoit_wolf(&ResidualMatrix::new(x.clone()).unwrap()).unwrap();
        let oracle = brute_force_lw(&x);
        for (a, b) in cov.matrix().iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 0.1 * oracle.diagonal().max());
        }
        assert!(cov.matrix()[(0, 0)] > 2.5);
    }

    #[test]
    fn matches_brute_force_exactly_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..10 {
            let n = 5 + 7 * k;
            let scales: Vec<f64> = (0..(2 + k % 5)).map(|j| 0.5 + j as f64).collect();
            let x = gaussian(&mut rng, n, &scales);
            let cov = ledoit_wolf(&ResidualMatrix::new(x.clone()).unwrap()).unwrap();
            let oracle = brute_force_lw(&x);
            assert!((cov.matrix() - oracle).amax() < 1e-10);
        }
    }

    #[test]
    fn fewer_than_two_rows_is_an_error() {
        let r = ResidualMatrix::new(DMatrix::from_element(1, 2, 1.0)).unwrap();
        assert!(ledoit_wolf(&r).is_err());
        assert!(ResidualMatrix::new(DMatrix::from_element(2, 2, f64::INFINITY)).is_err());
    }

    #[test]
    fn two_antipodal_rows_are_regularised() {
        // S has rank one and the optimal intensity is zero here.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -2.0]);
        let cov = ledoit_wolf(&ResidualMatrix::new(x).unwrap()).unwrap();
        assert!(cov.determinant() > 0.0);
    }

    #[test]
    fn mahalanobis_examples() {
        let eye = ShrunkCovariance::from_parts(DMatrix::identity(3, 3), 0.0, false).unwrap();
        assert_eq!(mahalanobis_sq(&[0.0, 0.0, 0.0], &eye).unwrap(), 0.0);
        assert_relative_eq!(
            mahalanobis_sq(&[1.0, 2.0, 3.0], &eye).unwrap(),
            14.0,
            epsilon = 1e-14
        );
        let diag = ShrunkCovariance::from_parts(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            0.0,
            false,
        )
        .unwrap();
        assert_relative_eq!(
            mahalanobis_sq(&[1.0, 1.0], &diag).unwrap(),
            2.5,
            epsilon = 1e-14
        );
        assert!(matches!(
            mahalanobis_sq(&[1.0], &diag),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 30, &[1.0, 3.0, 0.2]);
        let cov = ledoit_wolf(&ResidualMatrix::new(x).unwrap()).unwrap();
        let prod = cov.inverse() * cov.matrix();
        assert!((prod - DMatrix::<f64>::identity(3, 3)).amax() < 1e-8);
    }

    proptest! {
        #[test]
        fn output_is_symmetric_pd_with_valid_intensity(
            seed in 0u64..10_000,
            n in 2usize..40,
            d in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scales: Vec<f64> = (0..d).map(|j| 0.1 + j as f64).collect();
            let x = gaussian(&mut rng, n, &scales);
            let cov = ledoit_wolf(&ResidualMatrix::new(x).unwrap()).unwrap();
            let m = cov.matrix();
            prop_assert!((m - m.transpose()).amax() <= 1e-12 * m.amax());
            prop_assert!(m.clone().symmetric_eigenvalues().iter().all(|e| *e > 0.0));
            prop_assert!((0.0..=1.0).contains(&cov.shrinkage_intensity()));
        }

        #[test]
        fn mahalanobis_is_invariant_under_congruent_transforms(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian(&mut rng, 50, &[1.0, 2.0, 0.5]);
            let cov = ledoit_wolf(&ResidualMatrix::new(x).unwrap()).unwrap();
            let a = DMatrix::from_fn(3, 3, |i, j| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g + if i == j { 3.0 } else { 0.0 }
            });
            prop_assume!(a.determinant().abs() > 1e-3);
            let r = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let transformed_cov = &a * cov.matrix() * a.transpose();
            let transformed_cov = (&transformed_cov + transformed_cov.transpose()) * 0.5;
            let tcov = ShrunkCovariance::from_parts(transformed_cov, 0.0, false).unwrap();
            let ar = &a * &r;
            let base = mahalanobis_sq(r.as_slice(), &cov).unwrap();
            let moved = mahalanobis_sq(ar.as_slice(), &tcov).unwrap();
            prop_assert!((base - moved).abs() <= 1e-8 * base.max(1.0));
        }
    }
}
