use nalgebra::DMatrix;

use super::band::check_alpha;
use crate::numerics::{conformal_quantile, ledoit_wolf, mahalanobis_sq, ResidualMatrix, ShrunkCovariance};
use crate::{Error, Result};

/// Ellipsoid `{r : r^T cov^-1 r <= threshold}` for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidStep {
    pub cov: ShrunkCovariance,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEllipsoid {
    pub steps: Vec<EllipsoidStep>,
    pub alpha: f64,
    pub n_calibration: usize,
}

/// Rows sorted lexicographically so that the covariance estimate, and hence
/// the whole calibration, does not depend on sample order.
fn canonical_rows(r: &DMatrix<f64>) -> DMatrix<f64> {
    let mut rows: Vec<Vec<f64>> = r.row_iter().map(|x| x.iter().copied().collect()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| rows[i][j])
}

/// Calibrates one ellipsoid per timestep: Ledoit-Wolf covariance of that
/// timestep's residuals and the conformal `(1 - alpha)` quantile of their
/// squared Mahalanobis scores.
pub fn calibrate_ellipsoid(residuals: &[DMatrix<f64>], alpha: f64) -> Result<CalibrationEllipsoid> {
    check_alpha(alpha)?;
    let Some(first) = residuals.first() else {
        return Err(Error::EmptyCalibration);
    };
    let n = first.nrows();
    if n == 0 {
        return Err(Error::EmptyCalibration);
    }
    if n < 2 {
        return Err(Error::InvalidArgument("ellipsoid calibration needs at least 2 samples".into()));
    }
    let steps = residuals
        .iter()
        .map(|r| {
            if r.shape() != first.shape() {
                return Err(Error::Shape("residual matrices differ in shape across timesteps".into()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteScore);
            }
            let sorted = canonical_rows(r);
            let cov = ledoit_wolf(&ResidualMatrix::new(sorted.clone())?)?;
            let scores = sorted
                .row_iter()
                .map(|row| mahalanobis_sq(row.transpose().as_slice(), &cov))
                .collect::<Result<Vec<_>>>()?;
            let threshold = conformal_quantile(&scores, 1.0 - alpha)?;
            Ok(EllipsoidStep { cov, threshold })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationEllipsoid {
        steps,
        alpha,
        n_calibration: n,
    })
}

impl CalibrationEllipsoid {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.cov.dim())
    }

    /// Closed-set membership of a latent residual at timestep `t`.
    pub fn contains_residual(&self, t: usize, residual: &[f64]) -> Result<bool> {
        let step = self
            .steps
            .get(t)
            .ok_or_else(|| Error::InvalidArgument(format!("timestep {t} outside the calibration")))?;
        Ok(mahalanobis_sq(residual, &step.cov)? <= step.threshold)
    }

    pub fn contains(&self, prediction: &[f64], truth: &[f64], t: usize) -> Result<bool> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_residuals_give_zero_threshold_and_flag() {
        let e = calibrate_ellipsoid(&[DMatrix::zeros(10, 4)], 0.1).unwrap();
        assert_eq!(e.steps[0].threshold, 0.0);
        assert!(e.steps[0].cov.is_degenerate());
        assert!(e.contains_residual(0, &[0.0; 4]).unwrap());
        assert!(!e.contains_residual(0, &[1e-3, 0.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn isotropic_threshold_near_chi_squared_quantile() {
        let q = ChiSquared::new(4.0).unwrap().inverse_cdf(0.9);
        for seed in 0..20 {
            let e = calibrate_ellipsoid(&[gaussian(500, 4, seed)], 0.1).unwrap();
            let rel = (e.steps[0].threshold - q).abs() / q;
            assert!(rel < 0.1, "seed {seed}: {} vs {q}", e.steps[0].threshold);
        }
    }

    #[test]
    fn threshold_is_a_realised_score() {
        let r = gaussian(50, 3, 1);
        let e = calibrate_ellipsoid(&[r.clone()], 0.2).unwrap();
        let cov = &e.steps[0].cov;
        let hit = r
            .row_iter()
            .any(|row| mahalanobis_sq(row.transpose().as_slice(), cov).unwrap() == e.steps[0].threshold);
        assert!(hit);
    }

    #[test]
    fn calibration_recount_meets_nominal() {
        for (n, alpha) in [(30, 0.1), (57, 0.05), (120, 0.02), (99, 0.01)] {
            let r = gaussian(n, 4, n as u64);
            let e = calibrate_ellipsoid(&[r.clone()], alpha).unwrap();
            let inside = r
                .row_iter()
                .filter(|row| e.contains_residual(0, row.transpose().as_slice()).unwrap())
                .count();
            assert!(inside as f64 >= (1.0 - alpha) * n as f64);
        }
    }

    #[test]
    fn containment_is_invariant_under_common_scaling() {
        let r = gaussian(2000, 4, 3);
        let test = gaussian(300, 4, 4);
        let a = calibrate_ellipsoid(&[r.clone()], 0.1).unwrap();
        let c = 7.5;
        let b = calibrate_ellipsoid(&[&r * c], 0.1).unwrap();
        assert!((a.steps[0].threshold - b.steps[0].threshold).abs() < 1e-6 * a.steps[0].threshold);
        for row in test.row_iter() {
            let v: Vec<f64> = row.iter().copied().collect();
            let vs: Vec<f64> = v.iter().map(|x| x * c).collect();
            assert_eq!(a.contains_residual(0, &v).unwrap(), b.contains_residual(0, &vs).unwrap());
        }
    }

    #[test]
    fn single_sample_is_rejected() {
        assert!(calibrate_ellipsoid(&[DMatrix::zeros(1, 2)], 0.1).is_err());
        assert!(matches!(calibrate_ellipsoid(&[], 0.1), Err(Error::EmptyCalibration)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn threshold_non_increasing_in_alpha(seed in 0u64..500, a1 in 0.01f64..0.5, a2 in 0.01f64..0.5) {
            let r = gaussian(40, 3, seed);
            let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            let e_lo = calibrate_ellipsoid(&[r.clone()], lo).unwrap();
            let e_hi = calibrate_ellipsoid(&[r], hi).unwrap();
            prop_assert!(e_lo.steps[0].threshold >= e_hi.steps[0].threshold);
        }

        #[test]
        fn permutation_leaves_calibration_bitwise_unchanged(seed in 0u64..500) {
            let r = gaussian(35, 4, seed);
            let mut order: Vec<usize> = (0..35).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
            let p = DMatrix::from_fn(35, 4, |i, j| r[(order[i], j)]);
            let a = calibrate_ellipsoid(&[r], 0.1).unwrap();
            let b = calibrate_ellipsoid(&[p], 0.1).unwrap();
            prop_assert_eq!(a.steps[0].threshold.to_bits(), b.steps[0].threshold.to_bits());
            prop_assert_eq!(a.steps[0].cov.matrix(), b.steps[0].cov.matrix());
        }
    }
}
