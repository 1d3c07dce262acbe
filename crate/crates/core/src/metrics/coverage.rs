use nalgebra::DMatrix;

use crate::conformal::{compute_residuals, Calibration, CpMethod, Residuals, UqTarget};
use crate::dataset::NormalizedDsdTrajectory;
use crate::rom::RomModel;
use crate::{Error, Result};

/// Empirical coverage per (timestep, cell) on a test set, where a cell is a
/// bin for bands and the whole latent state for ellipsoids.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub method: CpMethod,
    pub target: UqTarget,
    pub alpha: f64,
    /// Physical time of each row of `cells`.
    pub times: Vec<f64>,
    /// `n_steps x n_cells` fractions in `[0, 1]`.
    pub cells: DMatrix<f64>,
    pub n_test: usize,
    pub n_excluded: usize,
}

/// Mean, population standard deviation and median over all cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

pub fn summarize(values: &[f64]) -> CoverageSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    CoverageSummary {
        mean,
        std: var.sqrt(),
        median,
    }
}

impl CoverageReport {
    pub fn nominal(&self) -> f64 {
        1.0 - self.alpha
    }

    /// Summary statistics recomputed from the cell table.
    pub fn summary(&self) -> CoverageSummary {
        summarize(self.cells.as_slice())
    }

    pub fn min_cell(&self) -> f64 {
        self.cells.min()
    }
}

/// Coverage of precomputed test residuals.
pub fn coverage_from_residuals(cal: &Calibration, residuals: &Residuals) -> Result<CoverageReport> {
    if residuals.target != cal.target {
        return Err(Error::InvalidArgument(format!(
            "residuals are for {} but the calibration is for {}",
            residuals.target, cal.target
        )));
    }
    let n = residuals.n_samples();
    if n == 0 {
        return Err(Error::InvalidArgument("no test samples to evaluate".into()));
    }
    if residuals.n_steps() != cal.n_steps() || residuals.n_coords() != cal.n_coords() {
        return Err(Error::Shape(format!(
            "test residuals are {}x{} per sample, calibration expects {}x{}",
            residuals.n_steps(),
            residuals.n_coords(),
            cal.n_steps(),
            cal.n_coords()
        )));
    }
    let mut cells = DMatrix::zeros(cal.n_steps(), cal.n_cells());
    let mut buf = vec![0.0; cal.n_coords()];
    for (t, r) in residuals.per_step.iter().enumerate() {
        for i in 0..n {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = r[(i, j)];
            }
            for (c, inside) in cal.contains_residual(t, &buf)?.into_iter().enumerate() {
                if inside {
                    cells[(t, c)] += 1.0;
                }
            }
        }
    }
    cells /= n as f64;
    Ok(CoverageReport {
        method: cal.method,
        target: cal.target,
        alpha: cal.alpha,
        times: cal.time_grid.times(),
        cells,
        n_test: n,
        n_excluded: residuals.excluded.len(),
    })
}

/// Evaluates `cal` on the test trajectories at `test_indices`.
///
/// Refuses test samples that were also used for calibration unless
/// `allow_calibration_overlap` is set, which is only meaningful for
/// recounting coverage on the calibration data itself.
pub fn empirical_coverage(
    cal: &Calibration,
    model: &RomModel,
    data: &[NormalizedDsdTrajectory],
    test_indices: &[usize],
    allow_calibration_overlap: bool,
) -> Result<CoverageReport> {
    if test_indices.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if !allow_calibration_overlap {
        let mut cal_idx = cal.calibration_indices.clone();
        cal_idx.extend(&cal.excluded);
        cal_idx.sort_unstable();
        if let Some(i) = test_indices.iter().find(|i| cal_idx.binary_search(i).is_ok()) {
            return Err(Error::InvalidArgument(format!(
                "test sample {i} was used for calibration"
            )));
        }
    }
    let residuals = compute_residuals(model, data, cal.target, test_indices)?;
    coverage_from_residuals(cal, &residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::calibrate;
    use crate::dataset::TimeGrid;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(target: UqTarget, n: usize, d: usize, steps: usize, seed: u64) -> Residuals {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Residuals {
            target,
            per_step: (0..steps)
                .map(|_| DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng)))
                .collect(),
            samples: (0..n).collect(),
            excluded: vec![],
        }
    }

    #[test]
    fn summary_statistics_by_hand() {
        let s = summarize(&[0.8, 1.0, 0.9, 0.7]);
        assert!((s.mean - 0.85).abs() < 1e-15);
        assert!((s.std - 0.0125f64.sqrt()).abs() < 1e-15);
        assert!((s.median - 0.85).abs() < 1e-15);
        assert_eq!(summarize(&[0.3, 0.1, 0.2]).median, 0.2);
    }

    #[test]
    fn zero_residuals_are_fully_covered() {
        let grid = TimeGrid::new(0.0, 10.0, 2).unwrap();
        let zero = Residuals {
            target: UqTarget::EndToEnd,
            per_step: vec![DMatrix::zeros(8, 3); 2],
            samples: (0..8).collect(),
            excluded: vec![],
        };
        let cal = calibrate(&zero, CpMethod::Split, 0.1, grid).unwrap();
        let rep = coverage_from_residuals(&cal, &zero).unwrap();
        assert!(rep.cells.iter().all(|c| *c == 1.0));
        assert_eq!(rep.summary().std, 0.0);
    }

    #[test]
    fn recount_on_calibration_data_meets_nominal_in_every_cell() {
        let grid = TimeGrid::new(0.0, 10.0, 5).unwrap();
        for (target, d) in [(UqTarget::EndToEnd, 6), (UqTarget::LatentDynamics, 4)] {
            let r = gaussian(target, 73, d, 5, 2);
            for alpha in [0.1, 0.05, 0.02, 0.01] {
                let cal = calibrate(&r, CpMethod::Vanilla, alpha, grid).unwrap();
                let rep = coverage_from_residuals(&cal, &r).unwrap();
                assert!(rep.min_cell() >= 1.0 - alpha, "{target} {alpha}: {}", rep.min_cell());
            }
        }
    }

    #[test]
    fn held_out_gaussian_coverage_is_near_nominal() {
        let grid = TimeGrid::new(0.0, 10.0, 4).unwrap();
        let cal_r = gaussian(UqTarget::EndToEnd, 400, 8, 4, 7);
        let test_r = gaussian(UqTarget::EndToEnd, 2000, 8, 4, 8);
        let cal = calibrate(&cal_r, CpMethod::Split, 0.1, grid).unwrap();
        let rep = coverage_from_residuals(&cal, &test_r).unwrap();
        assert!((rep.summary().mean - 0.9).abs() < 0.02, "{}", rep.summary().mean);
    }

    #[test]
    fn mismatched_target_or_empty_set_is_rejected() {
        let grid = TimeGrid::new(0.0, 10.0, 2).unwrap();
        let r = gaussian(UqTarget::EndToEnd, 10, 2, 2, 1);
        let cal = calibrate(&r, CpMethod::Split, 0.1, grid).unwrap();
        let other = Residuals {
            target: UqTarget::Reconstruction,
            ..r.clone()
        };
        assert!(coverage_from_residuals(&cal, &other).is_err());
        let empty = Residuals {
            per_step: vec![DMatrix::zeros(0, 2); 2],
            samples: vec![],
            ..r
        };
        assert!(coverage_from_residuals(&cal, &empty).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn summary_mean_equals_cell_mean(seed in 0u64..1000, alpha in 0.01f64..0.4) {
            let grid = TimeGrid::new(0.0, 10.0, 3).unwrap();
            let cal = calibrate(&gaussian(UqTarget::Reconstruction, 30, 5, 3, seed), CpMethod::Split, alpha, grid).unwrap();
            let rep = coverage_from_residuals(&cal, &gaussian(UqTarget::Reconstruction, 17, 5, 3, seed + 1)).unwrap();
            let by_hand: f64 = rep.cells.iter().sum::<f64>() / 15.0;
            prop_assert!((rep.summary().mean - by_hand).abs() < 1e-15);
            prop_assert!(rep.cells.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
}
