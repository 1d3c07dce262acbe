//! Analytically tractable datasets used to validate the pipeline.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BinGrid, Dataset, DsdTrajectory, TimeGrid};
use crate::Result;

/// Parameters of a rank-`r` linear system living in normalised-row space.
#[derive(Debug, Clone)]
pub struct LinearLowRankSystem {
    /// Mean normalised row (sums to one).
    pub mean: DVector<f64>,
    /// Orthonormal, zero-sum columns.
    pub basis: DMatrix<f64>,
    /// Latent generator: `c(t) = exp(A t) c0`.
    pub generator: DMatrix<f64>,
}

impl LinearLowRankSystem {
    /// Rank-3 system with a damped rotation in the first two modes and a
    /// slow decay in the third.
    pub fn rank3(grid: &BinGrid) -> Self {
        let n = grid.n_bins;
        let centre = n as f64 * 0.4;
        let bump: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * (-((i as f64 - centre) / (0.15 * n as f64)).powi(2)).exp())
            .collect();
        let total: f64 = bump.iter().sum();
        let mean = DVector::from_iterator(n, bump.into_iter().map(|v| v / total));

        let mut basis = DMatrix::zeros(n, 3);
        for k in 0..3 {
            let col = DVector::from_fn(n, |i, _| {
                (std::f64::consts::PI * (k + 1) as f64 * (i as f64 + 0.5) / n as f64).cos()
            });
            basis.set_column(k, &col);
        }
        // Project out the constant vector, then orthonormalise.
        let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        for k in 0..3 {
            let mut c = basis.column(k).clone_owned();
            c -= &ones * ones.dot(&c);
            for j in 0..k {
                let prev = basis.column(j).clone_owned();
                c -= &prev * prev.dot(&c);
            }
            let norm = c.norm();
            basis.set_column(k, &(c / norm));
        }

        let generator = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0e-3, 4.0e-3, 0.0, -4.0e-3, -1.0e-3, 0.0, 0.0, 0.0, -2.0e-3],
        );
        Self {
            mean,
            basis,
            generator,
        }
    }

    /// Normalised row at time `t` for initial latent coefficients `c0`.
    pub fn row(&self, c0: &DVector<f64>, t: f64) -> DVector<f64> {
        let c = (&self.generator * t).exp() * c0;
        &self.mean + &self.basis * c
    }

    /// Raw dataset whose rows are `mass * row(c0, t) / d_ln_r`.
    pub fn dataset(
        &self,
        n_samples: usize,
        grid: BinGrid,
        time: TimeGrid,
        seed: u64,
    ) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = grid.d_ln_r();
        let amplitude = 0.45 * self.mean.min() / self.basis.amax() / 3.0;
        let mut trajectories = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let c0 = DVector::from_fn(3, |_, _| amplitude * (2.0 * rng.random::<f64>() - 1.0));
            let mass = 2e-4 + 8e-4 * rng.random::<f64>();
            let rows = (0..time.n_steps)
                .map(|s| {
                    self.row(&c0, time.time(s))
                        .iter()
                        .map(|v| v * mass / d)
                        .collect()
                })
                .collect();
            trajectories.push(DsdTrajectory::new(rows, &grid)?);
        }
        Ok(Dataset {
            bin_grid: grid,
            time_grid: time,
            trajectories,
            seeds: vec![seed; n_samples],
            generator: None,
            mass_scale: None,
        })
    }
}
