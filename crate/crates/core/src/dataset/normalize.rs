use nalgebra::DMatrix;

use super::{BinGrid, DsdTrajectory};
use crate::{Error, Result};

/// Trajectories whose initial total mass falls below this (kg/kg) are dropped.
pub const LIQUID_WATER_THRESHOLD: f64 = 1e-5;

/// Mass-normalised trajectory: each row of `shapes` sums to one and the
/// total mass is carried separately, divided by the training-set maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDsdTrajectory {
    pub shapes: DMatrix<f64>,
    pub scaled_mass: Vec<f64>,
}

impl NormalizedDsdTrajectory {
    pub fn n_steps(&self) -> usize {
        self.shapes.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.shapes.ncols()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.shapes.row(t).iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub trajectories: Vec<NormalizedDsdTrajectory>,
    /// Positions in the input list that survived the liquid-water filter.
    pub kept: Vec<usize>,
    /// Number of input trajectories that were filtered out.
    pub filtered: usize,
    pub mass_scale: f64,
}

fn passes_filter(traj: &DsdTrajectory) -> bool {
    traj.total_mass[0] >= LIQUID_WATER_THRESHOLD && traj.total_mass.iter().all(|m| *m > 0.0)
}

/// Indices of trajectories that pass the liquid-water filter.
pub fn filter_by_mass(raw: &[DsdTrajectory]) -> Vec<usize> {
    raw.iter()
        .enumerate()
        .filter(|(_, t)| passes_filter(t))
        .map(|(i, _)| i)
        .collect()
}

/// Normalises rows by their total mass and rescales the mass series.
///
/// With `mass_scale = None` the scale is the largest total mass found in
/// `raw` (after filtering); pass the returned scale back in for test data.
pub fn normalize_dataset(raw: &[DsdTrajectory], mass_scale: Option<f64>) -> Result<Normalization> {
    let kept = filter_by_mass(raw);
    if kept.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trajectories left after the {LIQUID_WATER_THRESHOLD} kg/kg liquid-water filter"
        )));
    }
    let scale = match mass_scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::InvalidArgument(format!("invalid mass scale {s}"))),
        None => kept
            .iter()
            .flat_map(|&i| raw[i].total_mass.iter().copied())
            .fold(0.0, f64::max),
    };
    let trajectories = kept
        .iter()
        .map(|&i| {
            let t = &raw[i];
            let mut shapes = t.masses.clone();
            for mut row in shapes.row_iter_mut() {
                let s = row.sum();
                row /= s;
            }
            NormalizedDsdTrajectory {
                shapes,
                scaled_mass: t.total_mass.iter().map(|m| m / scale).collect(),
            }
        })
        .collect();
    Ok(Normalization {
        trajectories,
        filtered: raw.len() - kept.len(),
        kept,
        mass_scale: scale,
    })
}

/// Inverse of [`normalize_dataset`] for one trajectory.
pub fn denormalize(
    norm: &NormalizedDsdTrajectory,
    mass_scale: f64,
    grid: &BinGrid,
) -> Result<DsdTrajectory> {
    let d = grid.d_ln_r();
    let rows = (0..norm.n_steps())
        .map(|t| {
            let m = norm.scaled_mass[t] * mass_scale;
            norm.shapes.row(t).iter().map(|s| s * m / d).collect()
        })
        .collect();
    DsdTrajectory::new(rows, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        dsd_from_modes, simulate_coalescence, Kernel, LogNormalMode, SolverOptions, TimeGrid,
    };

    fn raw_set(grid: &BinGrid, masses: &[f64]) -> Vec<DsdTrajectory> {
        masses
            .iter()
            .map(|&m| {
                let init = dsd_from_modes(
                    grid,
                    &[LogNormalMode {
                        center_ln_r: 2.3,
                        width: 0.3,
                        mass: m,
                    }],
                )
                .unwrap();
                simulate_coalescence(
                    &init,
                    grid,
                    &TimeGrid::new(0.0, 10.0, 5).unwrap(),
                    Kernel::default(),
                    SolverOptions::default(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn already_normalised_rows_are_unchanged() {
        let grid = BinGrid::new(4, 0.0, 4.0).unwrap();
        let rows = vec![vec![0.25, 0.25, 0.25, 0.25], vec![0.1, 0.2, 0.3, 0.4]];
        let traj = DsdTrajectory::new(rows.clone(), &grid).unwrap();
        let n = normalize_dataset(&[traj], Some(1.0)).unwrap();
        for (t, row) in rows.iter().enumerate() {
            assert_eq!(&n.trajectories[0].row(t), row);
        }
    }

    #[test]
    fn scale_is_the_training_maximum() {
        let grid = BinGrid::default();
        let raw = raw_set(&grid, &[2e-4, 1e-3, 5e-4]);
        let n = normalize_dataset(&raw, None).unwrap();
        let peak = n.trajectories[1].scaled_mass.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-15);
        for t in &n.trajectories {
            for r in t.shapes.row_iter() {
                assert!((r.sum() - 1.0).abs() < 1e-10);
            }
            assert!(t.scaled_mass.iter().all(|s| *s > 0.0 && *s <= 1.0 + 1e-15));
        }
    }

    #[test]
    fn round_trip_recovers_raw_data() {
        let grid = BinGrid::default();
        let raw = raw_set(&grid, &[3e-4, 8e-4]);
        let n = normalize_dataset(&raw, None).unwrap();
        for (orig, norm) in raw.iter().zip(&n.trajectories) {
            let back = denormalize(norm, n.mass_scale, &grid).unwrap();
            for (a, b) in orig.masses.iter().zip(back.masses.iter()) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300) + 1e-300);
            }
        }
    }

    #[test]
    fn dry_trajectories_are_filtered_and_counted() {
        let grid = BinGrid::default();
        let raw = raw_set(&grid, &[1e-6, 5e-4, 2e-6]);
        let n = normalize_dataset(&raw, None).unwrap();
        assert_eq!(n.filtered, 2);
        assert_eq!(n.kept, vec![1]);
        let all_dry = raw_set(&grid, &[1e-6]);
        assert!(normalize_dataset(&all_dry, None).is_err());
    }
}
