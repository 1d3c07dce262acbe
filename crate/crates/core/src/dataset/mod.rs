//! Synthetic droplet-size-distribution trajectories and their preparation
//! for ROM fitting and conformal calibration.

mod coalescence;
pub mod fixtures;
mod grid;
mod initial;
mod normalize;
mod split;

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::Container;
use crate::{Error, Result};

pub use coalescence::{
    droplet_masses, number_concentration, simulate_coalescence, Kernel, SolverOptions,
    WATER_DENSITY,
};
pub use grid::{BinGrid, TimeGrid};
pub use initial::{dsd_from_modes, sample_initial_dsd, sample_modes, InitialDsdParams, LogNormalMode};
pub use normalize::{
    denormalize, filter_by_mass, normalize_dataset, Normalization, NormalizedDsdTrajectory,
    LIQUID_WATER_THRESHOLD,
};
pub use split::{split_dataset, DatasetSplit, SplitScheme};

/// Binned mass density `dm/dln r` (kg/kg per unit `ln r`) over time, one
/// timestep per row, with the total mass of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct DsdTrajectory {
    pub masses: DMatrix<f64>,
    pub total_mass: Vec<f64>,
}

impl DsdTrajectory {
    pub fn new(rows: Vec<Vec<f64>>, grid: &BinGrid) -> Result<Self> {
        let n_steps = rows.len();
        if n_steps == 0 {
            return Err(Error::Shape("trajectory has no timesteps".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != grid.n_bins) {
            return Err(Error::DimensionMismatch {
                expected: grid.n_bins,
                got: r.len(),
            });
        }
        let masses = DMatrix::from_fn(n_steps, grid.n_bins, |t, b| rows[t][b]);
        Self::from_matrix(masses, grid)
    }

    pub fn from_matrix(masses: DMatrix<f64>, grid: &BinGrid) -> Result<Self> {
        if masses.ncols() != grid.n_bins {
            return Err(Error::DimensionMismatch {
                expected: grid.n_bins,
                got: masses.ncols(),
            });
        }
        if masses.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "mass densities must be finite and non-negative".into(),
            ));
        }
        let d = grid.d_ln_r();
        let total_mass = masses.row_iter().map(|r| r.sum() * d).collect();
        Ok(Self { masses, total_mass })
    }

    pub fn n_steps(&self) -> usize {
        self.masses.nrows()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.masses.row(t).iter().copied().collect()
    }
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub initial: InitialDsdParams,
    pub kernel: Kernel,
    pub solver: SolverOptions,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_samples: 618,
            seed: 0,
            initial: InitialDsdParams::default(),
            kernel: Kernel::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// A collection of raw trajectories on shared grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub bin_grid: BinGrid,
    pub time_grid: TimeGrid,
    pub trajectories: Vec<DsdTrajectory>,
    /// Per-trajectory initial-condition seeds.
    pub seeds: Vec<u64>,
    pub generator: Option<GeneratorConfig>,
    pub mass_scale: Option<f64>,
}

/// Per-sample seeds derived from the base seed; sample `i` depends only on
/// `(base, i)`.
pub fn sample_seeds(base: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    (0..n).map(|_| rng.random()).collect()
}

/// Generates `config.n_samples` independent coalescence trajectories.
pub fn generate_dataset(
    config: &GeneratorConfig,
    bin_grid: BinGrid,
    time_grid: TimeGrid,
) -> Result<Dataset> {
    bin_grid.validate()?;
    time_grid.validate()?;
    config.initial.validate(&bin_grid)?;
    let seeds = sample_seeds(config.seed, config.n_samples);
    let trajectories = seeds
        .par_iter()
        .map(|&s| {
            let init = sample_initial_dsd(s, &bin_grid, &config.initial)?;
            simulate_coalescence(&init, &bin_grid, &time_grid, config.kernel, config.solver)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        bin_grid,
        time_grid,
        trajectories,
        seeds,
        generator: Some(config.clone()),
        mass_scale: None,
    })
}

pub const DATASET_KIND: &str = "dataset";

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn to_container(&self, extra_meta: serde_json::Value) -> Container {
        let n = self.len();
        let (steps, bins) = (self.time_grid.n_steps, self.bin_grid.n_bins);
        let mut c = Container::new(
            DATASET_KIND,
            json!({
                "bin_grid": self.bin_grid,
                "time_grid": self.time_grid,
                "n_trajectories": n,
                "seeds": self.seeds,
                "generator": self.generator,
                "mass_scale": self.mass_scale,
                "provenance": extra_meta,
            }),
        );
        let mut masses = Vec::with_capacity(n * steps * bins);
        let mut totals = Vec::with_capacity(n * steps);
        for t in &self.trajectories {
            masses.extend(t.masses.transpose().iter());
            totals.extend(&t.total_mass);
        }
        c.push_block("masses", n * steps, bins, masses);
        c.push_block("total_mass", n, steps, totals);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let bin_grid: BinGrid = c.meta_field("bin_grid")?;
        let time_grid: TimeGrid = c.meta_field("time_grid")?;
        bin_grid.validate()?;
        time_grid.validate()?;
        let n: usize = c.meta_field("n_trajectories")?;
        let seeds: Vec<u64> = c.meta_field("seeds")?;
        let generator: Option<GeneratorConfig> = c.meta_field("generator")?;
        let mass_scale: Option<f64> = c.meta_field("mass_scale")?;
        let (steps, bins) = (time_grid.n_steps, bin_grid.n_bins);
        let masses = c.block("masses")?;
        let totals = c.block("total_mass")?;
        if masses.cols != bins || masses.rows != n * steps {
            return Err(Error::Shape(format!(
                "mass block is {}x{} but header implies {}x{}",
                masses.rows,
                masses.cols,
                n * steps,
                bins
            )));
        }
        if totals.rows != n || totals.cols != steps || seeds.len() != n {
            return Err(Error::Shape("total-mass block or seed list disagrees with header".into()));
        }
        let d = bin_grid.d_ln_r();
        let trajectories = (0..n)
            .map(|i| {
                let block = &masses.data[i * steps * bins..(i + 1) * steps * bins];
                let m = DMatrix::from_row_slice(steps, bins, block);
                if m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Format(format!("trajectory {i} has invalid masses")));
                }
                let total_mass = totals.data[i * steps..(i + 1) * steps].to_vec();
                for (row, tm) in m.row_iter().zip(&total_mass) {
                    let s = row.sum() * d;
                    if (s - tm).abs() > 1e-10 * tm.abs().max(s.abs()) {
                        return Err(Error::Format(format!(
                            "trajectory {i}: stored total mass {tm} disagrees with bins ({s})"
                        )));
                    }
                }
                Ok(DsdTrajectory {
                    masses: m,
                    total_mass,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bin_grid,
            time_grid,
            trajectories,
            seeds,
            generator,
            mass_scale,
        })
    }
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    dataset.to_container(serde_json::Value::Null).write(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_container(&Container::read(path, DATASET_KIND)?)
}
