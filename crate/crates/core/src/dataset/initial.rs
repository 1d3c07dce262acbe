use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::BinGrid;
use crate::{Error, Result};

/// One log-normal mode: Gaussian in `ln r` carrying `mass` kg/kg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalMode {
    pub center_ln_r: f64,
    pub width: f64,
    pub mass: f64,
}

/// Ranges the initial-condition sampler draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialDsdParams {
    pub n_modes: (usize, usize),
    /// Mode centres, in `ln(r / 1 um)`.
    pub center_ln_r: (f64, f64),
    /// Mode standard deviations in `ln r`.
    pub width: (f64, f64),
    /// Total liquid mass, kg/kg, sampled log-uniformly.
    pub total_mass: (f64, f64),
}

impl Default for InitialDsdParams {
    fn default() -> Self {
        Self {
            n_modes: (1, 2),
            center_ln_r: (6f64.ln(), 12f64.ln()),
            width: (0.4, 0.7),
            total_mass: (5e-5, 5e-3),
        }
    }
}

impl InitialDsdParams {
    pub fn validate(&self, grid: &BinGrid) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_modes.0 == 0 || self.n_modes.0 > self.n_modes.1 {
            return bad(format!("invalid mode count range {:?}", self.n_modes));
        }
        let (lo, hi) = self.center_ln_r;
        if !(lo <= hi && grid.contains(lo) && grid.contains(hi)) {
            return bad(format!(
                "mode centres [{lo}, {hi}] outside the bin grid [{}, {}]",
                grid.ln_r_min, grid.ln_r_max
            ));
        }
        if !(self.width.0 >= 0.0 && self.width.0 <= self.width.1 && self.width.1.is_finite()) {
            return bad(format!("invalid mode width range {:?}", self.width));
        }
        if !(self.total_mass.0 > 0.0 && self.total_mass.0 <= self.total_mass.1) {
            return bad(format!("invalid total mass range {:?}", self.total_mass));
        }
        Ok(())
    }
}

/// Standard normal probability of `[a, b]`, taken from whichever tail keeps
/// far-out bins from cancelling to zero.
fn normal_mass(a: f64, b: f64) -> f64 {
    let tail = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    if a >= 0.0 {
        tail(a) - tail(b)
    } else if b <= 0.0 {
        tail(-b) - tail(-a)
    } else {
        1.0 - tail(-a) - tail(b)
    }
}

/// Mass density `dm/dln r` on the grid for a mixture of modes.
///
/// Each mode's mass is spread by integrating its Gaussian over the bins
/// (so the zero-width limit puts everything into one bin), truncated to the
/// grid, and the result is rescaled so that `sum(row) * d_ln_r` equals the
/// total mode mass.
pub fn dsd_from_modes(grid: &BinGrid, modes: &[LogNormalMode]) -> Result<Vec<f64>> {
    let d = grid.d_ln_r();
    let edges = grid.edges();
    let mut row = vec![0.0; grid.n_bins];
    let mut total = 0.0;
    for m in modes {
        if !grid.contains(m.center_ln_r) {
            return Err(Error::InvalidArgument(format!(
                "mode centre {} outside the bin grid",
                m.center_ln_r
            )));
        }
        if !(m.mass >= 0.0 && m.width >= 0.0) {
            return Err(Error::InvalidArgument("negative mode mass or width".into()));
        }
        total += m.mass;
        let z: Vec<f64> = edges
            .iter()
            .map(|e| {
                if m.width == 0.0 {
                    if *e <= m.center_ln_r { f64::NEG_INFINITY } else { f64::INFINITY }
                } else {
                    (e - m.center_ln_r) / m.width
                }
            })
            .collect();
        let inside = normal_mass(z[0], z[grid.n_bins]);
        if inside > 0.0 {
            for (i, v) in row.iter_mut().enumerate() {
                *v += m.mass * normal_mass(z[i], z[i + 1]) / inside / d;
            }
        } else {
            // Only possible for a zero-width mode sitting on the top edge.
            row[grid.bin_of(m.center_ln_r)] += m.mass / d;
        }
    }
    let discrete: f64 = row.iter().sum::<f64>() * d;
    if discrete > 0.0 {
        let s = total / discrete;
        row.iter_mut().for_each(|v| *v *= s);
    }
    Ok(row)
}

/// Draws mode parameters from `params` using a generator seeded with `seed`.
pub fn sample_modes(seed: u64, params: &InitialDsdParams) -> Vec<LogNormalMode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(params.n_modes.0..=params.n_modes.1);
    let (m_lo, m_hi) = params.total_mass;
    let total = (m_lo.ln() + rng.random::<f64>() * (m_hi.ln() - m_lo.ln())).exp();
    let mut modes: Vec<LogNormalMode> = (0..n)
        .map(|_| LogNormalMode {
            center_ln_r: lerp(params.center_ln_r, rng.random()),
            width: lerp(params.width, rng.random()),
            mass: 0.25 + 0.75 * rng.random::<f64>(),
        })
        .collect();
    let weight: f64 = modes.iter().map(|m| m.mass).sum();
    modes.iter_mut().for_each(|m| m.mass *= total / weight);
    modes
}

fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + (hi - lo) * u
}

/// Samples one initial distribution; identical seeds give identical rows.
pub fn sample_initial_dsd(seed: u64, grid: &BinGrid, params: &InitialDsdParams) -> Result<Vec<f64>> {
    params.validate(grid)?;
    dsd_from_modes(grid, &sample_modes(seed, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_width_mode_fills_a_single_bin() {
        let grid = BinGrid::default();
        let centre = grid.centers()[32];
        let row = dsd_from_modes(
            &grid,
            &[LogNormalMode {
                center_ln_r: centre,
                width: 0.0,
                mass: 1e-3,
            }],
        )
        .unwrap();
        assert_eq!(row.iter().filter(|v| **v > 0.0).count(), 1);
        assert!(row[32] > 0.0);
        // a vanishing but non-zero width behaves the same
        let narrow = dsd_from_modes(
            &grid,
            &[LogNormalMode {
                center_ln_r: centre,
                width: 1e-6,
                mass: 1e-3,
            }],
        )
        .unwrap();
        assert!(narrow[32] * grid.d_ln_r() > 1e-3 * (1.0 - 1e-12));
    }

    #[test]
    fn two_half_modes_equal_one_full_mode() {
        let grid = BinGrid::default();
        let full = LogNormalMode {
            center_ln_r: 2.0,
            width: 0.3,
            mass: 1e-3,
        };
        let half = LogNormalMode { mass: 5e-4, ..full };
        let a = dsd_from_modes(&grid, &[full]).unwrap();
        let b = dsd_from_modes(&grid, &[half, half]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn discrete_mass_matches_request() {
        let grid = BinGrid::default();
        let params = InitialDsdParams {
            total_mass: (1e-3, 1e-3),
            ..Default::default()
        };
        for seed in 0..20 {
            let row = sample_initial_dsd(seed, &grid, &params).unwrap();
            let mass: f64 = row.iter().sum::<f64>() * grid.d_ln_r();
            assert!((mass - 1e-3).abs() <= 1e-12 * 1e-3, "seed {seed}: {mass}");
            assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let grid = BinGrid::default();
        let p = InitialDsdParams::default();
        assert_eq!(
            sample_initial_dsd(42, &grid, &p).unwrap(),
            sample_initial_dsd(42, &grid, &p).unwrap()
        );
        assert_ne!(
            sample_initial_dsd(42, &grid, &p).unwrap(),
            sample_initial_dsd(43, &grid, &p).unwrap()
        );
    }

    #[test]
    fn parameters_outside_grid_are_rejected() {
        let grid = BinGrid::default();
        let p = InitialDsdParams {
            center_ln_r: (-1.0, 2.0),
            ..Default::default()
        };
        assert!(sample_initial_dsd(0, &grid, &p).is_err());
        let p = InitialDsdParams {
            total_mass: (0.0, 1.0),
            ..Default::default()
        };
        assert!(sample_initial_dsd(0, &grid, &p).is_err());
    }
}
