//! Mass-conservative binned coagulation (Smoluchowski) solver.
//!
//! State is the mass per bin `M_i = g_i * d_ln_r`. A collision between a
//! droplet from bin `i` and one from bin `j` removes `m_i` and `m_j` from
//! those bins and deposits `m_i + m_j` in the bin containing the combined
//! volume (clamped to the top bin). Pair collision rates are
//! `K_ij N_i N_j` for `i != j` and `K_ii N_i^2 / 2` on the diagonal, with
//! `N_i = M_i / m_i`. Every transfer is mass-neutral, so total mass is
//! conserved to rounding.

use serde::{Deserialize, Serialize};

use super::{BinGrid, DsdTrajectory, TimeGrid};
use crate::{Error, Result};

/// Liquid water density, kg m^-3.
pub const WATER_DENSITY: f64 = 1000.0;
/// Reference radius for the product kernel, um.
pub const REFERENCE_RADIUS_UM: f64 = 10.0;

/// Collision kernel. Coefficients act on number concentrations per kg of air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `K_ij = c`.
    Constant { c: f64 },
    /// `K_ij = b * (v_i / v_ref) * (v_j / v_ref)`.
    Product { b: f64 },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Constant { c: 6e-12 }
    }
}

impl Kernel {
    fn coefficient(&self) -> f64 {
        match *self {
            Kernel::Constant { c } => c,
            Kernel::Product { b } => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Largest forward-Euler sub-step, seconds.
    pub max_substep: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_substep: 1.0 }
    }
}

/// Droplet mass (kg) at the centre of each bin.
pub fn droplet_masses(grid: &BinGrid) -> Vec<f64> {
    grid.centers()
        .iter()
        .map(|ln_r| {
            let r = ln_r.exp() * 1e-6;
            WATER_DENSITY * 4.0 / 3.0 * std::f64::consts::PI * r * r * r
        })
        .collect()
}

/// Number concentration (per kg air) implied by a mass-density row.
pub fn number_concentration(grid: &BinGrid, row: &[f64]) -> f64 {
    let d = grid.d_ln_r();
    row.iter()
        .zip(droplet_masses(grid))
        .map(|(g, m)| g * d / m)
        .sum()
}

struct Coagulator {
    masses: Vec<f64>,
    kernel: Vec<f64>,
    target: Vec<usize>,
    n: usize,
}

impl Coagulator {
    fn new(grid: &BinGrid, kernel: Kernel) -> Self {
        let n = grid.n_bins;
        let masses = droplet_masses(grid);
        let centers = grid.centers();
        let v_ref = (REFERENCE_RADIUS_UM * 1e-6).powi(3);
        let mut k = vec![0.0; n * n];
        let mut target = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (ri, rj) = (centers[i].exp() * 1e-6, centers[j].exp() * 1e-6);
                let (vi, vj) = (ri.powi(3), rj.powi(3));
                k[i * n + j] = match kernel {
                    Kernel::Constant { c } => c,
                    Kernel::Product { b } => b * (vi / v_ref) * (vj / v_ref),
                };
                let ln_r = ((vi + vj).cbrt() * 1e6).ln();
                target[i * n + j] = grid.bin_of(ln_r);
            }
        }
        Self {
            masses,
            kernel: k,
            target,
            n,
        }
    }

    /// d(M_i)/dt for the current per-bin masses.
    fn tendency(&self, mass: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        let number: Vec<f64> = mass.iter().zip(&self.masses).map(|(m, w)| m / w).collect();
        for i in 0..n {
            if number[i] <= 0.0 {
                continue;
            }
            for j in i..n {
                if number[j] <= 0.0 {
                    continue;
                }
                let mut rate = self.kernel[i * n + j] * number[i] * number[j];
                if i == j {
                    rate *= 0.5;
                }
                let (mi, mj) = (rate * self.masses[i], rate * self.masses[j]);
                out[i] -= mi;
                out[j] -= mj;
                out[self.target[i * n + j]] += mi + mj;
            }
        }
    }
}

/// Integrates coalescence from `initial` (a `dm/dln r` row) over `time`.
///
/// Forward Euler with sub-steps no longer than `options.max_substep`; a
/// sub-step is halved until no bin would become negative.
pub fn simulate_coalescence(
    initial: &[f64],
    grid: &BinGrid,
    time: &TimeGrid,
    kernel: Kernel,
    options: SolverOptions,
) -> Result<DsdTrajectory> {
    grid.validate()?;
    time.validate()?;
    if initial.len() != grid.n_bins {
        return Err(Error::DimensionMismatch {
            expected: grid.n_bins,
            got: initial.len(),
        });
    }
    if initial.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "initial distribution must be finite and non-negative".into(),
        ));
    }
    if !(kernel.coefficient() >= 0.0 && kernel.coefficient().is_finite()) {
        return Err(Error::InvalidArgument("kernel coefficient must be >= 0".into()));
    }
    if !(options.max_substep > 0.0) {
        return Err(Error::InvalidArgument("max_substep must be positive".into()));
    }

    let d = grid.d_ln_r();
    let n = grid.n_bins;
    let mut rows = Vec::with_capacity(time.n_steps);
    rows.push(initial.to_vec());
    if kernel.coefficient() == 0.0 {
        for _ in 1..time.n_steps {
            rows.push(initial.to_vec());
        }
        return DsdTrajectory::new(rows, grid);
    }

    let coag = Coagulator::new(grid, kernel);
    let mut mass: Vec<f64> = initial.iter().map(|g| g * d).collect();
    let mut rate = vec![0.0; n];
    let mut next = vec![0.0; n];
    let min_step = options.max_substep.min(time.dt) * 1e-12;
    for step in 1..time.n_steps {
        let mut remaining = time.dt;
        while remaining > 0.0 {
            coag.tendency(&mass, &mut rate);
            let mut h = options.max_substep.min(remaining);
            loop {
                for i in 0..n {
                    next[i] = mass[i] + h * rate[i];
                }
                if next.iter().all(|v| *v >= 0.0) {
                    break;
                }
                h *= 0.5;
                if h < min_step {
                    return Err(Error::CoalescenceDiverged {
                        time_s: time.time(step - 1) + time.dt - remaining,
                    });
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::CoalescenceDiverged {
                    time_s: time.time(step - 1) + time.dt - remaining,
                });
            }
            std::mem::swap(&mut mass, &mut next);
            remaining = if h >= remaining { 0.0 } else { remaining - h };
        }
        rows.push(mass.iter().map(|m| m / d).collect());
    }
    DsdTrajectory::new(rows, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{dsd_from_modes, sample_initial_dsd, InitialDsdParams, LogNormalMode};

    fn narrow_initial(grid: &BinGrid) -> Vec<f64> {
        dsd_from_modes(
            grid,
            &[LogNormalMode {
                center_ln_r: 8f64.ln(),
                width: 0.2,
                mass: 1e-3,
            }],
        )
        .unwrap()
    }

    #[test]
    fn zero_kernel_is_stationary() {
        let grid = BinGrid::default();
        let init = narrow_initial(&grid);
        let traj = simulate_coalescence(
            &init,
            &grid,
            &TimeGrid::default(),
            Kernel::Constant { c: 0.0 },
            SolverOptions::default(),
        )
        .unwrap();
        for t in 0..traj.n_steps() {
            assert_eq!(traj.row(t), init);
        }
    }

    #[test]
    fn mass_is_conserved_and_number_decays() {
        let grid = BinGrid::default();
        let init = narrow_initial(&grid);
        let traj = simulate_coalescence(
            &init,
            &grid,
            &TimeGrid::default(),
            Kernel::default(),
            SolverOptions::default(),
        )
        .unwrap();
        let m0 = traj.total_mass[0];
        for m in &traj.total_mass {
            assert!((m - m0).abs() <= 1e-8 * m0);
        }
        let numbers: Vec<f64> = (0..traj.n_steps())
            .map(|t| number_concentration(&grid, &traj.row(t)))
            .collect();
        assert!(numbers.windows(2).all(|w| w[1] < w[0]));
        let mean_volume: Vec<f64> = numbers.iter().map(|n| m0 / n).collect();
        assert!(mean_volume.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn product_kernel_conserves_mass() {
        let grid = BinGrid::default();
        let init = sample_initial_dsd(9, &grid, &InitialDsdParams::default()).unwrap();
        let traj = simulate_coalescence(
            &init,
            &grid,
            &TimeGrid::default(),
            Kernel::Product { b: 2e-12 },
            SolverOptions::default(),
        )
        .unwrap();
        let m0 = traj.total_mass[0];
        assert!(traj.total_mass.iter().all(|m| (m - m0).abs() <= 1e-8 * m0));
        assert!(traj.masses.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn invalid_inputs() {
        let grid = BinGrid::default();
        let t = TimeGrid::default();
        let o = SolverOptions::default();
        assert!(simulate_coalescence(&[1.0; 3], &grid, &t, Kernel::default(), o).is_err());
        let mut bad = narrow_initial(&grid);
        bad[3] = -1.0;
        assert!(simulate_coalescence(&bad, &grid, &t, Kernel::default(), o).is_err());
        let init = narrow_initial(&grid);
        assert!(simulate_coalescence(&init, &grid, &t, Kernel::Constant { c: -1.0 }, o).is_err());
    }
}
