use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Log-radius bins, uniformly spaced in `ln r` with `r` in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinGrid {
    pub n_bins: usize,
    pub ln_r_min: f64,
    pub ln_r_max: f64,
}

impl Default for BinGrid {
    /// 64 bins over 1 um .. 5000 um.
    fn default() -> Self {
        Self {
            n_bins: 64,
            ln_r_min: 0.0,
            ln_r_max: 5000f64.ln(),
        }
    }
}

impl BinGrid {
    pub fn new(n_bins: usize, ln_r_min: f64, ln_r_max: f64) -> Result<Self> {
        let grid = Self {
            n_bins,
            ln_r_min,
            ln_r_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "bin grid needs at least 2 bins, got {}",
                self.n_bins
            )));
        }
        if !(self.ln_r_min.is_finite() && self.ln_r_max.is_finite() && self.ln_r_max > self.ln_r_min)
        {
            return Err(Error::InvalidArgument(format!(
                "invalid log-radius bounds [{}, {}]",
                self.ln_r_min, self.ln_r_max
            )));
        }
        Ok(())
    }

    /// Bin width in `ln r`.
    pub fn d_ln_r(&self) -> f64 {
        (self.ln_r_max - self.ln_r_min) / self.n_bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let d = self.d_ln_r();
        (0..=self.n_bins).map(|i| self.ln_r_min + d * i as f64).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let d = self.d_ln_r();
        (0..self.n_bins)
            .map(|i| self.ln_r_min + d * (i as f64 + 0.5))
            .collect()
    }

    /// Bin containing `ln_r`; values beyond the grid are clamped to the end bins.
    pub fn bin_of(&self, ln_r: f64) -> usize {
        let pos = ((ln_r - self.ln_r_min) / self.d_ln_r()).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.n_bins - 1)
        }
    }

    pub fn contains(&self, ln_r: f64) -> bool {
        (self.ln_r_min..=self.ln_r_max).contains(&ln_r)
    }
}

/// Output times `t0, t0 + dt, ...`, `n_steps` of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Default for TimeGrid {
    /// 0 s to 600 s every 10 s.
    fn default() -> Self {
        Self {
            t0: 0.0,
            dt: 10.0,
            n_steps: 61,
        }
    }
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        let grid = Self { t0, dt, n_steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.n_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs dt > 0 and at least 2 steps (dt = {}, n_steps = {})",
                self.dt, self.n_steps
            )));
        }
        Ok(())
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + self.dt * step as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.time(i)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps - 1)
    }
}
