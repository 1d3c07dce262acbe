use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A point in latent space: `m - 1` shape coordinates produced by the
/// encoder plus the scaled total mass, which bypasses the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub shape_coords: DVector<f64>,
    pub scaled_mass: f64,
}

impl LatentState {
    pub fn new(shape_coords: DVector<f64>, scaled_mass: f64) -> Self {
        Self {
            shape_coords,
            scaled_mass,
        }
    }

    /// Latent dimension `m`, mass included.
    pub fn dim(&self) -> usize {
        self.shape_coords.len() + 1
    }

    /// `[shape_coords..., scaled_mass]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let k = self.shape_coords.len();
        DVector::from_fn(k + 1, |i, _| {
            if i < k {
                self.shape_coords[i]
            } else {
                self.scaled_mass
            }
        })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "latent vector needs at least 2 entries, got {}",
                v.len()
            )));
        }
        let k = v.len() - 1;
        Ok(Self {
            shape_coords: DVector::from_column_slice(&v[..k]),
            scaled_mass: v[k],
        })
    }
}

/// Latent states over time, one row per timestep, mass in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub states: DMatrix<f64>,
}

impl LatentTrajectory {
    pub fn n_steps(&self) -> usize {
        self.states.nrows()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, t: usize) -> LatentState {
        let row: Vec<f64> = self.states.row(t).iter().copied().collect();
        LatentState::from_slice(&row).expect("trajectory rows have dimension >= 2")
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.states.row(t).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip_keeps_mass_last() {
        let s = LatentState::new(DVector::from_vec(vec![0.1, -0.2, 0.3]), 0.37);
        let v = s.to_vector();
        assert_eq!(v.as_slice(), &[0.1, -0.2, 0.3, 0.37]);
        assert_eq!(LatentState::from_slice(v.as_slice()).unwrap(), s);
        assert_eq!(s.dim(), 4);
    }
}
