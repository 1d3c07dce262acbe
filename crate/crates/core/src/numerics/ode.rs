use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// One classical fourth-order Runge-Kutta step of `dz/dt = f(z)`.
pub fn rk4_step<F>(f: F, z: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let k1 = f(z);
    let k2 = f(&(z + &k1 * (0.5 * dt)));
    let k3 = f(&(z + &k2 * (0.5 * dt)));
    let k4 = f(&(z + &k3 * dt));
    let next = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        // Callers that know the timestep re-wrap this with the right index.
        return Err(Error::LatentDiverged { step: 0 });
    }
    Ok(next)
}

/// Time derivative of a trajectory stored one timestep per row.
///
/// Central differences at interior rows, first-order one-sided differences
/// at the two endpoints.
pub fn finite_diff_derivative(trajectory: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let (n, d) = trajectory.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "finite differences need at least 2 timesteps, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let mut out = DMatrix::zeros(n, d);
    for j in 0..d {
        out[(0, j)] = (trajectory[(1, j)] - trajectory[(0, j)]) / dt;
        out[(n - 1, j)] = (trajectory[(n - 1, j)] - trajectory[(n - 2, j)]) / dt;
        for i in 1..n - 1 {
            out[(i, j)] = (trajectory[(i + 1, j)] - trajectory[(i - 1, j)]) / (2.0 * dt);
        }
    }
    Ok(out)
}
