use nalgebra::DMatrix;
use rayon::prelude::*;

use super::UqTarget;
use crate::dataset::NormalizedDsdTrajectory;
use crate::rom::RomModel;
use crate::{Error, Result};

/// Signed residuals `truth - prediction`, one matrix per timestep with one
/// row per included sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub target: UqTarget,
    pub per_step: Vec<DMatrix<f64>>,
    /// Sample indices in row order.
    pub samples: Vec<usize>,
    /// Samples dropped because their latent rollout diverged.
    pub excluded: Vec<usize>,
}

impl Residuals {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn n_coords(&self) -> usize {
        self.per_step.first().map_or(0, |m| m.ncols())
    }

    /// Concatenates residual sets for the same target (e.g. CV+ folds).
    pub fn concat(parts: Vec<Residuals>) -> Result<Residuals> {
        let Some(first) = parts.first() else {
            return Err(Error::EmptyCalibration);
        };
        let target = first.target;
        let steps = first.n_steps();
        let coords = first.n_coords();
        if parts.iter().any(|p| p.target != target || p.n_steps() != steps || (p.n_samples() > 0 && p.n_coords() != coords)) {
            return Err(Error::Shape("residual sets disagree in target or shape".into()));
        }
        let n: usize = parts.iter().map(|p| p.n_samples()).sum();
        let mut per_step = vec![DMatrix::zeros(n, coords); steps];
        let mut samples = Vec::with_capacity(n);
        let mut excluded = Vec::new();
        let mut r = 0;
        for p in parts {
            let k = p.n_samples();
            for (dst, src) in per_step.iter_mut().zip(&p.per_step) {
                if k > 0 {
                    dst.rows_mut(r, k).copy_from(src);
                }
            }
            r += k;
            samples.extend(p.samples);
            excluded.extend(p.excluded);
        }
        Ok(Residuals {
            target,
            per_step,
            samples,
            excluded,
        })
    }
}

/// Per-sample residual matrix (timesteps x coordinates), or `None` when the
/// latent rollout diverged.
fn sample_residuals(model: &RomModel, traj: &NormalizedDsdTrajectory, target: UqTarget) -> Result<Option<DMatrix<f64>>> {
    let time = &model.time_grid;
    if traj.n_steps() != time.n_steps || traj.n_bins() != model.bin_grid.n_bins {
        return Err(Error::Shape(format!(
            "trajectory is {}x{} but the model expects {}x{}",
            traj.n_steps(),
            traj.n_bins(),
            time.n_steps,
            model.bin_grid.n_bins
        )));
    }
    let steps = time.n_steps;
    let out = match target {
        UqTarget::Reconstruction => {
            let mut r = DMatrix::zeros(steps, traj.n_bins());
            for t in 0..steps {
                let rec = model.reconstruct(&traj.row(t), traj.scaled_mass[t])?;
                r.row_mut(t).copy_from(&(traj.shapes.row(t) - rec.transpose()));
            }
            r
        }
        UqTarget::LatentDynamics => {
            let z0 = model.encode(&traj.row(0), traj.scaled_mass[0])?;
            let roll = match model.rollout_latent(&z0, time) {
                Ok(r) => r,
                Err(Error::LatentDiverged { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let m = model.latent_dim();
            let mut r = DMatrix::zeros(steps, m);
            for t in 0..steps {
                let truth = model.encode(&traj.row(t), traj.scaled_mass[t])?.to_vector();
                r.row_mut(t).copy_from(&(truth - roll.states.row(t).transpose()).transpose());
            }
            r
        }
        UqTarget::EndToEnd => {
            let pred = match model.predict_end_to_end(&traj.row(0), traj.scaled_mass[0], time) {
                Ok(p) => p,
                Err(Error::LatentDiverged { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            &traj.shapes - &pred.shapes
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        // A finite rollout can still decode to garbage; treat it like divergence.
        return Ok(None);
    }
    Ok(Some(out))
}

/// Signed residuals of `model` on the trajectories at `indices`.
///
/// Reconstruction: `x_t - D(E(x_t))`. Latent dynamics: `E(x_t)` minus the
/// latent rollout from `E(x_0)`, mass coordinate included. End-to-end:
/// `x_t` minus the decoded rollout. Samples whose rollout diverges are
/// excluded and listed in [`Residuals::excluded`].
pub fn compute_residuals(
    model: &RomModel,
    data: &[NormalizedDsdTrajectory],
    target: UqTarget,
    indices: &[usize],
) -> Result<Residuals> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidArgument(format!(
            "sample index {bad} out of range for {} trajectories",
            data.len()
        )));
    }
    let per_sample = indices
        .par_iter()
        .map(|&i| sample_residuals(model, &data[i], target))
        .collect::<Result<Vec<_>>>()?;

    let steps = model.time_grid.n_steps;
    let coords = target.n_coords(model);
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    for (&i, r) in indices.iter().zip(&per_sample) {
        if r.is_some() {
            samples.push(i);
        } else {
            excluded.push(i);
        }
    }
    if !excluded.is_empty() {
        log::warn!(
            "{} of {} samples excluded after latent divergence ({target})",
            excluded.len(),
            indices.len()
        );
    }
    let kept: Vec<&DMatrix<f64>> = per_sample.iter().flatten().collect();
    let per_step = (0..steps)
        .map(|t| DMatrix::from_fn(kept.len(), coords, |s, c| kept[s][(t, c)]))
        .collect();
    Ok(Residuals {
        target,
        per_step,
        samples,
        excluded,
    })
}
