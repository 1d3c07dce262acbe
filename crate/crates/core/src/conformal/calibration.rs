use std::path::Path;

use nalgebra::DMatrix;
use serde_json::json;

use super::{calibrate_band, calibrate_ellipsoid, CalibrationBand, CalibrationEllipsoid, CpMethod, EllipsoidStep, Residuals, UqTarget};
use crate::container::Container;
use crate::dataset::TimeGrid;
use crate::numerics::ShrunkCovariance;
use crate::{Error, Result};

pub const CALIBRATION_KIND: &str = "calibration";

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSet {
    Band(CalibrationBand),
    Ellipsoid(CalibrationEllipsoid),
}

/// A calibrated prediction set together with where its residuals came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub method: CpMethod,
    pub target: UqTarget,
    pub alpha: f64,
    pub time_grid: TimeGrid,
    pub set: PredictionSet,
    /// Dataset indices whose residuals were used.
    pub calibration_indices: Vec<usize>,
    /// Calibration samples dropped after a divergent rollout.
    pub excluded: Vec<usize>,
}

/// Calibrates `residuals` at level `alpha`: a band for distribution-valued
/// targets, an ellipsoid for the latent target.
pub fn calibrate(residuals: &Residuals, method: CpMethod, alpha: f64, time_grid: TimeGrid) -> Result<Calibration> {
    if residuals.n_samples() == 0 {
        return Err(Error::EmptyCalibration);
    }
    if residuals.n_steps() != time_grid.n_steps {
        return Err(Error::Shape(format!(
            "{} residual timesteps for a {}-step grid",
            residuals.n_steps(),
            time_grid.n_steps
        )));
    }
    let set = if residuals.target.uses_ellipsoid() {
        PredictionSet::Ellipsoid(calibrate_ellipsoid(&residuals.per_step, alpha)?)
    } else {
        PredictionSet::Band(calibrate_band(&residuals.per_step, alpha)?)
    };
    Ok(Calibration {
        method,
        target: residuals.target,
        alpha,
        time_grid,
        set,
        calibration_indices: residuals.samples.clone(),
        excluded: residuals.excluded.clone(),
    })
}

impl Calibration {
    pub fn n_calibration(&self) -> usize {
        match &self.set {
            PredictionSet::Band(b) => b.n_calibration,
            PredictionSet::Ellipsoid(e) => e.n_calibration,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.time_grid.n_steps
    }

    /// Coverage cells per timestep: one per coordinate for bands, one for
    /// the whole ellipsoid.
    pub fn n_cells(&self) -> usize {
        match &self.set {
            PredictionSet::Band(b) => b.n_coords(),
            PredictionSet::Ellipsoid(_) => 1,
        }
    }

    /// Residual dimension expected by [`Calibration::contains_residual`].
    pub fn n_coords(&self) -> usize {
        match &self.set {
            PredictionSet::Band(b) => b.n_coords(),
            PredictionSet::Ellipsoid(e) => e.dim(),
        }
    }

    /// Cell-wise membership of a signed residual `truth - prediction`.
    pub fn contains_residual(&self, t: usize, residual: &[f64]) -> Result<Vec<bool>> {
        match &self.set {
            PredictionSet::Band(b) => b.contains_residual(t, residual),
            PredictionSet::Ellipsoid(e) => Ok(vec![e.contains_residual(t, residual)?]),
        }
    }

    pub fn contains(&self, prediction: &[f64], truth: &[f64], t: usize) -> Result<Vec<bool>> {
        match &self.set {
            PredictionSet::Band(b) => b.contains(prediction, truth, t),
            PredictionSet::Ellipsoid(e) => Ok(vec![e.contains(prediction, truth, t)?]),
        }
    }

    pub fn band(&self) -> Option<&CalibrationBand> {
        match &self.set {
            PredictionSet::Band(b) => Some(b),
            PredictionSet::Ellipsoid(_) => None,
        }
    }

    pub fn ellipsoid(&self) -> Option<&CalibrationEllipsoid> {
        match &self.set {
            PredictionSet::Ellipsoid(e) => Some(e),
            PredictionSet::Band(_) => None,
        }
    }

    pub fn to_container(&self, extra_meta: serde_json::Value) -> Container {
        let mut meta = json!({
            "method": self.method,
            "target": self.target,
            "alpha": self.alpha,
            "time_grid": self.time_grid,
            "n_calibration": self.n_calibration(),
            "calibration_indices": self.calibration_indices,
            "excluded": self.excluded,
            "provenance": extra_meta,
        });
        let mut blocks: Vec<(&str, DMatrix<f64>)> = Vec::new();
        match &self.set {
            PredictionSet::Band(b) => {
                meta["set"] = json!("band");
                blocks.push(("band_lower", b.lower.clone()));
                blocks.push(("band_upper", b.upper.clone()));
            }
            PredictionSet::Ellipsoid(e) => {
                meta["set"] = json!("ellipsoid");
                meta["degenerate"] = json!(e.steps.iter().map(|s| s.cov.is_degenerate()).collect::<Vec<_>>());
                let m = e.dim();
                let mut covs = DMatrix::zeros(e.n_steps() * m, m);
                for (t, s) in e.steps.iter().enumerate() {
                    covs.rows_mut(t * m, m).copy_from(s.cov.matrix());
                }
                blocks.push(("ellipsoid_covariances", covs));
                let thr: Vec<f64> = e.steps.iter().map(|s| s.threshold).collect();
                let shrink: Vec<f64> = e.steps.iter().map(|s| s.cov.shrinkage_intensity()).collect();
                blocks.push(("ellipsoid_thresholds", DMatrix::from_column_slice(thr.len(), 1, &thr)));
                blocks.push(("ellipsoid_shrinkage", DMatrix::from_column_slice(shrink.len(), 1, &shrink)));
            }
        }
        let mut c = Container::new(CALIBRATION_KIND, meta);
        for (name, m) in blocks {
            c.push_matrix(name, &m);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let method: CpMethod = c.meta_field("method")?;
        let target: UqTarget = c.meta_field("target")?;
        let alpha: f64 = c.meta_field("alpha")?;
        let time_grid: TimeGrid = c.meta_field("time_grid")?;
        let n_calibration: usize = c.meta_field("n_calibration")?;
        let calibration_indices: Vec<usize> = c.meta_field("calibration_indices")?;
        let excluded: Vec<usize> = c.meta_field("excluded")?;
        let kind: String = c.meta_field("set")?;
        let steps = time_grid.n_steps;
        let set = match kind.as_str() {
            "band" => {
                let lower = c.matrix("band_lower")?;
                let upper = c.matrix("band_upper")?;
                if lower.nrows() != steps || lower.shape() != upper.shape() {
                    return Err(Error::Shape("band blocks disagree with the time grid".into()));
                }
                PredictionSet::Band(CalibrationBand {
                    lower,
                    upper,
                    alpha,
                    n_calibration,
                })
            }
            "ellipsoid" => {
                let covs = c.matrix("ellipsoid_covariances")?;
                let thr = c.vector("ellipsoid_thresholds")?;
                let shrink = c.vector("ellipsoid_shrinkage")?;
                let degenerate: Vec<bool> = c.meta_field("degenerate")?;
                let m = covs.ncols();
                if m == 0 || covs.nrows() != steps * m || thr.len() != steps || shrink.len() != steps || degenerate.len() != steps {
                    return Err(Error::Shape("ellipsoid blocks disagree with the time grid".into()));
                }
                let steps = (0..steps)
                    .map(|t| {
                        Ok(EllipsoidStep {
                            cov: ShrunkCovariance::from_parts(covs.rows(t * m, m).into_owned(), shrink[t], degenerate[t])?,
                            threshold: thr[t],
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                PredictionSet::Ellipsoid(CalibrationEllipsoid {
                    steps,
                    alpha,
                    n_calibration,
                })
            }
            other => return Err(Error::Format(format!("unknown prediction-set kind {other:?}"))),
        };
        Ok(Calibration {
            method,
            target,
            alpha,
            time_grid,
            set,
            calibration_indices,
            excluded,
        })
    }
}

pub fn save_calibration(path: impl AsRef<Path>, cal: &Calibration, extra_meta: serde_json::Value) -> Result<()> {
    cal.to_container(extra_meta).write(path)
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Calibration> {
    Calibration::from_container(&Container::read(path, CALIBRATION_KIND)?)
}
