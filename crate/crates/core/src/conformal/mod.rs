//! Conformal calibration of ROM predictions: tailwise bands for
//! distribution-valued outputs and Mahalanobis ellipsoids for latent states.

mod band;
mod calibration;
mod ellipsoid;
mod pipeline;
mod residuals;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::SplitScheme;
use crate::rom::RomModel;

pub use band::{calibrate_band, CalibrationBand};
pub use calibration::{
    calibrate, load_calibration, save_calibration, Calibration, PredictionSet, CALIBRATION_KIND,
};
pub use ellipsoid::{calibrate_ellipsoid, CalibrationEllipsoid, EllipsoidStep};
pub use pipeline::{calibration_residuals, fit_method, run_cp_pipeline, CpData, FittedMethod};
pub use residuals::{compute_residuals, Residuals};

/// Which ROM output is being calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UqTarget {
    /// `D(E(x_t))` against `x_t`.
    Reconstruction,
    /// Latent rollout against the encoded truth `E(x_t)`.
    LatentDynamics,
    /// Decoded rollout against `x_t`.
    EndToEnd,
}

impl UqTarget {
    pub const ALL: [UqTarget; 3] = [
        UqTarget::Reconstruction,
        UqTarget::LatentDynamics,
        UqTarget::EndToEnd,
    ];

    /// Residual dimension for `model`: bins for DSD outputs, the full latent
    /// state (mass included) for the dynamics target.
    pub fn n_coords(&self, model: &RomModel) -> usize {
        match self {
            UqTarget::LatentDynamics => model.latent_dim(),
            _ => model.bin_grid.n_bins,
        }
    }

    /// Latent outputs get ellipsoids, distribution outputs get bands.
    pub fn uses_ellipsoid(&self) -> bool {
        matches!(self, UqTarget::LatentDynamics)
    }
}

impl fmt::Display for UqTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UqTarget::Reconstruction => "reconstruction",
            UqTarget::LatentDynamics => "latent_dynamics",
            UqTarget::EndToEnd => "end_to_end",
        })
    }
}

/// Source of the calibration residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CpMethod {
    /// Residuals on the training data itself.
    Vanilla,
    /// Residuals on a held-out calibration set.
    Split,
    /// Pooled out-of-fold residuals from `k` refits.
    CvPlus { k: usize },
}

impl CpMethod {
    pub const DEFAULT_FOLDS: usize = 20;

    /// The data split each method uses by default.
    pub fn default_scheme(&self) -> SplitScheme {
        match self {
            CpMethod::Vanilla => SplitScheme::vanilla(),
            CpMethod::Split => SplitScheme::split(),
            CpMethod::CvPlus { k } => SplitScheme::CvPlus {
                train_frac: 0.8,
                k: *k,
            },
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        match self {
            CpMethod::CvPlus { k } if *k < 2 => Err(crate::Error::InvalidArgument(format!(
                "CV+ needs at least 2 folds, got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CpMethod::Vanilla => "vanilla",
            CpMethod::Split => "split",
            CpMethod::CvPlus { .. } => "cv_plus",
        })
    }
}
