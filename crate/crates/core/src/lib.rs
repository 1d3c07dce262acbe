//! Post hoc conformal uncertainty quantification for latent-space
//! reduced-order models.
//!
//! The crate is organised along the ROM pipeline:
//!
//! - [`numerics`]: conformal quantiles, Ledoit-Wolf shrinkage, Mahalanobis
//!   scores, truncated SVD, RK4 and finite differences.
//! - [`dataset`]: a synthetic droplet-coalescence generator on a log-radius
//!   bin grid, mass normalisation, and train/calibration/test splits.
//! - [`rom`]: encoder/decoder/latent-dynamics models with a POD backend and
//!   an autoencoder backend, both paired with SINDy latent dynamics.
//! - [`conformal`]: vanilla, split and CV+ calibration of tailwise bands
//!   (distribution-valued outputs) and Mahalanobis ellipsoids (latent outputs).
//! - [`metrics`]: empirical coverage, interval widths, CSV and SVG export.
//!
//! All persisted artifacts share the [`container`] format.

pub mod conformal;
pub mod container;
pub mod dataset;
mod error;
pub mod metrics;
pub mod numerics;
pub mod rom;

pub use error::{Error, Result};
