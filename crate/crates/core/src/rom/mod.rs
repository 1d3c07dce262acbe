//! Latent-space reduced-order models: encoder, decoder and SINDy latent
//! dynamics, with a POD backend and an autoencoder backend.
//!
//! The latent state holds `m - 1` shape coordinates produced by the encoder
//! and the scaled total mass, which bypasses the encoder. Coalescence
//! conserves mass, so the mass coordinate has zero dynamics.

pub mod ae;
mod latent;
mod model;
mod pod;
mod sindy;

pub use latent::{LatentState, LatentTrajectory};
pub use model::{
    fit_rom, load_model, save_model, BackendKind, Codec, RomConfig, RomModel, SindyTraining,
    MODEL_KIND,
};
pub use pod::{PodCodec, ROW_SUM_TOL};
pub use sindy::{
    feature_names, library_matrix, n_features, sindy_features, sindy_fit, SindyModel,
    SindyOptions,
};
