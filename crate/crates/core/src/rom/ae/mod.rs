//! Autoencoder backend: dense encoder/decoder trained jointly with SINDy
//! latent dynamics on a composite KL + derivative-consistency loss.

mod network;
mod tape;
mod train;

pub use network::{
    composite_loss, encode_with_tangent, halving_widths, latent_library, AeParams, Batch, Layer,
    LossEval, LossParts, LossWeights,
};
pub use train::{magnitude_weights, train_ae, AeHyperparams, AeSamples, EpochRecord, TrainedAe};
