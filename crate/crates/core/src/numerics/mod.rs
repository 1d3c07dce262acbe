//! Statistical and linear-algebra primitives shared by the pipeline.

mod covariance;
mod ode;
mod quantile;
mod svd;

pub use covariance::{ledoit_wolf, mahalanobis_sq, ResidualMatrix, ShrunkCovariance};
pub use ode::{finite_diff_derivative, rk4_step};
pub use quantile::{conformal_quantile, conformal_rank};
pub(crate) use quantile::conformal_quantile_sorted;
pub use svd::{truncated_svd, TruncatedSvd};
