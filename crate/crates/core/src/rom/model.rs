use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ae::{train_ae, AeHyperparams, AeParams, AeSamples, EpochRecord, Layer};
use super::latent::{LatentState, LatentTrajectory};
use super::pod::{check_normalized, PodCodec};
use super::sindy::{default_feature_names, sindy_fit, SindyModel, SindyOptions};
use crate::container::Container;
use crate::dataset::{BinGrid, NormalizedDsdTrajectory, TimeGrid};
use crate::numerics::{finite_diff_derivative, rk4_step};
use crate::{Error, Result};

pub const MODEL_KIND: &str = "rom_model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Pod,
    Autoencoder,
}

/// How the SINDy coefficients of the autoencoder backend are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SindyTraining {
    /// Refit by thresholded least squares on the encoded training data.
    PostHoc,
    /// Keep the coefficients trained jointly with the network.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RomConfig {
    pub backend: BackendKind,
    /// Latent dimension `m`, including the mass coordinate.
    pub latent_dim: usize,
    pub sindy: SindyOptions,
    /// Gaussian noise added to latent derivatives before the SINDy fit, as
    /// a fraction of each coordinate's RMS derivative.
    pub derivative_noise: f64,
    pub noise_seed: u64,
    pub sindy_training: SindyTraining,
    pub ae: AeHyperparams,
}

impl Default for RomConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Pod,
            latent_dim: 4,
            sindy: SindyOptions::default(),
            derivative_noise: 1e-3,
            noise_seed: 0,
            sindy_training: SindyTraining::PostHoc,
            ae: AeHyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Codec {
    Pod(PodCodec),
    Autoencoder(AeParams),
}

/// Encoder, decoder and latent dynamics over fixed grids.
#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    pub codec: Codec,
    pub sindy: Option<SindyModel>,
    pub bin_grid: BinGrid,
    pub time_grid: TimeGrid,
    pub mass_scale: f64,
    pub config: RomConfig,
    /// Training history of the autoencoder backend; empty for POD.
    pub history: Vec<EpochRecord>,
}

fn add_relative_noise(dz: &mut DMatrix<f64>, sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..dz.ncols() {
        let rms = (dz.column(j).iter().map(|v| v * v).sum::<f64>() / dz.nrows().max(1) as f64).sqrt();
        for i in 0..dz.nrows() {
            let g: f64 = StandardNormal.sample(&mut rng);
            dz[(i, j)] += sigma * rms * g;
        }
    }
}

/// Stacks per-trajectory latent coordinates (with mass) and their finite
/// difference derivatives into SINDy design data.
fn latent_regression_data(
    coords: &[DMatrix<f64>],
    trajectories: &[&NormalizedDsdTrajectory],
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = coords[0].ncols();
    let n: usize = coords.iter().map(|c| c.nrows()).sum();
    let mut z = DMatrix::zeros(n, k + 1);
    let mut dz = DMatrix::zeros(n, k);
    let mut r = 0;
    for (c, traj) in coords.iter().zip(trajectories) {
        let d = finite_diff_derivative(c, dt)?;
        for t in 0..c.nrows() {
            for j in 0..k {
                z[(r, j)] = c[(t, j)];
                dz[(r, j)] = d[(t, j)];
            }
            z[(r, k)] = traj.scaled_mass[t];
            r += 1;
        }
    }
    Ok((z, dz))
}

fn validate_training_set(trajectories: &[&NormalizedDsdTrajectory], bin_grid: &BinGrid, time_grid: &TimeGrid) -> Result<()> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("no training trajectories".into()));
    }
    for t in trajectories {
        if t.n_bins() != bin_grid.n_bins {
            return Err(Error::DimensionMismatch {
                expected: bin_grid.n_bins,
                got: t.n_bins(),
            });
        }
        if t.n_steps() != time_grid.n_steps {
            return Err(Error::DimensionMismatch {
                expected: time_grid.n_steps,
                got: t.n_steps(),
            });
        }
    }
    Ok(())
}

/// Fits a ROM on normalised training trajectories.
pub fn fit_rom(
    trajectories: &[&NormalizedDsdTrajectory],
    bin_grid: &BinGrid,
    time_grid: &TimeGrid,
    mass_scale: f64,
    config: &RomConfig,
) -> Result<RomModel> {
    validate_training_set(trajectories, bin_grid, time_grid)?;
    if config.latent_dim < 2 || config.latent_dim > bin_grid.n_bins {
        return Err(Error::InvalidArgument(format!(
            "latent dimension {} must be in 2..={}",
            config.latent_dim, bin_grid.n_bins
        )));
    }
    let rank = config.latent_dim - 1;
    let dt = time_grid.dt;

    let (codec, history) = match config.backend {
        BackendKind::Pod => {
            let steps = time_grid.n_steps;
            let mut rows = DMatrix::zeros(trajectories.len() * steps, bin_grid.n_bins);
            for (i, t) in trajectories.iter().enumerate() {
                rows.rows_mut(i * steps, steps).copy_from(&t.shapes);
            }
            (Codec::Pod(PodCodec::fit(&rows, rank)?), Vec::new())
        }
        BackendKind::Autoencoder => {
            let samples = trajectories
                .iter()
                .map(|t| {
                    Ok(AeSamples {
                        x: t.shapes.clone(),
                        dx: finite_diff_derivative(&t.shapes, dt)?,
                        mass: DVector::from_column_slice(&t.scaled_mass),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let trained = train_ae(&samples, rank, config.sindy.poly_order, &config.ae)?;
            (Codec::Autoencoder(trained.params), trained.history)
        }
    };

    let mut model = RomModel {
        codec,
        sindy: None,
        bin_grid: *bin_grid,
        time_grid: *time_grid,
        mass_scale,
        config: config.clone(),
        history,
    };

    let sindy = match (&model.codec, config.sindy_training) {
        (Codec::Autoencoder(p), SindyTraining::Joint) => SindyModel {
            coefficients: p.sindy.clone(),
            poly_order: p.poly_order,
            n_inputs: rank + 1,
            feature_names: default_feature_names(rank + 1, p.poly_order),
        },
        _ => {
            let coords: Vec<DMatrix<f64>> = trajectories.iter().map(|t| model.encode_shapes(&t.shapes)).collect();
            let (z, mut dz) = latent_regression_data(&coords, trajectories, dt)?;
            add_relative_noise(&mut dz, config.derivative_noise, config.noise_seed);
            sindy_fit(&z, &dz, &config.sindy)?
        }
    };
    model.sindy = Some(sindy);
    Ok(model)
}

impl RomModel {
    /// Number of shape coordinates, `m - 1`.
    pub fn shape_dim(&self) -> usize {
        match &self.codec {
            Codec::Pod(p) => p.rank(),
            Codec::Autoencoder(a) => a.latent_shape_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.shape_dim() + 1
    }

    pub fn backend(&self) -> BackendKind {
        match self.codec {
            Codec::Pod(_) => BackendKind::Pod,
            Codec::Autoencoder(_) => BackendKind::Autoencoder,
        }
    }

    fn encode_vec(&self, row: &DVector<f64>) -> DVector<f64> {
        match &self.codec {
            Codec::Pod(p) => p.encode_unchecked(row),
            Codec::Autoencoder(a) => a.encode(row),
        }
    }

    /// Encodes every row of `shapes` (rows already normalised).
    pub(crate) fn encode_shapes(&self, shapes: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.shape_dim();
        let mut out = DMatrix::zeros(shapes.nrows(), k);
        for (i, r) in shapes.row_iter().enumerate() {
            let c = self.encode_vec(&r.transpose());
            out.row_mut(i).copy_from(&c.transpose());
        }
        out
    }

    /// Maps a normalised row to latent space; the mass bypasses the encoder.
    pub fn encode(&self, row: &[f64], scaled_mass: f64) -> Result<LatentState> {
        check_normalized(row, self.bin_grid.n_bins)?;
        let c = self.encode_vec(&DVector::from_column_slice(row));
        Ok(LatentState::new(c, scaled_mass))
    }

    /// Maps a latent state to a normalised row (non-negative, unit sum).
    pub fn decode(&self, latent: &LatentState) -> Result<DVector<f64>> {
        let k = self.shape_dim();
        if latent.shape_coords.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: latent.shape_coords.len(),
            });
        }
        match &self.codec {
            Codec::Pod(p) => p.decode(&latent.shape_coords),
            Codec::Autoencoder(a) => Ok(a.decode(&latent.shape_coords)),
        }
    }

    pub fn reconstruct(&self, row: &[f64], scaled_mass: f64) -> Result<DVector<f64>> {
        self.decode(&self.encode(row, scaled_mass)?)
    }

    pub fn sindy(&self) -> Result<&SindyModel> {
        self.sindy.as_ref().ok_or(Error::NotFitted("latent dynamics"))
    }

    fn rhs(&self, sindy: &SindyModel, z: &DVector<f64>) -> DVector<f64> {
        let k = self.shape_dim();
        let shape = sindy.predict(z.as_slice()).expect("state dimension checked by caller");
        DVector::from_fn(k + 1, |i, _| if i < k { shape[i] } else { 0.0 })
    }

    /// Full latent time derivative; the mass component is always zero.
    pub fn latent_derivative(&self, z: &LatentState) -> Result<DVector<f64>> {
        let sindy = self.sindy()?;
        if z.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: z.dim(),
            });
        }
        Ok(self.rhs(sindy, &z.to_vector()))
    }

    /// RK4 rollout from `z0` over `time`; the first row is `z0`.
    pub fn rollout_latent(&self, z0: &LatentState, time: &TimeGrid) -> Result<LatentTrajectory> {
        let sindy = self.sindy()?;
        if z0.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: z0.dim(),
            });
        }
        let m = self.latent_dim();
        let mut states = DMatrix::zeros(time.n_steps, m);
        let mut z = z0.to_vector();
        states.row_mut(0).copy_from(&z.transpose());
        for step in 1..time.n_steps {
            z = rk4_step(|s| self.rhs(sindy, s), &z, time.dt).map_err(|e| match e {
                Error::LatentDiverged { .. } => Error::LatentDiverged { step },
                other => other,
            })?;
            // Mass is conserved exactly, not just up to RK4 rounding.
            z[m - 1] = z0.scaled_mass;
            states.row_mut(step).copy_from(&z.transpose());
        }
        Ok(LatentTrajectory { states })
    }

    /// Encode, roll out in latent space and decode every timestep.
    pub fn predict_end_to_end(&self, row0: &[f64], scaled_mass: f64, time: &TimeGrid) -> Result<NormalizedDsdTrajectory> {
        let z0 = self.encode(row0, scaled_mass)?;
        let traj = self.rollout_latent(&z0, time)?;
        let k = self.shape_dim();
        let mut shapes = DMatrix::zeros(time.n_steps, self.bin_grid.n_bins);
        for t in 0..time.n_steps {
            let c = DVector::from_fn(k, |i, _| traj.states[(t, i)]);
            let row = self.decode(&LatentState::new(c, scaled_mass))?;
            shapes.row_mut(t).copy_from(&row.transpose());
        }
        Ok(NormalizedDsdTrajectory {
            shapes,
            scaled_mass: vec![scaled_mass; time.n_steps],
        })
    }

    pub fn to_container(&self, extra_meta: serde_json::Value) -> Result<Container> {
        let sindy = self.sindy()?;
        let widths = match &self.codec {
            Codec::Autoencoder(a) => Some(a.widths()),
            Codec::Pod(_) => None,
        };
        let mut c = Container::new(
            MODEL_KIND,
            json!({
                "backend": self.backend(),
                "config": self.config,
                "bin_grid": self.bin_grid,
                "time_grid": self.time_grid,
                "mass_scale": self.mass_scale,
                "sindy_poly_order": sindy.poly_order,
                "sindy_n_inputs": sindy.n_inputs,
                "sindy_feature_names": sindy.feature_names,
                "ae_widths": widths,
                "history": self.history,
                "provenance": extra_meta,
            }),
        );
        match &self.codec {
            Codec::Pod(p) => {
                c.push_vector("pod_mean", p.mean.as_slice());
                c.push_matrix("pod_basis", &p.basis);
                c.push_vector("pod_singular_values", &p.singular_values);
            }
            Codec::Autoencoder(a) => {
                for (l, layer) in a.encoder.iter().enumerate() {
                    c.push_matrix(format!("enc_w{l}"), &layer.weight);
                    c.push_vector(format!("enc_b{l}"), layer.bias.as_slice());
                }
                for (l, layer) in a.decoder.iter().enumerate() {
                    c.push_matrix(format!("dec_w{l}"), &layer.weight);
                    c.push_vector(format!("dec_b{l}"), layer.bias.as_slice());
                }
                c.push_matrix("ae_sindy", &a.sindy);
            }
        }
        c.push_matrix("sindy_coefficients", &sindy.coefficients);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let backend: BackendKind = c.meta_field("backend")?;
        let config: RomConfig = c.meta_field("config")?;
        let bin_grid: BinGrid = c.meta_field("bin_grid")?;
        let time_grid: TimeGrid = c.meta_field("time_grid")?;
        bin_grid.validate()?;
        time_grid.validate()?;
        let poly_order: usize = c.meta_field("sindy_poly_order")?;
        let n_inputs: usize = c.meta_field("sindy_n_inputs")?;
        let codec = match backend {
            BackendKind::Pod => {
                let mean = DVector::from_vec(c.vector("pod_mean")?);
                let basis = c.matrix("pod_basis")?;
                if mean.len() != bin_grid.n_bins || basis.nrows() != bin_grid.n_bins {
                    return Err(Error::Shape("POD blocks disagree with the bin grid".into()));
                }
                Codec::Pod(PodCodec {
                    mean,
                    basis,
                    singular_values: c.vector("pod_singular_values")?,
                })
            }
            BackendKind::Autoencoder => {
                let widths: Vec<usize> = c.meta_field::<Option<Vec<usize>>>("ae_widths")?
                    .ok_or_else(|| Error::Format("autoencoder model without layer widths".into()))?;
                let n = widths.len() - 1;
                let layer = |w: String, b: String| -> Result<Layer> {
                    Ok(Layer {
                        weight: c.matrix(&w)?,
                        bias: DVector::from_vec(c.vector(&b)?),
                    })
                };
                let encoder = (0..n).map(|l| layer(format!("enc_w{l}"), format!("enc_b{l}"))).collect::<Result<Vec<_>>>()?;
                let decoder = (0..n).map(|l| layer(format!("dec_w{l}"), format!("dec_b{l}"))).collect::<Result<Vec<_>>>()?;
                Codec::Autoencoder(AeParams {
                    encoder,
                    decoder,
                    sindy: c.matrix("ae_sindy")?,
                    poly_order,
                })
            }
        };
        let coefficients = c.matrix("sindy_coefficients")?;
        let sindy = SindyModel {
            coefficients,
            poly_order,
            n_inputs,
            feature_names: c.meta_field("sindy_feature_names")?,
        };
        let model = Self {
            codec,
            sindy: Some(sindy),
            bin_grid,
            time_grid,
            mass_scale: c.meta_field("mass_scale")?,
            config,
            history: c.meta_field("history")?,
        };
        if n_inputs != model.latent_dim() {
            return Err(Error::Shape("SINDy input count disagrees with the latent dimension".into()));
        }
        Ok(model)
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &RomModel, extra_meta: serde_json::Value) -> Result<()> {
    model.to_container(extra_meta)?.write(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RomModel> {
    RomModel::from_container(&Container::read(path, MODEL_KIND)?)
}
