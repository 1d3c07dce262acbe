use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{composite_loss, encode_with_tangent, halving_widths, AeParams, Batch, LossWeights};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeHyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Added inside the KL logarithms.
    pub kl_tol: f64,
    /// Multipliers on the magnitude-ratio loss weights.
    pub dx_weight_factor: f64,
    pub dz_weight_factor: f64,
    /// Number of dense layers in the encoder (and decoder).
    pub n_layers: usize,
    /// Fraction of training trajectories held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for AeHyperparams {
    fn default() -> Self {
        Self {
            batch_size: 25,
            learning_rate: 0.0042,
            weight_decay: 1e-3,
            patience: 50,
            max_epochs: 1000,
            kl_tol: 1e-8,
            dx_weight_factor: 1.0,
            dz_weight_factor: 1.0,
            n_layers: 4,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// One epoch of training bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedAe {
    pub params: AeParams,
    pub weights: LossWeights,
    pub history: Vec<EpochRecord>,
}

/// Training snapshots of one trajectory: rows, row derivatives, mass.
#[derive(Debug, Clone)]
pub struct AeSamples {
    pub x: DMatrix<f64>,
    pub dx: DMatrix<f64>,
    pub mass: DVector<f64>,
}

impl AeSamples {
    fn concat(parts: &[&AeSamples]) -> AeSamples {
        let n: usize = parts.iter().map(|p| p.x.nrows()).sum();
        let bins = parts[0].x.ncols();
        let mut x = DMatrix::zeros(n, bins);
        let mut dx = DMatrix::zeros(n, bins);
        let mut mass = DVector::zeros(n);
        let mut r = 0;
        for p in parts {
            let k = p.x.nrows();
            x.rows_mut(r, k).copy_from(&p.x);
            dx.rows_mut(r, k).copy_from(&p.dx);
            mass.rows_mut(r, k).copy_from(&p.mass);
            r += k;
        }
        AeSamples { x, dx, mass }
    }

    fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            x: DMatrix::from_fn(idx.len(), self.x.ncols(), |i, j| self.x[(idx[i], j)]),
            dx: DMatrix::from_fn(idx.len(), self.dx.ncols(), |i, j| self.dx[(idx[i], j)]),
            mass: DVector::from_fn(idx.len(), |i, _| self.mass[idx[i]]),
        }
    }

    fn all(&self) -> Batch {
        Batch {
            x: self.x.clone(),
            dx: self.dx.clone(),
            mass: self.mass.clone(),
        }
    }
}

fn mean_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum::<f64>() / m.len().max(1) as f64
}

/// Magnitude-ratio weights: `w_dx = f * mean|x| / mean|dx|` and the latent
/// analogue evaluated with the initial encoder.
pub fn magnitude_weights(params: &AeParams, data: &AeSamples, hp: &AeHyperparams) -> LossWeights {
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let (z, dz) = encode_with_tangent(params, &data.x, &data.dx);
    LossWeights {
        dx: hp.dx_weight_factor * ratio(mean_abs(&data.x), mean_abs(&data.dx)),
        dz: hp.dz_weight_factor * ratio(mean_abs(&z), mean_abs(&dz)),
        tol: hp.kl_tol,
    }
}

struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
    decay: f64,
}

impl AdamW {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &mut AeParams, lr: f64, decay: f64) -> Self {
        let mut m = Vec::new();
        params.for_each_param_mut(|_, v| m.push(vec![0.0; v.len()]));
        Self {
            v: m.clone(),
            m,
            t: 0,
            lr,
            decay,
        }
    }

    fn step(&mut self, params: &mut AeParams, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let (m, v, lr, decay) = (&mut self.m, &mut self.v, self.lr, self.decay);
        params.for_each_param_mut(|k, p| {
            for i in 0..p.len() {
                let g = grads[k][i];
                m[k][i] = Self::B1 * m[k][i] + (1.0 - Self::B1) * g;
                v[k][i] = Self::B2 * v[k][i] + (1.0 - Self::B2) * g * g;
                let mh = m[k][i] / c1;
                let vh = v[k][i] / c2;
                p[i] -= lr * (mh / (vh.sqrt() + Self::EPS) + decay * p[i]);
            }
        });
    }
}

/// Trains the autoencoder and its SINDy coefficients jointly on per-trajectory
/// sample sets, holding out whole trajectories for early stopping.
pub fn train_ae(trajectories: &[AeSamples], latent_shape_dim: usize, poly_order: usize, hp: &AeHyperparams) -> Result<TrainedAe> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("no training trajectories".into()));
    }
    if hp.batch_size == 0 || !(hp.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch size and learning rate must be positive".into()));
    }
    let n_bins = trajectories[0].x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if trajectories.len() > 1 {
        ((trajectories.len() as f64 * hp.validation_fraction).round() as usize).clamp(1, trajectories.len() - 1)
    } else {
        0
    };
    let (val_ids, train_ids) = order.split_at(n_val);
    let train = AeSamples::concat(&train_ids.iter().map(|&i| &trajectories[i]).collect::<Vec<_>>());
    let val = if n_val > 0 {
        AeSamples::concat(&val_ids.iter().map(|&i| &trajectories[i]).collect::<Vec<_>>())
    } else {
        train.clone()
    };

    let widths = halving_widths(n_bins, latent_shape_dim, hp.n_layers);
    let mut params = AeParams::init(&widths, poly_order, hp.seed)?;
    let weights = magnitude_weights(&params, &train, hp);
    let mut opt = AdamW::new(&mut params, hp.learning_rate, hp.weight_decay);

    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut idx: Vec<usize> = (0..train.x.nrows()).collect();
    for epoch in 0..hp.max_epochs {
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for (b, chunk) in idx.chunks(hp.batch_size).enumerate() {
            let eval = composite_loss(&params, &train.batch(chunk), &weights);
            if !eval.parts.total.is_finite() || eval.grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            opt.step(&mut params, &eval.grads);
            total += eval.parts.total * chunk.len() as f64;
            count += chunk.len();
        }
        let val_loss = composite_loss(&params, &val.all(), &weights).parts.total;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / count as f64,
            validation_loss: val_loss,
            best_validation_loss: best_val,
        });
        log::debug!("epoch {epoch}: train {:.6e} val {val_loss:.6e}", total / count as f64);
        if since_best >= hp.patience {
            break;
        }
    }
    Ok(TrainedAe {
        params: best,
        weights,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_trajectories(n: usize, bins: usize, steps: usize) -> Vec<AeSamples> {
        (0..n)
            .map(|k| {
                let phase = 0.3 * k as f64;
                let x = DMatrix::from_fn(steps, bins, |t, j| {
                    1.0 + 0.5 * ((j as f64 * 0.7) + phase + 0.05 * t as f64).sin()
                });
                let x = DMatrix::from_fn(steps, bins, |t, j| x[(t, j)] / x.row(t).sum());
                let dx = crate::numerics::finite_diff_derivative(&x, 1.0).unwrap();
                AeSamples {
                    x,
                    dx,
                    mass: DVector::from_element(steps, 0.5 + 0.05 * k as f64),
                }
            })
            .collect()
    }

    #[test]
    fn training_reduces_loss_and_tracks_best_so_far() {
        let data = toy_trajectories(10, 8, 12);
        let hp = AeHyperparams {
            max_epochs: 40,
            patience: 10,
            n_layers: 2,
            ..Default::default()
        };
        let trained = train_ae(&data, 2, 2, &hp).unwrap();
        let h = &trained.history;
        assert!(!h.is_empty());
        assert!(h.windows(2).all(|w| w[1].best_validation_loss <= w[0].best_validation_loss));
        assert!(h.last().unwrap().best_validation_loss < h[0].validation_loss);
        assert!(trained.params.all_finite());
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let data = toy_trajectories(6, 8, 10);
        let hp = AeHyperparams {
            max_epochs: 5,
            n_layers: 2,
            ..Default::default()
        };
        let a = train_ae(&data, 2, 2, &hp).unwrap();
        let b = train_ae(&data, 2, 2, &hp).unwrap();
        assert_eq!(a.params, b.params);
    }
}
