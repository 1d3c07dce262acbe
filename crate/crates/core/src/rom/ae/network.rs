use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Tape, Var};
use crate::rom::sindy::{library_matrix, n_features};
use crate::{Error, Result};

/// Fully connected layer `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn init(n_in: usize, n_out: usize, relu: bool, rng: &mut ChaCha8Rng) -> Self {
        // Kaiming (fan-in) for ReLU layers, Xavier for linear outputs.
        let var = if relu {
            2.0 / n_in as f64
        } else {
            2.0 / (n_in + n_out) as f64
        };
        let normal = Normal::new(0.0, var.sqrt()).expect("positive variance");
        Self {
            weight: DMatrix::from_fn(n_out, n_in, |_, _| normal.sample(rng)),
            bias: DVector::zeros(n_out),
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weight * x + &self.bias
    }
}

/// Autoencoder weights plus the jointly trained SINDy coefficients.
///
/// The encoder maps a normalised row to the shape coordinates (ReLU hidden
/// layers, linear output). The decoder mirrors it and ends in a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    /// `n_features x (m - 1)` over the library of `[shape coords, mass]`.
    pub sindy: DMatrix<f64>,
    pub poly_order: usize,
}

/// Widths from input to latent, halving at each layer until `latent`.
pub fn halving_widths(n_bins: usize, latent: usize, n_layers: usize) -> Vec<usize> {
    let mut w = vec![n_bins];
    for k in 1..n_layers {
        w.push((n_bins >> k).max(latent));
    }
    w.push(latent);
    w
}

impl AeParams {
    /// Random initialisation for encoder widths `widths` (input first,
    /// latent last); the decoder uses the reversed widths.
    pub fn init(widths: &[usize], poly_order: usize, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|w| *w == 0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = widths.len() - 1;
        let encoder = (0..n)
            .map(|l| Layer::init(widths[l], widths[l + 1], l + 1 < n, &mut rng))
            .collect();
        let rev: Vec<usize> = widths.iter().rev().copied().collect();
        let decoder = (0..n)
            .map(|l| Layer::init(rev[l], rev[l + 1], l + 1 < n, &mut rng))
            .collect();
        let latent = widths[n];
        Ok(Self {
            encoder,
            decoder,
            sindy: DMatrix::zeros(n_features(latent + 1, poly_order), latent),
            poly_order,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.encoder[0].weight.ncols()
    }

    pub fn latent_shape_dim(&self) -> usize {
        self.encoder.last().expect("non-empty encoder").weight.nrows()
    }

    /// Layer widths of the encoder, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.n_bins()];
        w.extend(self.encoder.iter().map(|l| l.weight.nrows()));
        w
    }

    pub fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.encoder.len();
        let mut h = x.clone();
        for (l, layer) in self.encoder.iter().enumerate() {
            h = layer.apply(&h);
            if l + 1 < n {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        h
    }

    pub fn decode(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.decoder.len();
        let mut h = z.clone();
        for (l, layer) in self.decoder.iter().enumerate() {
            h = layer.apply(&h);
            if l + 1 < n {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        let max = h.max();
        h.apply(|v| *v = (*v - max).exp());
        let s = h.sum();
        h / s
    }

    pub fn all_finite(&self) -> bool {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.sindy.iter().all(|v| v.is_finite())
    }

    /// Visits every parameter (weights, biases as n x 1, SINDy) mutably.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        let mut k = 0;
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            f(k, l.weight.as_mut_slice());
            f(k + 1, l.bias.as_mut_slice());
            k += 2;
        }
        f(k, self.sindy.as_mut_slice());
    }

    pub fn n_param_tensors(&self) -> usize {
        2 * (self.encoder.len() + self.decoder.len()) + 1
    }
}

/// A training batch: normalised rows, their time derivatives and the
/// scaled mass of each row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: DMatrix<f64>,
    pub dx: DMatrix<f64>,
    pub mass: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub dx: f64,
    pub dz: f64,
    /// Added inside the logarithms of the KL term.
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub dx: f64,
    pub dz: f64,
}

/// Composite loss and its gradient, in the same layout as
/// [`AeParams::for_each_param_mut`].
pub struct LossEval {
    pub parts: LossParts,
    pub grads: Vec<Vec<f64>>,
}

struct ParamVars {
    enc: Vec<(Var, Var)>,
    dec: Vec<(Var, Var)>,
    sindy: Var,
}

fn row(b: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, b.len(), b.as_slice())
}

/// Forward pass of a stack of layers on `h` with tangent `t`. Hidden
/// layers use ReLU; the last layer is linear. The tangent follows the
/// Jacobian of the stack, with ReLU masks treated as constants.
fn dense_stack(tape: &mut Tape, layers: &[(Var, Var)], mut h: Var, mut t: Var) -> (Var, Var) {
    let n = layers.len();
    for (l, (w, b)) in layers.iter().enumerate() {
        let lin = tape.matmul_t(h, *w);
        let pre = tape.add_row(lin, *b);
        let tp = tape.matmul_t(t, *w);
        if l + 1 < n {
            h = tape.relu(pre);
            t = tape.mask(tp, pre);
        } else {
            h = pre;
            t = tp;
        }
    }
    (h, t)
}

/// Polynomial library of the columns of `z` built on the tape, matching
/// [`library_matrix`] column order.
fn library_on_tape(tape: &mut Tape, z: Var, order: usize) -> Var {
    let n = tape.value(z).nrows();
    let m = tape.value(z).ncols();
    let ones = tape.leaf(DMatrix::from_element(n, 1, 1.0));
    let cols: Vec<Var> = (0..m).map(|j| tape.col(z, j)).collect();
    let mut feats = vec![ones];
    let mut prev: Vec<(Var, usize)> = vec![(ones, 0)];
    for _ in 1..=order {
        let mut next = Vec::new();
        for &(v, start) in &prev {
            for (j, c) in cols.iter().enumerate().skip(start) {
                let f = if v == ones { *c } else { tape.mul(v, *c) };
                next.push((f, j));
            }
        }
        feats.extend(next.iter().map(|(v, _)| *v));
        prev = next;
    }
    tape.hcat(&feats)
}

/// Evaluates the composite loss
/// `KL(x || x_hat) + w_dx * MSE(dx_hat, dx) + w_dz * MSE(Theta(z) Xi, dz_chain)`
/// and its gradient with respect to every parameter.
pub fn composite_loss(params: &AeParams, batch: &Batch, weights: &LossWeights) -> LossEval {
    let mut tape = Tape::new();
    let vars = ParamVars {
        enc: params
            .encoder
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(row(&l.bias))))
            .collect(),
        dec: params
            .decoder
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(row(&l.bias))))
            .collect(),
        sindy: tape.leaf(params.sindy.clone()),
    };
    let n = batch.x.nrows();
    let n_bins = batch.x.ncols();
    let x = tape.leaf(batch.x.clone());
    let dx = tape.leaf(batch.dx.clone());
    let mass = tape.leaf(DMatrix::from_column_slice(n, 1, batch.mass.as_slice()));

    let (z, dz_chain) = dense_stack(&mut tape, &vars.enc, x, dx);
    let z_full = tape.hcat(&[z, mass]);
    let theta = library_on_tape(&mut tape, z_full, params.poly_order);
    let dz_model = tape.matmul(theta, vars.sindy);

    let (logits, dlogits) = dense_stack(&mut tape, &vars.dec, z, dz_model);
    let x_hat = tape.softmax(logits);
    // Softmax Jacobian-vector product: s * (v - <s, v>).
    let sv = tape.mul(x_hat, dlogits);
    let sv_sum = tape.row_sum(sv);
    let sv_b = tape.broadcast_col(sv_sum, n_bins);
    let centered = tape.sub(dlogits, sv_b);
    let dx_hat = tape.mul(x_hat, centered);

    // KL(x || x_hat) averaged over rows.
    let x_tol = tape.add_scalar(x, weights.tol);
    let ln_x = tape.ln(x_tol);
    let xh_tol = tape.add_scalar(x_hat, weights.tol);
    let ln_xh = tape.ln(xh_tol);
    let diff = tape.sub(ln_x, ln_xh);
    let kl_terms = tape.mul(x, diff);
    let kl_sum = tape.sum(kl_terms);
    let recon = tape.scale(kl_sum, 1.0 / n as f64);

    let ex = tape.sub(dx_hat, dx);
    let ex2 = tape.mul(ex, ex);
    let l_dx = tape.mean(ex2);
    let ez = tape.sub(dz_model, dz_chain);
    let ez2 = tape.mul(ez, ez);
    let l_dz = tape.mean(ez2);

    let a = tape.scale(l_dx, weights.dx);
    let b = tape.scale(l_dz, weights.dz);
    let ab = tape.add(a, b);
    let total = tape.add(recon, ab);

    let g = tape.backward(total);
    let mut grads = Vec::with_capacity(params.n_param_tensors());
    for (w, b) in vars.enc.iter().chain(&vars.dec) {
        grads.push(g.get(&tape, *w).as_slice().to_vec());
        grads.push(g.get(&tape, *b).as_slice().to_vec());
    }
    grads.push(g.get(&tape, vars.sindy).as_slice().to_vec());

    LossEval {
        parts: LossParts {
            total: tape.scalar(total),
            recon: tape.scalar(recon),
            dx: tape.scalar(l_dx),
            dz: tape.scalar(l_dz),
        },
        grads,
    }
}

/// Encoded shape coordinates and their chain-rule time derivatives for a
/// batch, without building a gradient tape.
pub fn encode_with_tangent(params: &AeParams, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = params.encoder.len();
    let mut h = x.clone();
    let mut t = dx.clone();
    for (l, layer) in params.encoder.iter().enumerate() {
        let wt = layer.weight.transpose();
        let mut pre = &h * &wt;
        for mut r in pre.row_iter_mut() {
            r += layer.bias.transpose();
        }
        let tp = &t * &wt;
        if l + 1 < n {
            t = tp.zip_map(&pre, |v, p| if p > 0.0 { v } else { 0.0 });
            h = pre.map(|v| v.max(0.0));
        } else {
            t = tp;
            h = pre;
        }
    }
    (h, t)
}

/// Library of `[z, mass]` rows as a plain matrix.
pub fn latent_library(z: &DMatrix<f64>, mass: &DVector<f64>, order: usize) -> DMatrix<f64> {
    let full = DMatrix::from_fn(z.nrows(), z.ncols() + 1, |i, j| {
        if j < z.ncols() {
            z[(i, j)]
        } else {
            mass[i]
        }
    });
    library_matrix(&full, order)
}
