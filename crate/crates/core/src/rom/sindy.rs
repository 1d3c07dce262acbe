//! Polynomial-library SINDy fitted by sequentially thresholded least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of monomials of total degree `<= order` in `n_inputs` variables,
/// i.e. `C(n_inputs + order, order)`.
pub fn n_features(n_inputs: usize, order: usize) -> usize {
    let mut c = 1usize;
    for k in 1..=order {
        c = c * (n_inputs + k) / k;
    }
    c
}

/// Monomials as sorted index lists, graded-lexicographic: the constant, then
/// each degree in turn with `i1 <= i2 <= ...` in lexicographic order.
fn monomials(n_inputs: usize, order: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, start: usize, left: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for i in start..n {
            prefix.push(i);
            extend(prefix, i, left - 1, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(n_features(n_inputs, order));
    for degree in 0..=order {
        extend(&mut Vec::with_capacity(degree), 0, degree, n_inputs, &mut out);
    }
    out
}

/// Polynomial library evaluated at one state:
/// `[1, z1, ..., zm, z1^2, z1 z2, ..., zm^2, ...]`.
pub fn sindy_features(z: &[f64], poly_order: usize) -> Vec<f64> {
    monomials(z.len(), poly_order)
        .iter()
        .map(|m| m.iter().map(|&i| z[i]).product())
        .collect()
}

/// Human-readable names matching [`sindy_features`], e.g. `z1*z3`.
pub fn feature_names(input_names: &[String], poly_order: usize) -> Vec<String> {
    monomials(input_names.len(), poly_order)
        .iter()
        .map(|m| {
            if m.is_empty() {
                "1".to_string()
            } else {
                m.iter()
                    .map(|&i| input_names[i].as_str())
                    .collect::<Vec<_>>()
                    .join("*")
            }
        })
        .collect()
}

/// Library matrix with one row per state (row of `z`).
pub fn library_matrix(z: &DMatrix<f64>, poly_order: usize) -> DMatrix<f64> {
    let monos = monomials(z.ncols(), poly_order);
    DMatrix::from_fn(z.nrows(), monos.len(), |r, c| {
        monos[c].iter().map(|&i| z[(r, i)]).product()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SindyOptions {
    pub poly_order: usize,
    /// Sparsity threshold on coefficients expressed in standardized units
    /// (library columns and targets scaled to unit RMS).
    pub threshold: f64,
    /// Ridge parameter added to the standardized normal equations.
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for SindyOptions {
    fn default() -> Self {
        Self {
            poly_order: 2,
            threshold: 0.05,
            ridge: 1e-6,
            max_iter: 20,
        }
    }
}

/// Sparse polynomial model `dz/dt = Theta(z) * coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct SindyModel {
    /// `n_features x n_targets`; entries outside the support are exactly 0.
    pub coefficients: DMatrix<f64>,
    pub poly_order: usize,
    pub n_inputs: usize,
    pub feature_names: Vec<String>,
}

impl SindyModel {
    pub fn zeros(n_inputs: usize, n_targets: usize, poly_order: usize) -> Self {
        Self {
            coefficients: DMatrix::zeros(n_features(n_inputs, poly_order), n_targets),
            poly_order,
            n_inputs,
            feature_names: default_feature_names(n_inputs, poly_order),
        }
    }

    pub fn n_targets(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Evaluates the right-hand side at `z`.
    pub fn predict(&self, z: &[f64]) -> Result<DVector<f64>> {
        if z.len() != self.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs,
                got: z.len(),
            });
        }
        let theta = DVector::from_vec(sindy_features(z, self.poly_order));
        Ok(self.coefficients.tr_mul(&theta))
    }

    /// Boolean support mask, same shape as `coefficients`.
    pub fn support(&self) -> Vec<Vec<bool>> {
        (0..self.coefficients.ncols())
            .map(|j| self.coefficients.column(j).iter().map(|c| *c != 0.0).collect())
            .collect()
    }

    /// One line per target: `d(name)/dt = c * feature + ...`.
    pub fn equations(&self, target_names: &[String]) -> Vec<String> {
        (0..self.n_targets())
            .map(|j| {
                let terms: Vec<String> = self
                    .coefficients
                    .column(j)
                    .iter()
                    .zip(&self.feature_names)
                    .filter(|(c, _)| **c != 0.0)
                    .map(|(c, f)| format!("{c:+.6e} {f}"))
                    .collect();
                let lhs = target_names.get(j).cloned().unwrap_or_else(|| format!("y{}", j + 1));
                if terms.is_empty() {
                    format!("d{lhs}/dt = 0")
                } else {
                    format!("d{lhs}/dt = {}", terms.join(" "))
                }
            })
            .collect()
    }
}

pub(crate) fn default_feature_names(n_inputs: usize, poly_order: usize) -> Vec<String> {
    let names: Vec<String> = (1..=n_inputs).map(|i| format!("z{i}")).collect();
    feature_names(&names, poly_order)
}

fn rms(col: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in col {
        s += v * v;
        n += 1;
    }
    (s / n.max(1) as f64).sqrt()
}

/// Solves `(G[S,S] + ridge I) x = b[S]` for the support `S`.
fn solve_on_support(g: &DMatrix<f64>, b: &DVector<f64>, support: &[usize], ridge: f64) -> Result<DVector<f64>> {
    let k = support.len();
    let mut gs = DMatrix::from_fn(k, k, |i, j| g[(support[i], support[j])]);
    for i in 0..k {
        gs[(i, i)] += ridge;
    }
    let bs = DVector::from_fn(k, |i, _| b[support[i]]);
    let chol = gs.clone().cholesky().ok_or_else(|| {
        Error::RankDeficient(format!("normal equations on {k} library terms are singular"))
    })?;
    if ridge == 0.0 {
        let l = chol.l();
        let diag: Vec<f64> = (0..k).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 1e-12 * max) {
            return Err(Error::RankDeficient(format!(
                "library of {k} terms is numerically collinear"
            )));
        }
    }
    Ok(chol.solve(&bs))
}

/// Fits `dz ~ Theta(z) Xi` by sequentially thresholded least squares.
///
/// Each row of `z` is a state and the matching row of `dz` its time
/// derivative; `dz` may have fewer columns than `z` (targets are a subset
/// of the library inputs). Columns of the library and of `dz` are scaled to
/// unit RMS before fitting, so `threshold` is dimensionless.
pub fn sindy_fit(z: &DMatrix<f64>, dz: &DMatrix<f64>, options: &SindyOptions) -> Result<SindyModel> {
    if z.nrows() != dz.nrows() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            got: dz.nrows(),
        });
    }
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::InvalidArgument("SINDy needs at least one sample and one input".into()));
    }
    if options.poly_order == 0 {
        return Err(Error::InvalidArgument("polynomial order must be >= 1".into()));
    }
    if !(options.threshold >= 0.0) || !(options.ridge >= 0.0) {
        return Err(Error::InvalidArgument("threshold and ridge must be non-negative".into()));
    }
    if z.iter().chain(dz.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("SINDy data contains non-finite values".into()));
    }

    let n = z.nrows();
    let mut theta = library_matrix(z, options.poly_order);
    let p = theta.ncols();
    if n < p {
        log::warn!("SINDy fit with {n} samples for {p} library terms");
    }
    let col_scale: Vec<f64> = (0..p)
        .map(|j| {
            let s = rms(theta.column(j).iter().copied());
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in col_scale.iter().enumerate() {
        theta.column_mut(j).unscale_mut(*s);
    }
    let g = theta.tr_mul(&theta) / n as f64;

    let mut model = SindyModel::zeros(z.ncols(), dz.ncols(), options.poly_order);
    for t in 0..dz.ncols() {
        let y_scale = rms(dz.column(t).iter().copied());
        if y_scale == 0.0 {
            continue;
        }
        let y = dz.column(t) / y_scale;
        let b = theta.tr_mul(&y) / n as f64;

        let mut support: Vec<usize> = (0..p).collect();
        let mut xi = solve_on_support(&g, &b, &support, options.ridge)?;
        for _ in 0..options.max_iter {
            let keep: Vec<usize> = support
                .iter()
                .zip(xi.iter())
                .filter(|(_, c)| c.abs() >= options.threshold)
                .map(|(i, _)| *i)
                .collect();
            if keep.len() == support.len() {
                break;
            }
            support = keep;
            if support.is_empty() {
                break;
            }
            xi = solve_on_support(&g, &b, &support, options.ridge)?;
        }
        for (k, &i) in support.iter().enumerate() {
            model.coefficients[(i, t)] = xi[k] * y_scale / col_scale[i];
        }
    }
    Ok(model)
}
