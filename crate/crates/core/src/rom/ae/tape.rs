//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Every node holds a batch matrix; scalars are 1x1 matrices. Only the
//! operations needed by the autoencoder loss are provided.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `a * b^T`
    MatMulT(Var, Var),
    /// `a * b`
    MatMul(Var, Var),
    /// Adds the 1 x k row `b` to every row of `a`.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `a` where `gate > 0`, zero elsewhere; the gate gets no gradient.
    Mask(Var, Var),
    Relu(Var),
    Softmax(Var),
    RowSum(Var),
    BroadcastCol(Var),
    Ln(Var),
    AddScalar(Var),
    Col(Var, usize),
    HCat(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<DMatrix<f64>>,
    ops: Vec<Op>,
}

fn softmax_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][(0, 0)]
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b).transpose();
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        let row = self.value(b);
        assert_eq!(row.nrows(), 1);
        for mut r in v.row_iter_mut() {
            r += row;
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn mask(&mut self, a: Var, gate: Var) -> Var {
        let v = self
            .value(a)
            .zip_map(self.value(gate), |x, g| if g > 0.0 { x } else { 0.0 });
        self.push(v, Op::Mask(a, gate))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// Row sums as an n x 1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = DMatrix::from_fn(m.nrows(), 1, |i, _| m.row(i).sum());
        self.push(v, Op::RowSum(a))
    }

    /// Repeats an n x 1 column `k` times.
    pub fn broadcast_col(&mut self, a: Var, k: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.ncols(), 1);
        let v = DMatrix::from_fn(m.nrows(), k, |i, _| m[(i, 0)]);
        self.push(v, Op::BroadcastCol(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).add_scalar(c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn col(&mut self, a: Var, j: usize) -> Var {
        let v = self.value(a).column(j).clone_owned();
        self.push(DMatrix::from_column_slice(v.len(), 1, v.as_slice()), Op::Col(a, j))
    }

    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        let n = self.value(parts[0]).nrows();
        let k: usize = parts.iter().map(|p| self.value(*p).ncols()).sum();
        let mut v = DMatrix::zeros(n, k);
        let mut c = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.nrows(), n);
            v.columns_mut(c, m.ncols()).copy_from(m);
            c += m.ncols();
        }
        self.push(v, Op::HCat(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = DMatrix::from_element(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = DMatrix::from_element(1, 1, self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        let n = self.values.len();
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; n];
        grads[out.0] = Some(DMatrix::from_element(1, 1, 1.0));

        fn acc(grads: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMulT(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b));
                    acc(&mut grads, *b, g.transpose() * self.value(*a));
                }
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b).transpose());
                    acc(&mut grads, *b, self.value(*a).transpose() * &g);
                }
                Op::AddRow(a, b) => {
                    let row = DMatrix::from_fn(1, g.ncols(), |_, j| g.column(j).sum());
                    acc(&mut grads, *b, row);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.component_mul(self.value(*b)));
                    acc(&mut grads, *b, g.component_mul(self.value(*a)));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, &g * *c),
                Op::Mask(a, gate) => {
                    let m = g.zip_map(self.value(*gate), |x, gt| if gt > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, m);
                }
                Op::Relu(a) => {
                    let m = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, m);
                }
                Op::Softmax(a) => {
                    let y = &self.values[i];
                    let gy = g.component_mul(y);
                    let mut ga = gy.clone();
                    for r in 0..ga.nrows() {
                        let s = gy.row(r).sum();
                        for c in 0..ga.ncols() {
                            ga[(r, c)] -= y[(r, c)] * s;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let k = self.value(*a).ncols();
                    let ga = DMatrix::from_fn(g.nrows(), k, |r, _| g[(r, 0)]);
                    acc(&mut grads, *a, ga);
                }
                Op::BroadcastCol(a) => {
                    let ga = DMatrix::from_fn(g.nrows(), 1, |r, _| g.row(r).sum());
                    acc(&mut grads, *a, ga);
                }
                Op::Ln(a) => acc(&mut grads, *a, g.component_div(self.value(*a))),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Col(a, j) => {
                    let src = self.value(*a);
                    let mut ga = DMatrix::zeros(src.nrows(), src.ncols());
                    ga.column_mut(*j).copy_from(&g.column(0));
                    acc(&mut grads, *a, ga);
                }
                Op::HCat(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let k = self.value(*p).ncols();
                        acc(&mut grads, *p, g.columns(c, k).clone_owned());
                        c += k;
                    }
                }
                Op::Sum(a) => {
                    let s = self.value(*a);
                    acc(&mut grads, *a, DMatrix::from_element(s.nrows(), s.ncols(), g[(0, 0)]));
                }
                Op::Mean(a) => {
                    let s = self.value(*a);
                    let n = (s.nrows() * s.ncols()) as f64;
                    acc(&mut grads, *a, DMatrix::from_element(s.nrows(), s.ncols(), g[(0, 0)] / n));
                }
            }
        }
        Gradients { grads }
    }
}

/// Output of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<DMatrix<f64>>>,
}

impl Gradients {
    /// Gradient with respect to the leaf `v`; zeros if `out` does not depend on it.
    pub fn get(&self, tape: &Tape, v: Var) -> DMatrix<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let s = tape.value(v);
                DMatrix::zeros(s.nrows(), s.ncols())
            }
        }
    }
}
