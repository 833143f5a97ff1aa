//! Minimal reverse-mode automatic differentiation over dense row-major
//! matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks the record once and returns gradients for all trainable leaves.
//! The op set is exactly what the policy and its PPO losses need — dense
//! maps, row broadcasts, tanh/softplus/log/exp, row softmax, layer
//! normalization, and elementwise min/clamp for the clipped surrogate.
//! Values are `f64` throughout; shapes are validated with assertions since
//! shape mismatches are programming errors, not runtime conditions.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Tensor {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Tensor {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Tensor {
        let mut t = Tensor::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                t.data[i * cols + j] = f(i, j);
            }
        }
        t
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Sum of squared entries (used by global gradient-norm clipping).
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Min(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    Tanh(usize),
    Softplus(usize),
    Clamp(usize, f64, f64),
    Ln(usize),
    Exp(usize),
    RowSoftmax(usize),
    LayerNorm(usize, f64),
    Transpose(usize),
    HStack(usize, usize),
    SliceCols(usize, usize),
    SumAll(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether any trainable leaf feeds this node (gradient pruning).
    needs_grad: bool,
}

/// One forward pass's computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every tape node; query with the
/// [`Var`] handles of the leaves you care about.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient tensor for `v`; zeros if the node does not influence the
    /// differentiated scalar.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let t = tape.value(v);
                Tensor::zeros(t.rows, t.cols)
            }
        }
    }
}

fn stable_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf { trainable } => *trainable,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Min(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::HStack(a, b) => self.nodes[*a].needs_grad || self.nodes[*b].needs_grad,
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Tanh(a)
            | Op::Softplus(a)
            | Op::Clamp(a, _, _)
            | Op::Ln(a)
            | Op::Exp(a)
            | Op::RowSoftmax(a)
            | Op::LayerNorm(a, _)
            | Op::Transpose(a)
            | Op::SliceCols(a, _)
            | Op::SumAll(a) => self.nodes[*a].needs_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input (parameters).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { trainable: true })
    }

    /// Non-trainable input (data, masks, fixed tables).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { trainable: false })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.cols, tb.rows, "matmul inner dims");
        let (r, k, c) = (ta.rows, ta.cols, tb.cols);
        let mut out = Tensor::zeros(r, c);
        for i in 0..r {
            for l in 0..k {
                let x = ta.data[i * k + l];
                if x == 0.0 {
                    continue;
                }
                for j in 0..c {
                    out.data[i * c + j] += x * tb.data[l * c + j];
                }
            }
        }
        self.push(out, Op::MatMul(a.0, b.0))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "elementwise shape mismatch");
        let mut out = ta.clone();
        for (o, &y) in out.data.iter_mut().zip(&tb.data) {
            *o = f(*o, y);
        }
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    /// Elementwise minimum (the clipped-surrogate combiner).  At exact ties
    /// the gradient routes to the second operand, so a surrogate tied with
    /// its clipped copy follows the clipped branch's subgradient.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, f64::min, Op::Min(a.0, b.0))
    }

    /// Broadcast a 1×c row over every row of `a` (bias addition).
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        assert_eq!(tr.rows, 1, "broadcast row must be 1×c");
        assert_eq!(ta.cols, tr.cols, "broadcast width");
        let mut out = ta.clone();
        for i in 0..out.rows {
            for j in 0..out.cols {
                out.data[i * out.cols + j] += tr.data[j];
            }
        }
        self.push(out, Op::AddRow(a.0, row.0))
    }

    /// Broadcast-multiply a 1×c row over every row of `a` (layer-norm gain).
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        assert_eq!(tr.rows, 1, "broadcast row must be 1×c");
        assert_eq!(ta.cols, tr.cols, "broadcast width");
        let mut out = ta.clone();
        for i in 0..out.rows {
            for j in 0..out.cols {
                out.data[i * out.cols + j] *= tr.data[j];
            }
        }
        self.push(out, Op::MulRow(a.0, row.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::Scale(a.0, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v += c);
        self.push(out, Op::AddConst(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(out, Op::Tanh(a.0))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = stable_softplus(*v));
        self.push(out, Op::Softplus(a.0))
    }

    /// Clamp with pass-through gradient strictly inside `(lo, hi)` and zero
    /// elsewhere, including at the boundaries; a degenerate `lo == hi`
    /// window therefore blocks all gradient.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = v.ln());
        self.push(out, Op::Ln(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = v.exp());
        self.push(out, Op::Exp(a.0))
    }

    /// Numerically stable softmax over each row.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let mut out = ta.clone();
        for i in 0..out.rows {
            let row = &mut out.data[i * out.cols..(i + 1) * out.cols];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.push(out, Op::RowSoftmax(a.0))
    }

    /// Row-wise standardization `(x − mean) / sqrt(var + eps)` without an
    /// affine part; compose with [`Tape::mul_row`] / [`Tape::add_row`] for
    /// learned gain and bias.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let mut out = ta.clone();
        let c = out.cols as f64;
        for i in 0..out.rows {
            let row = &mut out.data[i * out.cols..(i + 1) * out.cols];
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            let s = (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) / s;
            }
        }
        self.push(out, Op::LayerNorm(a.0, eps))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let out = Tensor::from_fn(ta.cols, ta.rows, |i, j| ta.get(j, i));
        self.push(out, Op::Transpose(a.0))
    }

    pub fn hstack(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.rows, tb.rows, "hstack row count");
        let mut out = Tensor::zeros(ta.rows, ta.cols + tb.cols);
        for i in 0..ta.rows {
            for j in 0..ta.cols {
                out.set(i, j, ta.get(i, j));
            }
            for j in 0..tb.cols {
                out.set(i, ta.cols + j, tb.get(i, j));
            }
        }
        self.push(out, Op::HStack(a.0, b.0))
    }

    pub fn slice_cols(&mut self, a: Var, from: usize, to: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(from < to && to <= ta.cols, "column slice bounds");
        let out = Tensor::from_fn(ta.rows, to - from, |i, j| ta.get(i, from + j));
        self.push(out, Op::SliceCols(a.0, from))
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a.0))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        let root_t = &self.nodes[root.0].value;
        assert_eq!((root_t.rows, root_t.cols), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                grads[id] = Some(g);
                continue;
            }
            match &node.op {
                Op::Leaf { .. } => {}
                Op::MatMul(a, b) => {
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.nodes[*a].needs_grad {
                        let mut da = Tensor::zeros(ta.rows, ta.cols);
                        for i in 0..ta.rows {
                            for l in 0..ta.cols {
                                let mut acc = 0.0;
                                for j in 0..tb.cols {
                                    acc += g.get(i, j) * tb.get(l, j);
                                }
                                da.data[i * ta.cols + l] = acc;
                            }
                        }
                        accumulate(&mut grads[*a], da);
                    }
                    if self.nodes[*b].needs_grad {
                        let mut db = Tensor::zeros(tb.rows, tb.cols);
                        for l in 0..tb.rows {
                            for j in 0..tb.cols {
                                let mut acc = 0.0;
                                for i in 0..ta.rows {
                                    acc += ta.get(i, l) * g.get(i, j);
                                }
                                db.data[l * tb.cols + j] = acc;
                            }
                        }
                        accumulate(&mut grads[*b], db);
                    }
                }
                Op::Add(a, b) => {
                    self.acc_if_needed(&mut grads, *a, g.clone());
                    self.acc_if_needed(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    self.acc_if_needed(&mut grads, *a, g.clone());
                    let mut neg = g.clone();
                    neg.data.iter_mut().for_each(|v| *v = -*v);
                    self.acc_if_needed(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = g.clone();
                    da.data.iter_mut().zip(&tb.data).for_each(|(v, &y)| *v *= y);
                    self.acc_if_needed(&mut grads, *a, da);
                    let mut db = g.clone();
                    db.data.iter_mut().zip(&ta.data).for_each(|(v, &x)| *v *= x);
                    self.acc_if_needed(&mut grads, *b, db);
                }
                Op::Div(a, b) => {
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = g.clone();
                    da.data.iter_mut().zip(&tb.data).for_each(|(v, &y)| *v /= y);
                    self.acc_if_needed(&mut grads, *a, da);
                    let mut db = g.clone();
                    for ((v, &x), &y) in db.data.iter_mut().zip(&ta.data).zip(&tb.data) {
                        *v *= -x / (y * y);
                    }
                    self.acc_if_needed(&mut grads, *b, db);
                }
                Op::Min(a, b) => {
                    // Subgradient: the smaller branch receives the gradient;
                    // ties go to the second operand.
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = g.clone();
                    let mut db = g.clone();
                    for k in 0..g.data.len() {
                        if ta.data[k] < tb.data[k] {
                            db.data[k] = 0.0;
                        } else {
                            da.data[k] = 0.0;
                        }
                    }
                    self.acc_if_needed(&mut grads, *a, da);
                    self.acc_if_needed(&mut grads, *b, db);
                }
                Op::AddRow(a, r) => {
                    self.acc_if_needed(&mut grads, *a, g.clone());
                    if self.nodes[*r].needs_grad {
                        let mut dr = Tensor::zeros(1, g.cols);
                        for i in 0..g.rows {
                            for j in 0..g.cols {
                                dr.data[j] += g.get(i, j);
                            }
                        }
                        accumulate(&mut grads[*r], dr);
                    }
                }
                Op::MulRow(a, r) => {
                    let (ta, tr) = (&self.nodes[*a].value, &self.nodes[*r].value);
                    if self.nodes[*a].needs_grad {
                        let mut da = g.clone();
                        for i in 0..da.rows {
                            for j in 0..da.cols {
                                da.data[i * da.cols + j] *= tr.data[j];
                            }
                        }
                        accumulate(&mut grads[*a], da);
                    }
                    if self.nodes[*r].needs_grad {
                        let mut dr = Tensor::zeros(1, g.cols);
                        for i in 0..g.rows {
                            for j in 0..g.cols {
                                dr.data[j] += g.get(i, j) * ta.get(i, j);
                            }
                        }
                        accumulate(&mut grads[*r], dr);
                    }
                }
                Op::Scale(a, c) => {
                    let mut da = g.clone();
                    da.data.iter_mut().for_each(|v| *v *= c);
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::AddConst(a) => {
                    self.acc_if_needed(&mut grads, *a, g.clone());
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut da = g.clone();
                    da.data
                        .iter_mut()
                        .zip(&y.data)
                        .for_each(|(v, &t)| *v *= 1.0 - t * t);
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::Softplus(a) => {
                    let x = &self.nodes[*a].value;
                    let mut da = g.clone();
                    da.data
                        .iter_mut()
                        .zip(&x.data)
                        .for_each(|(v, &t)| *v *= sigmoid(t));
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &self.nodes[*a].value;
                    let mut da = g.clone();
                    da.data
                        .iter_mut()
                        .zip(&x.data)
                        .for_each(|(v, &t)| {
                            if t <= *lo || t >= *hi {
                                *v = 0.0;
                            }
                        });
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::Ln(a) => {
                    let x = &self.nodes[*a].value;
                    let mut da = g.clone();
                    da.data.iter_mut().zip(&x.data).for_each(|(v, &t)| *v /= t);
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let mut da = g.clone();
                    da.data.iter_mut().zip(&y.data).for_each(|(v, &t)| *v *= t);
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut da = Tensor::zeros(g.rows, g.cols);
                    for i in 0..g.rows {
                        let dot: f64 = (0..g.cols).map(|j| g.get(i, j) * y.get(i, j)).sum();
                        for j in 0..g.cols {
                            da.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::LayerNorm(a, eps) => {
                    let x = &self.nodes[*a].value;
                    let y = &node.value;
                    let c = x.cols as f64;
                    let mut da = Tensor::zeros(x.rows, x.cols);
                    for i in 0..x.rows {
                        let mean = (0..x.cols).map(|j| x.get(i, j)).sum::<f64>() / c;
                        let var =
                            (0..x.cols).map(|j| (x.get(i, j) - mean).powi(2)).sum::<f64>() / c;
                        let s = (var + eps).sqrt();
                        let g_mean: f64 = (0..x.cols).map(|j| g.get(i, j)).sum::<f64>() / c;
                        let gy_mean: f64 =
                            (0..x.cols).map(|j| g.get(i, j) * y.get(i, j)).sum::<f64>() / c;
                        for j in 0..x.cols {
                            let v = (g.get(i, j) - g_mean - y.get(i, j) * gy_mean) / s;
                            da.set(i, j, v);
                        }
                    }
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::Transpose(a) => {
                    let da = Tensor::from_fn(g.cols, g.rows, |i, j| g.get(j, i));
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::HStack(a, b) => {
                    let (ca, cb) = (self.nodes[*a].value.cols, self.nodes[*b].value.cols);
                    let da = Tensor::from_fn(g.rows, ca, |i, j| g.get(i, j));
                    let db = Tensor::from_fn(g.rows, cb, |i, j| g.get(i, ca + j));
                    self.acc_if_needed(&mut grads, *a, da);
                    self.acc_if_needed(&mut grads, *b, db);
                }
                Op::SliceCols(a, from) => {
                    let ta = &self.nodes[*a].value;
                    let mut da = Tensor::zeros(ta.rows, ta.cols);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            da.set(i, from + j, g.get(i, j));
                        }
                    }
                    self.acc_if_needed(&mut grads, *a, da);
                }
                Op::SumAll(a) => {
                    let ta = &self.nodes[*a].value;
                    let v = g.data[0];
                    let da = Tensor::from_fn(ta.rows, ta.cols, |_, _| v);
                    self.acc_if_needed(&mut grads, *a, da);
                }
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn acc_if_needed(&self, grads: &mut [Option<Tensor>], target: usize, delta: Tensor) {
        if self.nodes[target].needs_grad {
            accumulate(&mut grads[target], delta);
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(g) => {
            debug_assert!(g.same_shape(&delta));
            g.data.iter_mut().zip(&delta.data).for_each(|(a, &b)| *a += b);
        }
        None => *slot = Some(delta),
    }
}
