//! A small reverse-mode automatic differentiation engine over `f64`
//! matrices, plus parameter storage with checkpoint I/O and the Adam
//! optimizer.
//!
//! Every forward op appends a node to a [`Tape`]; [`Tape::backward`] walks
//! the nodes in reverse and accumulates gradients. One tape lives for one
//! training step and is dropped afterwards. There is no implicit
//! broadcasting: shapes must match exactly except where an op is defined
//! to broadcast (the `*_row` ops).

mod adam;
pub mod layers;
mod params;

pub use adam::Adam;
pub use params::{Init, ParamSet};

use ndarray::{s, Array2};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-7;
const NORM_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// a (m,k) times b^T where b is (n,k); result (m,n)
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// (m,n) + (1,n) broadcast over rows
    AddRow(Var, Var),
    /// (m,n) * (1,n) broadcast over rows
    MulRow(Var, Var),
    Scale(Var, f64),
    /// a*x + b elementwise with scalar constants
    AffineConst(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    /// ln(max(x, eps))
    LnClamped(Var),
    /// row-wise softmax over columns 0..valid_cols; other columns output 0
    SoftmaxRows { x: Var, valid_cols: usize },
    /// per-row zero-mean unit-variance normalization (no affine)
    LayerNormRows(Var),
    /// per-column normalization over rows 0..valid_rows; rows beyond output 0
    InstanceNormCols { x: Var, valid_rows: usize },
    /// (T,C) -> (T, k*C) sliding window with zero padding, stride 1
    Unfold { x: Var, kernel: usize },
    /// row lookup: out[i,:] = table[ids[i],:]
    Gather { table: Var, ids: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    /// elementwise multiply by a constant matrix (masks, dropout)
    MulConst(Var),
    SumAll(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    /// constant payload for MulConst (kept out of Op to avoid cloning)
    aux: Option<Array2<f64>>,
}

/// The recording of one forward computation.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.push_aux(value, op, None)
    }

    fn push_aux(&mut self, value: Array2<f64>, op: Op, aux: Option<Array2<f64>>) -> Var {
        assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced by node {}",
            self.nodes.len()
        );
        self.nodes.push(Node { value, op, aux });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "scalar() on a non-1x1 value");
        val[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a.dot(b.t())` without materializing the transpose on the tape.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBT(a, b))
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
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// Broadcast-add a (1,n) row to every row of a (m,n) matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row takes a (1,n) row");
        let v = self.value(a) + &self.value(row).row(0);
        self.push(v, Op::AddRow(a, row))
    }

    /// Broadcast-multiply every row of (m,n) by a (1,n) row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "mul_row takes a (1,n) row");
        let v = self.value(a) * &self.value(row).row(0);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    /// `a*x + b` with scalar constants.
    pub fn affine_const(&mut self, x: Var, a: f64, b: f64) -> Var {
        let v = self.value(x).mapv(|t| a * t + b);
        self.push(v, Op::AffineConst(x, a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|t| t.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|t| 1.0 / (1.0 + (-t).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// `ln(max(x, 1e-7))`: the clamp keeps adversarial losses finite when a
    /// discriminator saturates.
    pub fn ln_clamped(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|t| t.max(LN_EPS).ln());
        self.push(v, Op::LnClamped(a))
    }

    /// Row-wise softmax over the first `valid_cols` columns; the remaining
    /// columns get probability 0 (used to mask padded attention keys).
    pub fn softmax_rows(&mut self, x: Var, valid_cols: usize) -> Var {
        let xv = self.value(x);
        assert!(valid_cols >= 1 && valid_cols <= xv.ncols());
        let mut out = Array2::<f64>::zeros(xv.dim());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let m = row
                .iter()
                .take(valid_cols)
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..valid_cols {
                let e = (row[j] - m).exp();
                out[[i, j]] = e;
                denom += e;
            }
            for j in 0..valid_cols {
                out[[i, j]] /= denom;
            }
        }
        self.push(out, Op::SoftmaxRows { x, valid_cols })
    }

    /// Zero-mean unit-variance per row (no learned affine; compose with
    /// `mul_row`/`add_row` for gain and bias).
    pub fn layer_norm_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut out = Array2::<f64>::zeros(xv.dim());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = (var + NORM_EPS).sqrt();
            for j in 0..xv.ncols() {
                out[[i, j]] = (row[j] - mean) / s;
            }
        }
        self.push(out, Op::LayerNormRows(x))
    }

    /// Per-column (channel) normalization over rows `0..valid_rows`; rows at
    /// and beyond `valid_rows` are zeroed in the output so padding cannot
    /// leak statistics.
    pub fn instance_norm_cols(&mut self, x: Var, valid_rows: usize) -> Var {
        let xv = self.value(x);
        assert!(valid_rows >= 1 && valid_rows <= xv.nrows());
        let n = valid_rows as f64;
        let mut out = Array2::<f64>::zeros(xv.dim());
        for c in 0..xv.ncols() {
            let col = xv.column(c);
            let mean = col.iter().take(valid_rows).sum::<f64>() / n;
            let var = col
                .iter()
                .take(valid_rows)
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n;
            let s = (var + NORM_EPS).sqrt();
            for r in 0..valid_rows {
                out[[r, c]] = (xv[[r, c]] - mean) / s;
            }
        }
        self.push(out, Op::InstanceNormCols { x, valid_rows })
    }

    /// Sliding-window unfold for 1-D convolution: output column block `j`
    /// holds the input shifted by `j - kernel/2` rows, zero padded. A
    /// convolution is then `unfold(x, k).matmul(w)` with `w` of shape
    /// `(k*C, C_out)`.
    pub fn unfold(&mut self, x: Var, kernel: usize) -> Var {
        assert!(kernel % 2 == 1, "unfold expects an odd kernel");
        let xv = self.value(x);
        let (t, c) = xv.dim();
        let half = (kernel / 2) as isize;
        let mut out = Array2::<f64>::zeros((t, kernel * c));
        for i in 0..t {
            for j in 0..kernel {
                let src = i as isize + j as isize - half;
                if src >= 0 && (src as usize) < t {
                    for ch in 0..c {
                        out[[i, j * c + ch]] = xv[[src as usize, ch]];
                    }
                }
            }
        }
        self.push(out, Op::Unfold { x, kernel })
    }

    /// Embedding lookup: `out[i,:] = table[ids[i],:]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        assert!(!ids.is_empty(), "gather of zero rows");
        let mut out = Array2::<f64>::zeros((ids.len(), tv.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            assert!(id < tv.nrows(), "gather id {id} out of range {}", tv.nrows());
            out.row_mut(i).assign(&tv.row(id));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        self.concat_rows_many(&[a, b])
    }

    pub fn concat_rows_many(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).ncols();
        let total: usize = parts.iter().map(|&p| self.value(p).nrows()).sum();
        let mut out = Array2::<f64>::zeros((total, cols));
        let mut row = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.ncols(), cols);
            out.slice_mut(s![row..row + pv.nrows(), ..]).assign(pv);
            row += pv.nrows();
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).nrows();
        let total: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut out = Array2::<f64>::zeros((rows, total));
        let mut col = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.nrows(), rows);
            out.slice_mut(s![.., col..col + pv.ncols()]).assign(pv);
            col += pv.ncols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let v = self.value(x).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(x, start, end))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let v = self.value(x).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(x, start, end))
    }

    /// Elementwise multiply by a constant matrix that receives no gradient
    /// (loss masks, dropout masks).
    pub fn mul_const(&mut self, x: Var, mask: Array2<f64>) -> Var {
        assert_eq!(self.value(x).dim(), mask.dim());
        let v = self.value(x) * &mask;
        self.push_aux(v, Op::MulConst(x), Some(mask))
    }

    /// Sum of all entries, as a (1,1) value.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(v, Op::SumAll(x))
    }

    /// Mean of all entries, as a (1,1) value.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    /// Reverse pass from a scalar loss. Returns one gradient slot per node
    /// (None where no gradient flowed).
    pub fn backward(&self, loss: Var) -> Vec<Option<Array2<f64>>> {
        assert_eq!(
            self.value(loss).dim(),
            (1, 1),
            "backward() needs a scalar loss"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads
    }

    fn accumulate(
        grads: &mut [Option<Array2<f64>>],
        target: Var,
        contribution: Array2<f64>,
    ) {
        match &mut grads[target.0] {
            Some(existing) => *existing += &contribution,
            slot @ None => *slot = Some(contribution),
        }
    }

    fn backward_node(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(g);
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::MatMulBT(a, b) => {
                // y = a b^T; da = g b; db = g^T a
                let da = g.dot(self.value(*b));
                let db = g.t().dot(self.value(*a));
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                Self::accumulate(grads, *a, g * self.value(*b));
                Self::accumulate(grads, *b, g * self.value(*a));
            }
            Op::AddRow(a, row) => {
                Self::accumulate(grads, *a, g.clone());
                let summed = g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                Self::accumulate(grads, *row, summed);
            }
            Op::MulRow(a, row) => {
                let da = g * &self.value(*row).row(0);
                let drow = (g * self.value(*a))
                    .sum_axis(ndarray::Axis(0))
                    .insert_axis(ndarray::Axis(0));
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *row, drow);
            }
            Op::Scale(a, c) => Self::accumulate(grads, *a, g * *c),
            Op::AffineConst(a, scale) => Self::accumulate(grads, *a, g * *scale),
            Op::Relu(a) => {
                let da = g * &self.value(*a).mapv(|t| if t > 0.0 { 1.0 } else { 0.0 });
                Self::accumulate(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                Self::accumulate(grads, *a, g * &(y * &y.mapv(|t| 1.0 - t)));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                Self::accumulate(grads, *a, g * &y.mapv(|t| 1.0 - t * t));
            }
            Op::LnClamped(a) => {
                let da = g
                    * &self
                        .value(*a)
                        .mapv(|t| if t > LN_EPS { 1.0 / t } else { 0.0 });
                Self::accumulate(grads, *a, da);
            }
            Op::SoftmaxRows { x, valid_cols } => {
                let p = &node.value;
                let mut dx = Array2::<f64>::zeros(p.dim());
                for i in 0..p.nrows() {
                    let mut dot = 0.0;
                    for j in 0..*valid_cols {
                        dot += g[[i, j]] * p[[i, j]];
                    }
                    for j in 0..*valid_cols {
                        dx[[i, j]] = p[[i, j]] * (g[[i, j]] - dot);
                    }
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::LayerNormRows(x) => {
                let xv = self.value(*x);
                let y = &node.value;
                let n = xv.ncols() as f64;
                let mut dx = Array2::<f64>::zeros(xv.dim());
                for i in 0..xv.nrows() {
                    let row = xv.row(i);
                    let mean = row.sum() / n;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let s = (var + NORM_EPS).sqrt();
                    let g_mean = g.row(i).sum() / n;
                    let gy_mean = g
                        .row(i)
                        .iter()
                        .zip(y.row(i).iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / n;
                    for j in 0..xv.ncols() {
                        dx[[i, j]] = (g[[i, j]] - g_mean - y[[i, j]] * gy_mean) / s;
                    }
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::InstanceNormCols { x, valid_rows } => {
                let xv = self.value(*x);
                let y = &node.value;
                let n = *valid_rows as f64;
                let mut dx = Array2::<f64>::zeros(xv.dim());
                for c in 0..xv.ncols() {
                    let col = xv.column(c);
                    let mean = col.iter().take(*valid_rows).sum::<f64>() / n;
                    let var = col
                        .iter()
                        .take(*valid_rows)
                        .map(|v| (v - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    let s = (var + NORM_EPS).sqrt();
                    let mut g_mean = 0.0;
                    let mut gy_mean = 0.0;
                    for r in 0..*valid_rows {
                        g_mean += g[[r, c]];
                        gy_mean += g[[r, c]] * y[[r, c]];
                    }
                    g_mean /= n;
                    gy_mean /= n;
                    for r in 0..*valid_rows {
                        dx[[r, c]] = (g[[r, c]] - g_mean - y[[r, c]] * gy_mean) / s;
                    }
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::Unfold { x, kernel } => {
                let (t, kc) = node.value.dim();
                let c = kc / kernel;
                let half = (*kernel / 2) as isize;
                let mut dx = Array2::<f64>::zeros((t, c));
                for i in 0..t {
                    for j in 0..*kernel {
                        let src = i as isize + j as isize - half;
                        if src >= 0 && (src as usize) < t {
                            for ch in 0..c {
                                dx[[src as usize, ch]] += g[[i, j * c + ch]];
                            }
                        }
                    }
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::Gather { table, ids } => {
                let tv = self.value(*table);
                let mut dt = Array2::<f64>::zeros(tv.dim());
                for (i, &id) in ids.iter().enumerate() {
                    let mut row = dt.row_mut(id);
                    row += &g.row(i);
                }
                Self::accumulate(grads, *table, dt);
            }
            Op::ConcatRows(parts) => {
                let mut row = 0;
                for &p in parts {
                    let h = self.value(p).nrows();
                    Self::accumulate(grads, p, g.slice(s![row..row + h, ..]).to_owned());
                    row += h;
                }
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    Self::accumulate(grads, p, g.slice(s![.., col..col + w]).to_owned());
                    col += w;
                }
            }
            Op::SliceCols(x, start, end) => {
                let mut dx = Array2::<f64>::zeros(self.value(*x).dim());
                dx.slice_mut(s![.., *start..*end]).assign(g);
                Self::accumulate(grads, *x, dx);
            }
            Op::SliceRows(x, start, end) => {
                let mut dx = Array2::<f64>::zeros(self.value(*x).dim());
                dx.slice_mut(s![*start..*end, ..]).assign(g);
                Self::accumulate(grads, *x, dx);
            }
            Op::MulConst(x) => {
                let mask = node.aux.as_ref().expect("MulConst aux");
                Self::accumulate(grads, *x, g * mask);
            }
            Op::SumAll(x) => {
                let dx = Array2::from_elem(self.value(*x).dim(), g[[0, 0]]);
                Self::accumulate(grads, *x, dx);
            }
        }
    }
}

/// A tape plus name bindings into a parameter set. Forward code asks for
/// parameters by name with a shape and an init scheme; missing tensors are
/// created deterministically, existing ones are shape-checked and bound
/// once. The backward pass hands gradients back keyed by the same names,
/// so the model's forward functions are the only place shapes are written
/// down.
pub struct Graph<'a> {
    pub tape: Tape,
    params: ParamsRef<'a>,
    seed: u64,
    bound: indexmap::IndexMap<String, Var>,
}

enum ParamsRef<'a> {
    /// Training mode: missing parameters are created on first use.
    Mut(&'a mut ParamSet),
    /// Inference mode: the set is shared and must already be complete.
    Shared(&'a ParamSet),
}

impl ParamsRef<'_> {
    fn get(&self, name: &str) -> Option<&Array2<f64>> {
        match self {
            ParamsRef::Mut(p) => p.get(name),
            ParamsRef::Shared(p) => p.get(name),
        }
    }
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a mut ParamSet, seed: u64) -> Graph<'a> {
        Graph {
            tape: Tape::new(),
            params: ParamsRef::Mut(params),
            seed,
            bound: indexmap::IndexMap::new(),
        }
    }

    /// A graph over a shared parameter set: parameter lookups never mutate
    /// the set, so any number of read-only graphs may run concurrently.
    /// Asking for a parameter the set does not hold panics.
    pub fn read_only(params: &'a ParamSet, seed: u64) -> Graph<'a> {
        Graph {
            tape: Tape::new(),
            params: ParamsRef::Shared(params),
            seed,
            bound: indexmap::IndexMap::new(),
        }
    }

    /// Bind (or reuse) the named trainable parameter as a leaf, creating it
    /// if the set does not hold it yet (mutable graphs only).
    pub fn param(&mut self, name: &str, shape: (usize, usize), init: Init) -> Var {
        if let Some(&v) = self.bound.get(name) {
            assert_eq!(
                self.tape.value(v).dim(),
                shape,
                "parameter {name} rebound with a different shape"
            );
            return v;
        }
        if let ParamsRef::Mut(params) = &mut self.params {
            params.init(name, shape, init, self.seed);
        }
        let value = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} missing from a read-only set"));
        assert_eq!(
            value.dim(),
            shape,
            "parameter {name} has shape {:?}, expected {:?}",
            value.dim(),
            shape
        );
        let value = value.clone();
        let v = self.tape.leaf(value);
        self.bound.insert(name.to_string(), v);
        v
    }

    /// Bind a named tensor as a plain constant: no gradient is reported for
    /// it (normalization statistics and the like).
    pub fn constant(&mut self, name: &str) -> Var {
        let value = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown constant tensor {name}"))
            .clone();
        self.tape.leaf(value)
    }

    /// Backward pass; gradients are returned only for bound parameters.
    pub fn backward(&self, loss: Var) -> indexmap::IndexMap<String, Array2<f64>> {
        let grads = self.tape.backward(loss);
        let mut out = indexmap::IndexMap::new();
        for (name, var) in &self.bound {
            if let Some(g) = &grads[var.0] {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}
