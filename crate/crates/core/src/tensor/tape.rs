use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use super::{Array, TensorError};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Layer-norm variance stabilizer.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    GatherRows { x: Var, index: Vec<usize> },
    ScatterAddRows { x: Var, index: Vec<usize> },
    ExpandRows(Var),
    ExpandCols(Var),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    Softmax(Var),
    SegmentSoftmax { x: Var, segments: Vec<usize>, count: usize },
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Gelu(Var),
    Relu(Var),
    Softplus(Var),
    Log(Var),
    Exp(Var),
    MaskedFill { x: Var, mask: Vec<bool> },
    Noise { mean: Var, scale: Var, eps: Array },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Transpose(..) => "transpose",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::GatherRows { .. } => "gather_rows",
            Op::ScatterAddRows { .. } => "scatter_add_rows",
            Op::ExpandRows(..) => "expand_rows",
            Op::ExpandCols(..) => "expand_cols",
            Op::SumAll(..) => "sum",
            Op::MeanAll(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::Softmax(..) => "softmax",
            Op::SegmentSoftmax { .. } => "segment_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(..) => "gelu",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Log(..) => "log",
            Op::Exp(..) => "exp",
            Op::MaskedFill { .. } => "masked_fill",
            Op::Noise { .. } => "noise",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::Noise { mean, scale, .. } => vec![*mean, *scale],
            Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Transpose(x)
            | Op::ExpandRows(x)
            | Op::ExpandCols(x)
            | Op::SumAll(x)
            | Op::MeanAll(x)
            | Op::SumCols(x)
            | Op::Softmax(x)
            | Op::Gelu(x)
            | Op::Relu(x)
            | Op::Softplus(x)
            | Op::Log(x)
            | Op::Exp(x)
            | Op::SliceCols { x, .. }
            | Op::SliceRows { x, .. }
            | Op::GatherRows { x, .. }
            | Op::ScatterAddRows { x, .. }
            | Op::SegmentSoftmax { x, .. }
            | Op::LayerNorm { x, .. }
            | Op::MaskedFill { x, .. } => vec![*x],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Arc<Array>,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode computation record.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction and backward is a single reverse sweep.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Array>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &Array, b: &Array) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const K: f64 = 0.044_715;
    let u = C * (x + K * x * x * x);
    let t = u.tanh();
    let value = 0.5 * x * (1.0 + t);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * K * x * x);
    (value, deriv)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a (m x k) * b (k x n)`.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operation tags and input indices in record order.
    pub fn record(&self) -> Vec<(&'static str, Vec<usize>)> {
        self.nodes
            .iter()
            .map(|n| (n.op.tag(), n.op.inputs().iter().map(|v| v.index()).collect()))
            .collect()
    }

    fn check(&self, v: Var) -> Result<(), TensorError> {
        if v.tape != self.id || v.index() >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(())
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.index()]
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.index()].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<Array> {
        Arc::clone(&self.nodes[v.index()].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index()].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Array> {
        self.leaf_grads.get(v.index()).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: Array, op: Op) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op.tag() });
        }
        let requires_grad = op.inputs().iter().any(|v| self.node(*v).requires_grad);
        self.push_unchecked(Arc::new(value), op, requires_grad)
    }

    fn push_unchecked(&mut self, value: Arc<Array>, op: Op, requires_grad: bool) -> Result<Var, TensorError> {
        let index = u32::try_from(self.nodes.len()).map_err(|_| TensorError::TapeFull)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var { tape: self.id, index })
    }

    pub fn leaf(&mut self, value: Arc<Array>, requires_grad: bool) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        self.push_unchecked(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Arc<Array>) -> Result<Var, TensorError> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Array) -> Result<Var, TensorError> {
        self.leaf(Arc::new(value), false)
    }

    // ---- primitives -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let data = matmul_raw(av.data(), bv.data(), m, k, n);
        self.push(Array::matrix(m, n, data)?, Op::MatMul(a, b))
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: Op,
    ) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(op, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Array::new(av.shape().to_vec(), data)?;
        self.push(out, make)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| f(*v)).collect();
        let out = Array::new(xv.shape().to_vec(), data)?;
        self.push(out, op)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, TensorError> {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, TensorError> {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.map(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, |v| gelu_parts(v).0, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        if self.value(x).data().iter().any(|v| *v <= 0.0) {
            return Err(TensorError::Domain {
                op: "log",
                reason: "input must be strictly positive",
            });
        }
        self.map(x, f64::ln, Op::Log(x))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(TensorError::RankMismatch {
                op: "transpose",
                expected: 2,
                shape: xv.shape().to_vec(),
            });
        }
        let (r, c) = (xv.rows(), xv.cols());
        let data = transpose_raw(xv.data(), r, c);
        self.push(Array::matrix(c, r, data)?, Op::Transpose(x))
    }

    fn require_matrix(&self, op: &'static str, x: Var) -> Result<(usize, usize), TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(TensorError::RankMismatch {
                op,
                expected: 2,
                shape: xv.shape().to_vec(),
            });
        }
        Ok((xv.rows(), xv.cols()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::EmptyInput { op: "concat_cols" })?;
        let (rows, _) = self.require_matrix("concat_cols", first)?;
        let mut total = 0;
        for p in parts {
            let (r, c) = self.require_matrix("concat_cols", *p)?;
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(first).shape().to_vec(),
                    rhs: self.value(*p).shape().to_vec(),
                });
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(i));
            }
        }
        self.push(Array::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::EmptyInput { op: "concat_rows" })?;
        let (_, cols) = self.require_matrix("concat_rows", first)?;
        let mut total = 0;
        for p in parts {
            let (r, c) = self.require_matrix("concat_rows", *p)?;
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(first).shape().to_vec(),
                    rhs: self.value(*p).shape().to_vec(),
                });
            }
            total += r;
        }
        let mut data = Vec::with_capacity(total * cols);
        for p in parts {
            data.extend_from_slice(self.value(*p).data());
        }
        self.push(Array::matrix(total, cols, data)?, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let (rows, cols) = self.require_matrix("slice_cols", x)?;
        if start + width > cols || width == 0 {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + width,
                len: cols,
            });
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows * width);
        for i in 0..rows {
            data.extend_from_slice(&xv.row(i)[start..start + width]);
        }
        self.push(Array::matrix(rows, width, data)?, Op::SliceCols { x, start })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var, TensorError> {
        let (rows, cols) = self.require_matrix("slice_rows", x)?;
        if start + count > rows || count == 0 {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + count,
                len: rows,
            });
        }
        let data = self.value(x).data()[start * cols..(start + count) * cols].to_vec();
        self.push(Array::matrix(count, cols, data)?, Op::SliceRows { x, start })
    }

    /// Row gather; also serves as embedding lookup.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, TensorError> {
        let (rows, cols) = self.require_matrix("gather_rows", x)?;
        if index.is_empty() {
            return Err(TensorError::EmptyInput { op: "gather_rows" });
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(xv.row(i));
        }
        let op = Op::GatherRows {
            x,
            index: index.to_vec(),
        };
        self.push(Array::matrix(index.len(), cols, data)?, op)
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        self.gather_rows(table, ids)
    }

    /// `out[index[e]] += x[e]` into a `count`-row result.
    pub fn scatter_add_rows(&mut self, x: Var, index: &[usize], count: usize) -> Result<Var, TensorError> {
        let (rows, cols) = self.require_matrix("scatter_add_rows", x)?;
        if index.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: self.value(x).shape().to_vec(),
                rhs: vec![index.len()],
            });
        }
        let xv = self.value(x);
        let mut data = vec![0.0; count * cols];
        for (e, &dst) in index.iter().enumerate() {
            if dst >= count {
                return Err(TensorError::IndexOutOfRange {
                    op: "scatter_add_rows",
                    index: dst,
                    len: count,
                });
            }
            for (o, v) in data[dst * cols..(dst + 1) * cols].iter_mut().zip(xv.row(e)) {
                *o += v;
            }
        }
        let op = Op::ScatterAddRows {
            x,
            index: index.to_vec(),
        };
        self.push(Array::matrix(count, cols, data)?, op)
    }

    /// `1 x d` -> `rows x d` by repetition.
    pub fn expand_rows(&mut self, x: Var, rows: usize) -> Result<Var, TensorError> {
        let (r, cols) = self.require_matrix("expand_rows", x)?;
        if r != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "expand_rows",
                lhs: self.value(x).shape().to_vec(),
                rhs: vec![1, cols],
            });
        }
        let row = self.value(x).data().to_vec();
        let data = (0..rows).flat_map(|_| row.iter().copied()).collect();
        self.push(Array::matrix(rows, cols, data)?, Op::ExpandRows(x))
    }

    /// `n x 1` -> `n x cols` by repetition.
    pub fn expand_cols(&mut self, x: Var, cols: usize) -> Result<Var, TensorError> {
        let (rows, c) = self.require_matrix("expand_cols", x)?;
        if c != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "expand_cols",
                lhs: self.value(x).shape().to_vec(),
                rhs: vec![rows, 1],
            });
        }
        let xv = self.value(x);
        let data = xv.data().iter().flat_map(|v| std::iter::repeat_n(*v, cols)).collect();
        self.push(Array::matrix(rows, cols, data)?, Op::ExpandCols(x))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let s = self.value(x).data().iter().sum();
        self.push(Array::scalar(s), Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(TensorError::EmptyInput { op: "mean" });
        }
        let m = xv.data().iter().sum::<f64>() / xv.len() as f64;
        self.push(Array::scalar(m), Op::MeanAll(x))
    }

    /// Sum over the last axis: `n x d` -> `n x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var, TensorError> {
        let (rows, _) = self.require_matrix("sum_cols", x)?;
        let xv = self.value(x);
        let data = (0..rows).map(|i| xv.row(i).iter().sum()).collect();
        self.push(Array::matrix(rows, 1, data)?, Op::SumCols(x))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let (rows, cols) = self.require_matrix("softmax", x)?;
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = xv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.into_iter().map(|e| e / z));
        }
        self.push(Array::matrix(rows, cols, data)?, Op::Softmax(x))
    }

    /// Softmax over groups of entries sharing a segment id.
    pub fn segment_softmax(&mut self, x: Var, segments: &[usize], count: usize) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.len() != segments.len() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                lhs: xv.shape().to_vec(),
                rhs: vec![segments.len()],
            });
        }
        let mut max = vec![f64::NEG_INFINITY; count];
        for (v, &s) in xv.data().iter().zip(segments) {
            if s >= count {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_softmax",
                    index: s,
                    len: count,
                });
            }
            max[s] = max[s].max(*v);
        }
        let exps: Vec<f64> = xv
            .data()
            .iter()
            .zip(segments)
            .map(|(v, &s)| (v - max[s]).exp())
            .collect();
        let mut z = vec![0.0; count];
        for (e, &s) in exps.iter().zip(segments) {
            z[s] += e;
        }
        let data = exps.iter().zip(segments).map(|(e, &s)| e / z[s]).collect();
        let out = Array::new(xv.shape().to_vec(), data)?;
        let op = Op::SegmentSoftmax {
            x,
            segments: segments.to_vec(),
            count,
        };
        self.push(out, op)
    }

    /// Row-wise normalization to zero mean and unit variance, without affine.
    pub fn layer_norm(&mut self, x: Var) -> Result<Var, TensorError> {
        let (rows, cols) = self.require_matrix("layer_norm", x)?;
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            data.extend(row.iter().map(|v| (v - mean) * inv));
            inv_std.push(inv);
        }
        self.push(Array::matrix(rows, cols, data)?, Op::LayerNorm { x, inv_std })
    }

    /// Positions where `mask` is true are replaced by `fill`.
    pub fn masked_fill(&mut self, x: Var, mask: &[bool], fill: f64) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.len() != mask.len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_fill",
                lhs: xv.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let data = xv
            .data()
            .iter()
            .zip(mask)
            .map(|(v, m)| if *m { fill } else { *v })
            .collect();
        let out = Array::new(xv.shape().to_vec(), data)?;
        let op = Op::MaskedFill { x, mask: mask.to_vec() };
        self.push(out, op)
    }

    /// `mean + scale * eps` with externally supplied noise `eps`.
    pub fn noise(&mut self, mean: Var, scale: Var, eps: &Array) -> Result<Var, TensorError> {
        self.check(mean)?;
        self.check(scale)?;
        let (mv, sv) = (self.value(mean), self.value(scale));
        same_shape("noise", mv, sv)?;
        same_shape("noise", mv, eps)?;
        let data = mv
            .data()
            .iter()
            .zip(sv.data())
            .zip(eps.data())
            .map(|((m, s), e)| m + s * e)
            .collect();
        let out = Array::new(mv.shape().to_vec(), data)?;
        let op = Op::Noise {
            mean,
            scale,
            eps: eps.clone(),
        };
        self.push(out, op)
    }

    // ---- reverse sweep ----------------------------------------------------

    /// Accumulate `d loss / d leaf` into every gradient-requiring leaf.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        self.check(loss)?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let end = loss.index();
        let mut grads: Vec<Option<Array>> = vec![None; end + 1];
        grads[end] = Some(Array::filled(lv.shape(), 1.0));
        let mut leaf_updates = Vec::new();

        for i in (0..=end).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaf_updates.push((i, g));
                continue;
            }
            for (input, contribution) in self.local_grads(node, &g)? {
                if !self.node(input).requires_grad {
                    continue;
                }
                match &mut grads[input.index()] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize(self.nodes.len(), None);
        }
        for (i, g) in leaf_updates {
            match &mut self.leaf_grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn local_grads(&self, node: &Node, g: &Array) -> Result<Vec<(Var, Array)>, TensorError> {
        let out = &*node.value;
        let like = |v: Var, data: Vec<f64>| Array::new(self.value(v).shape().to_vec(), data);
        let res = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let bt = transpose_raw(bv.data(), k, n);
                let da = matmul_raw(g.data(), &bt, m, n, k);
                let at = transpose_raw(av.data(), m, k);
                let db = matmul_raw(&at, g.data(), k, m, n);
                vec![(*a, like(*a, da)?), (*b, like(*b, db)?)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => {
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                vec![(*a, g.clone()), (*b, neg)]
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                vec![(*a, like(*a, da)?), (*b, like(*b, db)?)]
            }
            Op::Scale(x, c) => {
                let mut d = g.clone();
                d.scale_in_place(*c);
                vec![(*x, d)]
            }
            Op::AddScalar(x) => vec![(*x, g.clone())],
            Op::Transpose(x) => {
                let d = transpose_raw(g.data(), g.rows(), g.cols());
                vec![(*x, like(*x, d)?)]
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for p in parts {
                    let pv = self.value(*p);
                    let w = pv.cols();
                    let mut d = Vec::with_capacity(pv.len());
                    for i in 0..g.rows() {
                        d.extend_from_slice(&g.row(i)[offset..offset + w]);
                    }
                    offset += w;
                    res.push((*p, like(*p, d)?));
                }
                res
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for p in parts {
                    let n = self.value(*p).len();
                    res.push((*p, like(*p, g.data()[offset..offset + n].to_vec())?));
                    offset += n;
                }
                res
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let mut d = vec![0.0; xv.len()];
                let (cols, w) = (xv.cols(), g.cols());
                for i in 0..g.rows() {
                    d[i * cols + start..i * cols + start + w].copy_from_slice(g.row(i));
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let mut d = vec![0.0; xv.len()];
                let off = start * xv.cols();
                d[off..off + g.len()].copy_from_slice(g.data());
                vec![(*x, like(*x, d)?)]
            }
            Op::GatherRows { x, index } => {
                let xv = self.value(*x);
                let cols = xv.cols();
                let mut d = vec![0.0; xv.len()];
                for (e, &src) in index.iter().enumerate() {
                    for (o, v) in d[src * cols..(src + 1) * cols].iter_mut().zip(g.row(e)) {
                        *o += v;
                    }
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::ScatterAddRows { x, index } => {
                let mut d = Vec::with_capacity(self.value(*x).len());
                for &dst in index {
                    d.extend_from_slice(g.row(dst));
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::ExpandRows(x) => {
                let cols = g.cols();
                let mut d = vec![0.0; cols];
                for i in 0..g.rows() {
                    for (o, v) in d.iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::ExpandCols(x) => {
                let d = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::SumCols(x) => {
                let cols = self.value(*x).cols();
                let d = g.data().iter().flat_map(|v| std::iter::repeat_n(*v, cols)).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::SumAll(x) => {
                let n = self.value(*x).len();
                vec![(*x, like(*x, vec![g.data()[0]; n])?)]
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).len();
                vec![(*x, like(*x, vec![g.data()[0] / n as f64; n])?)]
            }
            Op::Softmax(x) => {
                let cols = out.cols();
                let mut d = Vec::with_capacity(out.len());
                for i in 0..out.rows() {
                    let (y, gy) = (out.row(i), g.row(i));
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    d.extend(y.iter().zip(gy).map(|(yv, gv)| yv * (gv - dot)));
                }
                debug_assert_eq!(d.len(), out.rows() * cols);
                vec![(*x, like(*x, d)?)]
            }
            Op::SegmentSoftmax { x, segments, count } => {
                let mut dot = vec![0.0; *count];
                for ((y, gv), &s) in out.data().iter().zip(g.data()).zip(segments) {
                    dot[s] += y * gv;
                }
                let d = out
                    .data()
                    .iter()
                    .zip(g.data())
                    .zip(segments)
                    .map(|((y, gv), &s)| y * (gv - dot[s]))
                    .collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::LayerNorm { x, inv_std } => {
                let cols = out.cols();
                let n = cols as f64;
                let mut d = Vec::with_capacity(out.len());
                for (i, inv) in inv_std.iter().enumerate() {
                    let (xhat, gy) = (out.row(i), g.row(i));
                    let sum_g: f64 = gy.iter().sum();
                    let sum_gx: f64 = gy.iter().zip(xhat).map(|(a, b)| a * b).sum();
                    d.extend(
                        gy.iter()
                            .zip(xhat)
                            .map(|(gv, xh)| inv / n * (n * gv - sum_g - xh * sum_gx)),
                    );
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let d = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, gv)| gv * gelu_parts(*v).1)
                    .collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, gv)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Softplus(x) => {
                let xv = self.value(*x);
                let d = xv.data().iter().zip(g.data()).map(|(v, gv)| gv * sigmoid(*v)).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                let d = xv.data().iter().zip(g.data()).map(|(v, gv)| gv / v).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Exp(x) => {
                let d = out.data().iter().zip(g.data()).map(|(y, gv)| gv * y).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::MaskedFill { x, mask } => {
                let d = g
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(gv, m)| if *m { 0.0 } else { *gv })
                    .collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Noise { mean, scale, eps } => {
                let ds = g.data().iter().zip(eps.data()).map(|(gv, e)| gv * e).collect();
                vec![(*mean, g.clone()), (*scale, like(*scale, ds)?)]
            }
        };
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(t: &mut Tape, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        t.param(Arc::new(Array::matrix(rows, cols, data).unwrap())).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Array::row_vector(vec![0.0, 0.0])).unwrap();
        let y = t.softmax(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(Array::row_vector(vec![3.0; 6])).unwrap();
        let y = t.layer_norm(x).unwrap();
        assert!(t.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_matmul_returns_operand() {
        let mut t = Tape::new();
        let i = t.constant(Array::identity(3)).unwrap();
        let a = leaf(&mut t, 3, 2, vec![0.3, -1.0, 2.5, 4.0, -0.25, 7.5]);
        let y = t.matmul(i, a).unwrap();
        assert_eq!(t.value(y), t.value(a));
    }

    #[test]
    fn sum_gradient_is_ones_and_square_gradient_is_twice() {
        let mut t = Tape::new();
        let w = leaf(&mut t, 1, 3, vec![1.0, -2.0, 0.5]);
        let s = t.sum(w).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut t = Tape::new();
        let w = leaf(&mut t, 1, 3, vec![1.0, -2.0, 0.5]);
        let sq = t.mul(w, w).unwrap();
        let s = t.sum(sq).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(w).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn repeated_backward_accumulates_until_zeroed() {
        let mut t = Tape::new();
        let w = leaf(&mut t, 1, 2, vec![1.0, 2.0]);
        let s = t.sum(w).unwrap();
        t.backward(s).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(w).unwrap().data(), &[2.0, 2.0]);
        t.zero_grad();
        assert!(t.grad(w).is_none());
        t.backward(s).unwrap();
        assert_eq!(t.grad(w).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_foreign_and_non_scalar_vars() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = leaf(&mut a, 1, 2, vec![1.0, 2.0]);
        let s = a.sum(x).unwrap();
        assert_eq!(b.backward(s), Err(TensorError::ForeignVar));
        assert!(matches!(a.backward(x), Err(TensorError::NotScalar { .. })));
    }

    #[test]
    fn shape_errors_name_the_operation() {
        let mut t = Tape::new();
        let a = leaf(&mut t, 2, 3, vec![0.0; 6]);
        let b = leaf(&mut t, 2, 3, vec![0.0; 6]);
        match t.matmul(a, b) {
            Err(TensorError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_results_fail_at_the_producing_op() {
        let mut t = Tape::new();
        let x = leaf(&mut t, 1, 1, vec![800.0]);
        assert_eq!(t.exp(x), Err(TensorError::NonFinite { op: "exp" }));
        let z = leaf(&mut t, 1, 1, vec![0.0]);
        assert!(matches!(t.log(z), Err(TensorError::Domain { op: "log", .. })));
    }

    #[test]
    fn single_entry_segments_get_full_weight() {
        let mut t = Tape::new();
        let x = leaf(&mut t, 3, 1, vec![4.0, -1.0, 0.5]);
        let y = t.segment_softmax(x, &[0, 1, 1], 2).unwrap();
        let v = t.value(y).data();
        assert_eq!(v[0], 1.0);
        assert!((v[1] + v[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn record_is_topologically_ordered() {
        let mut t = Tape::new();
        let a = leaf(&mut t, 1, 2, vec![1.0, 2.0]);
        let b = t.gelu(a).unwrap();
        let _ = t.sum(b).unwrap();
        let rec = t.record();
        assert_eq!(rec[0].0, "leaf");
        for (i, (_, inputs)) in rec.iter().enumerate() {
            assert!(inputs.iter().all(|j| *j < i));
        }
    }
}
