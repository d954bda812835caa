//! Reverse-mode differentiation tape.
//!
//! A [`Graph`] records every operation applied to its variables together with
//! the operation's value. [`Graph::backward`] walks the tape in reverse and
//! applies the analytic adjoint of each op. Parameters are pulled in by name
//! from a borrowed [`ModelParams`]; pulling the same name twice yields the same
//! node, so every block that reuses a name shares one tensor and one gradient.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::params::{ModelParams, ParamId};
use crate::tensor::{dot, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Named model blocks, recorded in execution order on [`Graph::trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    EncodeBev,
    EncodeCommand,
    TokenLearn,
    SceneAttention,
    Plan,
    SelectBranch,
    Mln,
    SelfAttentionRefine,
    TokenFuse,
    ForwardLoop,
    EchoLoop,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Input,
    Param,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var, f64),
    Conv3x3 {
        x: Var,
        w: Var,
        b: Var,
        height: usize,
        width: usize,
    },
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    MeanAbsDiff(Var, Var),
    MeanSqDiff(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
    param_nodes: BTreeMap<ParamId, Var>,
    trace: Vec<Block>,
}

/// Adjoints produced by [`Graph::backward`].
///
/// A parameter or variable that the loss does not reach has no entry, which is
/// distinct from an entry that happens to be zero.
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    vars: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.index()).and_then(|g| g.as_ref())
    }

    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.vars.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn into_params(self) -> Vec<Option<Tensor>> {
        self.params
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn trace(&self) -> &[Block] {
        &self.trace
    }

    pub fn record(&mut self, block: Block) {
        self.trace.push(block);
    }

    /// Names of every parameter pulled onto this tape, sorted.
    pub fn touched_params(&self) -> Vec<&'p str> {
        let mut names: Vec<&str> = self
            .param_nodes
            .keys()
            .map(|id| self.params.name(*id))
            .collect();
        names.sort_unstable();
        names
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, true)
    }

    /// Stop-gradient copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    /// Panics if `name` is not a parameter of the bound [`ModelParams`].
    pub fn param(&mut self, name: &str) -> Var {
        let id = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        if let Some(v) = self.param_nodes.get(&id) {
            return *v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param, true);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_bt(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulBt(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(ta.rows, ta.cols, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// Adds the `1×n` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert!(tr.rows == 1 && tr.cols == ta.cols, "row broadcast shape");
        let mut out = ta.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&tr.data) {
                *o += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    /// Multiplies every row of `a` elementwise by the `1×n` row `row`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert!(tr.rows == 1 && tr.cols == ta.cols, "row broadcast shape");
        let mut out = ta.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&tr.data) {
                *o *= b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::MulRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data.iter().map(|v| libm::tanh(*v)).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Normalizes each row to zero mean and unit variance (biased variance).
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let (mean, inv_std) = row_moments(row, eps);
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_std;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::LayerNormRows(a, eps), ng)
    }

    /// Same-padded 3×3 convolution over a `height×width` grid stored one cell
    /// per row. `w` is `(9·c_in)×c_out` with row index `tap·c_in + ci`, taps
    /// ordered row-major over the 3×3 window; `b` is `1×c_out`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var, height: usize, width: usize) -> Var {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let c_in = tx.cols;
        let c_out = tw.cols;
        assert_eq!(tx.rows, height * width, "conv input rows");
        assert_eq!(tw.rows, 9 * c_in, "conv weight rows");
        assert_eq!(tb.shape(), (1, c_out), "conv bias shape");
        let mut out = Tensor::zeros(height * width, c_out);
        for i in 0..height {
            for j in 0..width {
                let p = i * width + j;
                let o_row = &mut out.data[p * c_out..(p + 1) * c_out];
                o_row.copy_from_slice(&tb.data);
                for_each_tap(i, j, height, width, |tap, q| {
                    let x_row = &tx.data[q * c_in..(q + 1) * c_in];
                    for (ci, &a) in x_row.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let base = (tap * c_in + ci) * c_out;
                        let w_row = &tw.data[base..base + c_out];
                        for (o, wv) in o_row.iter_mut().zip(w_row) {
                            *o += a * wv;
                        }
                    }
                });
            }
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(
            out,
            Op::Conv3x3 {
                x,
                w,
                b,
                height,
                width,
            },
            ng,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        assert!(start + len <= ta.rows, "row slice out of range");
        let data = ta.data[start * ta.cols..(start + len) * ta.cols].to_vec();
        let out = Tensor::from_vec(len, ta.cols, data);
        let ng = self.ng(a);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        assert!(start + len <= ta.cols, "column slice out of range");
        let mut out = Tensor::zeros(ta.rows, len);
        for r in 0..ta.rows {
            out.row_mut(r)
                .copy_from_slice(&ta.row(r)[start..start + len]);
        }
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.rows, rows, "concat row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + t.cols].copy_from_slice(t.row(r));
            }
            offset += t.cols;
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), rows * cols, "reshape element count");
        let out = Tensor::from_vec(rows, cols, ta.data.clone());
        let ng = self.ng(a);
        self.push(out, Op::Reshape(a), ng)
    }

    /// `mean(|a − b|)` as a `1×1` tensor.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mean_abs_diff shape");
        let s: f64 = ta.data.iter().zip(&tb.data).map(|(x, y)| (x - y).abs()).sum();
        let out = Tensor::scalar(s / ta.len() as f64);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MeanAbsDiff(a, b), ng)
    }

    /// `mean((a − b)²)` as a `1×1` tensor.
    pub fn mean_sq_diff(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mean_sq_diff shape");
        let s: f64 = ta
            .data
            .iter()
            .zip(&tb.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let out = Tensor::scalar(s / ta.len() as f64);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MeanSqDiff(a, b), ng)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be 1x1");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params = vec![None; self.params.len()];
        for (id, v) in &self.param_nodes {
            params[id.index()] = grads[v.0].take();
        }
        // Only inputs are reported per variable; intermediate adjoints are dropped.
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Input) {
                grads[i] = None;
            }
        }
        Gradients {
            params,
            vars: grads,
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Constant | Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    self.accumulate(grads, *a, g.matmul_bt(self.value(*b)));
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, self.value(*a).matmul_at(g));
                }
            }
            Op::MatMulBt(a, b) => {
                // c = a·bᵀ: da = g·b, db = gᵀ·a
                if self.ng(*a) {
                    self.accumulate(grads, *a, g.matmul(self.value(*b)));
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, g.matmul_at(self.value(*a)));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.ng(*b) {
                    let mut n = g.clone();
                    n.scale_assign(-1.0);
                    self.accumulate(grads, *b, n);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let d = g.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
                }
                if self.ng(*b) {
                    let d = g.data.iter().zip(&ta.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::from_vec(g.rows, g.cols, d));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.ng(*row) {
                    self.accumulate(grads, *row, column_sums(g));
                }
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (self.value(*a), self.value(*row));
                if self.ng(*a) {
                    let mut d = g.clone();
                    for r in 0..d.rows {
                        for (x, s) in d.row_mut(r).iter_mut().zip(&tr.data) {
                            *x *= s;
                        }
                    }
                    self.accumulate(grads, *a, d);
                }
                if self.ng(*row) {
                    let mut d = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for ((acc, gv), av) in d.data.iter_mut().zip(g.row(r)).zip(ta.row(r)) {
                            *acc += gv * av;
                        }
                    }
                    self.accumulate(grads, *row, d);
                }
            }
            Op::Scale(a, s) => {
                // A zero weight cuts the branch so it receives no gradient at all.
                if *s != 0.0 {
                    let mut d = g.clone();
                    d.scale_assign(*s);
                    self.accumulate(grads, *a, d);
                }
            }
            Op::Tanh(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&out.data)
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::SoftmaxRows(a) => {
                let mut d = Tensor::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (gy, y) = (g.row(r), out.row(r));
                    let s = dot(gy, y);
                    for ((dv, gv), yv) in d.row_mut(r).iter_mut().zip(gy).zip(y) {
                        *dv = yv * (gv - s);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::LayerNormRows(a, eps) => {
                let ta = self.value(*a);
                let n = g.cols as f64;
                let mut d = Tensor::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (_, inv_std) = row_moments(ta.row(r), *eps);
                    let (gy, y) = (g.row(r), out.row(r));
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = dot(gy, y) / n;
                    for ((dv, gv), yv) in d.row_mut(r).iter_mut().zip(gy).zip(y) {
                        *dv = inv_std * (gv - mean_g - yv * mean_gy);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Conv3x3 {
                x,
                w,
                b,
                height,
                width,
            } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let c_in = tx.cols;
                let c_out = tw.cols;
                let want_x = self.ng(*x);
                let want_w = self.ng(*w);
                let mut dx = Tensor::zeros(tx.rows, c_in);
                let mut dw = Tensor::zeros(tw.rows, c_out);
                if want_x || want_w {
                    for i in 0..*height {
                        for j in 0..*width {
                            let p = i * width + j;
                            let g_row = g.row(p);
                            for_each_tap(i, j, *height, *width, |tap, q| {
                                for ci in 0..c_in {
                                    let base = (tap * c_in + ci) * c_out;
                                    if want_x {
                                        dx.data[q * c_in + ci] +=
                                            dot(&tw.data[base..base + c_out], g_row);
                                    }
                                    if want_w {
                                        let a = tx.data[q * c_in + ci];
                                        if a != 0.0 {
                                            for (dv, gv) in
                                                dw.data[base..base + c_out].iter_mut().zip(g_row)
                                            {
                                                *dv += a * gv;
                                            }
                                        }
                                    }
                                }
                            });
                        }
                    }
                }
                if want_x {
                    self.accumulate(grads, *x, dx);
                }
                if want_w {
                    self.accumulate(grads, *w, dw);
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, column_sums(g));
                }
            }
            Op::SliceRows(a, start) => {
                let ta = self.value(*a);
                let mut d = Tensor::zeros(ta.rows, ta.cols);
                d.data[start * ta.cols..start * ta.cols + g.len()].copy_from_slice(&g.data);
                self.accumulate(grads, *a, d);
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let mut d = Tensor::zeros(ta.rows, ta.cols);
                for r in 0..g.rows {
                    d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let cols = self.value(*p).cols;
                    if self.ng(*p) {
                        let mut d = Tensor::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(grads, *p, d);
                    }
                    offset += cols;
                }
            }
            Op::Reshape(a) => {
                let ta = self.value(*a);
                self.accumulate(grads, *a, Tensor::from_vec(ta.rows, ta.cols, g.data.clone()));
            }
            Op::MeanAbsDiff(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let s = g.data[0] / ta.len() as f64;
                let d: Vec<f64> = ta
                    .data
                    .iter()
                    .zip(&tb.data)
                    .map(|(x, y)| s * signum0(x - y))
                    .collect();
                self.diff_adjoint(grads, *a, *b, Tensor::from_vec(ta.rows, ta.cols, d));
            }
            Op::MeanSqDiff(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let s = 2.0 * g.data[0] / ta.len() as f64;
                let d: Vec<f64> = ta
                    .data
                    .iter()
                    .zip(&tb.data)
                    .map(|(x, y)| s * (x - y))
                    .collect();
                self.diff_adjoint(grads, *a, *b, Tensor::from_vec(ta.rows, ta.cols, d));
            }
        }
    }

    fn diff_adjoint(&self, grads: &mut [Option<Tensor>], a: Var, b: Var, d: Tensor) {
        if self.ng(b) {
            let mut n = d.clone();
            n.scale_assign(-1.0);
            self.accumulate(grads, b, n);
        }
        self.accumulate(grads, a, d);
    }
}

#[inline]
fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut d = Tensor::zeros(1, g.cols);
    for r in 0..g.rows {
        for (acc, v) in d.data.iter_mut().zip(g.row(r)) {
            *acc += v;
        }
    }
    d
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean and `1/sqrt(var + eps)` of a row, biased variance.
pub(crate) fn row_moments(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / libm::sqrt(var + eps))
}

#[inline]
fn for_each_tap(i: usize, j: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize)) {
    for di in 0..3usize {
        let ni = i + di;
        if ni == 0 || ni > height {
            continue;
        }
        let ni = ni - 1;
        for dj in 0..3usize {
            let nj = j + dj;
            if nj == 0 || nj > width {
                continue;
            }
            f(di * 3 + dj, ni * width + nj - 1);
        }
    }
}
