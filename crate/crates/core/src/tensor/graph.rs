use rand::Rng;

use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    /// `a * b^T`
    MatMulNt { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    AddRow { x: Var, bias: Var },
    /// Adds a constant tensor; gradient flows to `x` only.
    AddConst { x: Var },
    Gelu { x: Var },
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    GatherRows { x: Var, index: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols { parts: Vec<Var> },
    ConcatRows { parts: Vec<Var> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so every op's inputs have smaller
/// indices than the op itself and a reverse sweep is a valid topological
/// order. Gradients of shared subexpressions accumulate.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, present after [`Graph::backward`] for every
    /// differentiable node reachable from the loss.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::with_shape(node.value.shape().to_vec(), g.clone()))
    }

    pub(crate) fn grad_slice(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::with_shape(vec![m, n], out), rg, Op::MatMul { a, b }))
    }

    /// `a * b^T` for `a: m x k`, `b: n x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul_nt")?;
        let (n, k2) = self.value(b).dims2("matmul_nt")?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), true, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::with_shape(vec![m, n], out), rg, Op::MatMulNt { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::with_shape(shape, data), rg, Op::Add { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::with_shape(shape, data), rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x);
        let data = value.data().iter().map(|v| v * factor).collect();
        let shape = value.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor::with_shape(shape, data), rg, Op::Scale { x, factor })
    }

    /// Adds `bias` (one value per column) to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(bias).numel() != cols {
            return Err(Error::shape("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, b)| v + b))
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor::with_shape(shape, data), rg, Op::AddRow { x, bias }))
    }

    /// Adds a non-differentiable tensor, typically an additive `-inf` mask.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(Error::shape("add_const", self.shape(x), c.shape()));
        }
        let data = zip_map(self.value(x).data(), c.data(), |a, b| a + b);
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::with_shape(shape, data), rg, Op::AddConst { x }))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let data = value.data().iter().map(|&v| gelu(v)).collect();
        let shape = value.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor::with_shape(shape, data), rg, Op::Gelu { x })
    }

    /// Softmax along `axis`. Each slice is shifted by its maximum before
    /// exponentiation; `-inf` entries map to exactly zero.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Config(format!("softmax axis {axis} out of range for shape {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut slice = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut max = f64::NEG_INFINITY;
                for (j, s) in slice.iter_mut().enumerate() {
                    *s = src[at(j)];
                    max = max.max(*s);
                }
                softmax_in_place(&mut slice, max);
                for (j, s) in slice.iter().enumerate() {
                    out[at(j)] = *s;
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::with_shape(shape, out),
            rg,
            Op::Softmax { x, outer, len, inner },
        ))
    }

    /// Normalizes each last-dimension row to zero mean and unit (biased)
    /// variance, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(gain).numel() != cols || self.value(bias).numel() != cols {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let src = self.value(x).data();
        let rows = src.len() / cols.max(1);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; src.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            Tensor::with_shape(shape, out),
            rg,
            Op::LayerNorm { x, gain, bias, xhat, rstd },
        ))
    }

    /// Inverted dropout. Returns `x` itself when not training or when
    /// `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} must lie in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = zip_map(self.value(x).data(), &mask, |a, m| a * m);
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::with_shape(shape, data), rg, Op::Dropout { x, mask }))
    }

    /// Selects rows of a 2-D tensor; rows may repeat. Used both for
    /// embedding lookup and for gathering prediction positions.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2("gather_rows")?;
        let mut out = Vec::with_capacity(index.len() * cols);
        for (r, &i) in index.iter().enumerate() {
            if i >= rows {
                return Err(Error::Index {
                    what: "gather_rows",
                    row: r,
                    index: i,
                    limit: rows,
                });
            }
            out.extend_from_slice(self.value(x).row(i));
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::with_shape(vec![index.len(), cols], out),
            rg,
            Op::GatherRows { x, index: index.to_vec() },
        ))
    }

    /// Columns `start..start+len` of the last dimension.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x);
        let cols = value.cols();
        if start + len > cols || len == 0 {
            return Err(Error::shape("slice_cols", value.shape(), &[start, len]));
        }
        let out: Vec<f64> = value
            .data()
            .chunks(cols)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = value.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::with_shape(shape, out), rg, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Config("concat_cols of nothing".into()))?;
        let (rows, _) = self.value(first).dims2("concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_cols")?;
            if r != rows {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::with_shape(vec![rows, total], out),
            rg,
            Op::ConcatCols { parts: parts.to_vec() },
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Config("concat_rows of nothing".into()))?;
        let (_, cols) = self.value(first).dims2("concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_rows")?;
            if c != cols {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::with_shape(vec![rows, cols], out),
            rg,
            Op::ConcatRows { parts: parts.to_vec() },
        ))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. An empty logits matrix yields a loss of zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, classes) = self.value(logits).dims2("cross_entropy")?;
        if rows != targets.len() {
            return Err(Error::shape("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        if let Some((row, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= classes) {
            return Err(Error::Index {
                what: "cross_entropy target",
                row,
                index: t,
                limit: classes,
            });
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &mut probs[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let logsum = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += logsum - row[t];
            softmax_in_place(row, max);
        }
        let loss = if rows == 0 { 0.0 } else { total / rows as f64 };
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum { x })
    }

    /// Propagates `d loss / d node` to every differentiable node reachable
    /// from `loss`, which must hold a single value.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", self.shape(loss), &[1]));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(i, &op, &g);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    /// Runs `f` on the gradient buffer of `v`, allocating it on first use.
    /// No-op for nodes that do not require gradients.
    fn acc(&mut self, v: Var, f: impl FnOnce(&mut [f64], &[f64])) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let n = node.value.numel();
        let grad = node.grad.get_or_insert_with(|| vec![0.0; n]);
        f(grad, node.value.data());
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = dims(self.shape(*a));
                let n = self.shape(*b)[1];
                if self.nodes[a.0].requires_grad {
                    let bv = self.value(*b).data().to_vec();
                    self.acc(*a, |ga, _| gemm(m, n, k, g, false, &bv, true, ga, 1.0));
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.value(*a).data().to_vec();
                    self.acc(*b, |gb, _| gemm(k, m, n, &av, true, g, false, gb, 1.0));
                }
            }
            Op::MatMulNt { a, b } => {
                let (m, k) = dims(self.shape(*a));
                let n = self.shape(*b)[0];
                if self.nodes[a.0].requires_grad {
                    let bv = self.value(*b).data().to_vec();
                    self.acc(*a, |ga, _| gemm(m, n, k, g, false, &bv, false, ga, 1.0));
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.value(*a).data().to_vec();
                    self.acc(*b, |gb, _| gemm(n, m, k, g, true, &av, false, gb, 1.0));
                }
            }
            Op::Add { a, b } => {
                self.acc(*a, |ga, _| add_into(ga, g));
                self.acc(*b, |gb, _| add_into(gb, g));
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data().to_vec();
                let bv = self.value(*b).data().to_vec();
                self.acc(*a, |ga, _| {
                    ga.iter_mut().zip(g).zip(&bv).for_each(|((d, g), b)| *d += g * b)
                });
                self.acc(*b, |gb, _| {
                    gb.iter_mut().zip(g).zip(&av).for_each(|((d, g), a)| *d += g * a)
                });
            }
            Op::Scale { x, factor } => {
                self.acc(*x, |gx, _| gx.iter_mut().zip(g).for_each(|(d, g)| *d += g * factor));
            }
            Op::AddRow { x, bias } => {
                self.acc(*x, |gx, _| add_into(gx, g));
                self.acc(*bias, |gb, _| {
                    let cols = gb.len();
                    for row in g.chunks(cols) {
                        add_into(gb, row);
                    }
                });
            }
            Op::AddConst { x } => self.acc(*x, |gx, _| add_into(gx, g)),
            Op::Gelu { x } => {
                self.acc(*x, |gx, xv| {
                    for ((d, g), &v) in gx.iter_mut().zip(g).zip(xv) {
                        *d += g * gelu_grad(v);
                    }
                });
            }
            Op::Softmax { x, outer, len, inner } => {
                let y = self.nodes[i].value.data().to_vec();
                let (outer, len, inner) = (*outer, *len, *inner);
                self.acc(*x, |gx, _| {
                    for o in 0..outer {
                        for c in 0..inner {
                            let at = |j: usize| (o * len + j) * inner + c;
                            let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..len {
                                gx[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let cols = self.value(*gain).numel();
                if self.nodes[x.0].requires_grad {
                    let gv = self.value(*gain).data().to_vec();
                    self.acc(*x, |gx, _| {
                        let mut dxhat = vec![0.0; cols];
                        for (r, rs) in rstd.iter().enumerate() {
                            let span = r * cols..(r + 1) * cols;
                            let (gr, hr) = (&g[span.clone()], &xhat[span.clone()]);
                            for c in 0..cols {
                                dxhat[c] = gr[c] * gv[c];
                            }
                            let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                            let mean_dh =
                                dxhat.iter().zip(hr).map(|(d, h)| d * h).sum::<f64>() / cols as f64;
                            for c in 0..cols {
                                gx[span.start + c] += rs * (dxhat[c] - mean_d - hr[c] * mean_dh);
                            }
                        }
                    });
                }
                self.acc(*gain, |gg, _| {
                    for (gr, hr) in g.chunks(cols).zip(xhat.chunks(cols)) {
                        gg.iter_mut().zip(gr.iter().zip(hr)).for_each(|(d, (g, h))| *d += g * h);
                    }
                });
                self.acc(*bias, |gb, _| {
                    for gr in g.chunks(cols) {
                        add_into(gb, gr);
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.acc(*x, |gx, _| {
                    gx.iter_mut().zip(g).zip(mask).for_each(|((d, g), m)| *d += g * m)
                });
            }
            Op::GatherRows { x, index } => {
                self.acc(*x, |gx, xv| {
                    let cols = g.len().checked_div(index.len()).unwrap_or(0);
                    debug_assert!(cols == 0 || xv.len() % cols == 0);
                    for (r, &src) in index.iter().enumerate() {
                        add_into(&mut gx[src * cols..(src + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let cols = self.value(*x).cols();
                let len = self.nodes[i].value.cols();
                self.acc(*x, |gx, _| {
                    for (dst, src) in gx.chunks_mut(cols).zip(g.chunks(len)) {
                        add_into(&mut dst[*start..start + len], src);
                    }
                });
            }
            Op::ConcatCols { parts } => {
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.acc(p, |gp, _| {
                        for (dst, src) in gp.chunks_mut(c).zip(g.chunks(total)) {
                            add_into(dst, &src[offset..offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    self.acc(p, |gp, _| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let rows = targets.len();
                if rows == 0 {
                    self.acc(*logits, |_, _| {});
                    return;
                }
                let classes = probs.len() / rows;
                let scale = g[0] / rows as f64;
                self.acc(*logits, |gl, _| {
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &probs[r * classes..(r + 1) * classes];
                        let dst = &mut gl[r * classes..(r + 1) * classes];
                        for (d, p) in dst.iter_mut().zip(row) {
                            *d += scale * p;
                        }
                        dst[t] -= scale;
                    }
                });
            }
            Op::Sum { x } => self.acc(*x, |gx, _| gx.iter_mut().for_each(|d| *d += g[0])),
        }
    }
}

fn dims(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1])
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn softmax_in_place(row: &mut [f64], max: f64) {
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::new();
        let eye = g.constant(matrix(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]));
        let x = g.constant(matrix(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let y = g.matmul(eye, x).unwrap();
        assert_eq!(g.value(y), g.value(x));

        let a = g.constant(matrix(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.constant(matrix(&[&[0.0], &[1.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[2.0, 4.0]);
        assert_eq!(g.value(c).shape(), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        match err {
            Error::Shape { left, right, .. } => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        let d = g.value(y).data();
        assert!(d.iter().all(|v| v.is_finite()));
        assert_eq!(d[0], 1.0);
        assert!(d[1] < 1e-300);
    }

    #[test]
    fn softmax_along_first_axis() {
        let mut g = Graph::new();
        let x = g.constant(matrix(&[&[0.0, 1.0], &[0.0, 3.0]]));
        let y = g.softmax(x, 0).unwrap();
        let d = g.value(y).data();
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[2] - 0.5).abs() < 1e-12);
        assert!((d[1] + d[3] - 1.0).abs() < 1e-12);
        assert!(g.softmax(x, 2).is_err());
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(matrix(&[&[3.0, 3.0, 3.0, 3.0]]));
        let gain = g.constant(Tensor::full(&[4], 1.0));
        let bias = g.constant(Tensor::zeros(&[4]));
        let y = g.layer_norm(x, gain, bias, 1e-12).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut g = Graph::new();
        let x = g.constant(matrix(&[&[1.0, 2.0, 3.0]]));
        let gain = g.constant(Tensor::full(&[3], 1.0));
        let bias = g.constant(Tensor::zeros(&[3]));
        let y = g.layer_norm(x, gain, bias, 1e-12).unwrap();
        let d = g.value(y).data();
        let mean = d.iter().sum::<f64>() / 3.0;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);

        let short = g.constant(Tensor::full(&[2], 1.0));
        assert!(matches!(g.layer_norm(x, short, bias, 1e-12), Err(Error::Shape { .. })));
    }

    #[test]
    fn dropout_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[4, 4], 2.0));
        assert_eq!(g.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(g.dropout(x, 0.7, &mut rng, false).unwrap(), x);
        assert!(matches!(g.dropout(x, 1.0, &mut rng, true), Err(Error::Config(_))));
        let y = g.dropout(x, 0.5, &mut rng, true).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 4.0));
    }

    #[test]
    fn cross_entropy_limits() {
        let mut g = Graph::new();
        let uniform = g.constant(Tensor::zeros(&[3, 7]));
        let loss = g.cross_entropy(uniform, &[0, 3, 6]).unwrap();
        assert!((g.value(loss).item() - 7f64.ln()).abs() < 1e-12);

        let confident = g.constant(matrix(&[&[60.0, 0.0, 0.0], &[0.0, 0.0, 60.0]]));
        let loss = g.cross_entropy(confident, &[0, 2]).unwrap();
        assert!(g.value(loss).item() < 1e-20);

        match g.cross_entropy(confident, &[0, 3]) {
            Err(Error::Index { row, index, limit, .. }) => assert_eq!((row, index, limit), (1, 3, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_entropy_ignores_masked_columns() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[1, 4]));
        let mask = Tensor::vector(vec![0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        let mask = Tensor::new(vec![1, 4], mask.into_data()).unwrap();
        let y = g.add_const(x, &mask).unwrap();
        let loss = g.cross_entropy(y, &[1]).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-12);
        g.backward(loss).unwrap();
        let grad = g.grad(x).unwrap();
        assert_eq!(grad.data(), &[0.5, -0.5, 0.0, 0.0]);
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // f = sum(x*x + x) => df/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let sq = g.mul(x, x).unwrap();
        let s = g.add(sq, x).unwrap();
        let f = g.sum(s);
        g.backward(f).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, -3.0, 2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let c = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let y = g.mul(x, c).unwrap();
        let f = g.sum(y);
        g.backward(f).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 4.0]);
    }
}
