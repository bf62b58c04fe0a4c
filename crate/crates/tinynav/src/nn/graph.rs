//! Reverse-mode automatic differentiation over dense 2D tensors.
//!
//! Values are computed eagerly as the graph is built; `backward` walks the
//! node list in reverse creation order. Evaluation order is fixed and
//! single-threaded, so identical inputs give bit-identical results.

use super::NnError;
use crate::world::wrap_angle;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    Transpose(NodeId),
    ConcatRows(Vec<NodeId>),
    SliceRows {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    MeanAll(NodeId),
    MseWrapped {
        pred: NodeId,
        target: NodeId,
        angle_col: usize,
    },
}

struct Node {
    shape: Shape,
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

const LN_EPS: f64 = 1e-5;

/// An autodiff graph. Build ops eagerly, then call [`Graph::backward`] on a
/// scalar node to populate gradients.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(shape.len(), value.len());
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node {
            shape,
            value,
            grad,
            op,
        });
        self.nodes.len() - 1
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].grad
    }

    /// Scalar convenience accessor for [1,1] nodes.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].shape.len(), 1);
        self.nodes[id].value[0]
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        self.push(Shape { rows, cols }, value, Op::Leaf)
    }

    fn check(
        &self,
        op: &str,
        cond: bool,
        a: Shape,
        b: Shape,
    ) -> Result<(), NnError> {
        if cond {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch {
                op: op.to_string(),
                lhs: format!("{}x{}", a.rows, a.cols),
                rhs: format!("{}x{}", b.rows, b.cols),
            })
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        self.check("matmul", sa.cols == sb.rows, sa, sb)?;
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let mut out = vec![0.0; m * n];
        matmul_into(&self.nodes[a].value, &self.nodes[b].value, &mut out, m, k, n);
        Ok(self.push(Shape { rows: m, cols: n }, out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        self.check("add", sa == sb, sa, sb)?;
        let out = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(sa, out, Op::Add(a, b)))
    }

    /// Adds a [1, n] row vector to every row of a [m, n] matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NnError> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        self.check("add_row", sr.rows == 1 && sa.cols == sr.cols, sa, sr)?;
        let n = sa.cols;
        let mut out = self.nodes[a].value.clone();
        for r in 0..sa.rows {
            for j in 0..n {
                out[r * n + j] += self.nodes[row].value[j];
            }
        }
        Ok(self.push(sa, out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let s = self.shape(a);
        let out = self.nodes[a].value.iter().map(|x| x * factor).collect();
        self.push(s, out, Op::Scale(a, factor))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        let out = self.nodes[a].value.iter().map(|&x| gelu(x)).collect();
        self.push(s, out, Op::Gelu(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        let mut out = vec![0.0; s.len()];
        for r in 0..s.rows {
            let row = &self.nodes[a].value[r * s.cols..(r + 1) * s.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                out[r * s.cols + j] = e;
                sum += e;
            }
            for j in 0..s.cols {
                out[r * s.cols + j] /= sum;
            }
        }
        self.push(s, out, Op::Softmax(a))
    }

    /// Row-wise layer normalization with a per-feature affine.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> Result<NodeId, NnError> {
        let (sx, sg) = (self.shape(x), self.shape(gamma));
        self.check("layer_norm", sg.rows == 1 && sg.cols == sx.cols, sx, sg)?;
        let sb = self.shape(beta);
        self.check("layer_norm", sb.rows == 1 && sb.cols == sx.cols, sx, sb)?;
        let n = sx.cols;
        let mut out = vec![0.0; sx.len()];
        for r in 0..sx.rows {
            let row = &self.nodes[x].value[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..n {
                let xhat = (row[j] - mean) * inv_std;
                out[r * n + j] = self.nodes[gamma].value[j] * xhat + self.nodes[beta].value[j];
            }
        }
        Ok(self.push(sx, out, Op::LayerNorm { x, gamma, beta }))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a);
        let mut out = vec![0.0; s.len()];
        for r in 0..s.rows {
            for c in 0..s.cols {
                out[c * s.rows + r] = self.nodes[a].value[r * s.cols + c];
            }
        }
        self.push(
            Shape {
                rows: s.cols,
                cols: s.rows,
            },
            out,
            Op::Transpose(a),
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        let cols = self.shape(parts[0]).cols;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let sp = self.shape(p);
            self.check("concat_rows", sp.cols == cols, self.shape(parts[0]), sp)?;
            rows += sp.rows;
            out.extend_from_slice(&self.nodes[p].value);
        }
        Ok(self.push(Shape { rows, cols }, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let s = self.shape(x);
        assert!(start + len <= s.rows, "slice_rows out of range");
        let out = self.nodes[x].value[start * s.cols..(start + len) * s.cols].to_vec();
        self.push(
            Shape {
                rows: len,
                cols: s.cols,
            },
            out,
            Op::SliceRows { x, start },
        )
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        let rows = self.shape(parts[0]).rows;
        let total: usize = parts.iter().map(|&p| self.shape(p).cols).sum();
        let mut out = vec![0.0; rows * total];
        let mut col0 = 0;
        for &p in parts {
            let sp = self.shape(p);
            self.check("concat_cols", sp.rows == rows, self.shape(parts[0]), sp)?;
            for r in 0..rows {
                for c in 0..sp.cols {
                    out[r * total + col0 + c] = self.nodes[p].value[r * sp.cols + c];
                }
            }
            col0 += sp.cols;
        }
        Ok(self.push(
            Shape { rows, cols: total },
            out,
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let s = self.shape(x);
        assert!(start + len <= s.cols, "slice_cols out of range");
        let mut out = vec![0.0; s.rows * len];
        for r in 0..s.rows {
            out[r * len..(r + 1) * len]
                .copy_from_slice(&self.nodes[x].value[r * s.cols + start..r * s.cols + start + len]);
        }
        self.push(
            Shape {
                rows: s.rows,
                cols: len,
            },
            out,
            Op::SliceCols { x, start },
        )
    }

    /// Row-major reshape (copy).
    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId, NnError> {
        let s = self.shape(x);
        self.check("reshape", s.len() == rows * cols, s, Shape { rows, cols })?;
        let out = self.nodes[x].value.clone();
        Ok(self.push(Shape { rows, cols }, out, Op::Reshape(x)))
    }

    /// 1D convolution over the row (token/column) axis.
    /// x: [t, c_in], w: [kernel * c_in, c_out], b: [1, c_out]; zero padding.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, NnError> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let c_in = sx.cols;
        self.check("conv1d", sw.rows == kernel * c_in, sx, sw)?;
        let c_out = sw.cols;
        let sb = self.shape(b);
        self.check("conv1d", sb.rows == 1 && sb.cols == c_out, sw, sb)?;
        let t_in = sx.rows;
        assert!(t_in + 2 * pad >= kernel, "conv1d input shorter than kernel");
        let t_out = (t_in + 2 * pad - kernel) / stride + 1;
        let mut out = vec![0.0; t_out * c_out];
        for o in 0..t_out {
            for co in 0..c_out {
                out[o * c_out + co] = self.nodes[b].value[co];
            }
            for j in 0..kernel {
                let ti = (o * stride + j) as i64 - pad as i64;
                if ti < 0 || ti >= t_in as i64 {
                    continue;
                }
                let xrow = &self.nodes[x].value[ti as usize * c_in..(ti as usize + 1) * c_in];
                for (ci, &xv) in xrow.iter().enumerate() {
                    let wrow = &self.nodes[w].value[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                    for co in 0..c_out {
                        out[o * c_out + co] += xv * wrow[co];
                    }
                }
            }
        }
        Ok(self.push(
            Shape {
                rows: t_out,
                cols: c_out,
            },
            out,
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                stride,
                pad,
            },
        ))
    }

    /// Mean over all elements, producing a [1,1] scalar.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        let mean = self.nodes[x].value.iter().sum::<f64>() / s.len() as f64;
        self.push(Shape { rows: 1, cols: 1 }, vec![mean], Op::MeanAll(x))
    }

    /// Mean squared error over all components, with the `angle_col` column
    /// differenced on the wrapped circle.
    pub fn mse_wrapped(
        &mut self,
        pred: NodeId,
        target: NodeId,
        angle_col: usize,
    ) -> Result<NodeId, NnError> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        self.check("mse_wrapped", sp == st, sp, st)?;
        let mut sum = 0.0;
        for r in 0..sp.rows {
            for c in 0..sp.cols {
                let i = r * sp.cols + c;
                let d = self.nodes[pred].value[i] - self.nodes[target].value[i];
                let d = if c == angle_col { wrap_angle(d) } else { d };
                sum += d * d;
            }
        }
        let loss = sum / sp.len() as f64;
        Ok(self.push(
            Shape { rows: 1, cols: 1 },
            vec![loss],
            Op::MseWrapped {
                pred,
                target,
                angle_col,
            },
        ))
    }

    /// Populates gradients of `loss` (a [1,1] node) w.r.t. every node.
    pub fn backward(&mut self, loss: NodeId) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss].grad[0] = 1.0;
        for id in (0..=loss).rev() {
            if self.nodes[id].grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k, n) = (
                        self.shape(a).rows,
                        self.shape(a).cols,
                        self.shape(b).cols,
                    );
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    // dA += dC * B^T
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let drow = &dc[i * n..(i + 1) * n];
                        let arow = &mut da[i * k..(i + 1) * k];
                        for p in 0..k {
                            let brow = &self.nodes[b].value[p * n..(p + 1) * n];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += drow[j] * brow[j];
                            }
                            arow[p] += acc;
                        }
                    }
                    // dB += A^T * dC
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let arow = &self.nodes[a].value[i * k..(i + 1) * k];
                        let drow = &dc[i * n..(i + 1) * n];
                        for (p, &av) in arow.iter().enumerate() {
                            if av == 0.0 {
                                continue;
                            }
                            let brow = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                brow[j] += av * drow[j];
                            }
                        }
                    }
                    for (g, d) in self.nodes[a].grad.iter_mut().zip(&da) {
                        *g += d;
                    }
                    for (g, d) in self.nodes[b].grad.iter_mut().zip(&db) {
                        *g += d;
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Add(a, b) => {
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for (i, &d) in dc.iter().enumerate() {
                        self.nodes[a].grad[i] += d;
                    }
                    for (i, &d) in dc.iter().enumerate() {
                        self.nodes[b].grad[i] += d;
                    }
                    self.nodes[id].grad = dc;
                }
                Op::AddRow(a, row) => {
                    let s = self.shape(a);
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for (i, &d) in dc.iter().enumerate() {
                        self.nodes[a].grad[i] += d;
                    }
                    for r in 0..s.rows {
                        for j in 0..s.cols {
                            self.nodes[row].grad[j] += dc[r * s.cols + j];
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Scale(a, f) => {
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for (i, &d) in dc.iter().enumerate() {
                        self.nodes[a].grad[i] += d * f;
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Gelu(a) => {
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for (i, &d) in dc.iter().enumerate() {
                        let x = self.nodes[a].value[i];
                        self.nodes[a].grad[i] += d * gelu_grad(x);
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Softmax(a) => {
                    let s = self.shape(id);
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    let mut y_row = vec![0.0; s.cols];
                    for r in 0..s.rows {
                        y_row.copy_from_slice(&self.nodes[id].value[r * s.cols..(r + 1) * s.cols]);
                        let dy = &dc[r * s.cols..(r + 1) * s.cols];
                        let dot: f64 = y_row.iter().zip(dy).map(|(yi, di)| yi * di).sum();
                        for j in 0..s.cols {
                            self.nodes[a].grad[r * s.cols + j] += y_row[j] * (dy[j] - dot);
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let s = self.shape(x);
                    let n = s.cols;
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for r in 0..s.rows {
                        let xrow = &self.nodes[x].value[r * n..(r + 1) * n];
                        let mean = xrow.iter().sum::<f64>() / n as f64;
                        let var =
                            xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                        let inv_std = 1.0 / (var + LN_EPS).sqrt();
                        let dy = &dc[r * n..(r + 1) * n];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        let mut xhat = vec![0.0; n];
                        let mut dxhat = vec![0.0; n];
                        for j in 0..n {
                            xhat[j] = (xrow[j] - mean) * inv_std;
                            dxhat[j] = dy[j] * self.nodes[gamma].value[j];
                            sum_dxhat += dxhat[j];
                            sum_dxhat_xhat += dxhat[j] * xhat[j];
                        }
                        for j in 0..n {
                            self.nodes[x].grad[r * n + j] += inv_std
                                * (dxhat[j]
                                    - sum_dxhat / n as f64
                                    - xhat[j] * sum_dxhat_xhat / n as f64);
                            self.nodes[gamma].grad[j] += dy[j] * xhat[j];
                            self.nodes[beta].grad[j] += dy[j];
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Transpose(a) => {
                    let s = self.shape(id);
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for r in 0..s.rows {
                        for c in 0..s.cols {
                            self.nodes[a].grad[c * s.rows + r] += dc[r * s.cols + c];
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::ConcatRows(parts) => {
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    let mut off = 0;
                    for &p in &parts {
                        let len = self.nodes[p].value.len();
                        for i in 0..len {
                            self.nodes[p].grad[i] += dc[off + i];
                        }
                        off += len;
                    }
                    self.nodes[id].grad = dc;
                }
                Op::SliceRows { x, start } => {
                    let s = self.shape(id);
                    let sx = self.shape(x);
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for r in 0..s.rows {
                        for c in 0..s.cols {
                            self.nodes[x].grad[(start + r) * sx.cols + c] += dc[r * s.cols + c];
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::ConcatCols(parts) => {
                    let s = self.shape(id);
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    let mut col0 = 0;
                    for &p in &parts {
                        let sp = self.shape(p);
                        for r in 0..s.rows {
                            for c in 0..sp.cols {
                                self.nodes[p].grad[r * sp.cols + c] +=
                                    dc[r * s.cols + col0 + c];
                            }
                        }
                        col0 += sp.cols;
                    }
                    self.nodes[id].grad = dc;
                }
                Op::SliceCols { x, start } => {
                    let s = self.shape(id);
                    let sx = self.shape(x);
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for r in 0..s.rows {
                        for c in 0..s.cols {
                            self.nodes[x].grad[r * sx.cols + start + c] += dc[r * s.cols + c];
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Reshape(x) => {
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for (i, &d) in dc.iter().enumerate() {
                        self.nodes[x].grad[i] += d;
                    }
                    self.nodes[id].grad = dc;
                }
                Op::Conv1d {
                    x,
                    w,
                    b,
                    kernel,
                    stride,
                    pad,
                } => {
                    let s = self.shape(id);
                    let sx = self.shape(x);
                    let (t_in, c_in) = (sx.rows, sx.cols);
                    let c_out = s.cols;
                    let dc = std::mem::take(&mut self.nodes[id].grad);
                    for o in 0..s.rows {
                        for co in 0..c_out {
                            self.nodes[b].grad[co] += dc[o * c_out + co];
                        }
                        for j in 0..kernel {
                            let ti = (o * stride + j) as i64 - pad as i64;
                            if ti < 0 || ti >= t_in as i64 {
                                continue;
                            }
                            let ti = ti as usize;
                            for ci in 0..c_in {
                                let xv = self.nodes[x].value[ti * c_in + ci];
                                let mut dx = 0.0;
                                for co in 0..c_out {
                                    let d = dc[o * c_out + co];
                                    self.nodes[w].grad[(j * c_in + ci) * c_out + co] += xv * d;
                                    dx += self.nodes[w].value[(j * c_in + ci) * c_out + co] * d;
                                }
                                self.nodes[x].grad[ti * c_in + ci] += dx;
                            }
                        }
                    }
                    self.nodes[id].grad = dc;
                }
                Op::MeanAll(x) => {
                    let d = self.nodes[id].grad[0];
                    let n = self.nodes[x].value.len() as f64;
                    for g in self.nodes[x].grad.iter_mut() {
                        *g += d / n;
                    }
                }
                Op::MseWrapped {
                    pred,
                    target,
                    angle_col,
                } => {
                    let s = self.shape(pred);
                    let d = self.nodes[id].grad[0];
                    let scale = 2.0 * d / s.len() as f64;
                    for r in 0..s.rows {
                        for c in 0..s.cols {
                            let i = r * s.cols + c;
                            let diff =
                                self.nodes[pred].value[i] - self.nodes[target].value[i];
                            let diff = if c == angle_col { wrap_angle(diff) } else { diff };
                            self.nodes[pred].grad[i] += scale * diff;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}
