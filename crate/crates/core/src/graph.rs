//! Reverse-mode autodiff over an append-only computation graph.
//!
//! Each forward call appends a node holding its output tensor; `backward`
//! walks the nodes in reverse insertion order (a valid reverse topological
//! order) and accumulates exact gradients. Graphs are built per utterance
//! and thrown away; parameters live in a [`crate::params::ParamStore`] and
//! enter as leaves.
//!
//! Ops validate shapes on construction, so a successfully built graph
//! cannot fail during backward.

use crate::ctc;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// x[T×n]·w[n×m] + b[m]
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Relu { x: NodeId },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, normed: Tensor, inv_std: Vec<f64> },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    /// A[T×k]·B[S×k]ᵀ → [T×S]
    MatMulNt { a: NodeId, b: NodeId },
    /// A[T×S]·B[S×k] → [T×k]
    MatMulNn { a: NodeId, b: NodeId },
    SoftmaxRows { x: NodeId },
    SliceCols { x: NodeId, start: usize },
    ConcatCols { xs: Vec<NodeId> },
    /// x[L×cin] * w[(k·cin)×cout] + b[cout], strided, zero-padded on the left
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, kernel: usize, pad_left: usize },
    /// [T×d] → [1×2d] per-column mean then std
    StatsPool { x: NodeId, mean: Vec<f64>, std: Vec<f64> },
    Sum { x: NodeId },
    /// Scalar CTC loss; gradient w.r.t. logits precomputed at forward time.
    CtcLoss { logits: NodeId, dlogits: Tensor },
    /// Scalar −log softmax(logits)[class] for a single row of logits.
    CrossEntropy { logits: NodeId, probs: Vec<f64>, class: usize },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, grad: None, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward target w.r.t. this node, if tracked.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::Shape { left: xs.to_vec(), right: ws.to_vec() });
        }
        if bs != [ws[1]] {
            return Err(Error::Shape { left: ws.to_vec(), right: bs.to_vec() });
        }
        let (t, n, m) = (xs[0], xs[1], ws[1]);
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; t * m];
        for r in 0..t {
            let orow = &mut out[r * m..(r + 1) * m];
            orow.copy_from_slice(bv);
            for i in 0..n {
                let xv_ri = xv[r * n + i];
                if xv_ri == 0.0 {
                    continue;
                }
                let wrow = &wv[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += xv_ri * wrow[j];
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Linear { x, w, b }, Tensor::new(vec![t, m], out)?, needs))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).clone();
        let data: Vec<f64> = value.data().iter().map(|&v| v.max(0.0)).collect();
        let out = Tensor::new(value.shape().to_vec(), data).unwrap();
        let needs = self.needs(x);
        self.push(Op::Relu { x }, out, needs)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let xs = self.value(x).shape().to_vec();
        let h = xs[1];
        if self.value(gamma).shape() != [h] || self.value(beta).shape() != [h] {
            return Err(Error::Shape { left: xs, right: self.value(gamma).shape().to_vec() });
        }
        let t = xs[0];
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = vec![0.0; t * h];
        let mut normed = vec![0.0; t * h];
        let mut inv_std = vec![0.0; t];
        for r in 0..t {
            let row = &xv[r * h..(r + 1) * h];
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..h {
                let nj = (row[j] - mean) * istd;
                normed[r * h + j] = nj;
                out[r * h + j] = gv[j] * nj + bv[j];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let normed = Tensor::new(vec![t, h], normed)?;
        Ok(self.push(
            Op::LayerNorm { x, gamma, beta, normed, inv_std },
            Tensor::new(vec![t, h], out)?,
            needs,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape {
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(p, q)| p + q)
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add { a, b }, out, needs))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x);
        let data: Vec<f64> = value.data().iter().map(|v| v * c).collect();
        let out = Tensor::new(value.shape().to_vec(), data).unwrap();
        let needs = self.needs(x);
        self.push(Op::Scale { x, c }, out, needs)
    }

    /// A·Bᵀ for A[T×k], B[S×k].
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (asp, bsp) = (self.value(a).shape(), self.value(b).shape());
        if asp[1] != bsp[1] {
            return Err(Error::Shape { left: asp.to_vec(), right: bsp.to_vec() });
        }
        let (t, k, s) = (asp[0], asp[1], bsp[0]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; t * s];
        for r in 0..t {
            for c in 0..s {
                let mut acc = 0.0;
                for i in 0..k {
                    acc += av[r * k + i] * bv[c * k + i];
                }
                out[r * s + c] = acc;
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMulNt { a, b }, Tensor::new(vec![t, s], out)?, needs))
    }

    /// A·B for A[T×S], B[S×k].
    pub fn matmul_nn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (asp, bsp) = (self.value(a).shape(), self.value(b).shape());
        if asp[1] != bsp[0] {
            return Err(Error::Shape { left: asp.to_vec(), right: bsp.to_vec() });
        }
        let (t, s, k) = (asp[0], asp[1], bsp[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; t * k];
        for r in 0..t {
            let orow = &mut out[r * k..(r + 1) * k];
            for i in 0..s {
                let av_ri = av[r * s + i];
                if av_ri == 0.0 {
                    continue;
                }
                let brow = &bv[i * k..(i + 1) * k];
                for j in 0..k {
                    orow[j] += av_ri * brow[j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMulNn { a, b }, Tensor::new(vec![t, k], out)?, needs))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x);
        let (t, w) = (value.rows(), value.cols());
        let xv = value.data();
        let mut out = vec![0.0; t * w];
        for r in 0..t {
            let row = &xv[r * w..(r + 1) * w];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..w {
                let e = (row[j] - max).exp();
                out[r * w + j] = e;
                z += e;
            }
            for j in 0..w {
                out[r * w + j] /= z;
            }
        }
        let needs = self.needs(x);
        self.push(Op::SoftmaxRows { x }, Tensor::new(vec![t, w], out).unwrap(), needs)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let value = self.value(x);
        let (t, w) = (value.rows(), value.cols());
        if start + len > w {
            return Err(Error::Shape { left: vec![t, w], right: vec![start, len] });
        }
        let xv = value.data();
        let mut out = vec![0.0; t * len];
        for r in 0..t {
            out[r * len..(r + 1) * len].copy_from_slice(&xv[r * w + start..r * w + start + len]);
        }
        let needs = self.needs(x);
        Ok(self.push(Op::SliceCols { x, start }, Tensor::new(vec![t, len], out)?, needs))
    }

    /// Feature-axis concatenation; all inputs share the time extent. The
    /// empty-width case is handled by callers (a zero-extent tensor cannot
    /// exist), so `xs` holds the tensors actually present.
    pub fn concat_cols(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        assert!(!xs.is_empty());
        if xs.len() == 1 {
            // single input: keep the node rather than copying
            return Ok(xs[0]);
        }
        let t = self.value(xs[0]).rows();
        for &x in xs {
            let rt = self.value(x).rows();
            if rt != t {
                return Err(Error::Alignment { left: t, right: rt });
            }
        }
        let widths: Vec<usize> = xs.iter().map(|&x| self.value(x).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; t * total];
        let mut offset = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let xv = self.value(x).data();
            for r in 0..t {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&xv[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let needs = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(Op::ConcatCols { xs: xs.to_vec() }, Tensor::new(vec![t, total], out)?, needs))
    }

    /// Strided 1-D convolution over [L×cin] with kernel weights laid out as
    /// [(k·cin)×cout], tap-major. Positions left of the input read zeros.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        kernel: usize,
        pad_left: usize,
    ) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let (l, cin) = (xs[0], xs[1]);
        if ws[0] != kernel * cin {
            return Err(Error::Shape { left: ws, right: vec![kernel * cin, 0] });
        }
        let cout = ws[1];
        if self.value(b).shape() != [cout] {
            return Err(Error::Shape { left: vec![cout], right: self.value(b).shape().to_vec() });
        }
        let t_out = (l + pad_left).saturating_sub(kernel) / stride + 1;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; t_out * cout];
        for t in 0..t_out {
            let orow = &mut out[t * cout..(t + 1) * cout];
            orow.copy_from_slice(bv);
            for j in 0..kernel {
                let pos = (t * stride + j) as isize - pad_left as isize;
                if pos < 0 || pos as usize >= l {
                    continue;
                }
                let xrow = &xv[pos as usize * cin..(pos as usize + 1) * cin];
                for c in 0..cin {
                    let xval = xrow[c];
                    if xval == 0.0 {
                        continue;
                    }
                    let wrow = &wv[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                    for o in 0..cout {
                        orow[o] += xval * wrow[o];
                    }
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(
            Op::Conv1d { x, w, b, stride, kernel, pad_left },
            Tensor::new(vec![t_out, cout], out)?,
            needs,
        ))
    }

    /// Temporal statistics pooling: per-column mean and standard deviation,
    /// concatenated to a [1×2d] row. Needs at least two frames.
    pub fn stats_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (t, d) = (self.value(x).rows(), self.value(x).cols());
        if t < 2 {
            return Err(Error::Estimation(format!(
                "statistics pooling needs >= 2 frames, got {t}"
            )));
        }
        let xv = self.value(x).data();
        let mut mean = vec![0.0; d];
        for r in 0..t {
            for j in 0..d {
                mean[j] += xv[r * d + j];
            }
        }
        for m in mean.iter_mut() {
            *m /= t as f64;
        }
        let mut std = vec![0.0; d];
        for r in 0..t {
            for j in 0..d {
                let dlt = xv[r * d + j] - mean[j];
                std[j] += dlt * dlt;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / t as f64 + 1e-8).sqrt();
        }
        let mut out = mean.clone();
        out.extend_from_slice(&std);
        let needs = self.needs(x);
        Ok(self.push(
            Op::StatsPool { x, mean, std },
            Tensor::new(vec![1, 2 * d], out)?,
            needs,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Op::Sum { x }, Tensor::scalar(total), needs)
    }

    /// CTC loss of a logit sequence against a target token sequence.
    pub fn ctc_loss(&mut self, logits: NodeId, target: &[usize], blank: usize) -> Result<NodeId> {
        let value = self.value(logits);
        let (loss, dlogits) = ctc::loss_and_grad(value, target, blank)?;
        let needs = self.needs(logits);
        Ok(self.push(Op::CtcLoss { logits, dlogits }, Tensor::scalar(loss), needs))
    }

    /// −log softmax(logits) at the target class, for a single-row logit tensor.
    pub fn cross_entropy(&mut self, logits: NodeId, class: usize) -> Result<NodeId> {
        let value = self.value(logits);
        if value.rows() != 1 || class >= value.cols() {
            return Err(Error::Shape { left: value.shape().to_vec(), right: vec![1, class + 1] });
        }
        let row = value.data();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let loss = -(probs[class].ln());
        let needs = self.needs(logits);
        Ok(self.push(Op::CrossEntropy { logits, probs, class }, Tensor::scalar(loss), needs))
    }

    /// Reverse-mode sweep from a scalar node. Gradients of all tracked nodes
    /// become available through [`Graph::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape {
                left: self.value(loss).shape().to_vec(),
                right: vec![1, 1],
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(n);
        grads.resize_with(n, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = if node.needs_grad { g } else { None };
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], id: NodeId, shape: &[usize], f: &mut dyn FnMut(&mut [f64])| {
            let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(shape));
            f(slot.data_mut());
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (t, nn) = (self.value(*x).rows(), self.value(*x).cols());
                let m = self.value(*w).cols();
                let gv = g.data();
                if self.needs(*x) {
                    let wv = self.value(*w).data();
                    acc(grads, *x, &[t, nn], &mut |dx| {
                        for r in 0..t {
                            for i2 in 0..nn {
                                let wrow = &wv[i2 * m..(i2 + 1) * m];
                                let grow = &gv[r * m..(r + 1) * m];
                                let mut s = 0.0;
                                for j in 0..m {
                                    s += grow[j] * wrow[j];
                                }
                                dx[r * nn + i2] += s;
                            }
                        }
                    });
                }
                if self.needs(*w) {
                    let xv = self.value(*x).data();
                    acc(grads, *w, &[nn, m], &mut |dw| {
                        for r in 0..t {
                            let grow = &gv[r * m..(r + 1) * m];
                            for i2 in 0..nn {
                                let xval = xv[r * nn + i2];
                                if xval == 0.0 {
                                    continue;
                                }
                                let drow = &mut dw[i2 * m..(i2 + 1) * m];
                                for j in 0..m {
                                    drow[j] += xval * grow[j];
                                }
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    acc(grads, *b, &[m], &mut |db| {
                        for r in 0..t {
                            for j in 0..m {
                                db[j] += gv[r * m + j];
                            }
                        }
                    });
                }
            }
            Op::Relu { x } => {
                if self.needs(*x) {
                    let xv = self.value(*x).data();
                    let gv = g.data();
                    let shape = self.value(*x).shape().to_vec();
                    acc(grads, *x, &shape, &mut |dx| {
                        for (k, d) in dx.iter_mut().enumerate() {
                            // derivative at exactly 0 is taken as 0
                            if xv[k] > 0.0 {
                                *d += gv[k];
                            }
                        }
                    });
                }
            }
            Op::LayerNorm { x, gamma, beta, normed, inv_std, .. } => {
                let (t, h) = (normed.rows(), normed.cols());
                let gv = g.data();
                let nv = normed.data();
                let gammav = self.value(*gamma).data();
                if self.needs(*gamma) {
                    acc(grads, *gamma, &[h], &mut |dg| {
                        for r in 0..t {
                            for j in 0..h {
                                dg[j] += gv[r * h + j] * nv[r * h + j];
                            }
                        }
                    });
                }
                if self.needs(*beta) {
                    acc(grads, *beta, &[h], &mut |db| {
                        for r in 0..t {
                            for j in 0..h {
                                db[j] += gv[r * h + j];
                            }
                        }
                    });
                }
                if self.needs(*x) {
                    acc(grads, *x, &[t, h], &mut |dx| {
                        for r in 0..t {
                            let mut mean_dn = 0.0;
                            let mut mean_dn_n = 0.0;
                            for j in 0..h {
                                let dn = gv[r * h + j] * gammav[j];
                                mean_dn += dn;
                                mean_dn_n += dn * nv[r * h + j];
                            }
                            mean_dn /= h as f64;
                            mean_dn_n /= h as f64;
                            for j in 0..h {
                                let dn = gv[r * h + j] * gammav[j];
                                dx[r * h + j] +=
                                    (dn - mean_dn - nv[r * h + j] * mean_dn_n) * inv_std[r];
                            }
                        }
                    });
                }
            }
            Op::Add { a, b } => {
                let shape = g.shape().to_vec();
                let gv = g.data();
                for id in [a, b] {
                    if self.needs(*id) {
                        acc(grads, *id, &shape, &mut |d| {
                            for (k, dv) in d.iter_mut().enumerate() {
                                *dv += gv[k];
                            }
                        });
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.needs(*x) {
                    let shape = g.shape().to_vec();
                    let gv = g.data();
                    let c = *c;
                    acc(grads, *x, &shape, &mut |d| {
                        for (k, dv) in d.iter_mut().enumerate() {
                            *dv += c * gv[k];
                        }
                    });
                }
            }
            Op::MatMulNt { a, b } => {
                // out = A·Bᵀ; dA = G·B, dB = Gᵀ·A
                let (t, k) = (self.value(*a).rows(), self.value(*a).cols());
                let s = self.value(*b).rows();
                let gv = g.data();
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    acc(grads, *a, &[t, k], &mut |da| {
                        for r in 0..t {
                            for c in 0..s {
                                let gval = gv[r * s + c];
                                if gval == 0.0 {
                                    continue;
                                }
                                for j in 0..k {
                                    da[r * k + j] += gval * bv[c * k + j];
                                }
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    acc(grads, *b, &[s, k], &mut |db| {
                        for r in 0..t {
                            for c in 0..s {
                                let gval = gv[r * s + c];
                                if gval == 0.0 {
                                    continue;
                                }
                                for j in 0..k {
                                    db[c * k + j] += gval * av[r * k + j];
                                }
                            }
                        }
                    });
                }
            }
            Op::MatMulNn { a, b } => {
                // out = A·B; dA = G·Bᵀ, dB = Aᵀ·G
                let (t, s) = (self.value(*a).rows(), self.value(*a).cols());
                let k = self.value(*b).cols();
                let gv = g.data();
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    acc(grads, *a, &[t, s], &mut |da| {
                        for r in 0..t {
                            for i2 in 0..s {
                                let mut acc2 = 0.0;
                                for j in 0..k {
                                    acc2 += gv[r * k + j] * bv[i2 * k + j];
                                }
                                da[r * s + i2] += acc2;
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    acc(grads, *b, &[s, k], &mut |db| {
                        for r in 0..t {
                            for i2 in 0..s {
                                let aval = av[r * s + i2];
                                if aval == 0.0 {
                                    continue;
                                }
                                for j in 0..k {
                                    db[i2 * k + j] += aval * gv[r * k + j];
                                }
                            }
                        }
                    });
                }
            }
            Op::SoftmaxRows { x } => {
                if self.needs(*x) {
                    let y = &self.nodes[i].value;
                    let (t, w) = (y.rows(), y.cols());
                    let yv = y.data();
                    let gv = g.data();
                    acc(grads, *x, &[t, w], &mut |dx| {
                        for r in 0..t {
                            let yrow = &yv[r * w..(r + 1) * w];
                            let grow = &gv[r * w..(r + 1) * w];
                            let dot: f64 = yrow.iter().zip(grow).map(|(p, q)| p * q).sum();
                            for j in 0..w {
                                dx[r * w + j] += yrow[j] * (grow[j] - dot);
                            }
                        }
                    });
                }
            }
            Op::SliceCols { x, start } => {
                if self.needs(*x) {
                    let (t, w) = (self.value(*x).rows(), self.value(*x).cols());
                    let len = self.nodes[i].value.cols();
                    let gv = g.data();
                    let start = *start;
                    acc(grads, *x, &[t, w], &mut |dx| {
                        for r in 0..t {
                            for j in 0..len {
                                dx[r * w + start + j] += gv[r * len + j];
                            }
                        }
                    });
                }
            }
            Op::ConcatCols { xs } => {
                let t = self.nodes[i].value.rows();
                let total = self.nodes[i].value.cols();
                let gv = g.data();
                let mut offset = 0;
                for &x in xs {
                    let w = self.value(x).cols();
                    if self.needs(x) {
                        let off = offset;
                        acc(grads, x, &[t, w], &mut |dx| {
                            for r in 0..t {
                                for j in 0..w {
                                    dx[r * w + j] += gv[r * total + off + j];
                                }
                            }
                        });
                    }
                    offset += w;
                }
            }
            Op::Conv1d { x, w, b, stride, kernel, pad_left } => {
                let (l, cin) = (self.value(*x).rows(), self.value(*x).cols());
                let cout = self.value(*w).cols();
                let t_out = self.nodes[i].value.rows();
                let gv = g.data();
                let (stride, kernel, pad_left) = (*stride, *kernel, *pad_left);
                if self.needs(*b) {
                    acc(grads, *b, &[cout], &mut |db| {
                        for t in 0..t_out {
                            for o in 0..cout {
                                db[o] += gv[t * cout + o];
                            }
                        }
                    });
                }
                if self.needs(*w) {
                    let xv = self.value(*x).data();
                    acc(grads, *w, &[kernel * cin, cout], &mut |dw| {
                        for t in 0..t_out {
                            let grow = &gv[t * cout..(t + 1) * cout];
                            for j in 0..kernel {
                                let pos = (t * stride + j) as isize - pad_left as isize;
                                if pos < 0 || pos as usize >= l {
                                    continue;
                                }
                                for c in 0..cin {
                                    let xval = xv[pos as usize * cin + c];
                                    if xval == 0.0 {
                                        continue;
                                    }
                                    let drow = &mut dw[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                                    for o in 0..cout {
                                        drow[o] += xval * grow[o];
                                    }
                                }
                            }
                        }
                    });
                }
                if self.needs(*x) {
                    let wv = self.value(*w).data();
                    acc(grads, *x, &[l, cin], &mut |dx| {
                        for t in 0..t_out {
                            let grow = &gv[t * cout..(t + 1) * cout];
                            for j in 0..kernel {
                                let pos = (t * stride + j) as isize - pad_left as isize;
                                if pos < 0 || pos as usize >= l {
                                    continue;
                                }
                                for c in 0..cin {
                                    let wrow = &wv[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                                    let mut s = 0.0;
                                    for o in 0..cout {
                                        s += wrow[o] * grow[o];
                                    }
                                    dx[pos as usize * cin + c] += s;
                                }
                            }
                        }
                    });
                }
            }
            Op::StatsPool { x, mean, std } => {
                if self.needs(*x) {
                    let (t, d) = (self.value(*x).rows(), self.value(*x).cols());
                    let xv = self.value(*x).data();
                    let gv = g.data();
                    acc(grads, *x, &[t, d], &mut |dx| {
                        for r in 0..t {
                            for j in 0..d {
                                let dmean = gv[j] / t as f64;
                                let dstd = gv[d + j] * (xv[r * d + j] - mean[j]) / (t as f64 * std[j]);
                                dx[r * d + j] += dmean + dstd;
                            }
                        }
                    });
                }
            }
            Op::Sum { x } => {
                if self.needs(*x) {
                    let shape = self.value(*x).shape().to_vec();
                    let gval = g.data()[0];
                    acc(grads, *x, &shape, &mut |dx| {
                        for d in dx.iter_mut() {
                            *d += gval;
                        }
                    });
                }
            }
            Op::CtcLoss { logits, dlogits } => {
                if self.needs(*logits) {
                    let shape = dlogits.shape().to_vec();
                    let gval = g.data()[0];
                    let dv = dlogits.data();
                    acc(grads, *logits, &shape, &mut |dx| {
                        for (k, d) in dx.iter_mut().enumerate() {
                            *d += gval * dv[k];
                        }
                    });
                }
            }
            Op::CrossEntropy { logits, probs, class } => {
                if self.needs(*logits) {
                    let w = probs.len();
                    let gval = g.data()[0];
                    let class = *class;
                    let probs = probs.clone();
                    acc(grads, *logits, &[1, w], &mut |dx| {
                        for j in 0..w {
                            let onehot = if j == class { 1.0 } else { 0.0 };
                            dx[j] += gval * (probs[j] - onehot);
                        }
                    });
                }
            }
        }
    }
}
