//! Reverse-mode automatic differentiation over a per-forward-pass tape.
//!
//! Every operation appends a node holding its output tensor and enough
//! context to run its backward rule. `backward` walks the tape in reverse,
//! accumulating gradients into per-node buffers; parameter gradients are then
//! folded into a [`ParamStore`](super::ParamStore) in registration order so
//! repeated runs are bit-identical.
//!
//! All forward outputs are checked for NaN/Inf; a non-finite value is a hard
//! error rather than something that propagates silently.

use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::numcore::params::ParamStore;
use crate::numcore::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

/// Layer-norm epsilon, added inside the square root of the variance.
pub const LAYER_NORM_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    /// C[m,n] = A[m,k] * B[k,n]
    MatMul { a: Value, b: Value },
    /// y[m] = W[m,k] * x[k]
    MatVec { w: Value, x: Value },
    Add { a: Value, b: Value },
    AddN { parts: Vec<Value> },
    Sub { a: Value, b: Value },
    Mul { a: Value, b: Value },
    Scale { a: Value, c: f64 },
    /// v[d] scaled by the single element of s[1].
    ScaleBy { v: Value, s: Value },
    Tanh { a: Value },
    Sigmoid { a: Value },
    Concat { parts: Vec<Value> },
    Slice { a: Value, start: usize },
    StackRows { rows: Vec<Value> },
    MeanAxis { a: Value, axis: usize },
    Softmax { a: Value },
    /// Saved inverse of sqrt(var + eps) for the backward rule.
    LayerNorm { a: Value, inv_sigma: f64 },
    SelectRow { table: Value, index: usize },
    Element { a: Value, index: usize },
    Dot { a: Value, b: Value },
    /// Negative log softmax probability of `target`; caches the softmax.
    CrossEntropy { logits: Value, target: usize, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Record of the primitive operations of one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    /// Parameter registrations in first-use order: (store name, leaf node).
    params: Vec<(String, Value)>,
    by_name: HashMap<String, Value>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            by_name: HashMap::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Value> {
        if !value.all_finite() {
            return Err(CoreError::numeric(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        self.nodes.push(Node { value, op });
        Ok(Value(self.nodes.len() - 1))
    }

    /// A constant input; it receives a gradient buffer but is not a parameter.
    pub fn constant(&mut self, t: Tensor) -> Result<Value> {
        self.push(t, Op::Leaf)
    }

    /// Register a named parameter from `store` as a leaf. Repeated
    /// registrations of the same name return the same node, so gradients from
    /// every use accumulate together.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Value> {
        if let Some(v) = self.by_name.get(name) {
            return Ok(*v);
        }
        let tensor = store.tensor(name)?.clone();
        let v = self.push(tensor, Op::Leaf)?;
        self.params.push((name.to_string(), v));
        self.by_name.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// The single element of a one-element node.
    pub fn scalar(&self, v: Value) -> Result<f64> {
        self.nodes[v.0].value.item()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Value) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    // ---- forward primitives ----

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(CoreError::dim(format!(
                "matmul {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = ta.row(i);
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &av) in arow.iter().enumerate().take(k) {
                let brow = tb.row(p);
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul { a, b })
    }

    pub fn matvec(&mut self, w: Value, x: Value) -> Result<Value> {
        let (tw, tx) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
        if tw.rank() != 2 || tx.rank() != 1 || tw.cols() != tx.len() {
            return Err(CoreError::dim(format!(
                "matvec {:?} x {:?}",
                tw.shape(),
                tx.shape()
            )));
        }
        let m = tw.rows();
        let xv = tx.data();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            out.push(dot(tw.row(i), xv));
        }
        self.push(Tensor::vector(out), Op::MatVec { w, x })
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add { a, b })
    }

    /// Elementwise sum of two or more same-shape tensors.
    pub fn add_n(&mut self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(CoreError::dim("add_n of zero tensors"));
        }
        let shape = self.nodes[parts[0].0].value.shape().to_vec();
        let mut out = vec![0.0; self.nodes[parts[0].0].value.len()];
        for &p in parts {
            let t = &self.nodes[p.0].value;
            if t.shape() != shape.as_slice() {
                return Err(CoreError::dim(format!(
                    "add_n shapes {:?} vs {:?}",
                    shape,
                    t.shape()
                )));
            }
            for (o, &v) in out.iter_mut().zip(t.data()) {
                *o += v;
            }
        }
        self.push(
            Tensor::new(shape, out)?,
            Op::AddN {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        self.push(t, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        let t = self.zip(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Value, c: f64) -> Result<Value> {
        let t = self.map(a, |x| x * c);
        self.push(t, Op::Scale { a, c })
    }

    pub fn scale_by(&mut self, v: Value, s: Value) -> Result<Value> {
        let sv = self.scalar(s)?;
        let t = self.map(v, |x| x * sv);
        self.push(t, Op::ScaleBy { v, s })
    }

    pub fn tanh(&mut self, a: Value) -> Result<Value> {
        let t = self.map(a, f64::tanh);
        self.push(t, Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: Value) -> Result<Value> {
        let t = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(t, Op::Sigmoid { a })
    }

    /// Concatenate rank-1 tensors in order.
    pub fn concat(&mut self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(CoreError::dim("concat of zero tensors"));
        }
        let mut out = Vec::new();
        for &p in parts {
            let t = &self.nodes[p.0].value;
            if t.rank() != 1 {
                return Err(CoreError::dim(format!("concat of rank-{} tensor", t.rank())));
            }
            out.extend_from_slice(t.data());
        }
        self.push(
            Tensor::vector(out),
            Op::Concat {
                parts: parts.to_vec(),
            },
        )
    }

    /// Contiguous sub-vector `[start, start+len)` of a rank-1 tensor.
    pub fn slice(&mut self, a: Value, start: usize, len: usize) -> Result<Value> {
        let t = &self.nodes[a.0].value;
        if t.rank() != 1 || start + len > t.len() {
            return Err(CoreError::dim(format!(
                "slice [{start}, {}) of shape {:?}",
                start + len,
                t.shape()
            )));
        }
        let out = t.data()[start..start + len].to_vec();
        self.push(Tensor::vector(out), Op::Slice { a, start })
    }

    /// Stack same-length rank-1 tensors into an [n, d] matrix.
    pub fn stack_rows(&mut self, rows: &[Value]) -> Result<Value> {
        if rows.is_empty() {
            return Err(CoreError::dim("stack_rows of zero rows"));
        }
        let d = self.nodes[rows[0].0].value.len();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = &self.nodes[r.0].value;
            if t.rank() != 1 || t.len() != d {
                return Err(CoreError::dim("stack_rows of unequal rows"));
            }
            out.extend_from_slice(t.data());
        }
        self.push(
            Tensor::matrix(rows.len(), d, out)?,
            Op::StackRows {
                rows: rows.to_vec(),
            },
        )
    }

    /// Mean over one axis of a rank-2 tensor.
    pub fn mean_over_axis(&mut self, a: Value, axis: usize) -> Result<Value> {
        let t = &self.nodes[a.0].value;
        if t.rank() != 2 || axis > 1 {
            return Err(CoreError::dim(format!(
                "mean_over_axis(axis={axis}) of shape {:?}",
                t.shape()
            )));
        }
        let (n, d) = (t.rows(), t.cols());
        let out = match axis {
            0 => {
                let mut acc = vec![0.0; d];
                for i in 0..n {
                    for (a, &v) in acc.iter_mut().zip(t.row(i)) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|v| *v /= n as f64);
                acc
            }
            _ => (0..n)
                .map(|i| t.row(i).iter().sum::<f64>() / d as f64)
                .collect(),
        };
        self.push(Tensor::vector(out), Op::MeanAxis { a, axis })
    }

    /// Softmax over a rank-1 tensor, or row-wise over a rank-2 tensor.
    pub fn softmax(&mut self, a: Value) -> Result<Value> {
        let t = &self.nodes[a.0].value;
        let (shape, cols) = match t.rank() {
            1 => (t.shape().to_vec(), t.len()),
            2 => (t.shape().to_vec(), t.cols()),
            r => return Err(CoreError::dim(format!("softmax of rank-{r} tensor"))),
        };
        let mut out = Vec::with_capacity(t.len());
        for row in t.data().chunks_exact(cols) {
            out.extend(softmax_slice(row));
        }
        self.push(Tensor::new(shape, out)?, Op::Softmax { a })
    }

    /// Layer normalization of a rank-1 tensor: `(x - mu) / sqrt(var + eps)`.
    ///
    /// Returns the normalized vector plus the mean and the actual divisor
    /// `sqrt(var + eps)`.
    pub fn layer_norm(&mut self, a: Value, eps: f64) -> Result<(Value, f64, f64)> {
        let t = &self.nodes[a.0].value;
        if t.rank() != 1 || t.is_empty() {
            return Err(CoreError::dim(format!(
                "layer_norm of shape {:?}",
                t.shape()
            )));
        }
        if eps <= 0.0 {
            return Err(CoreError::dim("layer_norm eps must be positive"));
        }
        let d = t.len() as f64;
        let mu = t.data().iter().sum::<f64>() / d;
        let var = t.data().iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / d;
        let sigma = (var + eps).sqrt();
        let inv_sigma = 1.0 / sigma;
        let out: Vec<f64> = t.data().iter().map(|&x| (x - mu) * inv_sigma).collect();
        let v = self.push(Tensor::vector(out), Op::LayerNorm { a, inv_sigma })?;
        Ok((v, mu, sigma))
    }

    /// Row `index` of an [n, d] table (embedding lookup).
    pub fn select_row(&mut self, table: Value, index: usize) -> Result<Value> {
        let t = &self.nodes[table.0].value;
        if t.rank() != 2 || index >= t.rows() {
            return Err(CoreError::dim(format!(
                "select_row({index}) of shape {:?}",
                t.shape()
            )));
        }
        let out = t.row(index).to_vec();
        self.push(Tensor::vector(out), Op::SelectRow { table, index })
    }

    /// Element `index` of a rank-1 tensor, as a one-element tensor.
    pub fn element(&mut self, a: Value, index: usize) -> Result<Value> {
        let t = &self.nodes[a.0].value;
        if t.rank() != 1 || index >= t.len() {
            return Err(CoreError::dim(format!(
                "element({index}) of shape {:?}",
                t.shape()
            )));
        }
        let out = t.data()[index];
        self.push(Tensor::scalar(out), Op::Element { a, index })
    }

    /// Inner product of two rank-1 tensors, as a one-element tensor.
    pub fn dot(&mut self, a: Value, b: Value) -> Result<Value> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(CoreError::dim(format!(
                "dot {:?} . {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let out = dot(ta.data(), tb.data());
        self.push(Tensor::scalar(out), Op::Dot { a, b })
    }

    /// `-log softmax(logits)[target]` as a one-element tensor.
    pub fn cross_entropy(&mut self, logits: Value, target: usize) -> Result<Value> {
        let t = &self.nodes[logits.0].value;
        if t.rank() != 1 || target >= t.len() {
            return Err(CoreError::dim(format!(
                "cross_entropy target {target} for shape {:?}",
                t.shape()
            )));
        }
        let probs = softmax_slice(t.data());
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
        )
    }

    // ---- backward ----

    /// Backpropagate from a one-element `loss` node with upstream gradient 1.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        self.backward_seeded(loss, 1.0)
    }

    /// Backpropagate from a one-element node with a given upstream gradient.
    pub fn backward_seeded(&mut self, loss: Value, seed: f64) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(CoreError::dim("backward target must be a one-element tensor"));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(seed));

        for i in (0..self.nodes.len()).rev() {
            let go = match self.grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_backward(i, &go)?;
            self.grads[i] = Some(go);
        }

        for (name, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                if !g.all_finite() {
                    return Err(CoreError::numeric(format!(
                        "non-finite gradient for parameter {name}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fold accumulated parameter gradients into `store`, in registration order.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (name, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    fn apply_backward(&mut self, node: usize, go: &Tensor) -> Result<()> {
        // nodes (values) and grads are separate fields, so they can be
        // borrowed independently.
        let nodes = &self.nodes;
        let grads = &mut self.grads;

        match &nodes[node].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                let n = nodes[b.0].value.cols();
                // dA += dC * B^T
                {
                    let bt = &nodes[b.0].value;
                    let da = grad_buf(grads, nodes, *a);
                    for i in 0..m {
                        let grow = go.row(i);
                        for j in 0..k {
                            da[i * k + j] += dot(grow, bt.row(j));
                        }
                    }
                }
                // dB += A^T * dC
                {
                    let at = &nodes[a.0].value;
                    let db = grad_buf(grads, nodes, *b);
                    for p in 0..m {
                        let arow = at.row(p);
                        let grow = go.row(p);
                        for (j, &aj) in arow.iter().enumerate() {
                            let dbrow = &mut db[j * n..(j + 1) * n];
                            for (d, &g) in dbrow.iter_mut().zip(grow) {
                                *d += aj * g;
                            }
                        }
                    }
                }
            }
            Op::MatVec { w, x } => {
                let k = nodes[x.0].value.len();
                {
                    let xv = nodes[x.0].value.data();
                    let dw = grad_buf(grads, nodes, *w);
                    for (i, &g) in go.data().iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let drow = &mut dw[i * k..(i + 1) * k];
                        for (d, &xj) in drow.iter_mut().zip(xv) {
                            *d += g * xj;
                        }
                    }
                }
                {
                    let wt = &nodes[w.0].value;
                    let dx = grad_buf(grads, nodes, *x);
                    for (i, &g) in go.data().iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        for (d, &wj) in dx.iter_mut().zip(wt.row(i)) {
                            *d += g * wj;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                add_into(grad_buf(grads, nodes, *a), go.data());
                add_into(grad_buf(grads, nodes, *b), go.data());
            }
            Op::AddN { parts } => {
                for p in parts {
                    add_into(grad_buf(grads, nodes, *p), go.data());
                }
            }
            Op::Sub { a, b } => {
                add_into(grad_buf(grads, nodes, *a), go.data());
                for (d, &g) in grad_buf(grads, nodes, *b).iter_mut().zip(go.data()) {
                    *d -= g;
                }
            }
            Op::Mul { a, b } => {
                {
                    let bv = nodes[b.0].value.data();
                    let da = grad_buf(grads, nodes, *a);
                    for ((d, &g), &o) in da.iter_mut().zip(go.data()).zip(bv) {
                        *d += g * o;
                    }
                }
                {
                    let av = nodes[a.0].value.data();
                    let db = grad_buf(grads, nodes, *b);
                    for ((d, &g), &o) in db.iter_mut().zip(go.data()).zip(av) {
                        *d += g * o;
                    }
                }
            }
            Op::Scale { a, c } => {
                let c = *c;
                for (d, &g) in grad_buf(grads, nodes, *a).iter_mut().zip(go.data()) {
                    *d += g * c;
                }
            }
            Op::ScaleBy { v, s } => {
                let sv = nodes[s.0].value.data()[0];
                for (d, &g) in grad_buf(grads, nodes, *v).iter_mut().zip(go.data()) {
                    *d += g * sv;
                }
                let ds = dot(go.data(), nodes[v.0].value.data());
                grad_buf(grads, nodes, *s)[0] += ds;
            }
            Op::Tanh { a } => {
                let y = nodes[node].value.data();
                let da = grad_buf(grads, nodes, *a);
                for ((d, &g), &yv) in da.iter_mut().zip(go.data()).zip(y) {
                    *d += g * (1.0 - yv * yv);
                }
            }
            Op::Sigmoid { a } => {
                let y = nodes[node].value.data();
                let da = grad_buf(grads, nodes, *a);
                for ((d, &g), &yv) in da.iter_mut().zip(go.data()).zip(y) {
                    *d += g * yv * (1.0 - yv);
                }
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    add_into(grad_buf(grads, nodes, *p), &go.data()[off..off + len]);
                    off += len;
                }
            }
            Op::Slice { a, start } => {
                let start = *start;
                let da = grad_buf(grads, nodes, *a);
                for (j, &g) in go.data().iter().enumerate() {
                    da[start + j] += g;
                }
            }
            Op::StackRows { rows } => {
                let d = nodes[rows[0].0].value.len();
                for (i, r) in rows.iter().enumerate() {
                    add_into(grad_buf(grads, nodes, *r), &go.data()[i * d..(i + 1) * d]);
                }
            }
            Op::MeanAxis { a, axis } => {
                let (n, d) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                let da = grad_buf(grads, nodes, *a);
                match axis {
                    0 => {
                        let inv = 1.0 / n as f64;
                        for i in 0..n {
                            for (j, &g) in go.data().iter().enumerate() {
                                da[i * d + j] += g * inv;
                            }
                        }
                    }
                    _ => {
                        let inv = 1.0 / d as f64;
                        for (i, &g) in go.data().iter().enumerate() {
                            for v in &mut da[i * d..(i + 1) * d] {
                                *v += g * inv;
                            }
                        }
                    }
                }
            }
            Op::Softmax { a } => {
                let y = &nodes[node].value;
                let cols = match y.rank() {
                    1 => y.len(),
                    _ => y.cols(),
                };
                let da = grad_buf(grads, nodes, *a);
                for (r, (yrow, grow)) in y
                    .data()
                    .chunks_exact(cols)
                    .zip(go.data().chunks_exact(cols))
                    .enumerate()
                {
                    let gy = dot(grow, yrow);
                    let drow = &mut da[r * cols..(r + 1) * cols];
                    for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d += yv * (gv - gy);
                    }
                }
            }
            Op::LayerNorm { a, inv_sigma } => {
                let inv_sigma = *inv_sigma;
                let y = nodes[node].value.data();
                let d = y.len() as f64;
                let g_mean = go.data().iter().sum::<f64>() / d;
                let gy_mean = dot(go.data(), y) / d;
                let da = grad_buf(grads, nodes, *a);
                for ((dst, &g), &yv) in da.iter_mut().zip(go.data()).zip(y) {
                    *dst += inv_sigma * (g - g_mean - yv * gy_mean);
                }
            }
            Op::SelectRow { table, index } => {
                let d = go.len();
                let dt = grad_buf(grads, nodes, *table);
                for (j, &g) in go.data().iter().enumerate() {
                    dt[index * d + j] += g;
                }
            }
            Op::Element { a, index } => {
                let index = *index;
                grad_buf(grads, nodes, *a)[index] += go.data()[0];
            }
            Op::Dot { a, b } => {
                let g = go.data()[0];
                {
                    let bv = nodes[b.0].value.data();
                    let da = grad_buf(grads, nodes, *a);
                    for (d, &x) in da.iter_mut().zip(bv) {
                        *d += g * x;
                    }
                }
                {
                    let av = nodes[a.0].value.data();
                    let db = grad_buf(grads, nodes, *b);
                    for (d, &x) in db.iter_mut().zip(av) {
                        *d += g * x;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let g = go.data()[0];
                let dl = grad_buf(grads, nodes, *logits);
                for (j, (d, &p)) in dl.iter_mut().zip(probs).enumerate() {
                    let onehot = if j == *target { 1.0 } else { 0.0 };
                    *d += g * (p - onehot);
                }
            }
        }
        Ok(())
    }

    fn zip(&self, a: Value, b: Value, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(CoreError::dim(format!(
                "{what} shapes {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn map(&self, a: Value, f: impl Fn(f64) -> f64) -> Tensor {
        let t = &self.nodes[a.0].value;
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).unwrap()
    }
}

/// Node gradient buffer, zero-allocated on first touch.
fn grad_buf<'g>(grads: &'g mut [Option<Tensor>], nodes: &[Node], v: Value) -> &'g mut [f64] {
    if grads[v.0].is_none() {
        grads[v.0] = Some(Tensor::zeros(nodes[v.0].value.shape().to_vec()));
    }
    grads[v.0].as_mut().unwrap().data_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::MatVec { .. } => "matvec",
        Op::Add { .. } => "add",
        Op::AddN { .. } => "add_n",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::ScaleBy { .. } => "scale_by",
        Op::Tanh { .. } => "tanh",
        Op::Sigmoid { .. } => "sigmoid",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } => "slice",
        Op::StackRows { .. } => "stack_rows",
        Op::MeanAxis { .. } => "mean_over_axis",
        Op::Softmax { .. } => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::SelectRow { .. } => "select_row",
        Op::Element { .. } => "element",
        Op::Dot { .. } => "dot",
        Op::CrossEntropy { .. } => "cross_entropy",
    }
}
