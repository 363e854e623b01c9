//! Dense f64 tensors with a tape-based reverse-mode differentiator.
//!
//! Every operation is a method on [`Tape`] that records its inputs and
//! returns a [`Var`] handle to the result. The tape is rebuilt for every
//! forward pass, so graphs of different sizes need no special handling.
//! [`Tape::backward`] replays the recorded operations in reverse order and
//! accumulates adjoints into the `grad` slot of every tensor that requires
//! one.
//!
//! Only the operations the trajectory model needs are provided, and
//! elementwise binary operations require identical shapes.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Element at a multi-dimensional index (row-major).
    pub fn at(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < dim, "index {ix} out of bounds on axis {i}");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    MatMul {
        a: Var,
        b: Var,
        dims: MatMulDims,
    },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        pad: usize,
    },
    Mix {
        x: Var,
        w: Var,
        b: Var,
    },
    Prelu {
        x: Var,
        slope: Var,
    },
    /// Scalar function of one input whose local gradient was computed
    /// alongside the value.
    ScalarFn {
        x: Var,
        local_grad: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy)]
struct MatMulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_batched: bool,
    b_batched: bool,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of executed operations. A tape and its tensors form a
/// single-threaded unit of work.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a tensor as a leaf. Its `requires_grad` flag is kept.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(true))
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_value(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::scalar(0.0))
    }

    pub fn clear_grads(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
    }

    fn push(&mut self, mut value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value",
                op_name(&op)
            )));
        }
        value.requires_grad = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad);
        value.grad = None;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        Tensor {
            shape: ta.shape.clone(),
            data,
            grad: None,
            requires_grad: false,
        }
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|&x| f(x)).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.map(a, |x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data.iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::shape("reshape", &t.shape, &shape));
        }
        let out = Tensor {
            shape,
            data: t.data.clone(),
            grad: None,
            requires_grad: false,
        };
        self.push(out, Op::Reshape(a), &[a])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let rank = t.shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&ax| ax >= rank || std::mem::replace(&mut seen[ax], true)) {
            return Err(Error::shape("permute", &t.shape, axes));
        }
        let out = permute_tensor(t, axes);
        self.push(out, Op::Permute(a, axes.to_vec()), &[a])
    }

    /// Batched matrix product `[..×m×k] · [..×k×n] -> [..×m×n]`. Either side
    /// may be a plain matrix, in which case it is shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        if k != k2 || !(ba == bb || ba.is_empty() || bb.is_empty()) {
            return Err(Error::shape("matmul", sa, sb));
        }
        let batch_shape = if ba.len() >= bb.len() { ba.to_vec() } else { bb.to_vec() };
        let dims = MatMulDims {
            batch: batch_shape.iter().product(),
            m,
            k,
            n,
            a_batched: !ba.is_empty(),
            b_batched: !bb.is_empty(),
        };
        let mut shape = batch_shape;
        shape.extend([m, n]);
        let mut data = vec![0.0; dims.batch * m * n];
        {
            let (da, db) = (&self.value(a).data, &self.value(b).data);
            for bi in 0..dims.batch {
                let ao = if dims.a_batched { bi * m * k } else { 0 };
                let bo = if dims.b_batched { bi * k * n } else { 0 };
                let out = &mut data[bi * m * n..(bi + 1) * m * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = da[ao + i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let brow = &db[bo + p * n..bo + (p + 1) * n];
                        for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                            *o += av * bv;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::MatMul { a, b, dims }, &[a, b])
    }

    /// Applies a per-step aggregation matrix: `out[t,n,:] = Σ_m A[t,n,m] X[t,m,:]`.
    pub fn graph_aggregate(&mut self, adjacency: Var, x: Var) -> Result<Var> {
        let (sa, sx) = (self.shape(adjacency), self.shape(x));
        if sa.len() != 3 || sx.len() != 3 || sa[0] != sx[0] || sa[1] != sa[2] || sa[2] != sx[1] {
            return Err(Error::shape("graph_aggregate", sa, sx));
        }
        self.matmul(adjacency, x)
    }

    /// Convolution along axis 1 of `x: [C_in×L×M]`, applied independently to
    /// each of the `M` columns. `w: [C_out×C_in×k]` with odd `k`.
    pub fn conv_axis(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sw.len() != 3 || sx.len() != 3 || sw[1] != sx[0] {
            return Err(Error::shape("conv", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(Error::shape("conv bias", sw, sb));
        }
        let k = sw[2];
        if k % 2 == 0 {
            return Err(Error::Config(format!("temporal kernel must be odd, got {k}")));
        }
        let (cin, len, cols) = (sx[0], sx[1], sx[2]);
        let cout = sw[0];
        if len + 2 * pad < k {
            return Err(Error::shape("conv", sx, sw));
        }
        let out_len = len + 2 * pad + 1 - k;
        let (dx, dw, db) = (&self.value(x).data, &self.value(w).data, &self.value(b).data);
        let mut data = vec![0.0; cout * out_len * cols];
        for o in 0..cout {
            let plane = &mut data[o * out_len * cols..(o + 1) * out_len * cols];
            plane.iter_mut().for_each(|v| *v = db[o]);
            for c in 0..cin {
                for j in 0..k {
                    let wv = dw[(o * cin + c) * k + j];
                    for l in 0..out_len {
                        let src = l + j;
                        if src < pad || src - pad >= len {
                            continue;
                        }
                        let row = &dx[(c * len + src - pad) * cols..(c * len + src - pad + 1) * cols];
                        for (ov, &xv) in plane[l * cols..(l + 1) * cols].iter_mut().zip(row) {
                            *ov += wv * xv;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![cout, out_len, cols], data)?;
        self.push(out, Op::Conv { x, w, b, pad }, &[x, w, b])
    }

    /// Convolution along the time axis of `[C_in×T×N]`; alias of
    /// [`Tape::conv_axis`].
    pub fn conv_time(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        self.conv_axis(x, w, b, pad)
    }

    /// Per-position linear map across channels: `x: [C_in×…]`,
    /// `w: [C_out×C_in]`, `b: [C_out]`.
    pub fn pointwise_mix(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.is_empty() || sw.len() != 2 || sw[1] != sx[0] {
            return Err(Error::shape("pointwise_mix", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(Error::shape("pointwise_mix bias", sw, sb));
        }
        let (cout, cin) = (sw[0], sw[1]);
        let positions: usize = sx[1..].iter().product();
        let mut shape = sx.to_vec();
        shape[0] = cout;
        let (dx, dw, db) = (&self.value(x).data, &self.value(w).data, &self.value(b).data);
        let mut data = vec![0.0; cout * positions];
        for o in 0..cout {
            let out = &mut data[o * positions..(o + 1) * positions];
            out.iter_mut().for_each(|v| *v = db[o]);
            for c in 0..cin {
                let wv = dw[o * cin + c];
                for (ov, &xv) in out.iter_mut().zip(&dx[c * positions..(c + 1) * positions]) {
                    *ov += wv * xv;
                }
            }
        }
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Mix { x, w, b }, &[x, w, b])
    }

    /// Parametric ReLU with a single learnable slope.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.value(slope).numel() != 1 {
            return Err(Error::shape("prelu slope", self.shape(slope), &[1]));
        }
        let a = self.value(slope).data[0];
        let out = self.map(x, |v| if v >= 0.0 { v } else { a * v });
        self.push(out, Op::Prelu { x, slope }, &[x, slope])
    }

    /// Records a scalar `value = f(x)` together with `∂f/∂x`, for fused
    /// losses whose gradient has a closed form.
    pub fn scalar_fn(&mut self, x: Var, value: f64, local_grad: Vec<f64>) -> Result<Var> {
        if local_grad.len() != self.value(x).numel() {
            return Err(Error::shape("scalar_fn", self.shape(x), &[local_grad.len()]));
        }
        if local_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite local gradient".into()));
        }
        self.push(Tensor::scalar(value), Op::ScalarFn { x, local_grad }, &[x])
    }

    /// Accumulates `∂loss/∂v` into the grad slot of every tensor on the tape
    /// that requires a gradient. Repeated calls add to existing grads.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.value(loss).numel();
        if numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let slot = &mut self.nodes[i].value.grad;
            match slot {
                Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, v)| *e += v),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        macro_rules! with_buf {
            ($v:expr, |$b:ident| $body:expr) => {
                if let Some($b) = adjoint_slot(nodes, adj, $v) {
                    $body
                }
            };
        }
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                with_buf!(*a, |ga| add_into(ga, g));
                with_buf!(*b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                with_buf!(*a, |ga| add_into(ga, g));
                with_buf!(*b, |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                with_buf!(*a, |ga| {
                    for ((x, gv), bv) in ga.iter_mut().zip(g).zip(vb) {
                        *x += gv * bv;
                    }
                });
                with_buf!(*b, |gb| {
                    for ((x, gv), av) in gb.iter_mut().zip(g).zip(va) {
                        *x += gv * av;
                    }
                });
            }
            Op::Scale(a, f) => with_buf!(*a, |ga| {
                ga.iter_mut().zip(g).for_each(|(x, gv)| *x += gv * f)
            }),
            Op::Exp(a) => with_buf!(*a, |ga| {
                for ((x, gv), y) in ga.iter_mut().zip(g).zip(&out.data) {
                    *x += gv * y;
                }
            }),
            Op::Tanh(a) => with_buf!(*a, |ga| {
                for ((x, gv), y) in ga.iter_mut().zip(g).zip(&out.data) {
                    *x += gv * (1.0 - y * y);
                }
            }),
            Op::Sum(a) => with_buf!(*a, |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => with_buf!(*a, |ga| {
                let s = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|x| *x += s)
            }),
            Op::Reshape(a) => with_buf!(*a, |ga| add_into(ga, g)),
            Op::Permute(a, axes) => with_buf!(*a, |ga| {
                let mut inverse = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let gt = Tensor {
                    shape: out.shape.clone(),
                    data: g.to_vec(),
                    grad: None,
                    requires_grad: false,
                };
                add_into(ga, &permute_tensor(&gt, &inverse).data);
            }),
            Op::MatMul { a, b, dims } => {
                let d = *dims;
                let (va, vb) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                with_buf!(*a, |ga| {
                    // dA = dC · Bᵀ
                    for bi in 0..d.batch {
                        let ao = if d.a_batched { bi * d.m * d.k } else { 0 };
                        let bo = if d.b_batched { bi * d.k * d.n } else { 0 };
                        let go = bi * d.m * d.n;
                        for i in 0..d.m {
                            for p in 0..d.k {
                                let mut acc = 0.0;
                                for j in 0..d.n {
                                    acc += g[go + i * d.n + j] * vb[bo + p * d.n + j];
                                }
                                ga[ao + i * d.k + p] += acc;
                            }
                        }
                    }
                });
                with_buf!(*b, |gb| {
                    // dB = Aᵀ · dC
                    for bi in 0..d.batch {
                        let ao = if d.a_batched { bi * d.m * d.k } else { 0 };
                        let bo = if d.b_batched { bi * d.k * d.n } else { 0 };
                        let go = bi * d.m * d.n;
                        for i in 0..d.m {
                            for p in 0..d.k {
                                let av = va[ao + i * d.k + p];
                                for j in 0..d.n {
                                    gb[bo + p * d.n + j] += av * g[go + i * d.n + j];
                                }
                            }
                        }
                    }
                });
            }
            Op::Conv { x, w, b, pad } => {
                let (sx, sw) = (&nodes[x.0].value.shape, &nodes[w.0].value.shape);
                let (cin, len, cols) = (sx[0], sx[1], sx[2]);
                let (cout, k) = (sw[0], sw[2]);
                let out_len = out.shape[1];
                let (vx, vw) = (&nodes[x.0].value.data, &nodes[w.0].value.data);
                let pad = *pad;
                let taps = |l: usize, j: usize| -> Option<usize> {
                    let src = l + j;
                    (src >= pad && src - pad < len).then(|| src - pad)
                };
                with_buf!(*x, |gx| {
                    for o in 0..cout {
                        for c in 0..cin {
                            for j in 0..k {
                                let wv = vw[(o * cin + c) * k + j];
                                for l in 0..out_len {
                                    let Some(s) = taps(l, j) else { continue };
                                    let grow = &g[(o * out_len + l) * cols..(o * out_len + l + 1) * cols];
                                    for (xv, gv) in gx[(c * len + s) * cols..(c * len + s + 1) * cols].iter_mut().zip(grow) {
                                        *xv += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                });
                with_buf!(*w, |gw| {
                    for o in 0..cout {
                        for c in 0..cin {
                            for j in 0..k {
                                let mut acc = 0.0;
                                for l in 0..out_len {
                                    let Some(s) = taps(l, j) else { continue };
                                    let grow = &g[(o * out_len + l) * cols..(o * out_len + l + 1) * cols];
                                    let xrow = &vx[(c * len + s) * cols..(c * len + s + 1) * cols];
                                    acc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                                }
                                gw[(o * cin + c) * k + j] += acc;
                            }
                        }
                    }
                });
                with_buf!(*b, |gb| {
                    let plane = out_len * cols;
                    for (o, bv) in gb.iter_mut().enumerate() {
                        *bv += g[o * plane..(o + 1) * plane].iter().sum::<f64>();
                    }
                });
            }
            Op::Mix { x, w, b } => {
                let sw = &nodes[w.0].value.shape;
                let (cout, cin) = (sw[0], sw[1]);
                let positions = out.numel() / cout;
                let (vx, vw) = (&nodes[x.0].value.data, &nodes[w.0].value.data);
                with_buf!(*x, |gx| {
                    for o in 0..cout {
                        let grow = &g[o * positions..(o + 1) * positions];
                        for c in 0..cin {
                            let wv = vw[o * cin + c];
                            for (xv, gv) in gx[c * positions..(c + 1) * positions].iter_mut().zip(grow) {
                                *xv += wv * gv;
                            }
                        }
                    }
                });
                with_buf!(*w, |gw| {
                    for o in 0..cout {
                        let grow = &g[o * positions..(o + 1) * positions];
                        for c in 0..cin {
                            let xrow = &vx[c * positions..(c + 1) * positions];
                            gw[o * cin + c] += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                with_buf!(*b, |gb| {
                    for (o, bv) in gb.iter_mut().enumerate() {
                        *bv += g[o * positions..(o + 1) * positions].iter().sum::<f64>();
                    }
                });
            }
            Op::Prelu { x, slope } => {
                let vx = &nodes[x.0].value.data;
                let a = nodes[slope.0].value.data[0];
                with_buf!(*x, |gx| {
                    for ((d, gv), &xv) in gx.iter_mut().zip(g).zip(vx) {
                        *d += if xv >= 0.0 { *gv } else { a * gv };
                    }
                });
                with_buf!(*slope, |gs| {
                    gs[0] += vx.iter().zip(g).filter(|(xv, _)| **xv < 0.0).map(|(xv, gv)| xv * gv).sum::<f64>();
                });
            }
            Op::ScalarFn { x, local_grad } => with_buf!(*x, |gx| {
                gx.iter_mut().zip(local_grad).for_each(|(d, lg)| *d += g[0] * lg)
            }),
        }
    }
}

/// Adjoint buffer for `v`, or None if `v` needs no gradient.
fn adjoint_slot<'a>(nodes: &[Node], adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let value = &nodes[v.0].value;
    if !value.requires_grad {
        return None;
    }
    Some(adj[v.0].get_or_insert_with(|| vec![0.0; value.numel()]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Exp(_) => "exp",
        Op::Tanh(_) => "tanh",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::Reshape(_) => "reshape",
        Op::Permute(..) => "permute",
        Op::MatMul { .. } => "matmul",
        Op::Conv { .. } => "conv",
        Op::Mix { .. } => "pointwise_mix",
        Op::Prelu { .. } => "prelu",
        Op::ScalarFn { .. } => "scalar_fn",
    }
}

fn permute_tensor(t: &Tensor, axes: &[usize]) -> Tensor {
    let rank = t.shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * t.shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| t.shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut data = Vec::with_capacity(t.numel());
    let mut index = vec![0usize; rank];
    for _ in 0..t.numel() {
        data.push(t.data[index.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()]);
        for ax in (0..rank).rev() {
            index[ax] += 1;
            if index[ax] < out_shape[ax] {
                break;
            }
            index[ax] = 0;
        }
    }
    Tensor {
        shape: out_shape,
        data,
        grad: None,
        requires_grad: false,
    }
}
