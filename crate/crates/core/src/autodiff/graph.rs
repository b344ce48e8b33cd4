use super::conv::{conv2d_backward, conv2d_forward, conv_out_len, ConvGeom};
use super::loss::{class_loss_backward, class_loss_forward, ClassLossSpec};
use super::params::{ParamId, ParamStore};
use super::{AutodiffError, Tensor};
use crate::scalar::{gemm, Layout};
use crate::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch-normalization mode.
#[derive(Debug, Clone)]
pub enum BnMode<'a, S> {
    /// Normalize with batch statistics.
    Train { eps: S },
    /// Normalize with fixed running statistics.
    Eval {
        mean: &'a [S],
        var: &'a [S],
        eps: S,
    },
}

/// Batch statistics computed by a training-mode batch norm, for running
/// average updates. `var` is the unbiased estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    /// Identity forward, gradient multiplied by the factor on the way back.
    GradScale(Var, S),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        train: bool,
    },
    GlobalAvgPool(Var),
    Softmax(Var),
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    ClassLoss {
        logits: Var,
        spec: ClassLossSpec<S>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a reverse topological order.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    params: Vec<(ParamId, Var)>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(msg: String) -> AutodiffError {
    AutodiffError::ShapeMismatch(msg)
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Input that gradients are not tracked for.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf bound to a parameter of `store`.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        let v = self.variable(store.tensor(id).clone());
        self.params.push((id, v));
        v
    }

    pub fn param_bindings(&self) -> &[(ParamId, Var)] {
        &self.params
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| *x + *y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| *x * *y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let data = self.value(a).data().iter().map(|x| *x * factor).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).expect("same size");
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, factor), rg)
    }

    /// Identity forward; backward multiplies the incoming gradient by
    /// `factor`.
    pub fn grad_scale(&mut self, a: Var, factor: S) -> Var {
        let t = self.value(a).clone();
        let rg = self.rg(a);
        self.push(t, Op::GradScale(a, factor), rg)
    }

    /// Gradient reversal: identity forward, gradient times `-lambda` back.
    pub fn grad_reverse(&mut self, a: Var, lambda: S) -> Result<Var, AutodiffError> {
        if !(lambda >= S::zero()) {
            return Err(AutodiffError::InvalidArgument(format!(
                "reversal intensity must be nonnegative, got {lambda}"
            )));
        }
        Ok(self.grad_scale(a, -lambda))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: S = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = S::of(self.value(a).numel() as f64);
        let s: S = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s / n), Op::Mean(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| if x > S::zero() { x } else { S::zero() }).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).expect("same size");
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    /// `x [N×in] · wᵀ + b`, with `w [out×in]`, `b [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, AutodiffError> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(mismatch(format!("dense: input {xs:?}, weight {ws:?}")));
        }
        let (n, inp, out) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(mismatch(format!("dense bias {:?}, want [{out}]", self.shape(b))));
            }
        }
        let mut y = vec![S::zero(); n * out];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in y.chunks_mut(out) {
                row.copy_from_slice(bv);
            }
        }
        gemm(n, inp, out, self.value(x).data(), Layout::N, self.value(w).data(), Layout::T, S::one(), &mut y);
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(vec![n, out], y)?, Op::Dense { x, w, b }, rg))
    }

    /// 2-D convolution, `x [N×C×H×W]`, `w [O×C×kh×kw]`, `b [O]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var, AutodiffError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(mismatch(format!("conv2d: input {xs:?}, weight {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(mismatch(format!("conv2d bias {:?}", self.shape(b))));
            }
        }
        let out_h = conv_out_len(xs[2], ws[2], stride.0, padding.0);
        let out_w = conv_out_len(xs[3], ws[3], stride.1, padding.1);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(mismatch(format!("conv2d: kernel {ws:?} does not fit input {xs:?}")));
        };
        let geom = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            height: xs[2],
            width: xs[3],
            out_ch: ws[0],
            kh: ws[2],
            kw: ws[3],
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
            out_h,
            out_w,
        };
        let y = conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let t = Tensor::new(vec![geom.batch, geom.out_ch, out_h, out_w], y)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// 1-D convolution, `x [N×C×L]`, `w [O×C×k]`, `b [O]`; output `[N×O×L']`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, AutodiffError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 3 || ws.len() != 3 {
            return Err(mismatch(format!("conv1d: input {xs:?}, weight {ws:?}")));
        }
        let x4 = self.reshape(x, vec![xs[0], xs[1], 1, xs[2]])?;
        let w4 = self.reshape(w, vec![ws[0], ws[1], 1, ws[2]])?;
        let y = self.conv2d(x4, w4, b, (1, stride), (0, padding))?;
        let ys = self.shape(y).to_vec();
        self.reshape(y, vec![ys[0], ys[1], ys[3]])
    }

    /// Batch normalization over every axis except 1 (channels). Returns the
    /// batch statistics in training mode.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, S>,
    ) -> Result<(Var, Option<BatchStats<S>>), AutodiffError> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(mismatch(format!("batch_norm: input {xs:?}")));
        }
        let (n, c) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(mismatch("batch_norm: affine parameters must be [C]".into()));
        }
        let m = n * inner;
        let xv = self.value(x).data();
        let idx = |b: usize, ch: usize, i: usize| (b * c + ch) * inner + i;
        let (mean, var, eps, train) = match mode {
            BnMode::Train { eps } => {
                if m < 2 {
                    return Err(AutodiffError::InvalidArgument(
                        "batch_norm in training mode needs at least two values per channel".into(),
                    ));
                }
                let mut mean = vec![S::zero(); c];
                let mut var = vec![S::zero(); c];
                let mf = S::of(m as f64);
                for ch in 0..c {
                    let mut s = S::zero();
                    for b in 0..n {
                        for i in 0..inner {
                            s += xv[idx(b, ch, i)];
                        }
                    }
                    let mu = s / mf;
                    let mut q = S::zero();
                    for b in 0..n {
                        for i in 0..inner {
                            let d = xv[idx(b, ch, i)] - mu;
                            q += d * d;
                        }
                    }
                    mean[ch] = mu;
                    var[ch] = q / mf;
                }
                (mean, var, eps, true)
            }
            BnMode::Eval { mean, var, eps } => {
                if mean.len() != c || var.len() != c {
                    return Err(mismatch("batch_norm: running stats must be [C]".into()));
                }
                (mean.to_vec(), var.to_vec(), eps, false)
            }
        };
        let inv_std: Vec<S> = var.iter().map(|v| S::one() / (*v + eps).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![S::zero(); xv.len()];
        let mut y = vec![S::zero(); xv.len()];
        for b in 0..n {
            for ch in 0..c {
                for i in 0..inner {
                    let k = idx(b, ch, i);
                    let h = (xv[k] - mean[ch]) * inv_std[ch];
                    xhat[k] = h;
                    y[k] = g[ch] * h + bt[ch];
                }
            }
        }
        let stats = train.then(|| {
            let unbias = S::of(m as f64 / (m - 1) as f64);
            BatchStats {
                mean: mean.clone(),
                var: var.iter().map(|v| *v * unbias).collect(),
            }
        });
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let v = self.push(
            Tensor::new(xs, y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            rg,
        );
        Ok((v, stats))
    }

    /// Mean over every axis after the first two: `[N×C×...] -> [N×C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(mismatch(format!("global_avg_pool: input {xs:?}")));
        }
        let inner: usize = xs[2..].iter().product();
        let inv = S::one() / S::of(inner as f64);
        let y = self
            .value(x)
            .data()
            .chunks(inner)
            .map(|ch| ch.iter().copied().sum::<S>() * inv)
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![xs[0], xs[1]], y)?, Op::GlobalAvgPool(x), rg))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xs = self.shape(x).to_vec();
        let c = *xs.last().ok_or_else(|| mismatch("softmax of a scalar".into()))?;
        let mut y = self.value(x).data().to_vec();
        for row in y.chunks_mut(c) {
            let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(xs, y)?, Op::Softmax(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let t = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = inputs.first().ok_or_else(|| mismatch("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(mismatch(format!("concat axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i])
            {
                return Err(mismatch(format!("concat: {:?} vs {base:?}", s)));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut y = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                y.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    fn class_loss(&mut self, logits: Var, spec: ClassLossSpec<S>) -> Result<Var, AutodiffError> {
        let ls = self.shape(logits);
        if ls.len() != 2 {
            return Err(mismatch(format!("loss expects [N×C] logits, got {ls:?}")));
        }
        let (n, c) = (ls[0], ls[1]);
        let value = class_loss_forward(self.value(logits).data(), n, c, &spec)?;
        let rg = self.rg(logits);
        Ok(self.push(Tensor::scalar(value), Op::ClassLoss { logits, spec }, rg))
    }

    /// Mean cross-entropy of `logits [N×C]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, AutodiffError> {
        self.class_loss(logits, ClassLossSpec::cross_entropy(labels.to_vec()))
    }

    /// Mean focal loss `w[y]·(1-p_y)^γ·(-log p_y)`.
    pub fn focal_loss(
        &mut self,
        logits: Var,
        labels: &[usize],
        gamma: S,
        class_weights: Option<&[S]>,
    ) -> Result<Var, AutodiffError> {
        if !(gamma >= S::zero()) {
            return Err(AutodiffError::InvalidArgument(format!(
                "focal gamma must be nonnegative, got {gamma}"
            )));
        }
        self.class_loss(
            logits,
            ClassLossSpec::focal(labels.to_vec(), gamma, class_weights.map(<[S]>::to_vec)),
        )
    }

    /// Backpropagates from a single-element node. Every node between the
    /// leaves and `root` is visited once, in reverse insertion order.
    pub fn backward(&self, root: Var) -> Result<Gradients<S>, AutodiffError> {
        if self.value(root).numel() != 1 {
            return Err(mismatch(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![S::one()]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], v: Var, contrib: Vec<S>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, c) in acc.iter_mut().zip(contrib) {
                    *a += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn backward_node(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.iter().zip(bv).map(|(g, y)| *g * *y).collect());
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.iter().zip(av).map(|(g, x)| *g * *x).collect());
                }
            }
            Op::Scale(a, f) | Op::GradScale(a, f) => {
                self.accumulate(grads, *a, g.iter().map(|v| *v * *f).collect());
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![g[0] / S::of(n as f64); n]);
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(x)
                        .map(|(g, x)| if *x > S::zero() { *g } else { S::zero() })
                        .collect(),
                );
            }
            Op::Dense { x, w, b } => {
                let (xs, ws) = (self.shape(*x), self.shape(*w));
                let (n, inp, out) = (xs[0], xs[1], ws[0]);
                if self.rg(*x) {
                    let mut dx = vec![S::zero(); n * inp];
                    gemm(n, out, inp, g, Layout::N, self.value(*w).data(), Layout::N, S::zero(), &mut dx);
                    self.accumulate(grads, *x, dx);
                }
                if self.rg(*w) {
                    let mut dw = vec![S::zero(); out * inp];
                    gemm(out, n, inp, g, Layout::T, self.value(*x).data(), Layout::N, S::zero(), &mut dw);
                    self.accumulate(grads, *w, dw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut db = vec![S::zero(); out];
                        for row in g.chunks(out) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += *v;
                            }
                        }
                        self.accumulate(grads, *b, db);
                    }
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let want_db = b.is_some_and(|b| self.rg(b));
                let (dx, dw, db) = conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    self.rg(*x),
                    self.rg(*w),
                    want_db,
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let xs = self.shape(*x);
                let (n, c) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let idx = |b: usize, ch: usize, i: usize| (b * c + ch) * inner + i;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        for i in 0..inner {
                            let k = idx(b, ch, i);
                            dbeta[ch] += g[k];
                            dgamma[ch] += g[k] * xhat[k];
                        }
                    }
                }
                if self.rg(*x) {
                    let mut dx = vec![S::zero(); g.len()];
                    let m = S::of((n * inner) as f64);
                    for ch in 0..c {
                        let scale = gam[ch] * inv_std[ch];
                        for b in 0..n {
                            for i in 0..inner {
                                let k = idx(b, ch, i);
                                dx[k] = if *train {
                                    scale / m * (m * g[k] - dbeta[ch] - xhat[k] * dgamma[ch])
                                } else {
                                    scale * g[k]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::GlobalAvgPool(x) => {
                let xs = self.shape(*x);
                let inner: usize = xs[2..].iter().product();
                let inv = S::one() / S::of(inner as f64);
                let mut dx = Vec::with_capacity(self.value(*x).numel());
                for v in g {
                    dx.extend(std::iter::repeat(*v * inv).take(inner));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let c = *self.shape(*x).last().expect("rank >= 1");
                let mut dx = vec![S::zero(); y.len()];
                for ((dxr, yr), gr) in dx.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                    let dot: S = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                    for ((d, yv), gv) in dxr.iter_mut().zip(yr).zip(gr) {
                        *d = *yv * (*gv - dot);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g.to_vec()),
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[*axis] * inner;
                    if self.rg(v) {
                        let mut dv = Vec::with_capacity(outer * len);
                        for o in 0..outer {
                            dv.extend_from_slice(&g[o * row + offset..o * row + offset + len]);
                        }
                        self.accumulate(grads, v, dv);
                    }
                    offset += len;
                }
            }
            Op::ClassLoss { logits, spec } => {
                let ls = self.shape(*logits);
                let d = class_loss_backward(self.value(*logits).data(), ls[0], ls[1], spec, g[0]);
                self.accumulate(grads, *logits, d);
            }
        }
    }
}

/// Gradients of leaf nodes after [`Graph::backward`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// `None` when no gradient reached the leaf.
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor shaped like the leaf, zero when unreached.
    pub fn tensor(&self, graph: &Graph<S>, v: Var) -> Tensor<S> {
        let shape = graph.shape(v).to_vec();
        match self.get(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient has leaf shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradients of every parameter bound in `graph`, in store order.
    /// Parameters bound more than once have their gradients summed.
    pub fn param_grads(&self, graph: &Graph<S>, store: &ParamStore<S>) -> Vec<Tensor<S>> {
        let mut out: Vec<Tensor<S>> = store
            .ids()
            .map(|id| Tensor::zeros(store.tensor(id).shape().to_vec()))
            .collect();
        for (id, v) in graph.param_bindings() {
            if let Some(g) = self.get(*v) {
                for (a, b) in out[id.index()].data_mut().iter_mut().zip(g) {
                    *a += *b;
                }
            }
        }
        out
    }
}
