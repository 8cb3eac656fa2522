//! Define-by-run tape. Every op appends one node whose inputs precede it, so
//! a reverse sweep over the node list is a valid topological order.

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Transpose(Var),
    Mean(Var),
    Sum(Var),
    BiasAdd(Var, Var),
    MeanRows(Var),
    RowSelect(Var, usize),
    MaskedSoftmax(Var),
    GcnNorm(Var),
    Pearson(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive ops sufficient to replay the backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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
    pub fn new() -> Self {
        Self::default()
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Copy of `v`'s value as a fresh constant (gradient stops here).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn check_matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = self.value(v);
        if !t.is_matrix() {
            return Err(Error::Dimension {
                op,
                left: t.shape().to_vec(),
                right: vec![],
            });
        }
        Ok((t.rows(), t.cols()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.check_matrix("matmul", a)?;
        let (rb, cb) = self.check_matrix("matmul", b)?;
        if ca != rb {
            return Err(dim_err("matmul", self.value(a), self.value(b)));
        }
        let mut out = vec![0.0; ra * cb];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, ra, ca, cb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(ra, cb, out), Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.check_matrix("matmul_nt", a)?;
        let (rb, cb) = self.check_matrix("matmul_nt", b)?;
        if ca != cb {
            return Err(dim_err("matmul_nt", self.value(a), self.value(b)));
        }
        let mut out = vec![0.0; ra * rb];
        matmul_nt_into(self.value(a).data(), self.value(b).data(), &mut out, ra, ca, rb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(ra, rb, out), Op::MatMulNt(a, b), rg))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(&[a]);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(t, Op::Sigmoid(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check_matrix("transpose", a)?;
        let t = self.value(a).transpose();
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Transpose(a), rg))
    }

    /// Mean of all entries, as a 1×1 tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// `x (n×m) + b (1×m)` with `b` broadcast to every row.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, m) = self.check_matrix("bias_add", x)?;
        let (br, bc) = self.check_matrix("bias_add", b)?;
        if br != 1 || bc != m {
            return Err(dim_err("bias_add", self.value(x), self.value(b)));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, bv) in row.iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(Tensor::matrix(n, m, out), Op::BiasAdd(x, b), rg))
    }

    /// Column means: (n×m) → (1×m).
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (n, m) = self.check_matrix("mean_rows", x)?;
        let mut out = vec![0.0; m];
        for row in self.value(x).data().chunks(m) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::matrix(1, m, out), Op::MeanRows(x), rg))
    }

    /// Row `k` of a matrix as a (1×m) tensor.
    pub fn row_select(&mut self, x: Var, k: usize) -> Result<Var> {
        let (n, _) = self.check_matrix("row_select", x)?;
        if k >= n {
            return Err(Error::Index { t: k, lo: 0, hi: n - 1 });
        }
        let row = self.value(x).row(k).to_vec();
        let m = row.len();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::matrix(1, m, row), Op::RowSelect(x, k), rg))
    }

    /// Row-wise softmax restricted to `mask == true`. Masked entries are
    /// exactly zero and a fully masked row yields an all-zero row.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        let (n, m) = self.check_matrix("masked_softmax", logits)?;
        if mask.len() != n * m {
            return Err(Error::Dimension {
                op: "masked_softmax",
                left: vec![n, m],
                right: vec![mask.len()],
            });
        }
        let x = self.value(logits).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &x[i * m..(i + 1) * m];
            let mrow = &mask[i * m..(i + 1) * m];
            let mut mx = f64::NEG_INFINITY;
            for (v, &keep) in row.iter().zip(mrow) {
                if keep && *v > mx {
                    mx = *v;
                }
            }
            if mx == f64::NEG_INFINITY {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            let mut z = 0.0;
            for ((o, v), &keep) in orow.iter_mut().zip(row).zip(mrow) {
                if keep {
                    *o = (v - mx).exp();
                    z += *o;
                }
            }
            for o in orow.iter_mut() {
                *o /= z;
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::matrix(n, m, out), Op::MaskedSoftmax(logits), rg))
    }

    /// Symmetric normalized adjacency with self-loops over rectified weights:
    /// `D^{-1/2} (max(A,0) + I) D^{-1/2}`.
    pub fn gcn_normalize(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.check_matrix("gcn_normalize", a)?;
        if n != m {
            return Err(dim_err("gcn_normalize", self.value(a), self.value(a)));
        }
        let (b, r) = gcn_parts(self.value(a));
        let mut out = b;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] *= r[i] * r[j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(n, n, out), Op::GcnNorm(a), rg))
    }

    /// Sample Pearson correlation over the strict upper triangle of two
    /// square matrices. Zero variance on either side gives 0.
    pub fn pearson(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = self.check_matrix("pearson", a)?;
        if n != m || self.value(a).shape() != self.value(b).shape() {
            return Err(dim_err("pearson", self.value(a), self.value(b)));
        }
        let r = pearson_parts(self.value(a), self.value(b)).map_or(0.0, |p| p.r);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(r), Op::Pearson(a, b), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (r, k, c) = (ta.rows(), ta.cols(), tb.cols());
                self.acc(grads, a, |ga| matmul_nt_into(g, tb.data(), ga, r, c, k));
                self.acc(grads, b, |gb| matmul_tn_into(ta.data(), g, gb, r, k, c));
            }
            Op::MatMulNt(a, b) => {
                // out (r×k) = a (r×c) · bᵀ, b is (k×c)
                let (ta, tb) = (self.value(a), self.value(b));
                let (r, c, k) = (ta.rows(), ta.cols(), tb.rows());
                self.acc(grads, a, |ga| matmul_into(g, tb.data(), ga, r, k, c));
                self.acc(grads, b, |gb| matmul_tn_into(g, ta.data(), gb, r, k, c));
            }
            Op::Add(a, b) => {
                self.acc(grads, a, |ga| axpy(ga, g, 1.0));
                self.acc(grads, b, |gb| axpy(gb, g, 1.0));
            }
            Op::Sub(a, b) => {
                self.acc(grads, a, |ga| axpy(ga, g, 1.0));
                self.acc(grads, b, |gb| axpy(gb, g, -1.0));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a).data(), self.value(b).data());
                self.acc(grads, a, |ga| {
                    for ((o, gv), y) in ga.iter_mut().zip(g).zip(tb) {
                        *o += gv * y;
                    }
                });
                self.acc(grads, b, |gb| {
                    for ((o, gv), x) in gb.iter_mut().zip(g).zip(ta) {
                        *o += gv * x;
                    }
                });
            }
            Op::Scale(a, c) => self.acc(grads, a, |ga| axpy(ga, g, c)),
            Op::Relu(a) => {
                let x = self.value(a).data();
                self.acc(grads, a, |ga| {
                    for ((o, gv), xv) in ga.iter_mut().zip(g).zip(x) {
                        if *xv > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                self.acc(grads, a, |ga| {
                    for ((o, gv), yv) in ga.iter_mut().zip(g).zip(y) {
                        *o += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows(), out.cols());
                self.acc(grads, a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Mean(a) => {
                let share = g[0] / self.value(a).numel() as f64;
                self.acc(grads, a, |ga| ga.iter_mut().for_each(|o| *o += share));
            }
            Op::Sum(a) => self.acc(grads, a, |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::BiasAdd(x, b) => {
                let m = out.cols();
                self.acc(grads, x, |gx| axpy(gx, g, 1.0));
                self.acc(grads, b, |gb| {
                    for row in g.chunks(m) {
                        axpy(gb, row, 1.0);
                    }
                });
            }
            Op::MeanRows(x) => {
                let n = self.value(x).rows();
                let m = out.cols();
                let inv = 1.0 / n as f64;
                self.acc(grads, x, |gx| {
                    for row in gx.chunks_mut(m) {
                        axpy(row, g, inv);
                    }
                });
            }
            Op::RowSelect(x, k) => {
                let m = out.cols();
                self.acc(grads, x, |gx| axpy(&mut gx[k * m..(k + 1) * m], g, 1.0));
            }
            Op::MaskedSoftmax(a) => {
                let m = out.cols();
                let y = out.data();
                self.acc(grads, a, |ga| {
                    for ((grow, yrow), orow) in g.chunks(m).zip(y.chunks(m)).zip(ga.chunks_mut(m)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(gv, yv)| gv * yv).sum();
                        for ((o, gv), yv) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::GcnNorm(a) => {
                let ta = self.value(a);
                let n = ta.rows();
                let (b, r) = gcn_parts(ta);
                // s_k = Σ_j G_kj B_kj r_j + Σ_i G_ik B_ik r_i
                let mut s = vec![0.0; n];
                for k in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += g[k * n + j] * b[k * n + j] * r[j];
                        acc += g[j * n + k] * b[j * n + k] * r[j];
                    }
                    s[k] = acc;
                }
                let x = ta.data();
                self.acc(grads, a, |ga| {
                    for k in 0..n {
                        let shift = 0.5 * r[k] * r[k] * r[k] * s[k];
                        for l in 0..n {
                            if x[k * n + l] > 0.0 {
                                ga[k * n + l] += g[k * n + l] * r[k] * r[l] - shift;
                            }
                        }
                    }
                });
            }
            Op::Pearson(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let Some(p) = pearson_parts(ta, tb) else { return };
                let n = ta.rows();
                let gv = g[0];
                let denom = p.norm_x * p.norm_y;
                let mut idx = 0;
                let mut ga_up = vec![0.0; p.xc.len()];
                let mut gb_up = vec![0.0; p.xc.len()];
                for (k, (x, y)) in p.xc.iter().zip(&p.yc).enumerate() {
                    ga_up[k] = gv * (y / denom - p.r * x / (p.norm_x * p.norm_x));
                    gb_up[k] = gv * (x / denom - p.r * y / (p.norm_y * p.norm_y));
                }
                let mut scatter = |gt: &mut [f64], vals: &[f64]| {
                    idx = 0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            gt[i * n + j] += vals[idx];
                            idx += 1;
                        }
                    }
                };
                if self.nodes[a.0].requires_grad {
                    let slot = grads[a.0].get_or_insert_with(|| vec![0.0; n * n]);
                    scatter(slot, &ga_up);
                }
                if self.nodes[b.0].requires_grad {
                    let slot = grads[b.0].get_or_insert_with(|| vec![0.0; n * n]);
                    scatter(slot, &gb_up);
                }
            }
        }
    }
}

fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// `(B = max(A,0) + I, r = rowsum(B)^{-1/2})`
fn gcn_parts(a: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut b: Vec<f64> = a.data().iter().map(|&v| v.max(0.0)).collect();
    for i in 0..n {
        b[i * n + i] += 1.0;
    }
    let r = (0..n)
        .map(|i| 1.0 / b[i * n..(i + 1) * n].iter().sum::<f64>().sqrt())
        .collect();
    (b, r)
}

struct PearsonParts {
    xc: Vec<f64>,
    yc: Vec<f64>,
    norm_x: f64,
    norm_y: f64,
    r: f64,
}

fn pearson_parts(a: &Tensor, b: &Tensor) -> Option<PearsonParts> {
    let n = a.rows();
    let mut x = Vec::with_capacity(n * (n - 1) / 2);
    let mut y = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            x.push(a.get(i, j));
            y.push(b.get(i, j));
        }
    }
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    x.iter_mut().for_each(|v| *v -= mx);
    y.iter_mut().for_each(|v| *v -= my);
    let sxx = x.iter().map(|v| v * v).sum::<f64>();
    let syy = y.iter().map(|v| v * v).sum::<f64>();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let (norm_x, norm_y) = (sxx.sqrt(), syy.sqrt());
    // sqrt(s·s) is exact, so identical inputs give r = 1 bit-for-bit.
    let r = (x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Some(PearsonParts {
        xc: x,
        yc: y,
        norm_x,
        norm_y,
        r,
    })
}

/// Gradients from one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient w.r.t. `v` shaped like `like`; zeros when `v` was not reached.
    pub fn tensor(&self, v: Var, like: &Tensor) -> Tensor {
        let data = match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; like.numel()],
        };
        Tensor::new(like.shape().to_vec(), data).expect("gradient shape")
    }
}
