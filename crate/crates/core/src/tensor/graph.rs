use super::kernels::{self, NormStats};
use super::{Backend, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddBias(usize, usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        stats: NormStats,
    },
    Gelu(usize),
    SliceCols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    Sum(usize),
    Norm(usize),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::AddBias(..) => "add_bias",
            Op::Softmax(..) => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(..) => "gelu",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Sum(..) => "sum",
            Op::Norm(..) => "norm",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape of operations.
///
/// Every operation appends a fresh output node, so append order is a
/// topological order and [`Graph::backward`] simply walks it in reverse.
/// Leaf gradients accumulate across backward calls; interior gradients are
/// cleared at the start of each call.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    visits: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op_tag(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.tag()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient as a tensor shaped like the value; zeros if never reached.
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Number of nodes processed by the most recent backward pass.
    pub fn last_backward_visits(&self) -> usize {
        self.visits
    }

    /// Propagates `∂loss/∂·` to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for n in &mut self.nodes {
            if !matches!(n.op, Op::Leaf) {
                n.grad = None;
            }
        }
        self.visits = 0;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            self.visits += 1;
            if matches!(self.nodes[i].op, Op::Leaf | Op::Constant) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let updates = self.local_grads(i, &g);
            self.nodes[i].grad = Some(g);
            for (target, contrib) in updates {
                self.accumulate(target, contrib);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, idx: usize, contrib: Vec<f64>) {
        let node = &mut self.nodes[idx];
        match &mut node.grad {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contrib) {
                    *a += b;
                }
            }
            None => node.grad = Some(contrib),
        }
    }

    /// Vector-Jacobian products of node `i` with its output gradient `g`.
    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let want = |j: usize| self.nodes[j].requires_grad;
        let val = |j: usize| &self.nodes[j].value;
        let mut out = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (val(a).shape()[0], val(a).shape()[1]);
                let n = val(b).shape()[1];
                if want(a) {
                    let mut da = vec![0.0; m * k];
                    super::gemm::gemm(m, n, k, g, false, val(b).data(), true, 0.0, &mut da);
                    out.push((a, da));
                }
                if want(b) {
                    let mut db = vec![0.0; k * n];
                    super::gemm::gemm(k, m, n, val(a).data(), true, g, false, 0.0, &mut db);
                    out.push((b, db));
                }
            }
            &Op::MatMulNt(a, b) => {
                let (m, k) = (val(a).shape()[0], val(a).shape()[1]);
                let n = val(b).shape()[0];
                if want(a) {
                    let mut da = vec![0.0; m * k];
                    super::gemm::gemm(m, n, k, g, false, val(b).data(), false, 0.0, &mut da);
                    out.push((a, da));
                }
                if want(b) {
                    let mut db = vec![0.0; n * k];
                    super::gemm::gemm(n, m, k, g, true, val(a).data(), false, 0.0, &mut db);
                    out.push((b, db));
                }
            }
            &Op::Add(a, b) => {
                if want(a) {
                    out.push((a, g.to_vec()));
                }
                if want(b) {
                    out.push((b, g.to_vec()));
                }
            }
            &Op::Sub(a, b) => {
                if want(a) {
                    out.push((a, g.to_vec()));
                }
                if want(b) {
                    out.push((b, g.iter().map(|v| -v).collect()));
                }
            }
            &Op::Mul(a, b) => {
                if want(a) {
                    let d = g.iter().zip(val(b).data()).map(|(x, y)| x * y).collect();
                    out.push((a, d));
                }
                if want(b) {
                    let d = g.iter().zip(val(a).data()).map(|(x, y)| x * y).collect();
                    out.push((b, d));
                }
            }
            &Op::Scale(a, s) => {
                if want(a) {
                    out.push((a, g.iter().map(|v| v * s).collect()));
                }
            }
            &Op::AddScalar(a) => {
                if want(a) {
                    out.push((a, g.to_vec()));
                }
            }
            &Op::AddBias(a, b) => {
                if want(a) {
                    out.push((a, g.to_vec()));
                }
                if want(b) {
                    let n = val(b).numel();
                    let mut db = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    out.push((b, db));
                }
            }
            &Op::Softmax(a) => {
                if want(a) {
                    let y = self.nodes[i].value.data();
                    let n = self.nodes[i].value.cols();
                    let mut dx = vec![0.0; y.len()];
                    for ((yr, gr), dr) in y
                        .chunks_exact(n)
                        .zip(g.chunks_exact(n))
                        .zip(dx.chunks_exact_mut(n))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((d, p), q) in dr.iter_mut().zip(yr).zip(gr) {
                            *d = p * (q - dot);
                        }
                    }
                    out.push((a, dx));
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let xv = val(x).data();
                let gm = val(gamma).data();
                let d = gm.len();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut dx = if want(x) { vec![0.0; xv.len()] } else { Vec::new() };
                let mut xhat = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for (r, (xr, gr)) in xv.chunks_exact(d).zip(g.chunks_exact(d)).enumerate() {
                    let (mean, rstd) = (stats.mean[r], stats.rstd[r]);
                    for j in 0..d {
                        xhat[j] = (xr[j] - mean) * rstd;
                        dgamma[j] += gr[j] * xhat[j];
                        dbeta[j] += gr[j];
                        dxhat[j] = gr[j] * gm[j];
                    }
                    if want(x) {
                        let m1 = dxhat.iter().sum::<f64>() / d as f64;
                        let m2 = dxhat.iter().zip(&xhat).map(|(p, q)| p * q).sum::<f64>()
                            / d as f64;
                        let dr = &mut dx[r * d..(r + 1) * d];
                        for j in 0..d {
                            dr[j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                }
                if want(x) {
                    out.push((x, dx));
                }
                if want(gamma) {
                    out.push((gamma, dgamma));
                }
                if want(beta) {
                    out.push((beta, dbeta));
                }
            }
            &Op::Gelu(a) => {
                if want(a) {
                    let d = g
                        .iter()
                        .zip(val(a).data())
                        .map(|(q, &x)| q * kernels::gelu_grad_scalar(x))
                        .collect();
                    out.push((a, d));
                }
            }
            &Op::SliceCols { x, start } => {
                if want(x) {
                    let n = val(x).cols();
                    let len = self.nodes[i].value.cols();
                    let mut dx = vec![0.0; val(x).numel()];
                    for (dr, gr) in dx.chunks_exact_mut(n).zip(g.chunks_exact(len)) {
                        dr[start..start + len].copy_from_slice(gr);
                    }
                    out.push((x, dx));
                }
            }
            Op::ConcatCols(parts) => {
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if want(p) {
                        let mut dp = Vec::with_capacity(val(p).numel());
                        for gr in g.chunks_exact(total) {
                            dp.extend_from_slice(&gr[offset..offset + w]);
                        }
                        out.push((p, dp));
                    }
                    offset += w;
                }
            }
            &Op::Sum(a) => {
                if want(a) {
                    out.push((a, vec![g[0]; val(a).numel()]));
                }
            }
            &Op::Norm(a) => {
                if want(a) {
                    let nrm = self.nodes[i].value.data()[0];
                    let d = if nrm > 0.0 {
                        val(a).data().iter().map(|x| g[0] * x / nrm).collect()
                    } else {
                        vec![0.0; val(a).numel()]
                    };
                    out.push((a, d));
                }
            }
        }
        out
    }
}

impl Backend for Graph {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        &self.nodes[v.0].value
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let t = kernels::matmul(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::MatMul(a.0, b.0), rg))
    }

    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let t = kernels::matmul_nt(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::MatMulNt(a.0, b.0), rg))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let t = kernels::add(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::Add(a.0, b.0), rg))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let t = kernels::sub(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::Sub(a.0, b.0), rg))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let t = kernels::mul(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::Mul(a.0, b.0), rg))
    }

    fn scale(&mut self, a: &Var, s: f64) -> Var {
        let t = kernels::map(&self.nodes[a.0].value, |x| x * s);
        let rg = self.needs(&[a.0]);
        self.push(t, Op::Scale(a.0, s), rg)
    }

    fn add_scalar(&mut self, a: &Var, s: f64) -> Var {
        let t = kernels::map(&self.nodes[a.0].value, |x| x + s);
        let rg = self.needs(&[a.0]);
        self.push(t, Op::AddScalar(a.0), rg)
    }

    fn add_bias(&mut self, a: &Var, bias: &Var) -> Result<Var> {
        let t = kernels::add_bias(&self.nodes[a.0].value, &self.nodes[bias.0].value)?;
        let rg = self.needs(&[a.0, bias.0]);
        Ok(self.push(t, Op::AddBias(a.0, bias.0), rg))
    }

    fn softmax_rows(&mut self, a: &Var) -> Result<Var> {
        let t = kernels::softmax_rows(&self.nodes[a.0].value)?;
        let rg = self.needs(&[a.0]);
        Ok(self.push(t, Op::Softmax(a.0), rg))
    }

    fn layer_norm(&mut self, x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Result<Var> {
        let (t, stats) = kernels::layer_norm(
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
            eps,
        )?;
        let rg = self.needs(&[x.0, gamma.0, beta.0]);
        let op = Op::LayerNorm {
            x: x.0,
            gamma: gamma.0,
            beta: beta.0,
            stats,
        };
        Ok(self.push(t, op, rg))
    }

    fn gelu(&mut self, a: &Var) -> Var {
        let t = kernels::gelu(&self.nodes[a.0].value);
        let rg = self.needs(&[a.0]);
        self.push(t, Op::Gelu(a.0), rg)
    }

    fn slice_cols(&mut self, a: &Var, start: usize, len: usize) -> Result<Var> {
        let t = kernels::slice_cols(&self.nodes[a.0].value, start, len)?;
        let rg = self.needs(&[a.0]);
        Ok(self.push(t, Op::SliceCols { x: a.0, start }, rg))
    }

    fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| &self.nodes[p.0].value).collect();
        let t = kernels::concat_cols(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.needs(&ids);
        Ok(self.push(t, Op::ConcatCols(ids), rg))
    }

    fn sum(&mut self, a: &Var) -> Var {
        let t = kernels::sum(&self.nodes[a.0].value);
        let rg = self.needs(&[a.0]);
        self.push(t, Op::Sum(a.0), rg)
    }

    fn norm(&mut self, a: &Var) -> Var {
        let t = kernels::norm(&self.nodes[a.0].value);
        let rg = self.needs(&[a.0]);
        self.push(t, Op::Norm(a.0), rg)
    }
}
