//! Pre-norm cross- and self-attention blocks.
//!
//! ```text
//! O   = Y + Attn(LN(Y), LN(X), LN(X))
//! out = O + FF(LN(O))
//! Attn(Xq, Xk, Xv) = softmax(Q Kᵀ / √d_q) V,  Q = Xq Wq, K = Xk Wk, V = Xv Wv
//! ```
//!
//! With more than one head, `Q`, `K` and `V` are split column-wise into
//! equal slices, attended independently with the per-head width in the
//! scale, concatenated and merged by `Wo`. Single-head blocks carry no
//! merge matrix.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Backend, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionConfig {
    pub heads: usize,
    pub d_model: usize,
    pub ff_hidden: usize,
}

impl AttentionConfig {
    pub fn new(heads: usize, d_model: usize) -> Result<Self> {
        let cfg = Self {
            heads,
            d_model,
            ff_hidden: d_model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.ff_hidden == 0 {
            return Err(Error::Config("ff_hidden must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count of a block whose key-value input is
    /// `kv_width` wide.
    pub fn param_count(&self, kv_width: usize) -> usize {
        let (d, h) = (self.d_model, self.ff_hidden);
        let norms = 2 * d + 2 * kv_width + 2 * d;
        let projections = d * d + 2 * kv_width * d;
        let merge = if self.heads > 1 { d * d } else { 0 };
        let ff = d * h + h + h * d + d;
        norms + projections + merge + ff
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<V> {
    pub gamma: V,
    pub beta: V,
}

impl<V> LayerNormParams<V> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a V)) {
        f(format!("{prefix}.gamma"), &self.gamma);
        f(format!("{prefix}.beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut V)) {
        f(format!("{prefix}.gamma"), &mut self.gamma);
        f(format!("{prefix}.beta"), &mut self.beta);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&V) -> U) -> LayerNormParams<U> {
        LayerNormParams {
            gamma: f(&self.gamma),
            beta: f(&self.beta),
        }
    }
}

impl LayerNormParams<Tensor> {
    fn identity(d: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[d], 1.0),
            beta: Tensor::zeros(&[d]),
        }
    }
}

/// Weights of one attention block. `V` is a tensor for stored parameters
/// or a backend handle while a forward pass is being built.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<V> {
    pub heads: usize,
    pub ln_query: LayerNormParams<V>,
    pub ln_kv: LayerNormParams<V>,
    pub wq: V,
    pub wk: V,
    pub wv: V,
    pub wo: Option<V>,
    pub ln_ff: LayerNormParams<V>,
    pub ff_in_w: V,
    pub ff_in_b: V,
    pub ff_out_w: V,
    pub ff_out_b: V,
}

impl<V> AttentionWeights<V> {
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a V)) {
        self.ln_query.visit(&format!("{prefix}.ln_query"), f);
        self.ln_kv.visit(&format!("{prefix}.ln_kv"), f);
        f(format!("{prefix}.wq"), &self.wq);
        f(format!("{prefix}.wk"), &self.wk);
        f(format!("{prefix}.wv"), &self.wv);
        if let Some(wo) = &self.wo {
            f(format!("{prefix}.wo"), wo);
        }
        self.ln_ff.visit(&format!("{prefix}.ln_ff"), f);
        f(format!("{prefix}.ff_in_w"), &self.ff_in_w);
        f(format!("{prefix}.ff_in_b"), &self.ff_in_b);
        f(format!("{prefix}.ff_out_w"), &self.ff_out_w);
        f(format!("{prefix}.ff_out_b"), &self.ff_out_b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut V)) {
        self.ln_query.visit_mut(&format!("{prefix}.ln_query"), f);
        self.ln_kv.visit_mut(&format!("{prefix}.ln_kv"), f);
        f(format!("{prefix}.wq"), &mut self.wq);
        f(format!("{prefix}.wk"), &mut self.wk);
        f(format!("{prefix}.wv"), &mut self.wv);
        if let Some(wo) = &mut self.wo {
            f(format!("{prefix}.wo"), wo);
        }
        self.ln_ff.visit_mut(&format!("{prefix}.ln_ff"), f);
        f(format!("{prefix}.ff_in_w"), &mut self.ff_in_w);
        f(format!("{prefix}.ff_in_b"), &mut self.ff_in_b);
        f(format!("{prefix}.ff_out_w"), &mut self.ff_out_w);
        f(format!("{prefix}.ff_out_b"), &mut self.ff_out_b);
    }

    /// Structure-preserving map; `f` sees tensors in [`Self::visit`] order.
    pub fn map<U>(&self, f: &mut dyn FnMut(&V) -> U) -> AttentionWeights<U> {
        AttentionWeights {
            heads: self.heads,
            ln_query: self.ln_query.map(f),
            ln_kv: self.ln_kv.map(f),
            wq: f(&self.wq),
            wk: f(&self.wk),
            wv: f(&self.wv),
            wo: self.wo.as_ref().map(|w| f(w)),
            ln_ff: self.ln_ff.map(f),
            ff_in_w: f(&self.ff_in_w),
            ff_in_b: f(&self.ff_in_b),
            ff_out_w: f(&self.ff_out_w),
            ff_out_b: f(&self.ff_out_b),
        }
    }
}

/// `fan_in × fan_out` matrix with entries drawn from `N(0, 1/fan_in)`.
pub(crate) fn scaled_normal<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    let data = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive extents")
}

impl AttentionWeights<Tensor> {
    /// Fresh block: identity layer norms, scaled-normal matrices, zero biases.
    pub fn init<R: Rng>(cfg: &AttentionConfig, kv_width: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (d, h) = (cfg.d_model, cfg.ff_hidden);
        Ok(Self {
            heads: cfg.heads,
            ln_query: LayerNormParams::identity(d),
            ln_kv: LayerNormParams::identity(kv_width),
            wq: scaled_normal(rng, d, d),
            wk: scaled_normal(rng, kv_width, d),
            wv: scaled_normal(rng, kv_width, d),
            wo: (cfg.heads > 1).then(|| scaled_normal(rng, d, d)),
            ln_ff: LayerNormParams::identity(d),
            ff_in_w: scaled_normal(rng, d, h),
            ff_in_b: Tensor::zeros(&[h]),
            ff_out_w: scaled_normal(rng, h, d),
            ff_out_b: Tensor::zeros(&[d]),
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.numel());
        n
    }
}

/// Per-head softmax attention matrices `softmax(Q_h K_hᵀ / √d_h)`.
pub fn attention_probs<B: Backend>(
    b: &mut B,
    xq: &B::Value,
    xk: &B::Value,
    w: &AttentionWeights<B::Value>,
) -> Result<Vec<B::Value>> {
    let q = b.matmul(xq, &w.wq)?;
    let k = b.matmul(xk, &w.wk)?;
    let d = b.shape(&q)[1];
    let dh = d / w.heads;
    let mut out = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let (qh, kh) = if w.heads == 1 {
            (q.clone(), k.clone())
        } else {
            (b.slice_cols(&q, h * dh, dh)?, b.slice_cols(&k, h * dh, dh)?)
        };
        let qh = b.scale(&qh, 1.0 / (dh as f64).sqrt());
        let s = b.matmul_nt(&qh, &kh)?;
        out.push(b.softmax_rows(&s)?);
    }
    Ok(out)
}

/// Softmax attention of queries `xq` over keys `xk` and values `xv`.
pub fn attn<B: Backend>(
    b: &mut B,
    xq: &B::Value,
    xk: &B::Value,
    xv: &B::Value,
    w: &AttentionWeights<B::Value>,
) -> Result<B::Value> {
    if b.shape(xk)[0] != b.shape(xv)[0] {
        return Err(Error::shape("attn keys/values", b.shape(xk), b.shape(xv)));
    }
    let probs = attention_probs(b, xq, xk, w)?;
    let v = b.matmul(xv, &w.wv)?;
    let dh = b.shape(&v)[1] / w.heads;
    let mut heads = Vec::with_capacity(w.heads);
    for (h, p) in probs.iter().enumerate() {
        let vh = if w.heads == 1 {
            v.clone()
        } else {
            b.slice_cols(&v, h * dh, dh)?
        };
        heads.push(b.matmul(p, &vh)?);
    }
    let merged = if heads.len() == 1 {
        heads.pop().expect("one head")
    } else {
        b.concat_cols(&heads)?
    };
    match &w.wo {
        Some(wo) => b.matmul(&merged, wo),
        None => Ok(merged),
    }
}

/// Pre-norm residual block; output has the shape of `y` for any `x`.
pub fn attention_block<B: Backend>(
    b: &mut B,
    y: &B::Value,
    x: &B::Value,
    w: &AttentionWeights<B::Value>,
) -> Result<B::Value> {
    let yn = b.layer_norm(y, &w.ln_query.gamma, &w.ln_query.beta, LAYER_NORM_EPS)?;
    let xn = b.layer_norm(x, &w.ln_kv.gamma, &w.ln_kv.beta, LAYER_NORM_EPS)?;
    let a = attn(b, &yn, &xn, &xn, w)?;
    let o = b.add(y, &a)?;
    let h = b.layer_norm(&o, &w.ln_ff.gamma, &w.ln_ff.beta, LAYER_NORM_EPS)?;
    let h = b.affine(&h, &w.ff_in_w, Some(&w.ff_in_b))?;
    let h = b.gelu(&h);
    let h = b.affine(&h, &w.ff_out_w, Some(&w.ff_out_b))?;
    b.add(&o, &h)
}

pub fn self_attention_block<B: Backend>(
    b: &mut B,
    z: &B::Value,
    w: &AttentionWeights<B::Value>,
) -> Result<B::Value> {
    attention_block(b, z, z, w)
}

/// Loads stored weights into a backend as differentiable leaves or
/// constants, depending on `leaf`.
pub fn load_weights<B: Backend>(
    b: &mut B,
    w: &AttentionWeights<Tensor>,
    leaf: &mut dyn FnMut(&mut B, Tensor) -> B::Value,
) -> AttentionWeights<B::Value> {
    w.map(&mut |t| leaf(b, t.clone()))
}
