//! Backend-generic encoder, processor and decoder passes.

use std::cmp::Ordering;

use super::{ChannelNorm, IpotConfig, IpotWeights};
use crate::attention::{attention_block, self_attention_block};
use crate::encoding::EncodedInput;
use crate::error::{Error, Result};
use crate::tensor::{Backend, Tensor};

/// Rows sorted lexicographically under `f64::total_cmp`.
///
/// Cross-attention over a set is order-free in exact arithmetic but not in
/// floating point; sorting first makes the encoder's result identical for
/// every ordering of the same rows.
pub fn canonical_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (x.row(i), x.row(j));
        for k in 0..c {
            match a[k].total_cmp(&b[k]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    });
    x.select_rows(&idx)
}

/// `Z₀ = Block(Z_q, X)` for an assembled input `X`.
pub fn encode<B: Backend>(
    b: &mut B,
    cfg: &IpotConfig,
    w: &IpotWeights<B::Value>,
    input: &EncodedInput,
) -> Result<B::Value> {
    let x = input.matrix();
    if x.shape().len() != 2 || x.cols() != cfg.input_width() {
        return Err(Error::Config(format!(
            "encoded input has shape {:?}, model expects {} columns",
            x.shape(),
            cfg.input_width()
        )));
    }
    let x = b.constant(canonical_rows(x));
    attention_block(b, &w.latent_queries, &x, &w.encoder)
}

/// `L` self-attention blocks over the latent state.
pub fn process<B: Backend>(b: &mut B, w: &IpotWeights<B::Value>, z: &B::Value) -> Result<B::Value> {
    let mut z = z.clone();
    for blk in &w.processor {
        z = self_attention_block(b, &z, blk)?;
    }
    Ok(z)
}

/// Lifts embedded queries to the latent width.
pub fn embed_queries<B: Backend>(
    b: &mut B,
    cfg: &IpotConfig,
    w: &IpotWeights<B::Value>,
    features: &Tensor,
) -> Result<B::Value> {
    if features.shape().len() != 2 || features.cols() != cfg.query_width() {
        return Err(Error::Config(format!(
            "query embedding has shape {:?}, model expects {} columns",
            features.shape(),
            cfg.query_width()
        )));
    }
    let y = b.constant(features.clone());
    b.affine(&y, &w.query_proj_w, Some(&w.query_proj_b))
}

/// Cross-attends lifted queries to `z` and maps to output channels.
pub fn decode_embedded<B: Backend>(
    b: &mut B,
    w: &IpotWeights<B::Value>,
    yq: &B::Value,
    z: &B::Value,
) -> Result<B::Value> {
    let h = attention_block(b, yq, z, &w.decoder)?;
    b.affine(&h, &w.head_w, Some(&w.head_b))
}

pub fn decode<B: Backend>(
    b: &mut B,
    cfg: &IpotConfig,
    w: &IpotWeights<B::Value>,
    features: &Tensor,
    z: &B::Value,
) -> Result<B::Value> {
    let yq = embed_queries(b, cfg, w, features)?;
    decode_embedded(b, w, &yq, z)
}

/// [`decode`] followed by the inverse output standardisation, if any.
pub fn decode_restored<B: Backend>(
    b: &mut B,
    cfg: &IpotConfig,
    w: &IpotWeights<B::Value>,
    norm: Option<&ChannelNorm>,
    features: &Tensor,
    z: &B::Value,
) -> Result<B::Value> {
    let out = decode(b, cfg, w, features, z)?;
    match norm {
        Some(n) => n.restore(b, &out),
        None => Ok(out),
    }
}
