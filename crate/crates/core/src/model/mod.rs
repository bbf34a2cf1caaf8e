//! Encoder–processor–decoder over a fixed set of learnable inducing points.
//!
//! The encoder cross-attends `n_z` learnable queries to an arbitrary number
//! of input points, the processor applies `L` self-attention blocks to the
//! resulting `n_z×d_z` latent state, and the decoder cross-attends an
//! arbitrary number of output queries to that state. Only the encoder and
//! decoder ever touch the discretisation, and both are linear in its size.

mod checkpoint;
mod forward;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{canonical_rows, decode, decode_embedded, decode_restored, embed_queries, encode, process};

use crate::attention::{scaled_normal, AttentionConfig, AttentionWeights};
use crate::data::DiscretizedFunction;
use crate::encoding::{assemble_input, assemble_queries, EncodedInput, FourierSpec};
use crate::error::{Error, Result};
use crate::parallel::ExecPolicy;
use crate::tensor::{Backend, Eval, Tensor};

/// Standard deviation of the learnable-query initialisation.
pub const LATENT_INIT_STD: f64 = 0.02;

/// Query rows decoded per task by the chunked inference path.
pub const QUERY_CHUNK: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct IpotConfig {
    /// Number of inducing points.
    pub n_z: usize,
    /// Latent channels.
    pub d_z: usize,
    /// Processor depth.
    pub layers: usize,
    pub heads_enc: usize,
    pub heads_proc: usize,
    pub heads_dec: usize,
    pub encoding: FourierSpec,
    /// Input value channels.
    pub d_in: usize,
    /// Output channels.
    pub d_out: usize,
}

impl IpotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_z == 0 || self.layers == 0 || self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Config(
                "n_z, layers, d_in and d_out must all be at least 1".into(),
            ));
        }
        for h in [self.heads_enc, self.heads_proc, self.heads_dec] {
            AttentionConfig::new(h, self.d_z)?;
        }
        self.encoding.validate()
    }

    pub fn d_coord(&self) -> usize {
        self.encoding.d_coord()
    }

    /// Width of an encoded input row.
    pub fn input_width(&self) -> usize {
        self.encoding.embedded_dim() + self.d_in
    }

    /// Width of an embedded output query.
    pub fn query_width(&self) -> usize {
        self.encoding.embedded_dim()
    }

    fn block(&self, heads: usize) -> AttentionConfig {
        AttentionConfig {
            heads,
            d_model: self.d_z,
            ff_hidden: self.d_z,
        }
    }

    pub fn encoder_block(&self) -> AttentionConfig {
        self.block(self.heads_enc)
    }

    pub fn processor_block(&self) -> AttentionConfig {
        self.block(self.heads_proc)
    }

    pub fn decoder_block(&self) -> AttentionConfig {
        self.block(self.heads_dec)
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.d_z;
        self.n_z * d
            + self.encoder_block().param_count(self.input_width())
            + self.layers * self.processor_block().param_count(d)
            + self.query_width() * d
            + d
            + self.decoder_block().param_count(d)
            + d * self.d_out
            + self.d_out
    }

    /// 2-D Darcy flow architecture (85² grid in the reference setup).
    pub fn darcy() -> Self {
        Self {
            n_z: 256,
            d_z: 64,
            layers: 4,
            heads_enc: 1,
            heads_proc: 8,
            heads_dec: 1,
            encoding: FourierSpec::darcy(),
            d_in: 1,
            d_out: 1,
        }
    }

    /// 2-D vorticity architecture; the ten-frame history enters as ten
    /// value channels.
    pub fn navier_stokes() -> Self {
        Self {
            n_z: 512,
            d_z: 128,
            layers: 2,
            heads_enc: 1,
            heads_proc: 4,
            heads_dec: 1,
            encoding: FourierSpec::navier_stokes(),
            d_in: 10,
            d_out: 1,
        }
    }

    pub fn burgers() -> Self {
        Self {
            n_z: 256,
            d_z: 64,
            layers: 1,
            heads_enc: 8,
            heads_proc: 8,
            heads_dec: 8,
            encoding: FourierSpec::burgers(),
            d_in: 1,
            d_out: 1,
        }
    }

    /// Desk-scale latent time stepper for the 32² heat trajectories.
    pub fn heat() -> Self {
        Self {
            n_z: 64,
            d_z: 32,
            layers: 1,
            heads_enc: 1,
            heads_proc: 4,
            heads_dec: 1,
            encoding: FourierSpec::new(vec![8, 8], vec![8.0, 8.0]).expect("preset"),
            d_in: 1,
            d_out: 1,
        }
    }

    /// Names of fields that differ from `other`.
    pub fn diff(&self, other: &Self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks: [(&'static str, bool); 9] = [
            ("n_z", self.n_z == other.n_z),
            ("d_z", self.d_z == other.d_z),
            ("layers", self.layers == other.layers),
            ("heads_enc", self.heads_enc == other.heads_enc),
            ("heads_proc", self.heads_proc == other.heads_proc),
            ("heads_dec", self.heads_dec == other.heads_dec),
            ("encoding", self.encoding == other.encoding),
            ("d_in", self.d_in == other.d_in),
            ("d_out", self.d_out == other.d_out),
        ];
        for (name, same) in checks {
            if !same {
                out.push(name);
            }
        }
        out
    }
}

/// All trainable weights. `V` is [`Tensor`] for stored parameters and a
/// backend handle while a pass is being built.
#[derive(Clone, Debug, PartialEq)]
pub struct IpotWeights<V> {
    pub latent_queries: V,
    pub encoder: AttentionWeights<V>,
    pub processor: Vec<AttentionWeights<V>>,
    pub query_proj_w: V,
    pub query_proj_b: V,
    pub decoder: AttentionWeights<V>,
    pub head_w: V,
    pub head_b: V,
}

impl<V> IpotWeights<V> {
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a V)) {
        f("latent_queries".into(), &self.latent_queries);
        self.encoder.visit("encoder", f);
        for (i, blk) in self.processor.iter().enumerate() {
            blk.visit(&format!("processor.{i}"), f);
        }
        f("query_proj.w".into(), &self.query_proj_w);
        f("query_proj.b".into(), &self.query_proj_b);
        self.decoder.visit("decoder", f);
        f("head.w".into(), &self.head_w);
        f("head.b".into(), &self.head_b);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut V)) {
        f("latent_queries".into(), &mut self.latent_queries);
        self.encoder.visit_mut("encoder", f);
        for (i, blk) in self.processor.iter_mut().enumerate() {
            blk.visit_mut(&format!("processor.{i}"), f);
        }
        f("query_proj.w".into(), &mut self.query_proj_w);
        f("query_proj.b".into(), &mut self.query_proj_b);
        self.decoder.visit_mut("decoder", f);
        f("head.w".into(), &mut self.head_w);
        f("head.b".into(), &mut self.head_b);
    }

    /// Structure-preserving map; `f` sees values in [`Self::visit`] order.
    pub fn map<U>(&self, f: &mut dyn FnMut(&V) -> U) -> IpotWeights<U> {
        IpotWeights {
            latent_queries: f(&self.latent_queries),
            encoder: self.encoder.map(f),
            processor: self.processor.iter().map(|b| b.map(f)).collect(),
            query_proj_w: f(&self.query_proj_w),
            query_proj_b: f(&self.query_proj_b),
            decoder: self.decoder.map(f),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }

    /// Values in [`Self::visit`] order.
    pub fn flatten(&self) -> Vec<V>
    where
        V: Clone,
    {
        let mut out = Vec::new();
        self.visit(&mut |_, v| out.push(v.clone()));
        out
    }

    /// Same structure holding `flat`, which is in [`Self::visit`] order.
    pub fn rebuild<U: Clone>(&self, flat: &[U]) -> IpotWeights<U> {
        let mut it = flat.iter();
        self.map(&mut |_| it.next().expect("one value per weight").clone())
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |n, _| out.push(n));
        out
    }
}

impl IpotWeights<Tensor> {
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    /// Registers every weight with a backend.
    pub fn load<B: Backend>(
        &self,
        b: &mut B,
        leaf: &mut dyn FnMut(&mut B, Tensor) -> B::Value,
    ) -> IpotWeights<B::Value> {
        self.map(&mut |t| leaf(b, t.clone()))
    }
}

/// Per-channel affine standardisation of function values.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelNorm {
    /// Statistics of the value columns of `functions`; zero spread maps to 1.
    pub fn fit<'a>(functions: impl IntoIterator<Item = &'a Tensor>) -> Option<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for v in functions {
            if sum.is_empty() {
                sum = vec![0.0; v.cols()];
                sq = vec![0.0; v.cols()];
            }
            for row in v.data().chunks_exact(v.cols()) {
                for (c, x) in row.iter().enumerate() {
                    sum[c] += x;
                    sq[c] += x * x;
                }
            }
            count += v.rows();
        }
        if count == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / count as f64 - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Some(Self { mean, std })
    }

    pub fn apply(&self, values: &Tensor) -> Result<Tensor> {
        let c = values.cols();
        if c != self.mean.len() {
            return Err(Error::shape("channel norm", values.shape(), &[self.mean.len()]));
        }
        let mut out = values.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    /// Inverse of [`Self::apply`] on a backend value: `v·std + mean`.
    pub fn restore<B: Backend>(&self, b: &mut B, v: &B::Value) -> Result<B::Value> {
        let shape = b.shape(v).to_vec();
        if shape.len() != 2 || shape[1] != self.mean.len() {
            return Err(Error::shape("channel norm", &shape, &[self.mean.len()]));
        }
        let scale: Vec<f64> = (0..shape[0]).flat_map(|_| self.std.iter().copied()).collect();
        let scale = b.constant(Tensor::matrix(shape[0], shape[1], scale)?);
        let shift = b.constant(Tensor::vector(self.mean.clone())?);
        let scaled = b.mul(v, &scale)?;
        b.add_bias(&scaled, &shift)
    }
}

/// The `n_z×d_z` latent carried between encoder, processor steps and decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState(pub Tensor);

/// Instrumentation gathered by [`Ipot::rollout_traced`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RolloutTrace {
    pub encoder_calls: usize,
    pub processor_calls: usize,
    /// Address of the processor weight record used at each step.
    pub processor_weights: Vec<usize>,
}

/// A configured model with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Ipot {
    pub config: IpotConfig,
    pub params: IpotWeights<Tensor>,
    pub input_norm: Option<ChannelNorm>,
    /// When set, the head predicts standardised values and decoding maps
    /// them back.
    pub output_norm: Option<ChannelNorm>,
}

impl Ipot {
    /// Seeded initialisation: learnable queries from `N(0, 0.02²)`, matrices
    /// from `N(0, 1/fan_in)`, biases zero, layer norms identity.
    pub fn init(config: IpotConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_z;
        let normal = Normal::new(0.0, LATENT_INIT_STD).expect("positive std");
        let latent = (0..config.n_z * d).map(|_| normal.sample(&mut rng)).collect();
        let latent_queries = Tensor::matrix(config.n_z, d, latent)?;
        let encoder = AttentionWeights::init(&config.encoder_block(), config.input_width(), &mut rng)?;
        let processor = (0..config.layers)
            .map(|_| AttentionWeights::init(&config.processor_block(), d, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let query_proj_w = scaled_normal(&mut rng, config.query_width(), d);
        let decoder = AttentionWeights::init(&config.decoder_block(), d, &mut rng)?;
        let head_w = scaled_normal(&mut rng, d, config.d_out);
        let params = IpotWeights {
            latent_queries,
            encoder,
            processor,
            query_proj_w,
            query_proj_b: Tensor::zeros(&[d]),
            decoder,
            head_w,
            head_b: Tensor::zeros(&[config.d_out]),
        };
        Ok(Self {
            config,
            params,
            input_norm: None,
            output_norm: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Assembles (and optionally standardises) an input function.
    pub fn encoded_input(&self, f: &DiscretizedFunction) -> Result<EncodedInput> {
        if f.d_coord() != self.config.d_coord() || f.d_val() != self.config.d_in {
            return Err(Error::Config(format!(
                "input has {} coordinate and {} value columns, model expects {} and {}",
                f.d_coord(),
                f.d_val(),
                self.config.d_coord(),
                self.config.d_in
            )));
        }
        match &self.input_norm {
            Some(norm) => assemble_input(&f.with_values(norm.apply(f.values())?)?, &self.config.encoding),
            None => assemble_input(f, &self.config.encoding),
        }
    }

    pub fn query_features(&self, coords: &Tensor) -> Result<Tensor> {
        if coords.shape().len() != 2 || coords.cols() != self.config.d_coord() {
            return Err(Error::Config(format!(
                "queries have shape {:?}, model expects {} coordinate columns",
                coords.shape(),
                self.config.d_coord()
            )));
        }
        assemble_queries(coords, &self.config.encoding)
    }

    fn frozen(&self) -> IpotWeights<Arc<Tensor>> {
        self.params.map(&mut |t| Arc::new(t.clone()))
    }

    pub fn encode(&self, a: &DiscretizedFunction) -> Result<LatentState> {
        let input = self.encoded_input(a)?;
        let w = self.frozen();
        let mut e = Eval;
        let z = encode(&mut e, &self.config, &w, &input)?;
        Ok(LatentState(Arc::unwrap_or_clone(z)))
    }

    pub fn process(&self, z: &LatentState) -> Result<LatentState> {
        let w = self.frozen();
        let mut e = Eval;
        let zv = e.constant(z.0.clone());
        let out = process(&mut e, &w, &zv)?;
        Ok(LatentState(Arc::unwrap_or_clone(out)))
    }

    /// Decodes at raw query coordinates.
    pub fn decode(&self, coords: &Tensor, z: &LatentState) -> Result<Tensor> {
        self.decode_with(coords, z, ExecPolicy::Sequential)
    }

    pub fn decode_with(&self, coords: &Tensor, z: &LatentState, policy: ExecPolicy) -> Result<Tensor> {
        let features = self.query_features(coords)?;
        let w = self.frozen();
        decode_chunked(&self.config, &w, self.output_norm.as_ref(), &features, &Arc::new(z.0.clone()), policy)
    }

    /// `decode(Y, process(encode(a)))` with output coordinates `y`.
    pub fn forward(&self, a: &DiscretizedFunction, y: &Tensor) -> Result<DiscretizedFunction> {
        self.forward_with(a, y, ExecPolicy::Sequential)
    }

    pub fn forward_with(
        &self,
        a: &DiscretizedFunction,
        y: &Tensor,
        policy: ExecPolicy,
    ) -> Result<DiscretizedFunction> {
        let input = self.encoded_input(a)?;
        let features = self.query_features(y)?;
        let w = self.frozen();
        let mut e = Eval;
        let z = encode(&mut e, &self.config, &w, &input)?;
        let z = process(&mut e, &w, &z)?;
        let out = decode_chunked(&self.config, &w, self.output_norm.as_ref(), &features, &z, policy)?;
        DiscretizedFunction::new(y.clone(), out)
    }

    /// Autoregressive prediction of `steps` frames from one encoding.
    pub fn rollout(&self, u0: &DiscretizedFunction, y: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
        self.rollout_traced(u0, y, steps, ExecPolicy::Sequential).map(|(f, _)| f)
    }

    pub fn rollout_traced(
        &self,
        u0: &DiscretizedFunction,
        y: &Tensor,
        steps: usize,
        policy: ExecPolicy,
    ) -> Result<(Vec<Tensor>, RolloutTrace)> {
        if steps == 0 {
            return Err(Error::Usage("rollout needs at least one step".into()));
        }
        let input = self.encoded_input(u0)?;
        let features = self.query_features(y)?;
        let w = self.frozen();
        let mut trace = RolloutTrace::default();
        let mut e = Eval;
        let mut z = encode(&mut e, &self.config, &w, &input)?;
        trace.encoder_calls += 1;
        let mut frames = Vec::with_capacity(steps);
        for _ in 0..steps {
            let shared = &w.processor;
            trace.processor_weights.push(shared.as_ptr() as usize);
            z = process(&mut e, &w, &z)?;
            trace.processor_calls += 1;
            frames.push(decode_chunked(&self.config, &w, self.output_norm.as_ref(), &features, &z, policy)?);
        }
        Ok((frames, trace))
    }
}

/// Decodes embedded queries in row chunks; rows are independent given `z`.
pub(crate) fn decode_chunked(
    config: &IpotConfig,
    w: &IpotWeights<Arc<Tensor>>,
    norm: Option<&ChannelNorm>,
    features: &Tensor,
    z: &Arc<Tensor>,
    policy: ExecPolicy,
) -> Result<Tensor> {
    let n = features.rows();
    if n <= QUERY_CHUNK {
        let mut e = Eval;
        return decode_restored(&mut e, config, w, norm, features, z).map(Arc::unwrap_or_clone);
    }
    let starts: Vec<usize> = (0..n).step_by(QUERY_CHUNK).collect();
    let parts = policy.map(&starts, |&s| {
        let idx: Vec<usize> = (s..(s + QUERY_CHUNK).min(n)).collect();
        let mut e = Eval;
        decode_restored(&mut e, config, w, norm, &features.select_rows(&idx), z).map(Arc::unwrap_or_clone)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(n * config.d_out);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::matrix(n, config.d_out, data)
}
