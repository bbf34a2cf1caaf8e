//! Relative-L2 objective, step-decay schedule and the training loop.

mod optim;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use optim::AdamW;

use crate::data::{split_frames, DatasetBundle, DiscretizedFunction, Sample};
use crate::error::{Error, Result};
use crate::model::{decode_restored, decode_embedded, embed_queries, encode, process, ChannelNorm, Ipot};
use crate::parallel::ExecPolicy;
use crate::tensor::{Backend, Graph, Tensor, Var};

pub const CSV_HEADER: &str = "epoch,train_loss,test_rel_l2,wall_seconds,lr";

/// `‖target − pred‖₂ / ‖target‖₂`.
pub fn relative_l2(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("relative_l2", pred.shape(), target.shape()));
    }
    let t = target.norm();
    if !(t > 0.0) {
        return Err(Error::Numeric("relative L2 is undefined for a zero-norm target".into()));
    }
    let diff: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    Ok(diff / t)
}

/// Mean of per-pair relative errors.
pub fn relative_l2_batch(pairs: &[(&Tensor, &Tensor)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut sum = 0.0;
    for (p, t) in pairs {
        sum += relative_l2(p, t)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Relative L2 as a differentiable scalar; the target is a constant.
pub fn relative_l2_graph<B: Backend>(b: &mut B, pred: &B::Value, target: &Tensor) -> Result<B::Value> {
    let t = target.norm();
    if !(t > 0.0) {
        return Err(Error::Numeric("relative L2 is undefined for a zero-norm target".into()));
    }
    let tv = b.constant(target.clone());
    let diff = b.sub(pred, &tv)?;
    let n = b.norm(&diff);
    Ok(b.scale(&n, 1.0 / t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Fit per-channel input statistics on the training split.
    pub standardize_inputs: bool,
    /// Fit per-channel target statistics on the training split; the head
    /// then predicts standardised values.
    pub standardize_outputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 500,
            lr0: 1e-3,
            decay_factor: 0.5,
            decay_every: 200,
            weight_decay: 1e-4,
            seed: 0,
            standardize_inputs: false,
            standardize_outputs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch_size and decay_every must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// `lr0 · decay_factor^⌊epoch / decay_every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when the bundle has no test split.
    pub test_rel_l2: f64,
    pub wall_seconds: f64,
    pub lr: f64,
}

impl TrainRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.train_loss, self.test_rel_l2, self.wall_seconds, self.lr
        )
    }
}

/// Appends records to a CSV file, writing the header for a new file.
pub fn append_records_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(CSV_HEADER);
        text.push('\n');
    }
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Optimiser moments and the next epoch to run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub optimizer: AdamW,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            optimizer: AdamW::new(cfg.weight_decay),
            epoch: 0,
        }
    }

    /// Named tensors for a checkpoint.
    pub fn to_extras(&self, model: &Ipot) -> BTreeMap<String, Tensor> {
        let mut out = self
            .optimizer
            .export(&model.params.flatten(), &model.params.names());
        out.insert("train.epoch".into(), Tensor::scalar(self.epoch as f64));
        out
    }

    pub fn from_extras(extras: &BTreeMap<String, Tensor>, model: &Ipot, cfg: &TrainConfig) -> Result<Self> {
        let epoch = extras
            .get("train.epoch")
            .ok_or_else(|| Error::Usage("checkpoint carries no epoch counter".into()))?
            .data()[0] as usize;
        let mut optimizer = AdamW::new(cfg.weight_decay);
        optimizer.import(extras, &model.params.flatten(), &model.params.names())?;
        Ok(Self { optimizer, epoch })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last successful update.
    pub model: Ipot,
    pub records: Vec<TrainRecord>,
    pub state: TrainState,
    /// Set when a non-finite loss or gradient stopped training early.
    pub diverged: Option<String>,
}

/// Loss and parameter gradients for one sample, in
/// [`crate::model::IpotWeights::visit`] order.
pub fn sample_gradient(model: &Ipot, sample: &Sample, frames: usize) -> Result<(f64, Vec<Tensor>)> {
    let cfg = &model.config;
    let input = model.encoded_input(&sample.input)?;
    let features = model.query_features(sample.target.coords())?;
    let mut g = Graph::new();
    let vars: Vec<Var> = model.params.flatten().into_iter().map(|t| g.param(t)).collect();
    let w = model.params.rebuild(&vars);
    let z = encode(&mut g, cfg, &w, &input)?;
    let loss = if frames == 0 {
        let z = process(&mut g, &w, &z)?;
        let out = decode_restored(&mut g, cfg, &w, model.output_norm.as_ref(), &features, &z)?;
        relative_l2_graph(&mut g, &out, sample.target.values())?
    } else {
        let targets = split_frames(sample.target.values(), frames)?;
        let yq = embed_queries(&mut g, cfg, &w, &features)?;
        let mut z = z;
        let mut total: Option<Var> = None;
        for t in &targets {
            z = process(&mut g, &w, &z)?;
            let mut out = decode_embedded(&mut g, &w, &yq, &z)?;
            if let Some(n) = &model.output_norm {
                out = n.restore(&mut g, &out)?;
            }
            let l = relative_l2_graph(&mut g, &out, t)?;
            total = Some(match total {
                Some(acc) => g.add(&acc, &l)?,
                None => l,
            });
        }
        total.expect("at least one frame")
    };
    let value = g.value(&loss).data()[0];
    g.backward(loss)?;
    Ok((value, vars.iter().map(|&v| g.grad_tensor(v)).collect()))
}

/// Target statistics per output channel; trajectory frames are pooled.
fn fit_target_norm(data: &DatasetBundle, train: &[usize]) -> Result<Option<ChannelNorm>> {
    let mut pooled = Vec::with_capacity(train.len());
    for &i in train {
        let v = data.samples[i].target.values();
        if data.frames == 0 {
            pooled.push(v.clone());
        } else {
            pooled.extend(split_frames(v, data.frames)?);
        }
    }
    Ok(ChannelNorm::fit(pooled.iter()))
}

fn epoch_order(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    let mix = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    order
}

/// Trains `model` on the training split, evaluating the test split after
/// every epoch. `on_epoch` sees each record as soon as it exists.
pub fn train_with(
    mut model: Ipot,
    data: &DatasetBundle,
    cfg: &TrainConfig,
    state: Option<TrainState>,
    policy: ExecPolicy,
    on_epoch: &mut dyn FnMut(&TrainRecord, &Ipot, &TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.validate()?;
    let train = data.train_indices();
    if train.is_empty() {
        return Err(Error::Usage("training split is empty".into()));
    }
    if data.d_in != model.config.d_in || data.d_coord != model.config.d_coord() || data.d_out != model.config.d_out {
        return Err(Error::Config(format!(
            "dataset channels (d_coord {}, d_in {}, d_out {}) do not match the model",
            data.d_coord, data.d_in, data.d_out
        )));
    }
    if cfg.standardize_inputs && model.input_norm.is_none() {
        model.input_norm = ChannelNorm::fit(train.iter().map(|&i| data.samples[i].input.values()));
    }
    if cfg.standardize_outputs && model.output_norm.is_none() {
        model.output_norm = fit_target_norm(data, &train)?;
    }
    let test = data.test_indices();
    let names = model.params.names();
    let mut state = state.unwrap_or_else(|| TrainState::new(cfg));
    state.optimizer.weight_decay = cfg.weight_decay;
    let start = Instant::now();
    let mut records = Vec::new();
    let mut diverged = None;

    'epochs: while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let lr = lr_at(epoch, cfg);
        let order = epoch_order(&train, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = policy.map(batch, |&i| sample_gradient(&model, &data.samples[i], data.frames));
            let mut grads: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = match r {
                    Ok(v) => v,
                    Err(Error::Numeric(msg)) => {
                        diverged = Some(msg);
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += l;
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                diverged = Some(format!("training loss became {batch_loss} in epoch {epoch}"));
                break 'epochs;
            }
            let mut grads = grads.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
            let mut params = model.params.flatten();
            if let Err(e) = state.optimizer.update(&mut params, &grads, &names, lr) {
                match e {
                    Error::Numeric(msg) => {
                        diverged = Some(msg);
                        break 'epochs;
                    }
                    other => return Err(other),
                }
            }
            model.params = model.params.rebuild(&params);
            loss_sum += batch_loss;
        }
        let test_rel_l2 = if test.is_empty() {
            f64::NAN
        } else {
            evaluate(&model, data, &test, policy)?.mean
        };
        state.epoch += 1;
        let record = TrainRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            test_rel_l2,
            wall_seconds: start.elapsed().as_secs_f64(),
            lr,
        };
        log::info!(
            "epoch {} loss {:.4e} test {:.4e} lr {:.2e}",
            epoch,
            record.train_loss,
            record.test_rel_l2,
            lr
        );
        on_epoch(&record, &model, &state)?;
        records.push(record);
    }
    Ok(TrainOutcome {
        model,
        records,
        state,
        diverged,
    })
}

pub fn train(model: Ipot, data: &DatasetBundle, cfg: &TrainConfig, policy: ExecPolicy) -> Result<TrainOutcome> {
    train_with(model, data, cfg, None, policy, &mut |_, _, _| Ok(()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean of `per_sample`.
    pub mean: f64,
    pub per_sample: Vec<f64>,
    /// Mean over samples of each frame's error (trajectory data only).
    pub per_frame: Vec<f64>,
}

/// Per-sample relative errors of `sample`'s prediction; one entry per frame
/// for trajectory data.
pub fn sample_errors(model: &Ipot, sample: &Sample, input: &DiscretizedFunction, frames: usize) -> Result<Vec<f64>> {
    let y = sample.target.coords();
    if frames == 0 {
        let out = model.forward(input, y)?;
        Ok(vec![relative_l2(out.values(), sample.target.values())?])
    } else {
        let pred = model.rollout(input, y, frames)?;
        let targets = split_frames(sample.target.values(), frames)?;
        pred.iter().zip(&targets).map(|(p, t)| relative_l2(p, t)).collect()
    }
}

/// Mean relative L2 over `indices`; trajectories average over frames first.
pub fn evaluate(model: &Ipot, data: &DatasetBundle, indices: &[usize], policy: ExecPolicy) -> Result<EvalReport> {
    evaluate_with(model, data, indices, policy, &|_, f| Ok(f.clone()))
}

/// [`evaluate`] with `transform(index, input)` applied to every input
/// function; targets are left untouched.
pub fn evaluate_with(
    model: &Ipot,
    data: &DatasetBundle,
    indices: &[usize],
    policy: ExecPolicy,
    transform: &(dyn Fn(usize, &DiscretizedFunction) -> Result<DiscretizedFunction> + Sync),
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::Usage("evaluation split is empty".into()));
    }
    let errors = policy
        .map(indices, |&i| {
            let s = &data.samples[i];
            let input = transform(i, &s.input)?;
            sample_errors(model, s, &input, data.frames)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let per_sample: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len() as f64)
        .collect();
    let n_frames = errors[0].len();
    let per_frame = if data.frames == 0 {
        Vec::new()
    } else {
        (0..n_frames)
            .map(|t| errors.iter().map(|e| e[t]).sum::<f64>() / errors.len() as f64)
            .collect()
    };
    Ok(EvalReport {
        mean: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
        per_sample,
        per_frame,
    })
}
