//! Binary checkpoints: configuration record plus named tensors.
//!
//! ```text
//! "IPOTCKPT" u32:version
//! u32 n_z, d_z, layers, heads_enc, heads_proc, heads_dec, d_in, d_out
//! u32 d_coord, d_coord × u32 bands, d_coord × f64 max_freq, u8 include_raw
//! u32 count, count × { u16 name_len, name, u8 rank, rank × u32 extent, f64 data }
//! ```
//!
//! All integers and floats are little-endian. Tensors that are not model
//! weights (optimiser moments, input statistics, epoch counters) travel in
//! the same table under their own names.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ChannelNorm, Ipot, IpotConfig};
use crate::encoding::FourierSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"IPOTCKPT";
const VERSION: u32 = 1;
const INPUT_MEAN: &str = "norm.input_mean";
const INPUT_STD: &str = "norm.input_std";
const OUTPUT_MEAN: &str = "norm.output_mean";
const OUTPUT_STD: &str = "norm.output_std";

/// A decoded checkpoint: the model and any auxiliary tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Ipot,
    pub extras: BTreeMap<String, Tensor>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(t.shape().len() as u8);
    for &e in t.shape() {
        put_u32(out, e);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &Ipot, extras: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.n_z, c.d_z, c.layers, c.heads_enc, c.heads_proc, c.heads_dec, c.d_in, c.d_out] {
        put_u32(&mut out, v);
    }
    put_u32(&mut out, c.encoding.d_coord());
    for &b in &c.encoding.bands {
        put_u32(&mut out, b);
    }
    for f in &c.encoding.max_freq {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out.push(c.encoding.include_raw as u8);

    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    model.params.visit(&mut |n, t| tensors.push((n, t)));
    let as_pair = |n: &ChannelNorm| {
        (
            Tensor::vector(n.mean.clone()).expect("at least one channel"),
            Tensor::vector(n.std.clone()).expect("at least one channel"),
        )
    };
    let input_norm = model.input_norm.as_ref().map(as_pair);
    let output_norm = model.output_norm.as_ref().map(as_pair);
    if let Some((m, s)) = &input_norm {
        tensors.push((INPUT_MEAN.into(), m));
        tensors.push((INPUT_STD.into(), s));
    }
    if let Some((m, s)) = &output_norm {
        tensors.push((OUTPUT_MEAN.into(), m));
        tensors.push((OUTPUT_STD.into(), s));
    }
    for (n, t) in extras {
        tensors.push((n.clone(), t));
    }
    put_u32(&mut out, tensors.len());
    for (n, t) in tensors {
        put_tensor(&mut out, &n, t);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<usize> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]) as usize)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.err("not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let mut head = [0usize; 8];
    for h in head.iter_mut() {
        *h = r.u32("config")?;
    }
    let d = r.u32("coordinate dimension")?;
    if d == 0 || d > 16 {
        return Err(r.err(format!("implausible coordinate dimension {d}")));
    }
    let bands = (0..d).map(|_| r.u32("bands")).collect::<Result<Vec<_>>>()?;
    let max_freq = (0..d).map(|_| r.f64("max_freq")).collect::<Result<Vec<_>>>()?;
    let include_raw = r.u8("include_raw")? != 0;
    let config = IpotConfig {
        n_z: head[0],
        d_z: head[1],
        layers: head[2],
        heads_enc: head[3],
        heads_proc: head[4],
        heads_dec: head[5],
        encoding: FourierSpec {
            bands,
            max_freq,
            include_raw,
        },
        d_in: head[6],
        d_out: head[7],
    };
    let config_end = r.pos;
    let mut model = Ipot::init(config, 0).map_err(|e| Error::Format {
        offset: config_end as u64,
        msg: format!("invalid configuration: {e}"),
    })?;

    let count = r.u32("tensor count")?;
    let mut table: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| r.err("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let shape = (0..rank).map(|_| r.u32("extent")).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        if numel == 0 || r.bytes.len() - r.pos < numel * 8 {
            return Err(r.err(format!("tensor {name} with shape {shape:?} does not fit")));
        }
        let data = (0..numel).map(|_| r.f64("tensor data")).collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data).map_err(|e| r.err(e.to_string()))?;
        table.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after tensor table"));
    }

    let end = r.pos as u64;
    let mut missing = None;
    model.params.visit_mut(&mut |name, slot| {
        if missing.is_some() {
            return;
        }
        match table.remove(&name) {
            Some(t) if t.shape() == slot.shape() => *slot = t,
            Some(t) => {
                missing = Some(format!(
                    "tensor {name} has shape {:?}, configuration needs {:?}",
                    t.shape(),
                    slot.shape()
                ))
            }
            None => missing = Some(format!("missing tensor {name}")),
        }
    });
    if let Some(msg) = missing {
        return Err(Error::Format { offset: end, msg });
    }
    model.input_norm = take_norm(&mut table, INPUT_MEAN, INPUT_STD, model.config.d_in, end)?;
    model.output_norm = take_norm(&mut table, OUTPUT_MEAN, OUTPUT_STD, model.config.d_out, end)?;
    Ok(Checkpoint {
        model,
        extras: table,
    })
}

pub fn save_checkpoint(path: &Path, model: &Ipot, extras: &BTreeMap<String, Tensor>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, extras)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

fn take_norm(
    table: &mut BTreeMap<String, Tensor>,
    mean: &str,
    std: &str,
    channels: usize,
    offset: u64,
) -> Result<Option<ChannelNorm>> {
    match (table.remove(mean), table.remove(std)) {
        (Some(m), Some(s)) if m.numel() == channels && s.numel() == channels => Ok(Some(ChannelNorm {
            mean: m.into_data(),
            std: s.into_data(),
        })),
        (None, None) => Ok(None),
        _ => Err(Error::Format {
            offset,
            msg: format!("incomplete normalisation record {mean}/{std}"),
        }),
    }
}
