//! Portable dataset file.
//!
//! ```text
//! "IPOTDS01" u32:version=1 u32:n_samples u32:d_coord u32:d_in u32:d_out u32:T
//! per sample:
//!   u32 n_in,  f32 coords[n_in×d_coord],  f32 values[n_in×d_in]
//!   u32 n_out, f32 coords[n_out×d_coord], f32 targets[n_out×d_out×max(T,1)]
//! u32 n_test, u32 test_indices[n_test]
//! ```
//!
//! Little-endian throughout. Targets of trajectory data keep the frame index
//! fastest, so row `i` holds `d_out` consecutive runs of `T` frames.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DiscretizedFunction;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"IPOTDS01";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: DiscretizedFunction,
    /// `n_out × (d_out·max(T,1))` values at the output coordinates.
    pub target: DiscretizedFunction,
}

/// Where a bundle came from; written next to the data file as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub version: String,
    pub base_seed: u64,
    pub spec: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub samples: Vec<Sample>,
    pub d_coord: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Frames per target trajectory; 0 for static problems.
    pub frames: usize,
    /// Sorted test indices; every other sample is training data.
    pub test: Vec<usize>,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Usage("dataset has no samples".into()));
        }
        let width = self.d_out * self.frames.max(1);
        for (i, s) in self.samples.iter().enumerate() {
            let ok = s.input.d_coord() == self.d_coord
                && s.target.d_coord() == self.d_coord
                && s.input.d_val() == self.d_in
                && s.target.d_val() == width;
            if !ok {
                return Err(Error::Usage(format!(
                    "sample {i} does not match the declared channel counts"
                )));
            }
        }
        let mut seen = vec![false; self.samples.len()];
        for &t in &self.test {
            if t >= self.samples.len() || seen[t] {
                return Err(Error::Usage(format!("invalid or repeated test index {t}")));
            }
            seen[t] = true;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        let mut is_test = vec![false; self.samples.len()];
        for &t in &self.test {
            is_test[t] = true;
        }
        (0..self.samples.len()).filter(|&i| !is_test[i]).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.test.clone()
    }

    pub fn is_trajectory(&self) -> bool {
        self.frames > 0
    }

    /// Copy with only the given samples, all of them in the test split.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            test: (0..idx.len()).collect(),
            ..self.clone()
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Usage(format!("{v} does not fit the u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

pub fn encode_bundle(b: &DatasetBundle) -> Result<Vec<u8>> {
    b.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [b.samples.len(), b.d_coord, b.d_in, b.d_out, b.frames] {
        put_u32(&mut out, v)?;
    }
    for s in &b.samples {
        put_u32(&mut out, s.input.n_points())?;
        put_f32s(&mut out, s.input.coords());
        put_f32s(&mut out, s.input.values());
        put_u32(&mut out, s.target.n_points())?;
        put_f32s(&mut out, s.target.coords());
        put_f32s(&mut out, s.target.values());
    }
    put_u32(&mut out, b.test.len())?;
    for &t in &b.test {
        put_u32(&mut out, t)?;
    }
    Ok(out)
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

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Tensor> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| self.err(format!("{what} size overflows")))?;
        let raw = self.take(len, what)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Tensor::matrix(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }

    fn function(&mut self, d_coord: usize, d_val: usize, what: &str) -> Result<DiscretizedFunction> {
        let n = self.u32(what)?;
        if n == 0 {
            return Err(self.err(format!("{what} has no points")));
        }
        let c = self.matrix(n, d_coord, what)?;
        let v = self.matrix(n, d_val, what)?;
        DiscretizedFunction::new(c, v).map_err(|e| self.err(e.to_string()))
    }
}

pub fn decode_bundle(bytes: &[u8]) -> Result<DatasetBundle> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.err("not a dataset file (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(r.err(format!("unsupported dataset version {version}")));
    }
    let n = r.u32("sample count")?;
    let d_coord = r.u32("d_coord")?;
    let d_in = r.u32("d_in")?;
    let d_out = r.u32("d_out")?;
    let frames = r.u32("T")?;
    if n == 0 || d_coord == 0 || d_in == 0 || d_out == 0 {
        return Err(r.err("header declares an empty dimension"));
    }
    let width = d_out * frames.max(1);
    let mut samples = Vec::with_capacity(n.min(1 << 16));
    for i in 0..n {
        let input = r.function(d_coord, d_in, &format!("sample {i} input"))?;
        let target = r.function(d_coord, width, &format!("sample {i} target"))?;
        samples.push(Sample { input, target });
    }
    let n_test = r.u32("test count")?;
    let mut test = Vec::with_capacity(n_test.min(n));
    for _ in 0..n_test {
        let t = r.u32("test index")?;
        if t >= n {
            return Err(r.err(format!("test index {t} out of range")));
        }
        test.push(t);
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after test split"));
    }
    let b = DatasetBundle {
        samples,
        d_coord,
        d_in,
        d_out,
        frames,
        test,
    };
    b.validate().map_err(|e| Error::Format {
        offset: bytes.len() as u64,
        msg: e.to_string(),
    })?;
    Ok(b)
}

pub fn save_bundle(b: &DatasetBundle, path: &Path) -> Result<()> {
    let bytes = encode_bundle(b)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<DatasetBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bundle(&bytes)
}
