//! Fourier positional embeddings and assembly of model inputs and queries.
//!
//! A coordinate row `x ∈ [0,1]^d` is embedded as
//!
//! ```text
//! [ sin(π f x_i) for each dim i, each band f ] ++
//! [ cos(π f x_i) for each dim i, each band f ] ++
//! [ x_1 .. x_d ]                                  (when include_raw)
//! ```
//!
//! with the band frequencies of dimension `i` spaced linearly from 1 to
//! `max_freq[i]`. The embedded width is `Σ 2·bands[i] + d`.

use std::f64::consts::PI;

use crate::data::DiscretizedFunction;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Coordinates outside this range are almost certainly not normalised.
const SOFT_COORD_LIMIT: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FourierSpec {
    pub bands: Vec<usize>,
    pub max_freq: Vec<f64>,
    pub include_raw: bool,
}

impl FourierSpec {
    pub fn new(bands: Vec<usize>, max_freq: Vec<f64>) -> Result<Self> {
        let spec = Self {
            bands,
            max_freq,
            include_raw: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() || self.bands.len() != self.max_freq.len() {
            return Err(Error::Config(format!(
                "bands {:?} and max_freq {:?} must be non-empty and equally long",
                self.bands, self.max_freq
            )));
        }
        if self.bands.iter().any(|&b| b == 0) {
            return Err(Error::Config("every dimension needs at least one band".into()));
        }
        if self.max_freq.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::Config("max_freq must be positive".into()));
        }
        Ok(())
    }

    pub fn d_coord(&self) -> usize {
        self.bands.len()
    }

    pub fn embedded_dim(&self) -> usize {
        let raw = if self.include_raw { self.d_coord() } else { 0 };
        2 * self.bands.iter().sum::<usize>() + raw
    }

    /// Band frequencies of coordinate dimension `dim`.
    pub fn frequencies(&self, dim: usize) -> Vec<f64> {
        let (b, fmax) = (self.bands[dim], self.max_freq[dim]);
        if b == 1 {
            return vec![1.0];
        }
        (0..b)
            .map(|k| 1.0 + (fmax - 1.0) * k as f64 / (b - 1) as f64)
            .collect()
    }

    pub fn burgers() -> Self {
        Self::new(vec![64], vec![64.0]).expect("preset")
    }

    pub fn darcy() -> Self {
        Self::new(vec![32, 32], vec![32.0, 32.0]).expect("preset")
    }

    pub fn navier_stokes() -> Self {
        Self::new(vec![12, 12], vec![20.0, 20.0]).expect("preset")
    }

    pub fn airfoil() -> Self {
        Self::new(vec![8, 8], vec![16.0, 16.0]).expect("preset")
    }

    pub fn elasticity() -> Self {
        Self::new(vec![16, 16], vec![16.0, 16.0]).expect("preset")
    }

    pub fn plasticity() -> Self {
        Self::new(vec![3, 3, 3], vec![12.0, 12.0, 12.0]).expect("preset")
    }

    pub fn shallow_water() -> Self {
        Self::new(vec![20, 20, 20], vec![32.0, 32.0, 32.0]).expect("preset")
    }

    pub fn era5() -> Self {
        Self::new(vec![64, 64], vec![64.0, 128.0]).expect("preset")
    }
}

/// Model input: positional embedding followed by the function values.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInput(pub Tensor);

impl EncodedInput {
    pub fn matrix(&self) -> &Tensor {
        &self.0
    }

    pub fn into_inner(self) -> Tensor {
        self.0
    }
}

/// Embeds each coordinate row; a pure row-wise map.
pub fn fourier_features(coords: &Tensor, spec: &FourierSpec) -> Result<Tensor> {
    spec.validate()?;
    let d = spec.d_coord();
    if coords.shape().len() != 2 || coords.cols() != d {
        return Err(Error::shape("fourier_features", coords.shape(), &[0, d]));
    }
    if coords.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN coordinate".into()));
    }
    if coords.data().iter().any(|v| v.abs() > SOFT_COORD_LIMIT) {
        log::warn!("coordinates outside [-2, 2]; expected values normalised to [0, 1]");
    }
    let freqs: Vec<Vec<f64>> = (0..d).map(|i| spec.frequencies(i)).collect();
    let total_bands: usize = spec.bands.iter().sum();
    let width = spec.embedded_dim();
    let mut out = Vec::with_capacity(coords.rows() * width);
    let mut cos_part = Vec::with_capacity(total_bands);
    for row in coords.data().chunks_exact(d) {
        cos_part.clear();
        for (x, fs) in row.iter().zip(&freqs) {
            for f in fs {
                let (s, c) = (PI * f * x).sin_cos();
                out.push(s);
                cos_part.push(c);
            }
        }
        out.extend_from_slice(&cos_part);
        if spec.include_raw {
            out.extend_from_slice(row);
        }
    }
    Tensor::matrix(coords.rows(), width, out)
}

/// `[fourier_features(coords) | values]`, rows in the order of `f`.
pub fn assemble_input(f: &DiscretizedFunction, spec: &FourierSpec) -> Result<EncodedInput> {
    if f.n_points() == 0 {
        return Err(Error::Usage("input function has no points".into()));
    }
    let pe = fourier_features(f.coords(), spec)?;
    Ok(EncodedInput(Tensor::hstack(&[&pe, f.values()])?))
}

/// Output queries use the same embedding as inputs, without values.
pub fn assemble_queries(coords: &Tensor, spec: &FourierSpec) -> Result<Tensor> {
    fourier_features(coords, spec)
}
