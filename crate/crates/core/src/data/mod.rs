//! Discretized functions, synthetic PDE data and the dataset file format.

mod bundle;
mod burgers;
mod darcy;
mod generate;
mod grf;
mod heat;
mod spectral;
mod transforms;

pub use bundle::{decode_bundle, encode_bundle, load_bundle, save_bundle, DatasetBundle, Provenance, Sample};
pub use burgers::{burgers_solve, BurgersOptions, BurgersReport};
pub use darcy::{darcy_coefficient, darcy_residual, darcy_solve, DarcySolution, CG_TOLERANCE};
pub use generate::{generate, Problem, ProblemSpec};
pub use grf::{grf_sample, grf_variance, GrfSpec};
pub use heat::{heat_rollout, random_band_limited};
pub use transforms::{mask_region, regrid, subsample, Mask};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A point set paired with per-point values: `coords` is `n×d_coord`,
/// `values` is `n×d_val`. Row `i` of each belongs to the same point.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedFunction {
    coords: Tensor,
    values: Tensor,
}

impl DiscretizedFunction {
    pub fn new(coords: Tensor, values: Tensor) -> Result<Self> {
        if coords.shape().len() != 2 || values.shape().len() != 2 {
            return Err(Error::shape("discretized function", coords.shape(), values.shape()));
        }
        if coords.rows() != values.rows() {
            return Err(Error::shape("discretized function", coords.shape(), values.shape()));
        }
        Ok(Self { coords, values })
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_parts(self) -> (Tensor, Tensor) {
        (self.coords, self.values)
    }

    pub fn n_points(&self) -> usize {
        self.coords.rows()
    }

    pub fn d_coord(&self) -> usize {
        self.coords.cols()
    }

    pub fn d_val(&self) -> usize {
        self.values.cols()
    }

    /// Keeps the given rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            coords: self.coords.select_rows(idx),
            values: self.values.select_rows(idx),
        }
    }

    pub fn with_values(&self, values: Tensor) -> Result<Self> {
        Self::new(self.coords.clone(), values)
    }
}

/// Splits trajectory values stored as `n×(d·T)` (frame index fastest) into
/// `T` matrices of shape `n×d`.
pub fn split_frames(values: &Tensor, frames: usize) -> Result<Vec<Tensor>> {
    let (n, w) = (values.rows(), values.cols());
    if frames == 0 || w % frames != 0 {
        return Err(Error::shape("split_frames", values.shape(), &[frames]));
    }
    let d = w / frames;
    (0..frames)
        .map(|t| {
            let mut data = Vec::with_capacity(n * d);
            for row in values.data().chunks_exact(w) {
                data.extend((0..d).map(|c| row[c * frames + t]));
            }
            Tensor::matrix(n, d, data)
        })
        .collect()
}

/// Inverse of [`split_frames`].
pub fn stack_frames(frames: &[Tensor]) -> Result<Tensor> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Usage("no frames to stack".into()))?;
    let (n, d, t_count) = (first.rows(), first.cols(), frames.len());
    let mut data = vec![0.0; n * d * t_count];
    for (t, f) in frames.iter().enumerate() {
        if f.shape() != first.shape() {
            return Err(Error::shape("stack_frames", first.shape(), f.shape()));
        }
        for i in 0..n {
            for c in 0..d {
                data[(i * d + c) * t_count + t] = f.get(i, c);
            }
        }
    }
    Tensor::matrix(n, d * t_count, data)
}

/// Periodic 1-D grid `x_i = i/n`.
pub fn periodic_grid_1d(n: usize) -> Tensor {
    Tensor::matrix(n, 1, (0..n).map(|i| i as f64 / n as f64).collect()).expect("grid")
}

/// Periodic 2-D grid with `x_i = i/n`, `y_j = j/n`; row index `i·n + j`.
pub fn periodic_grid_2d(n: usize) -> Tensor {
    lattice_2d(n, |i| i as f64 / n as f64)
}

/// Closed 2-D grid on `[0,1]²` including the boundary, `x_i = i/(n−1)`.
pub fn closed_grid_2d(n: usize) -> Tensor {
    let h = 1.0 / (n.max(2) - 1) as f64;
    lattice_2d(n, |i| i as f64 * h)
}

fn lattice_2d(n: usize, coord: impl Fn(usize) -> f64) -> Tensor {
    let mut data = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(coord(i));
            data.push(coord(j));
        }
    }
    Tensor::matrix(n * n, 2, data).expect("grid")
}
