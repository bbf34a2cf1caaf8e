//! Changes of discretisation: random subsampling, spatial masks and
//! multilinear regridding of lattice data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DiscretizedFunction;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LATTICE_TOL: f64 = 1e-9;

/// Keeps `⌈ratio·n⌉` rows drawn uniformly without replacement; kept rows
/// stay in their original relative order.
pub fn subsample(f: &DiscretizedFunction, ratio: f64, seed: u64) -> Result<DiscretizedFunction> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Usage(format!("subsample ratio must lie in (0, 1], got {ratio}")));
    }
    let n = f.n_points();
    let keep = ((ratio * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    Ok(f.select(&idx))
}

/// Half-space `x[dim] < threshold` (or its complement).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mask {
    pub dim: usize,
    pub threshold: f64,
    pub keep_below: bool,
}

impl Mask {
    /// Points with first coordinate below one half.
    pub fn half() -> Self {
        Self {
            dim: 0,
            threshold: 0.5,
            keep_below: true,
        }
    }

    pub fn complement(self) -> Self {
        Self {
            keep_below: !self.keep_below,
            ..self
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (x[self.dim] < self.threshold) == self.keep_below
    }
}

/// Rows whose coordinates satisfy `keep`, in their original order.
pub fn mask_region(f: &DiscretizedFunction, keep: impl Fn(&[f64]) -> bool) -> Result<DiscretizedFunction> {
    let idx: Vec<usize> = (0..f.n_points()).filter(|&i| keep(f.coords().row(i))).collect();
    if idx.is_empty() {
        return Err(Error::Usage("mask removes every point".into()));
    }
    Ok(f.select(&idx))
}

struct Lattice {
    lo: Vec<f64>,
    hi: Vec<f64>,
    extents: Vec<usize>,
    /// Values in row-major lattice order, last dimension fastest.
    values: Vec<f64>,
}

fn axis_values(f: &DiscretizedFunction, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..f.n_points()).map(|i| f.coords().get(i, dim)).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= LATTICE_TOL);
    v
}

fn detect_lattice(f: &DiscretizedFunction) -> Result<Lattice> {
    let not_grid = |why: String| Error::Usage(format!("regrid needs a regular grid: {why}"));
    let d = f.d_coord();
    let axes: Vec<Vec<f64>> = (0..d).map(|k| axis_values(f, k)).collect();
    let extents: Vec<usize> = axes.iter().map(Vec::len).collect();
    if extents.iter().any(|&m| m < 2) {
        return Err(not_grid(format!("axis extents {extents:?}")));
    }
    if extents.iter().product::<usize>() != f.n_points() {
        return Err(not_grid(format!(
            "{} points do not fill a {extents:?} lattice",
            f.n_points()
        )));
    }
    for (k, ax) in axes.iter().enumerate() {
        let h = (ax[ax.len() - 1] - ax[0]) / (ax.len() - 1) as f64;
        for (i, x) in ax.iter().enumerate() {
            if (x - (ax[0] + i as f64 * h)).abs() > LATTICE_TOL.max(1e-6 * h) {
                return Err(not_grid(format!("axis {k} is not evenly spaced")));
            }
        }
    }
    let dv = f.d_val();
    let total = f.n_points();
    let mut values = vec![0.0; total * dv];
    let mut seen = vec![false; total];
    for r in 0..total {
        let x = f.coords().row(r);
        let mut flat = 0;
        for k in 0..d {
            let ax = &axes[k];
            let h = (ax[ax.len() - 1] - ax[0]) / (ax.len() - 1) as f64;
            let i = ((x[k] - ax[0]) / h).round() as usize;
            flat = flat * extents[k] + i.min(extents[k] - 1);
        }
        if seen[flat] {
            return Err(not_grid("duplicate lattice point".into()));
        }
        seen[flat] = true;
        values[flat * dv..(flat + 1) * dv].copy_from_slice(f.values().row(r));
    }
    Ok(Lattice {
        lo: axes.iter().map(|a| a[0]).collect(),
        hi: axes.iter().map(|a| a[a.len() - 1]).collect(),
        extents,
        values,
    })
}

/// Multilinear interpolation onto `resolution` points per axis spanning the
/// same bounding box as the input lattice. Output rows are in row-major
/// lattice order, last coordinate fastest.
pub fn regrid(f: &DiscretizedFunction, resolution: usize) -> Result<DiscretizedFunction> {
    if resolution < 2 {
        return Err(Error::Usage(format!("regrid resolution must be ≥ 2, got {resolution}")));
    }
    let lat = detect_lattice(f)?;
    let d = lat.extents.len();
    let dv = f.d_val();
    let total = resolution.pow(d as u32);
    let steps: Vec<f64> = (0..d).map(|k| (lat.hi[k] - lat.lo[k]) / (resolution - 1) as f64).collect();
    let mut coords = Vec::with_capacity(total * d);
    let mut values = Vec::with_capacity(total * dv);
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    let mut acc = vec![0.0; dv];
    for p in 0..total {
        let mut rem = p;
        let mut idx = vec![0usize; d];
        for k in (0..d).rev() {
            idx[k] = rem % resolution;
            rem /= resolution;
        }
        for k in 0..d {
            let x = lat.lo[k] + idx[k] as f64 * steps[k];
            coords.push(x);
            let m = lat.extents[k];
            let pos = idx[k] as f64 * (m - 1) as f64 / (resolution - 1) as f64;
            let snapped = if (pos - pos.round()).abs() < LATTICE_TOL { pos.round() } else { pos };
            let i0 = (snapped.floor() as usize).min(m - 2);
            base[k] = i0;
            frac[k] = snapped - i0 as f64;
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> (d - 1 - k)) & 1;
                w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * lat.extents[k] + base[k] + up;
            }
            if w != 0.0 {
                for c in 0..dv {
                    acc[c] += w * lat.values[flat * dv + c];
                }
            }
        }
        values.extend_from_slice(&acc);
    }
    DiscretizedFunction::new(Tensor::matrix(total, d, coords)?, Tensor::matrix(total, dv, values)?)
}
