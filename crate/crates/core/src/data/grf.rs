//! Gaussian random fields with covariance `σ²(−Δ + τ²I)^(−α)` on the unit
//! torus, sampled by truncated Karhunen–Loève expansion in Fourier modes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::spectral::{fft_nd, k_squared, mirror_index};
use super::{periodic_grid_1d, periodic_grid_2d, DiscretizedFunction};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GrfSpec {
    pub sigma2: f64,
    pub tau2: f64,
    pub alpha: f64,
    /// Periodic grid extents, one per dimension (1 or 2 dimensions).
    pub grid: Vec<usize>,
}

impl GrfSpec {
    /// `625(−Δ + 25I)^(−2)` on `n` points.
    pub fn burgers(n: usize) -> Self {
        Self {
            sigma2: 625.0,
            tau2: 25.0,
            alpha: 2.0,
            grid: vec![n],
        }
    }

    /// `(−Δ + 9I)^(−2)` on an `n×n` grid.
    pub fn darcy(n: usize) -> Self {
        Self {
            sigma2: 1.0,
            tau2: 9.0,
            alpha: 2.0,
            grid: vec![n, n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.grid.len();
        if !(1..=2).contains(&d) || self.grid.iter().any(|&n| n < 2) {
            return Err(Error::Config(format!(
                "GRF grid {:?} must have one or two extents of at least 2",
                self.grid
            )));
        }
        if !(self.sigma2 >= 0.0) || !(self.tau2 >= 0.0) {
            return Err(Error::Config("GRF sigma2 and tau2 must be non-negative".into()));
        }
        if !(self.alpha > d as f64 / 4.0) {
            return Err(Error::Config(format!(
                "GRF alpha {} must exceed d/4 = {}",
                self.alpha,
                d as f64 / 4.0
            )));
        }
        if self.tau2 == 0.0 {
            return Err(Error::Config("tau2 = 0 leaves the constant mode with infinite variance".into()));
        }
        Ok(())
    }

    fn eigenvalue(&self, k2: f64) -> f64 {
        let lap = 4.0 * std::f64::consts::PI.powi(2) * k2;
        self.sigma2 * (lap + self.tau2).powf(-self.alpha)
    }

    fn coords(&self) -> Tensor {
        match *self.grid.as_slice() {
            [n] => periodic_grid_1d(n),
            [n, m] if n == m => periodic_grid_2d(n),
            [n, m] => {
                let mut data = Vec::with_capacity(2 * n * m);
                for i in 0..n {
                    for j in 0..m {
                        data.push(i as f64 / n as f64);
                        data.push(j as f64 / m as f64);
                    }
                }
                Tensor::matrix(n * m, 2, data).expect("grid")
            }
            _ => unreachable!("validated"),
        }
    }
}

/// Analytic pointwise variance `Σ_k λ_k` over the modes resolved by the grid.
pub fn grf_variance(spec: &GrfSpec) -> f64 {
    let total: usize = spec.grid.iter().product();
    (0..total).map(|i| spec.eigenvalue(k_squared(i, &spec.grid))).sum()
}

/// Field values and the largest imaginary residue of the inverse transform.
pub(crate) fn grf_sample_raw(spec: &GrfSpec, seed: u64) -> Result<(Vec<f64>, f64)> {
    spec.validate()?;
    let ext = &spec.grid;
    let total: usize = ext.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<Complex64> = (0..total)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    // (z_k + conj z_{−k})/2 has unit second moment and c_{−k} = conj c_k.
    let mut c: Vec<Complex64> = (0..total)
        .map(|i| {
            let m = mirror_index(i, ext);
            (z[i] + z[m].conj()) * 0.5 * spec.eigenvalue(k_squared(i, ext)).sqrt()
        })
        .collect();
    fft_nd(&mut c, ext, true);
    let residue = c.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    Ok((c.into_iter().map(|v| v.re).collect(), residue))
}

/// One draw on the periodic grid `x_i = i/n`, rows ordered as the grid.
pub fn grf_sample(spec: &GrfSpec, seed: u64) -> Result<DiscretizedFunction> {
    let (values, _) = grf_sample_raw(spec, seed)?;
    let n = values.len();
    DiscretizedFunction::new(spec.coords(), Tensor::matrix(n, 1, values)?)
}
