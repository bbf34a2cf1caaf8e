//! Exact heat-equation trajectories `u_t = ν Δu` on the periodic unit square.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::spectral::{fft_nd, k_squared};
use crate::error::{Error, Result};

/// Real field on the `n×n` grid `x_i = i/n` (row `i·n + j`) built from
/// Fourier modes with `|k₁|, |k₂| ≤ modes`; amplitudes fall off as
/// `1/(1 + |k|²)`.
pub fn random_band_limited(n: usize, modes: usize, seed: u64) -> Result<Vec<f64>> {
    if 2 * modes >= n {
        return Err(Error::Config(format!(
            "{modes} modes per axis are not resolved by a grid of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = modes as i64;
    let mut terms = Vec::new();
    for k1 in 0..=m {
        for k2 in -m..=m {
            if k1 == 0 && k2 < 0 {
                continue;
            }
            let amp = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
            let c: f64 = rng.random_range(-1.0..1.0);
            let s: f64 = if k1 == 0 && k2 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
            terms.push((k1 as f64, k2 as f64, amp * c, amp * s));
        }
    }
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            u[i * n + j] = terms
                .iter()
                .map(|&(k1, k2, c, s)| {
                    let arg = 2.0 * PI * (k1 * x + k2 * y);
                    c * arg.cos() + s * arg.sin()
                })
                .sum();
        }
    }
    Ok(u)
}

/// Frames `u(t_1) … u(t_T)` with `t_s = s·dt`, each mode decayed by
/// `exp(−4π²ν|k|² t)`.
pub fn heat_rollout(u0: &[f64], n: usize, nu: f64, dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    if u0.len() != n * n {
        return Err(Error::shape("heat_rollout", &[u0.len()], &[n * n]));
    }
    if !(nu >= 0.0) || !(dt > 0.0) {
        return Err(Error::Config("heat rollout needs nu ≥ 0 and dt > 0".into()));
    }
    let ext = [n, n];
    let mut spectrum: Vec<Complex64> = u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut spectrum, &ext, false);
    let rate: Vec<f64> = (0..n * n)
        .map(|i| 4.0 * PI * PI * nu * k_squared(i, &ext))
        .collect();
    let mut frames = Vec::with_capacity(steps);
    for s in 1..=steps {
        let t = s as f64 * dt;
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .zip(&rate)
            .map(|(c, r)| c * (-r * t).exp())
            .collect();
        fft_nd(&mut buf, &ext, true);
        frames.push(buf.iter().map(|v| v.re / (n * n) as f64).collect());
    }
    Ok(frames)
}
