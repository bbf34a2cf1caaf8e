//! Viscous Burgers equation `u_t + (u²/2)_x = ν u_xx` on the periodic unit
//! interval.
//!
//! Pseudo-spectral in space with the 2/3 rule on the quadratic flux. The
//! linear diffusion term is integrated exactly through the factor
//! `exp(−ν k² t)`, and the remaining nonlinear term is advanced with classical
//! RK4 under an advective CFL bound.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::spectral::{fft_nd, wavenumber};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurgersOptions {
    /// Advective Courant number: `dt ≤ cfl·dx/max|u|`.
    pub cfl: f64,
    /// Upper bound on the step regardless of the flow speed.
    pub max_dt: f64,
    /// Retries with a halved step before giving up.
    pub max_halvings: u32,
}

impl Default for BurgersOptions {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            max_dt: 1e-2,
            max_halvings: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BurgersReport {
    pub u: Vec<f64>,
    pub steps: usize,
    pub min_dt: f64,
    /// `|mean(u(t_end)) − mean(u0)|`.
    pub mean_drift: f64,
}

struct Stepper {
    n: usize,
    k: Vec<f64>,
    dealias: Vec<bool>,
    nu: f64,
}

impl Stepper {
    /// Spectral nonlinear term `−ik/2 · FFT(u²)`, dealiased.
    fn nonlinear(&self, uh: &[Complex64]) -> Vec<Complex64> {
        let mut u = uh.to_vec();
        fft_nd(&mut u, &[self.n], true);
        let inv_n = 1.0 / self.n as f64;
        for v in u.iter_mut() {
            let r = v.re * inv_n;
            *v = Complex64::new(r * r, 0.0);
        }
        fft_nd(&mut u, &[self.n], false);
        for (i, v) in u.iter_mut().enumerate() {
            *v = if self.dealias[i] {
                Complex64::new(0.0, -0.5 * self.k[i]) * *v
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        u
    }

    fn step(&self, uh: &[Complex64], dt: f64) -> Vec<Complex64> {
        let e: Vec<f64> = self.k.iter().map(|k| (-self.nu * k * k * dt).exp()).collect();
        let e2: Vec<f64> = self.k.iter().map(|k| (-self.nu * k * k * dt * 0.5).exp()).collect();
        let a: Vec<Complex64> = self.nonlinear(uh).into_iter().map(|v| v * dt).collect();
        let s: Vec<Complex64> = (0..self.n).map(|i| (uh[i] + a[i] * 0.5) * e2[i]).collect();
        let b: Vec<Complex64> = self.nonlinear(&s).into_iter().map(|v| v * dt).collect();
        let s: Vec<Complex64> = (0..self.n).map(|i| uh[i] * e2[i] + b[i] * 0.5).collect();
        let c: Vec<Complex64> = self.nonlinear(&s).into_iter().map(|v| v * dt).collect();
        let s: Vec<Complex64> = (0..self.n).map(|i| uh[i] * e[i] + c[i] * e2[i]).collect();
        let d: Vec<Complex64> = self.nonlinear(&s).into_iter().map(|v| v * dt).collect();
        (0..self.n)
            .map(|i| uh[i] * e[i] + (a[i] * e[i] + (b[i] + c[i]) * (2.0 * e2[i]) + d[i]) / 6.0)
            .collect()
    }

    fn physical(&self, uh: &[Complex64]) -> Vec<f64> {
        let mut u = uh.to_vec();
        fft_nd(&mut u, &[self.n], true);
        u.iter().map(|v| v.re / self.n as f64).collect()
    }
}

fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn mean(u: &[f64]) -> f64 {
    u.iter().sum::<f64>() / u.len() as f64
}

/// Advances `u0` (values on `x_i = i/n`) to `t_end`.
pub fn burgers_solve(u0: &[f64], nu: f64, t_end: f64, opts: &BurgersOptions) -> Result<BurgersReport> {
    let n = u0.len();
    if n < 4 {
        return Err(Error::Usage(format!("Burgers grid needs at least 4 points, got {n}")));
    }
    if !(nu > 0.0) || !(t_end >= 0.0) || !(opts.cfl > 0.0) || !(opts.max_dt > 0.0) {
        return Err(Error::Config("Burgers needs nu > 0, t_end ≥ 0, cfl > 0, max_dt > 0".into()));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite Burgers initial condition".into()));
    }
    let dx = 1.0 / n as f64;
    let cutoff = n as i64 / 3;
    let stepper = Stepper {
        n,
        k: (0..n).map(|i| 2.0 * PI * wavenumber(i, n) as f64).collect(),
        dealias: (0..n).map(|i| wavenumber(i, n).abs() <= cutoff && 2 * i != n).collect(),
        nu,
    };
    let mut uh: Vec<Complex64> = u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut uh, &[n], false);

    let mut t = 0.0;
    let mut u = u0.to_vec();
    let mut steps = 0;
    let mut min_dt = f64::INFINITY;
    while t_end - t > 1e-14 * t_end.max(1.0) {
        let speed = max_abs(&u);
        let mut dt = opts.max_dt.min(t_end - t);
        if speed > 0.0 {
            dt = dt.min(opts.cfl * dx / speed);
        }
        let mut halvings = 0;
        let (next, next_u) = loop {
            let cand = stepper.step(&uh, dt);
            let cu = stepper.physical(&cand);
            let ok = cu.iter().all(|v| v.is_finite()) && max_abs(&cu) * dt <= dx;
            if ok {
                break (cand, cu);
            }
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(Error::Solver(format!(
                    "Burgers CFL still violated after {} halvings at t = {t:.6}",
                    opts.max_halvings
                )));
            }
            dt *= 0.5;
        };
        uh = next;
        u = next_u;
        t += dt;
        steps += 1;
        min_dt = min_dt.min(dt);
    }
    let mean_drift = (mean(&u) - mean(u0)).abs();
    Ok(BurgersReport {
        u,
        steps,
        min_dt: if steps == 0 { 0.0 } else { min_dt },
        mean_drift,
    })
}
