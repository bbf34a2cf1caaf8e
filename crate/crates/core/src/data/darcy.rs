//! Steady Darcy flow `−∇·(a∇u) = f` on `[0,1]²` with `u = 0` on the boundary.
//!
//! Nodes sit at `x_i = i/(n−1)`. Interior nodes carry a five-point
//! finite-volume balance whose face conductivities are harmonic means of
//! the adjacent nodal coefficients. The resulting SPD system is solved
//! matrix-free by Jacobi-preconditioned conjugate gradients.

use super::grf::{grf_sample_raw, GrfSpec};
use crate::error::{Error, Result};

pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct DarcySolution {
    /// `n×n` nodal values, row index `i·n + j`, boundary included.
    pub u: Vec<f64>,
    pub iterations: usize,
    /// `‖Au − f‖/‖f‖` over the interior (0 for `f = 0`).
    pub residual: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

struct Operator<'a> {
    n: usize,
    a: &'a [f64],
    inv_h2: f64,
}

impl Operator<'_> {
    fn m(&self) -> usize {
        self.n - 2
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Face conductivities (north, south, west, east) of interior cell (i, j)
    /// in interior indexing.
    fn faces(&self, i: usize, j: usize) -> [f64; 4] {
        let (gi, gj) = (i + 1, j + 1);
        let c = self.a[self.node(gi, gj)];
        [
            harmonic(c, self.a[self.node(gi - 1, gj)]),
            harmonic(c, self.a[self.node(gi + 1, gj)]),
            harmonic(c, self.a[self.node(gi, gj - 1)]),
            harmonic(c, self.a[self.node(gi, gj + 1)]),
        ]
    }

    fn diagonal(&self) -> Vec<f64> {
        let m = self.m();
        let mut d = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                d.push(self.faces(i, j).iter().sum::<f64>() * self.inv_h2);
            }
        }
        d
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m();
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= m as isize || j >= m as isize {
                0.0
            } else {
                x[i as usize * m + j as usize]
            }
        };
        for i in 0..m {
            for j in 0..m {
                let [fn_, fs, fw, fe] = self.faces(i, j);
                let (ii, jj) = (i as isize, j as isize);
                let c = x[i * m + j];
                out[i * m + j] = self.inv_h2
                    * (fn_ * (c - at(ii - 1, jj))
                        + fs * (c - at(ii + 1, jj))
                        + fw * (c - at(ii, jj - 1))
                        + fe * (c - at(ii, jj + 1)));
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(a: &[f64], f: &[f64], n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Usage(format!("Darcy grid needs n ≥ 3, got {n}")));
    }
    if a.len() != n * n || f.len() != n * n {
        return Err(Error::shape("darcy", &[a.len()], &[f.len(), n * n]));
    }
    if let Some(bad) = a.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Usage(format!("Darcy coefficient must be positive, found {bad}")));
    }
    Ok(())
}

fn interior(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((n - 2) * (n - 2));
    for i in 1..n - 1 {
        out.extend_from_slice(&v[i * n + 1..i * n + n - 1]);
    }
    out
}

/// `‖Au − f‖/‖f‖` over interior nodes for nodal `u`, `f` on an `n×n` grid.
pub fn darcy_residual(a: &[f64], u: &[f64], f: &[f64], n: usize) -> Result<f64> {
    check_inputs(a, f, n)?;
    let op = Operator {
        n,
        a,
        inv_h2: ((n - 1) * (n - 1)) as f64,
    };
    let ui = interior(u, n);
    let fi = interior(f, n);
    let mut au = vec![0.0; ui.len()];
    op.apply(&ui, &mut au);
    let r: f64 = au.iter().zip(&fi).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let fnorm = dot(&fi, &fi).sqrt();
    Ok(if fnorm == 0.0 { r } else { r / fnorm })
}

/// Solves on an `n×n` node grid; `a` and `f` are nodal values.
pub fn darcy_solve(a: &[f64], f: &[f64], n: usize) -> Result<DarcySolution> {
    check_inputs(a, f, n)?;
    let op = Operator {
        n,
        a,
        inv_h2: ((n - 1) * (n - 1)) as f64,
    };
    let m = n - 2;
    let b = interior(f, n);
    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; m * m];
    let mut iterations = 0;
    if bnorm > 0.0 {
        let dinv: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; m * m];
        let max_iter = 20 * m * m + 100;
        loop {
            if dot(&r, &r).sqrt() <= CG_TOLERANCE * bnorm {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::Solver(format!(
                    "conjugate gradients did not reach {CG_TOLERANCE:e} in {max_iter} iterations"
                )));
            }
            op.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..x.len() {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..z.len() {
                z[k] = r[k] * dinv[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..p.len() {
                p[k] = z[k] + beta * p[k];
            }
            iterations += 1;
        }
    }
    let mut u = vec![0.0; n * n];
    for i in 0..m {
        u[(i + 1) * n + 1..(i + 1) * n + 1 + m].copy_from_slice(&x[i * m..(i + 1) * m]);
    }
    let residual = darcy_residual(a, &u, f, n)?;
    Ok(DarcySolution {
        u,
        iterations,
        residual,
    })
}

/// Two-level coefficient: `hi` where a GRF draw is positive, `lo` elsewhere.
pub fn darcy_coefficient(spec: &GrfSpec, seed: u64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > 0.0) {
        return Err(Error::Config(format!("coefficient levels must be positive, got {lo} and {hi}")));
    }
    let (g, _) = grf_sample_raw(spec, seed)?;
    Ok(g.into_iter().map(|v| if v > 0.0 { hi } else { lo }).collect())
}
