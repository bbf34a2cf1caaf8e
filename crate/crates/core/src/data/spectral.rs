//! FFT helpers on periodic 1-D and 2-D grids.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Signed integer wavenumber of FFT bin `idx` on an `n`-point grid.
pub(crate) fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Unnormalised in-place transform over a row-major grid with the given
/// extents (one or two dimensions).
pub(crate) fn fft_nd(buf: &mut [Complex64], extents: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = |planner: &mut FftPlanner<f64>, n: usize| {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    match *extents {
        [n] => plan(&mut planner, n).process(buf),
        [n0, n1] => {
            plan(&mut planner, n1).process(buf);
            let col_plan = plan(&mut planner, n0);
            let mut col = vec![Complex64::new(0.0, 0.0); n0];
            for j in 0..n1 {
                for i in 0..n0 {
                    col[i] = buf[i * n1 + j];
                }
                col_plan.process(&mut col);
                for i in 0..n0 {
                    buf[i * n1 + j] = col[i];
                }
            }
        }
        _ => panic!("fft_nd supports one or two dimensions"),
    }
}

/// Index of the bin holding `-k` for bin `idx` of a row-major grid.
pub(crate) fn mirror_index(idx: usize, extents: &[usize]) -> usize {
    let mut rem = idx;
    let mut out = 0;
    let mut stride = 1;
    let mut parts = Vec::with_capacity(extents.len());
    for &n in extents.iter().rev() {
        parts.push((rem % n, n));
        rem /= n;
    }
    for (i, n) in parts {
        out += ((n - i) % n) * stride;
        stride *= n;
    }
    out
}

/// Squared magnitude `|k|²` of the integer wavevector of bin `idx`.
pub(crate) fn k_squared(idx: usize, extents: &[usize]) -> f64 {
    let mut rem = idx;
    let mut sum = 0.0;
    for &n in extents.iter().rev() {
        let k = wavenumber(rem % n, n) as f64;
        sum += k * k;
        rem /= n;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_and_wavenumbers() {
        assert_eq!(wavenumber(3, 8), 3);
        assert_eq!(wavenumber(4, 8), 4);
        assert_eq!(wavenumber(5, 8), -3);
        assert_eq!(mirror_index(0, &[4, 4]), 0);
        // (1, 2) ↦ (3, 2)
        assert_eq!(mirror_index(6, &[4, 4]), 14);
        assert_eq!(k_squared(6, &[4, 4]), 5.0);
    }

    #[test]
    fn round_trip() {
        let ext = [4usize, 6];
        let orig: Vec<Complex64> = (0..24).map(|i| Complex64::new(i as f64, -(i as f64) / 3.0)).collect();
        let mut buf = orig.clone();
        fft_nd(&mut buf, &ext, false);
        fft_nd(&mut buf, &ext, true);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / 24.0 - b).norm() < 1e-12);
        }
    }
}
