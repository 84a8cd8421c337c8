//! Thin multi-dimensional wrapper over rustfft.
//!
//! Data is a flat row-major tensor (last axis contiguous). The forward
//! transform maps nodal values to Fourier coefficients normalized so that
//! values_t = sum_k coeffs_k exp(+2 pi i <k, t/n>); rustfft's forward kernel
//! uses the exp(-i) sign, so coefficients are the forward output divided by
//! the total grid size.

use num_complex::Complex64;
use rustfft::FftPlanner;

fn transform_axis(data: &mut [Complex64], dims: &[usize], axis: usize, forward: bool) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let stride: usize = dims[axis + 1..].iter().product();
    let total = data.len();
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let block = n * stride;
    for base in (0..total).step_by(block) {
        for off in 0..stride {
            for t in 0..n {
                line[t] = data[base + off + t * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for t in 0..n {
                data[base + off + t * stride] = line[t];
            }
        }
    }
}

/// Nodal values -> normalized coefficients, in place.
pub fn forward(data: &mut [Complex64], dims: &[usize]) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    for axis in 0..dims.len() {
        transform_axis(data, dims, axis, true);
    }
    let scale = 1.0 / total as f64;
    for z in data.iter_mut() {
        *z *= scale;
    }
}

/// Normalized coefficients -> nodal values, in place.
pub fn inverse(data: &mut [Complex64], dims: &[usize]) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    for axis in 0..dims.len() {
        transform_axis(data, dims, axis, false);
    }
}

/// Signed mode numbers in FFT index order for an even grid of size n:
/// index j holds mode j for j < n/2 and mode j - n for j >= n/2.
pub fn signed_modes(n: usize) -> Vec<i64> {
    (0..n)
        .map(|j| {
            if j < n / 2 {
                j as i64
            } else {
                j as i64 - n as i64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let dims = [4usize, 6];
        let mut data: Vec<Complex64> = (0..24)
            .map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1))
            .collect();
        let orig = data.clone();
        forward(&mut data, &dims);
        inverse(&mut data, &dims);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_is_resolved() {
        // values of exp(2 pi i * 2 t / 8): coefficient 1 at mode 2
        let n = 8usize;
        let mut data: Vec<Complex64> = (0..n)
            .map(|t| (Complex64::new(0.0, 2.0 * std::f64::consts::PI * 2.0 * t as f64 / n as f64)).exp())
            .collect();
        forward(&mut data, &[n]);
        for (j, z) in data.iter().enumerate() {
            let expect = if j == 2 { 1.0 } else { 0.0 };
            assert!((z - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn signed_mode_layout() {
        assert_eq!(signed_modes(6), vec![0, 1, 2, -3, -2, -1]);
    }
}
