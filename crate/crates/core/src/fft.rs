//! Multidimensional FFT over row-major arrays (last axis fastest), built
//! from one-dimensional `rustfft` plans applied axis by axis.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// Unnormalized n-dimensional transform in place.
///
/// `Forward` computes `sum_x f(x) e(-x.k/N)`, `Inverse` the `e(+x.k/N)` sum
/// without the `1/N` factor.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let total: usize = shape.iter().product();
    assert_eq!(total, data.len(), "shape does not match data length");
    if total == 0 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut inner = 1usize;
    for axis in (0..shape.len()).rev() {
        let len = shape[axis];
        if len > 1 {
            let plan = planner.plan_fft(len, direction);
            let outer = total / (len * inner);
            if inner == 1 {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(data, &mut scratch);
            } else {
                let mut line = vec![Complex64::default(); len];
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                // gather a block of `inner` contiguous lines at a time for locality
                for o in 0..outer {
                    let base = o * len * inner;
                    for i in 0..inner {
                        for k in 0..len {
                            line[k] = data[base + k * inner + i];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for k in 0..len {
                            data[base + k * inner + i] = line[k];
                        }
                    }
                }
            }
        }
        inner *= len;
    }
}

pub fn forward(data: &mut [Complex64], shape: &[usize]) {
    fft_nd(data, shape, FftDirection::Forward);
}

/// Inverse transform including the `1/N` normalization.
pub fn inverse_normalized(data: &mut [Complex64], shape: &[usize]) {
    fft_nd(data, shape, FftDirection::Inverse);
    let scale = 1.0 / data.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Smallest 5-smooth integer (2^a 3^b 5^c) that is >= `min`.
pub fn smooth_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Decode a flat row-major index into a multi-index.
pub fn unravel(mut index: usize, shape: &[usize], out: &mut [usize]) {
    for axis in (0..shape.len()).rev() {
        out[axis] = index % shape[axis];
        index /= shape[axis];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::e;

    #[test]
    fn matches_direct_dft_in_3d() {
        let shape = [3usize, 4, 5];
        let n: usize = shape.iter().product();
        let data: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut fast = data.clone();
        forward(&mut fast, &shape);
        let mut idx = [0usize; 3];
        let mut kdx = [0usize; 3];
        for k in 0..n {
            unravel(k, &shape, &mut kdx);
            let mut acc = Complex64::default();
            for (x, v) in data.iter().enumerate() {
                unravel(x, &shape, &mut idx);
                let phase: f64 = (0..3)
                    .map(|a| (idx[a] * kdx[a]) as f64 / shape[a] as f64)
                    .sum();
                acc += v * e(-phase);
            }
            assert!((acc - fast[k]).norm() < 1e-10);
        }
        inverse_normalized(&mut fast, &shape);
        for (a, b) in fast.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(13), 15);
        assert_eq!(smooth_size(31), 32);
        assert_eq!(smooth_size(1), 1);
    }
}
