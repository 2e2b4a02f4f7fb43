//! Small numerical kernels shared by the modules: compensated summation,
//! Gauss-Legendre rules, the Fourier transform of the round sphere, smooth
//! plateau profiles and a couple of regression helpers.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated accumulator for complex values (componentwise).
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `e(x) = exp(2 pi i x)`.
#[inline]
pub fn e(x: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * x).sin_cos();
    Complex64::new(c, s)
}

/// Table of the q-th roots of unity `e(k/q)`, k = 0..q.
pub fn roots_of_unity(q: u64) -> Vec<Complex64> {
    (0..q)
        .map(|k| {
            // reduce to the nearest symmetric representative for accuracy
            let k = k as f64;
            let q = q as f64;
            let x = if 2.0 * k > q { k - q } else { k } / q;
            e(x)
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` panels of `order` nodes.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

/// `Gamma(k / 2)` for a positive integer k.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k >= 1);
    if k % 2 == 0 {
        (1..k / 2).map(|j| j as f64).product()
    } else {
        // Gamma(m + 1/2) = (2m)! sqrt(pi) / (4^m m!)
        let m = (k - 1) / 2;
        let mut g = PI.sqrt();
        for j in 0..m {
            g *= j as f64 + 0.5;
        }
        g
    }
}

/// Surface area of the unit sphere in R^n.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n as u32)
}

/// Normalized Fourier transform of the unit sphere S^{n-1}:
/// `Phi_n(s) = (1/|S^{n-1}|) * int exp(-i s theta_1) dtheta`, which equals
/// `Gamma(n/2) (2/s)^nu J_nu(s)` with `nu = n/2 - 1`.
pub fn sphere_fourier(n: usize, s: f64) -> f64 {
    assert!(n >= 1);
    let s = s.abs();
    if n == 1 {
        return s.cos();
    }
    if s <= 4.0 {
        return sphere_fourier_series(n, s);
    }
    if n % 2 == 1 {
        let l = (n - 3) / 2;
        if s <= l as f64 + 1.0 {
            return sphere_fourier_series(n, s);
        }
        // (2l+1)!! j_l(s) / s^l, upward recurrence is stable for s > l
        let j = spherical_bessel(l, s);
        let mut dfact = 1.0;
        let mut k = 1;
        while k <= 2 * l + 1 {
            dfact *= k as f64;
            k += 2;
        }
        dfact * j / s.powi(l as i32)
    } else {
        let m = (n - 2) / 2;
        let jm = bessel_j_integer(m, s);
        let mut fact = 1.0;
        for k in 1..=m {
            fact *= k as f64;
        }
        fact * (2.0 / s).powi(m as i32) * jm
    }
}

fn sphere_fourier_series(n: usize, s: f64) -> f64 {
    // sum_k (-s^2/4)^k / (k! (nu+1)_k)
    let nu = n as f64 / 2.0 - 1.0;
    let x = -s * s / 4.0;
    let mut term = 1.0;
    let mut acc = CompensatedSum::new();
    acc.add(term);
    for k in 1..200 {
        let k = k as f64;
        term *= x / (k * (nu + k));
        acc.add(term);
        if term.abs() < 1e-18 * acc.value().abs().max(1e-300) {
            break;
        }
    }
    acc.value()
}

/// Spherical Bessel function j_l by upward recurrence (intended for s > l).
pub fn spherical_bessel(l: usize, s: f64) -> f64 {
    let (sn, cs) = s.sin_cos();
    let j0 = sn / s;
    if l == 0 {
        return j0;
    }
    let mut jm = j0;
    let mut j = sn / (s * s) - cs / s;
    for k in 1..l {
        let next = (2 * k + 1) as f64 / s * j - jm;
        jm = j;
        j = next;
    }
    j
}

/// J_m(s) for integer m via the trapezoid rule on Bessel's integral, which is
/// spectrally accurate for the periodic integrand.
pub fn bessel_j_integer(m: usize, s: f64) -> f64 {
    let nodes = (s.abs() + m as f64) as usize + 64;
    let h = 2.0 * PI / nodes as f64;
    let mut acc = CompensatedSum::new();
    for k in 0..nodes {
        let t = h * k as f64;
        acc.add((m as f64 * t - s * t.sin()).cos());
    }
    acc.value() / nodes as f64
}

/// C-infinity step: 1 for t <= 0, 0 for t >= 1, monotone in between.
pub fn smooth_step_down(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let g = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let a = g(1.0 - t);
    let b = g(t);
    a / (a + b)
}

/// Ordinary least-squares slope of y against x.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Theil-Sen slope: median of all pairwise slopes.
pub fn theil_sen_slope(x: &[f64], y: &[f64]) -> f64 {
    let mut slopes = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    median(&mut slopes)
}

pub fn median(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Radical-inverse Halton point (component `dim` uses the dim-th prime base).
pub fn halton(index: u64, dim: usize) -> f64 {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let base = PRIMES[dim % PRIMES.len()];
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_relative_eq!(integral, 2.0 / 11.0, epsilon = 1e-14);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn gamma_half_values() {
        assert_relative_eq!(gamma_half(1), PI.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gamma_half(2), 1.0);
        assert_relative_eq!(gamma_half(5), 0.75 * PI.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gamma_half(8), 6.0);
    }

    #[test]
    fn sphere_area_low_dims() {
        assert_relative_eq!(sphere_area(2), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(4), 2.0 * PI * PI, epsilon = 1e-13);
    }

    #[test]
    fn sphere_fourier_closed_forms() {
        for &s in &[0.0, 0.3, 2.0, 3.9, 4.1, 7.5, 31.0, 80.0] {
            let s: f64 = s;
            let n3 = if s == 0.0 { 1.0 } else { s.sin() / s };
            assert_relative_eq!(sphere_fourier(3, s), n3, epsilon = 1e-13);
            if s > 0.0 {
                let n5 = 3.0 * (s.sin() - s * s.cos()) / s.powi(3);
                assert_relative_eq!(sphere_fourier(5, s), n5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sphere_fourier_even_dims_match_series_at_crossover() {
        for n in [2usize, 4, 6] {
            let a = sphere_fourier_series(n, 4.0);
            let b = {
                let m = (n - 2) / 2;
                let mut fact = 1.0;
                for k in 1..=m {
                    fact *= k as f64;
                }
                fact * (0.5f64).powi(m as i32) * bessel_j_integer(m, 4.0)
            };
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        // J_0 zero
        assert!(bessel_j_integer(0, 2.404825557695773).abs() < 1e-13);
    }

    #[test]
    fn smooth_step_is_monotone_plateau() {
        assert_eq!(smooth_step_down(-0.1), 1.0);
        assert_eq!(smooth_step_down(1.0), 0.0);
        assert_relative_eq!(smooth_step_down(0.5), 0.5, epsilon = 1e-15);
        let mut last = 1.0;
        for k in 0..=100 {
            let v = smooth_step_down(k as f64 / 100.0);
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn slopes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.1, 5.9, 8.0];
        assert!((least_squares_slope(&x, &y) - 1.98).abs() < 1e-12);
        assert!((theil_sen_slope(&x, &y) - 2.0).abs() < 0.06);
    }
}
