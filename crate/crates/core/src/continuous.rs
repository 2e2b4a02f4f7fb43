//! Continuous averages `f * d sigma_lambda` on R^n, the frequency split
//! `psi_{1/N}` / `1 - psi_{1/N}` and the two endpoint estimates it feeds.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft;
use crate::multiplier::{lowpass_profile, Bump, SurfaceMeasure};
use crate::numeric::{composite_gauss, least_squares_slope, sphere_area, sphere_fourier, CompensatedSum};

/// Largest grid, in points, a field may have.
pub const MAX_POINTS: usize = 1 << 24;

/// Samples of `f: R^n -> C` at `x = (i - m/2) h`, `0 <= i < m` on each
/// axis. Integrals use the weight `h^n`.
#[derive(Debug, Clone)]
pub struct ContinuousField {
    pub dim: usize,
    pub h: f64,
    pub m: usize,
    pub values: Vec<Complex64>,
}

fn even_smooth(min: usize) -> usize {
    let mut k = min.max(2);
    loop {
        let s = fft::smooth_size(k);
        if s % 2 == 0 {
            return s;
        }
        k = s + 1;
    }
}

impl ContinuousField {
    /// Grid on (at least) `[-half_width, half_width]^n` with mesh `h`.
    pub fn zeros(dim: usize, h: f64, half_width: f64) -> Result<Self> {
        if dim == 0 || !(h > 0.0) || !(half_width > 0.0) {
            return Err(Error::InvalidArgument("need dim >= 1, h > 0 and a positive box".into()));
        }
        let m = even_smooth((2.0 * half_width / h).ceil() as usize);
        let total = (m as f64).powi(dim as i32);
        if total > MAX_POINTS as f64 {
            return Err(Error::budget("continuous grid points", total, MAX_POINTS as f64));
        }
        Ok(ContinuousField {
            dim,
            h,
            m,
            values: vec![Complex64::default(); total as usize],
        })
    }

    pub fn sample(dim: usize, h: f64, half_width: f64, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Result<Self> {
        let mut field = Self::zeros(dim, h, half_width)?;
        let (m, h) = (field.m, field.h);
        field.values.par_iter_mut().enumerate().for_each(|(i, v)| {
            let mut x = vec![0.0; dim];
            coords(i, m, h, &mut x);
            *v = f(&x);
        });
        Ok(field)
    }

    /// The approximate identity `h^{-n}` at the origin.
    pub fn delta(dim: usize, h: f64, half_width: f64) -> Result<Self> {
        let mut field = Self::zeros(dim, h, half_width)?;
        let st = fft::strides(&field.shape());
        let i: usize = st.iter().map(|s| s * field.m / 2).sum();
        field.values[i] = Complex64::new(h.powi(-(dim as i32)), 0.0);
        Ok(field)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.m; self.dim]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coords(&self, i: usize, x: &mut [f64]) {
        coords(i, self.m, self.h, x)
    }

    fn cell(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Riemann-sum `L^p` norm; `p = inf` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        let s: CompensatedSum = self.values.iter().map(|v| v.norm().powf(p)).collect();
        (s.value() * self.cell()).powf(1.0 / p)
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.cell()
    }

    /// Multilinear interpolation, zero outside the grid.
    pub fn interpolate(&self, x: &[f64]) -> Complex64 {
        let n = self.dim;
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for k in 0..n {
            let u = x[k] / self.h + (self.m / 2) as f64;
            if u < 0.0 || u > (self.m - 1) as f64 {
                return Complex64::default();
            }
            let b = (u.floor() as usize).min(self.m - 2);
            base[k] = b;
            frac[k] = u - b as f64;
        }
        let st = fft::strides(&self.shape());
        let mut acc = Complex64::default();
        for corner in 0..1usize << n {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..n {
                let up = corner >> k & 1;
                w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
                idx += (base[k] + up) * st[k];
            }
            if w != 0.0 {
                acc += self.values[idx] * w;
            }
        }
        acc
    }

    fn map_values(&self, values: Vec<Complex64>) -> Self {
        ContinuousField {
            dim: self.dim,
            h: self.h,
            m: self.m,
            values,
        }
    }
}

fn coords(mut i: usize, m: usize, h: f64, x: &mut [f64]) {
    for k in (0..x.len()).rev() {
        x[k] = ((i % m) as f64 - (m / 2) as f64) * h;
        i /= m;
    }
}

/// `L^p` norms of an analytic `f` on the meshes `h` and `h / 2`.
pub fn norm_refinement(dim: usize, h: f64, half_width: f64, p: f64, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Result<(f64, f64)> {
    let coarse = ContinuousField::sample(dim, h, half_width, &f)?.lp_norm(p);
    let fine = ContinuousField::sample(dim, h / 2.0, half_width, &f)?.lp_norm(p);
    Ok((coarse, fine))
}

/// `f(x) = exp(-pi |x|^2 / s^2)` and its transform `s^n exp(-pi s^2 |xi|^2)`.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    pub width: f64,
}

impl Gaussian {
    pub fn value(&self, x: &[f64]) -> f64 {
        (-std::f64::consts::PI * x.iter().map(|v| v * v).sum::<f64>() / (self.width * self.width)).exp()
    }

    pub fn hat(&self, n: usize, rho: f64) -> f64 {
        self.width.powi(n as i32) * (-std::f64::consts::PI * (self.width * rho).powi(2)).exp()
    }

    pub fn field(&self, dim: usize, h: f64, half_width: f64) -> Result<ContinuousField> {
        ContinuousField::sample(dim, h, half_width, |x| Complex64::new(self.value(x), 0.0))
    }
}

/// Quadrature nodes of `d sigma-bar_lambda`: the nodes of `d sigma` on
/// `{R = 1}` dilated by `lambda^{1/d}`, same weights.
fn dilated_nodes(measure: &SurfaceMeasure, degree: u32, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let (mut points, weights) = measure.nodes().ok_or_else(|| {
        Error::Unsupported("spatial averages need quadrature nodes; use the level-set or Monte Carlo measure".into())
    })?;
    let s = lambda.powf(1.0 / degree as f64);
    points.iter_mut().for_each(|v| *v *= s);
    Ok((points, weights))
}

/// `(f * d sigma-bar_lambda)(x) = int f(x - lambda^{1/d} y) d sigma(y)` for
/// an analytic `f`, by direct quadrature.
pub fn continuous_average_at(
    measure: &SurfaceMeasure,
    degree: u32,
    lambda: f64,
    f: impl Fn(&[f64]) -> Complex64,
    x: &[f64],
) -> Result<Complex64> {
    let (points, weights) = dilated_nodes(measure, degree, lambda)?;
    let n = measure.dim();
    let mut z = vec![0.0; n];
    let mut acc = Complex64::default();
    for (y, w) in points.chunks_exact(n).zip(&weights) {
        for k in 0..n {
            z[k] = x[k] - y[k];
        }
        acc += f(&z) * *w;
    }
    Ok(acc)
}

/// `f * d sigma-bar_lambda` on the grid of `f`, interpolating `f` between
/// grid points.
pub fn continuous_average(measure: &SurfaceMeasure, degree: u32, lambda: f64, f: &ContinuousField) -> Result<ContinuousField> {
    if measure.dim() != f.dim {
        return Err(Error::InvalidArgument("field and measure dimensions differ".into()));
    }
    let (points, weights) = dilated_nodes(measure, degree, lambda)?;
    let work = f.len() as f64 * weights.len() as f64 * (1u64 << f.dim) as f64;
    if work > 4e9 {
        return Err(Error::budget("grid points x nodes", work, 4e9));
    }
    let n = f.dim;
    let values = (0..f.len())
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; n];
            f.coords(i, &mut x);
            let mut z = vec![0.0; n];
            let mut acc = Complex64::default();
            for (y, w) in points.chunks_exact(n).zip(&weights) {
                for k in 0..n {
                    z[k] = x[k] - y[k];
                }
                acc += f.interpolate(&z) * *w;
            }
            acc
        })
        .collect();
    Ok(f.map_values(values))
}

/// The same average for a radial `f` and a radial measure from the Fourier
/// side: `|S^{n-1}| int fhat(rho) sigma-hat(lambda^{1/d} rho) rho^{n-1}
/// Phi_n(2 pi r rho) d rho` over `[0, rho_max]`.
pub fn radial_average_fourier(
    measure: &SurfaceMeasure,
    degree: u32,
    lambda: f64,
    fhat: impl Fn(f64) -> f64,
    rho_max: f64,
    r: f64,
) -> Result<f64> {
    if !measure.is_radial() {
        return Err(Error::Unsupported("the Fourier route needs a radial surface measure".into()));
    }
    let n = measure.dim();
    let s = lambda.powf(1.0 / degree as f64);
    let panels = 64 + (rho_max * (r + s + 1.0) * 2.0) as usize;
    let acc: CompensatedSum = composite_gauss(0.0, rho_max, panels, 12)
        .into_iter()
        .map(|(rho, w)| w * fhat(rho) * measure.radial(s * rho).unwrap() * rho.powi(n as i32 - 1) * sphere_fourier(n, 2.0 * std::f64::consts::PI * r * rho))
        .collect();
    Ok(sphere_area(n) * acc.value())
}

/// `sigma-hat` on the DFT frequencies of a field grid, `xi_k = k / (m h)`
/// with `k` taken in `[-m/2, m/2)`.
pub struct FrequencyGrid {
    pub dim: usize,
    pub m: usize,
    pub h: f64,
    /// `|xi|` per frequency, row-major like the field.
    pub radius: Vec<f64>,
    pub sigma_hat: Vec<Complex64>,
}

impl FrequencyGrid {
    pub fn new(measure: &SurfaceMeasure, like: &ContinuousField) -> Result<Self> {
        let (n, m, h) = (like.dim, like.m, like.h);
        if measure.dim() != n {
            return Err(Error::InvalidArgument("field and measure dimensions differ".into()));
        }
        if !measure.is_radial() {
            let nodes = measure.nodes().map(|(_, w)| w.len()).unwrap_or(0) as f64;
            let work = nodes * like.len() as f64;
            if work > 2e9 {
                return Err(Error::budget("frequencies x nodes", work, 2e9));
            }
        }
        let freq = |k: usize| {
            let kk = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
            kk / (m as f64 * h)
        };
        let st = fft::strides(&like.shape());
        let pairs: Vec<(f64, Complex64)> = (0..like.len())
            .into_par_iter()
            .map(|i| {
                let xi: Vec<f64> = st.iter().map(|s| freq(i / s % m)).collect();
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                let v = match measure.radial(r) {
                    Some(v) => Complex64::new(v, 0.0),
                    None => measure.eval(&xi),
                };
                (r, v)
            })
            .collect();
        let (radius, sigma_hat) = pairs.into_iter().unzip();
        Ok(FrequencyGrid {
            dim: n,
            m,
            h,
            radius,
            sigma_hat,
        })
    }

    /// `sup |(1 - hat psi(xi / N)) sigma-hat(xi)|` over the grid.
    pub fn high_multiplier_sup(&self, bump: Bump, n_cut: f64) -> f64 {
        self.radius
            .iter()
            .zip(&self.sigma_hat)
            .map(|(&r, s)| (1.0 - bump.profile(r / n_cut)) * s.norm())
            .fold(0.0, f64::max)
    }
}

/// The two halves of `f * d sigma-bar_1`.
#[derive(Debug, Clone)]
pub struct Split {
    pub low: ContinuousField,
    pub high: ContinuousField,
    /// `(sum |hat high|^2 h^n / m^n)^{1/2}`, the Fourier-side `L^2` norm.
    pub high_l2_fourier: f64,
    /// `max |low + high - f * d sigma-bar|` against the unsplit product.
    pub residual: f64,
}

/// `low = f * psi_{1/N} * d sigma-bar`, `high = f * (delta - psi_{1/N}) * d sigma-bar`
/// by FFT on the periodic grid of `f`.
pub fn low_high_split(freq: &FrequencyGrid, f: &ContinuousField, n_cut: f64, bump: Bump) -> Result<Split> {
    if !(n_cut > 0.0) {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    if freq.m != f.m || freq.dim != f.dim || freq.h != f.h {
        return Err(Error::InvalidArgument("frequency grid does not match the field".into()));
    }
    let shape = f.shape();
    let mut fhat = f.values.clone();
    fft::forward(&mut fhat, &shape);
    let mut low = Vec::with_capacity(fhat.len());
    let mut high = Vec::with_capacity(fhat.len());
    let mut full = Vec::with_capacity(fhat.len());
    for ((z, &r), s) in fhat.iter().zip(&freq.radius).zip(&freq.sigma_hat) {
        let p = bump.profile(r / n_cut);
        let zs = z * s;
        low.push(zs * p);
        high.push(zs * (1.0 - p));
        full.push(zs);
    }
    let cell = f.h.powi(f.dim as i32);
    let high_l2_fourier = (high.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell / f.len() as f64).sqrt();
    for a in [&mut low, &mut high, &mut full] {
        fft::inverse_normalized(a, &shape);
    }
    let residual = low
        .iter()
        .zip(&high)
        .zip(&full)
        .map(|((a, b), c)| (a + b - c).norm())
        .fold(0.0, f64::max);
    Ok(Split {
        low: f.map_values(low),
        high: f.map_values(high),
        high_l2_fourier,
        residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointPoint {
    pub n_cut: f64,
    pub low_sup: f64,
    pub high_l2: f64,
    pub high_l2_fourier: f64,
    /// `||low||_inf / (N ||f||_1)`.
    pub k1: f64,
    /// `||psi_{1/N} * d sigma-bar||_inf / N` from the grid delta.
    pub k1_delta: f64,
    /// `||high||_2 / (N^{1-c} ||f||_2)`.
    pub k2: f64,
    /// `sup |(1 - hat psi(xi/N)) sigma-hat(xi)| / N^{1-c}` on the grid.
    pub k2_multiplier: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointScan {
    pub c: f64,
    pub mesh: f64,
    pub points_per_axis: usize,
    pub f_l1: f64,
    pub f_l2: f64,
    pub points: Vec<EndpointPoint>,
    pub k1_max: f64,
    pub k2_max: f64,
    pub high_nonincreasing: bool,
    /// Worst relative gap between the spatial and Fourier `L^2` norms of
    /// the high part.
    pub parseval_gap: f64,
}

/// Both endpoint ratios for `f` across the cut-offs `ns`.
pub fn endpoint_scan(measure: &SurfaceMeasure, c: f64, f: &ContinuousField, ns: &[f64], bump: Bump) -> Result<EndpointScan> {
    let freq = FrequencyGrid::new(measure, f)?;
    let delta = ContinuousField::delta(f.dim, f.h, f.h * (f.m / 2) as f64)?;
    let (f_l1, f_l2) = (f.lp_norm(1.0), f.lp_norm(2.0));
    let mut points = Vec::new();
    let mut parseval_gap: f64 = 0.0;
    for &n_cut in ns {
        let split = low_high_split(&freq, f, n_cut, bump)?;
        let kernel = low_high_split(&freq, &delta, n_cut, bump)?;
        let low_sup = split.low.lp_norm(f64::INFINITY);
        let high_l2 = split.high.lp_norm(2.0);
        if high_l2 > 0.0 {
            parseval_gap = parseval_gap.max((high_l2 - split.high_l2_fourier).abs() / high_l2);
        }
        let scale = n_cut.powf(1.0 - c);
        points.push(EndpointPoint {
            n_cut,
            low_sup,
            high_l2,
            high_l2_fourier: split.high_l2_fourier,
            k1: low_sup / (n_cut * f_l1),
            k1_delta: kernel.low.lp_norm(f64::INFINITY) / n_cut,
            k2: high_l2 / (scale * f_l2),
            k2_multiplier: freq.high_multiplier_sup(bump, n_cut) / scale,
            residual: split.residual,
        });
    }
    let mut by_n = points.clone();
    by_n.sort_by(|a, b| a.n_cut.total_cmp(&b.n_cut));
    let high_nonincreasing = by_n.windows(2).all(|w| w[1].high_l2 <= w[0].high_l2 * (1.0 + 1e-12) + 1e-300);
    Ok(EndpointScan {
        c,
        mesh: f.h,
        points_per_axis: f.m,
        f_l1,
        f_l2,
        k1_max: points.iter().map(|p| p.k1).fold(0.0, f64::max),
        k2_max: points.iter().map(|p| p.k2).fold(0.0, f64::max),
        high_nonincreasing,
        parseval_gap,
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelBound {
    pub n_cut: f64,
    pub decay: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `max |psi_{1/N} * d sigma-bar(x)| (1 + |x|)^M / N` over the samples.
    pub fitted_k: f64,
}

/// Samples of `|psi_{1/N} * d sigma-bar|` against `N (1 + |x|)^{-M}`.
pub fn kernel_bound(measure: &SurfaceMeasure, bump: Bump, n_cut: f64, decay: f64, radii: &[f64]) -> Result<KernelBound> {
    let values = lowpass_profile(measure, bump, 1.0 / n_cut, radii)?;
    let fitted_k = radii
        .iter()
        .zip(&values)
        .map(|(&r, &v)| v * (1.0 + r).powf(decay) / n_cut)
        .fold(0.0, f64::max);
    Ok(KernelBound {
        n_cut,
        decay,
        radii: radii.to_vec(),
        values,
        fitted_k,
    })
}

/// The same bound from the grid kernel `psi_{1/N} * d sigma-bar`, for
/// measures without a radial transform.
pub fn kernel_bound_grid(measure: &SurfaceMeasure, bump: Bump, n_cut: f64, decay: f64, h: f64, half_width: f64) -> Result<KernelBound> {
    let delta = ContinuousField::delta(measure.dim(), h, half_width)?;
    let freq = FrequencyGrid::new(measure, &delta)?;
    let low = low_high_split(&freq, &delta, n_cut, bump)?.low;
    let mut x = vec![0.0; delta.dim];
    let mut pairs: Vec<(f64, f64)> = (0..low.len())
        .map(|i| {
            low.coords(i, &mut x);
            (x.iter().map(|v| v * v).sum::<f64>().sqrt(), low.values[i].norm())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fitted_k = pairs.iter().map(|&(r, v)| v * (1.0 + r).powf(decay) / n_cut).fold(0.0, f64::max);
    let (radii, values) = pairs.into_iter().unzip();
    Ok(KernelBound {
        n_cut,
        decay,
        radii,
        values,
        fitted_k,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierDecay {
    pub exponent: f64,
    pub radii: Vec<f64>,
    /// `max |sigma-hat(xi)|` over the sampled directions at each radius.
    pub values: Vec<f64>,
    /// Largest quadrature error estimate among the samples.
    pub max_error: f64,
    /// `max |sigma-hat(xi)| (1 + |xi|)^{exponent}`.
    pub fitted: f64,
    /// Least-squares slope of `log |sigma-hat|` against `log |xi|` over the
    /// upper half of the radii.
    pub slope: f64,
}

/// `|sigma-hat(xi)| (1 + |xi|)^{exponent}` on `|xi| <= rho_max`; radial
/// measures use the exact profile, others `directions` seeded random
/// directions per radius.
pub fn fourier_decay(measure: &SurfaceMeasure, exponent: f64, rho_max: f64, samples: usize, directions: usize, seed: u64) -> Result<FourierDecay> {
    if samples < 4 || !(rho_max > 1.0) {
        return Err(Error::InvalidArgument("need at least 4 samples and rho_max > 1".into()));
    }
    let n = measure.dim();
    // geometric spacing at half-step exponents, so radii avoid the integer
    // and half-integer zeros of the sphere transforms
    let radii: Vec<f64> = (1..=samples).map(|i| rho_max.powf((i as f64 - 0.5) / samples as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..directions.max(1))
        .map(|_| {
            use rand::Rng;
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let s = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|a| a / s).collect()
        })
        .collect();
    let rows: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|&r| match measure.radial(r) {
            Some(v) => (v.abs(), 0.0),
            None => dirs.iter().fold((0.0, 0.0), |(m, e), d| {
                let xi: Vec<f64> = d.iter().map(|a| a * r).collect();
                let est = measure.transform(&xi);
                (f64::max(m, est.value().norm()), f64::max(e, est.error))
            }),
        })
        .collect();
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let max_error = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let fitted = radii.iter().zip(&values).map(|(r, v)| v * (1.0 + r).powf(exponent)).fold(0.0, f64::max);
    // envelope: running max from the right, so zeros of sigma-hat do not
    // dominate the fit
    let mut env = values.clone();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let half = radii.len() / 2;
    let lx: Vec<f64> = radii[half..].iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = env[half..].iter().map(|v| v.max(1e-300).ln()).collect();
    Ok(FourierDecay {
        exponent,
        slope: least_squares_slope(&lx, &ly),
        radii,
        values,
        max_error,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{Cutoff, IntegralForm};
    use crate::multiplier::SurfaceMethod;
    use std::f64::consts::PI;

    fn sphere(n: usize, method: SurfaceMethod) -> SurfaceMeasure {
        SurfaceMeasure::new(&IntegralForm::sphere(n), &Cutoff::ConstantOne, method).unwrap()
    }

    #[test]
    fn constant_gives_total_mass() {
        let m = sphere(3, SurfaceMethod::LevelSet { order: 16 });
        let v = continuous_average_at(&m, 2, 4.0, |_| Complex64::new(1.0, 0.0), &[0.3, 0.0, 0.1]).unwrap();
        assert!((v.re - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn gaussian_average_matches_bessel_route() {
        let spatial = sphere(3, SurfaceMethod::LevelSet { order: 48 });
        let fourier = sphere(3, SurfaceMethod::BesselSphere);
        let g = Gaussian { width: 0.4 };
        for r in [0.0, 0.3, 0.7, 1.0, 1.4] {
            let a = continuous_average_at(&spatial, 2, 1.0, |x| Complex64::new(g.value(x), 0.0), &[0.0, r * 0.6, r * 0.8]).unwrap();
            let b = radial_average_fourier(&fourier, 2, 1.0, |rho| g.hat(3, rho), 20.0, r).unwrap();
            assert!((a.re - b).abs() < 1e-4, "r = {r}: {} vs {b}", a.re);
        }
    }

    #[test]
    fn radial_input_gives_radial_output() {
        let m = sphere(2, SurfaceMethod::LevelSet { order: 32 });
        let g = Gaussian { width: 0.3 };
        let f = |x: &[f64]| Complex64::new(g.value(x), 0.0);
        let a = continuous_average_at(&m, 2, 1.0, f, &[0.5, 0.0]).unwrap();
        let b = continuous_average_at(&m, 2, 1.0, f, &[0.3, 0.4]).unwrap();
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn grid_average_tracks_analytic() {
        let m = sphere(2, SurfaceMethod::LevelSet { order: 24 });
        let g = Gaussian { width: 0.5 };
        let f = g.field(2, 1.0 / 32.0, 2.0).unwrap();
        let out = continuous_average(&m, 2, 1.0, &f).unwrap();
        let mut x = [0.0; 2];
        let mut worst: f64 = 0.0;
        for i in (0..out.len()).step_by(97) {
            out.coords(i, &mut x);
            let exact = continuous_average_at(&m, 2, 1.0, |z| Complex64::new(g.value(z), 0.0), &x).unwrap();
            worst = worst.max((out.values[i] - exact).norm());
        }
        // multilinear interpolation error ~ h^2 |f''|
        assert!(worst < 2e-2, "{worst}");
    }

    #[test]
    fn fft_split_reassembles_and_matches_quadrature() {
        let bessel = sphere(2, SurfaceMethod::BesselSphere);
        let nodes = sphere(2, SurfaceMethod::LevelSet { order: 64 });
        let g = Gaussian { width: 0.2 };
        let f = g.field(2, 1.0 / 64.0, 1.5).unwrap();
        let freq = FrequencyGrid::new(&bessel, &f).unwrap();
        let split = low_high_split(&freq, &f, 4.0, Bump::PSI).unwrap();
        assert!(split.residual < 1e-10);
        let mut x = [0.0; 2];
        for i in (0..f.len()).step_by(1031) {
            f.coords(i, &mut x);
            let exact = continuous_average_at(&nodes, 2, 1.0, |z| Complex64::new(g.value(z), 0.0), &x).unwrap();
            let got = split.low.values[i] + split.high.values[i];
            assert!((got - exact).norm() < 1e-6, "{x:?}");
        }
        let hl = split.high.lp_norm(2.0);
        assert!((hl - split.high_l2_fourier).abs() <= 1e-6 * hl);
    }

    #[test]
    fn endpoint_constants_stay_bounded() {
        let m = sphere(3, SurfaceMethod::BesselSphere);
        let f = Gaussian { width: 0.05 }.field(3, 1.0 / 32.0, 1.5).unwrap();
        let scan = endpoint_scan(&m, 1.5, &f, &[1.0, 2.0, 4.0, 8.0], Bump::PSI).unwrap();
        assert!(scan.high_nonincreasing);
        assert!(scan.parseval_gap < 1e-6);
        let k: Vec<f64> = scan.points.iter().map(|p| p.k1_delta).collect();
        let (lo, hi) = k.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 4.0, "{k:?}");
        assert!(scan.points.iter().all(|p| p.k2 <= p.k2_multiplier * (1.0 + 1e-9)));
    }

    #[test]
    fn kernel_bound_routes_agree_near_peak() {
        let m = sphere(2, SurfaceMethod::BesselSphere);
        let radial = kernel_bound(&m, Bump::PSI, 4.0, 4.0, &[0.0, 0.5, 1.0, 2.0, 3.0]).unwrap();
        let grid = kernel_bound_grid(&m, Bump::PSI, 4.0, 4.0, 1.0 / 32.0, 4.0).unwrap();
        assert!(radial.fitted_k.is_finite() && radial.fitted_k > 0.0);
        let peak_r = radial.values[2];
        let peak_g = grid
            .radii
            .iter()
            .zip(&grid.values)
            .filter(|(r, _)| (**r - 1.0).abs() < 1e-12)
            .map(|(_, v)| *v)
            .next()
            .unwrap();
        assert!((peak_r - peak_g).abs() < 1e-3 * peak_r, "{peak_r} {peak_g}");
    }

    #[test]
    fn sphere_transform_decays_like_its_dimension() {
        let m = sphere(5, SurfaceMethod::BesselSphere);
        // S^4 decays like |xi|^{-(n-1)/2} = |xi|^{-2}, faster than |xi|^{1-c}
        let d = fourier_decay(&m, 1.5, 40.0, 400, 1, 0).unwrap();
        assert!(d.fitted.is_finite());
        assert!((d.slope + 2.0).abs() < 0.2, "{}", d.slope);
    }

    #[test]
    fn refinement_converges() {
        let g = Gaussian { width: 0.5 };
        let (a, b) = norm_refinement(2, 0.1, 3.0, 2.0, |x| Complex64::new(g.value(x), 0.0)).unwrap();
        // ||g||_2^2 = (s^2 / 2)^{n/2} ... for n = 2, s^2 / 2
        let exact = (0.25f64 / 2.0).sqrt();
        assert!((b - exact).abs() <= (a - exact).abs() + 1e-15);
        assert!((b - exact).abs() < 1e-8);
    }
}
