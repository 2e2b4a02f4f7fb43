use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{Cutoff, IntegralForm};
use crate::numeric::{e, gauss_legendre, sphere_area, sphere_fourier, ComplexSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum SurfaceMethod {
    /// Closed form for `a |x|^2` with a radial cutoff.
    BesselSphere,
    /// Product rule in hyperspherical angles; the error estimate compares
    /// `order` with `order / 2`.
    LevelSet { order: usize },
    /// Uniform directions from a seeded generator; the error is one standard
    /// error of the mean.
    MonteCarlo { samples: usize, seed: u64 },
}

/// A value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub re: f64,
    pub im: f64,
    pub error: f64,
}

impl Estimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Sphere { rho0: f64, scale: f64 },
    Nodes {
        points: Vec<f64>,
        weights: Vec<f64>,
        coarse_points: Vec<f64>,
        coarse_weights: Vec<f64>,
    },
    Sampled { points: Vec<f64>, values: Vec<f64>, total: usize, area: f64 },
}

/// `d sigma = phi dmu / |grad R|` on `{R = 1}` and its Fourier transform
/// `hat sigma(xi) = int e(-x.xi) d sigma(x)`.
#[derive(Debug, Clone)]
pub struct SurfaceMeasure {
    pub method: SurfaceMethod,
    dim: usize,
    rule: Rule,
}

impl SurfaceMeasure {
    pub fn new(form: &IntegralForm, phi: &Cutoff, method: SurfaceMethod) -> Result<Self> {
        let n = form.dim();
        if n < 2 {
            return Err(Error::Unsupported("surface measures need n >= 2".into()));
        }
        let rule = match method {
            SurfaceMethod::BesselSphere => {
                let a = form.isotropic_quadratic_coefficient().ok_or_else(|| {
                    Error::Unsupported("the Bessel route needs a form a|x|^2".into())
                })? as f64;
                let rho0 = a.powf(-0.5);
                let phi0 = phi
                    .radial_profile(rho0)
                    .ok_or_else(|| Error::Unsupported("the Bessel route needs a radial cutoff".into()))?;
                // |grad R| = 2 a rho0 on the sphere of radius rho0
                let scale = phi0 / (2.0 * a * rho0) * rho0.powi(n as i32 - 1) * sphere_area(n);
                Rule::Sphere { rho0, scale }
            }
            SurfaceMethod::LevelSet { order } => {
                if order < 4 {
                    return Err(Error::InvalidArgument("level-set order must be at least 4".into()));
                }
                let (points, weights) = level_set_rule(form, phi, order);
                let (coarse_points, coarse_weights) = level_set_rule(form, phi, order / 2);
                Rule::Nodes {
                    points,
                    weights,
                    coarse_points,
                    coarse_weights,
                }
            }
            SurfaceMethod::MonteCarlo { samples, seed } => {
                if samples < 2 {
                    return Err(Error::InvalidArgument("Monte Carlo needs at least 2 samples".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut points = Vec::new();
                let mut values = Vec::new();
                let mut theta = vec![0.0; n];
                for _ in 0..samples {
                    random_direction(&mut rng, &mut theta);
                    if let Some((x, w)) = radial_node(form, phi, &theta) {
                        points.extend_from_slice(&x);
                        values.push(w);
                    }
                }
                Rule::Sampled {
                    points,
                    values,
                    total: samples,
                    area: sphere_area(n),
                }
            }
        };
        Ok(SurfaceMeasure { method, dim: n, rule })
    }

    /// Bessel route when the form allows it, level-set quadrature otherwise.
    pub fn auto(form: &IntegralForm, phi: &Cutoff) -> Result<Self> {
        Self::new(form, phi, SurfaceMethod::BesselSphere)
            .or_else(|_| Self::new(form, phi, SurfaceMethod::LevelSet { order: 32 }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.rule, Rule::Sphere { .. })
    }

    /// `hat sigma` at `|xi| = r` for the radial route.
    pub fn radial(&self, r: f64) -> Option<f64> {
        match self.rule {
            Rule::Sphere { rho0, scale } => Some(scale * sphere_fourier(self.dim, 2.0 * PI * rho0 * r)),
            _ => None,
        }
    }

    /// `hat sigma(xi)` without the error estimate.
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        match &self.rule {
            Rule::Sphere { .. } => {
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                Complex64::new(self.radial(r).unwrap(), 0.0)
            }
            Rule::Nodes { points, weights, .. } => node_sum(points, weights, xi),
            Rule::Sampled { points, values, total, area } => {
                node_sum(points, values, xi) * (*area / *total as f64)
            }
        }
    }

    pub fn transform(&self, xi: &[f64]) -> Estimate {
        let (v, err) = match &self.rule {
            Rule::Sphere { .. } => {
                let v = self.eval(xi);
                (v, 1e-14 * v.norm().max(1e-300))
            }
            Rule::Nodes {
                points,
                weights,
                coarse_points,
                coarse_weights,
            } => {
                let fine = node_sum(points, weights, xi);
                let coarse = node_sum(coarse_points, coarse_weights, xi);
                (fine, (fine - coarse).norm())
            }
            Rule::Sampled { points, values, total, area } => {
                let n = self.dim;
                let mut s = Complex64::default();
                let mut s2 = 0.0;
                for (x, &w) in points.chunks_exact(n).zip(values) {
                    let z = e(-dot(x, xi)) * w;
                    s += z;
                    s2 += z.norm_sqr();
                }
                let m = *total as f64;
                let mean = s / m;
                let var = (s2 / m - mean.norm_sqr()).max(0.0) * m / (m - 1.0);
                (mean * *area, *area * (var / m).sqrt())
            }
        };
        Estimate {
            re: v.re,
            im: v.im,
            error: err,
        }
    }

    /// Like `transform`, refusing results whose error estimate exceeds `tol`.
    pub fn transform_checked(&self, xi: &[f64], tol: f64) -> Result<Estimate> {
        let est = self.transform(xi);
        if est.error > tol {
            return Err(Error::Quadrature {
                estimate: est.error,
                tolerance: tol,
            });
        }
        Ok(est)
    }

    pub fn total_mass(&self) -> f64 {
        self.eval(&vec![0.0; self.dim]).re
    }

    /// Quadrature nodes on `{R = 1}` with their weights (the Bessel route has
    /// none and returns `None`).
    pub fn nodes(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.rule {
            Rule::Sphere { .. } => None,
            Rule::Nodes { points, weights, .. } => Some((points.clone(), weights.clone())),
            Rule::Sampled { points, values, total, area } => {
                Some((points.clone(), values.iter().map(|v| v * area / *total as f64).collect()))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn node_sum(points: &[f64], weights: &[f64], xi: &[f64]) -> Complex64 {
    let n = xi.len();
    let mut acc = ComplexSum::new();
    for (x, &w) in points.chunks_exact(n).zip(weights) {
        acc.add(e(-dot(x, xi)) * w);
    }
    acc.value()
}

/// For a unit direction theta with `R(theta) > 0`: the point
/// `theta R(theta)^{-1/d}` on `{R = 1}` and the density
/// `phi(x) R(theta)^{-n/d} / d` of `d sigma` against `d theta`.
fn radial_node(form: &IntegralForm, phi: &Cutoff, theta: &[f64]) -> Option<(Vec<f64>, f64)> {
    let r = form.eval_f64(theta);
    if r <= 0.0 {
        return None;
    }
    let d = form.degree() as f64;
    let n = theta.len() as f64;
    let t = r.powf(-1.0 / d);
    let x: Vec<f64> = theta.iter().map(|v| v * t).collect();
    let w = phi.value(&x) * r.powf(-n / d) / d;
    if w > 0.0 {
        Some((x, w))
    } else {
        None
    }
}

fn level_set_rule(form: &IntegralForm, phi: &Cutoff, order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = form.dim();
    let (gx, gw) = gauss_legendre(order);
    // polar angles on [0, pi], azimuth by the trapezoid rule
    let polar: Vec<(f64, f64)> = gx.iter().zip(&gw).map(|(x, w)| (0.5 * PI * (x + 1.0), 0.5 * PI * w)).collect();
    let az = 2 * order;
    let h = 2.0 * PI / az as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let k = n - 2;
    let mut idx = vec![0usize; k];
    let mut theta = vec![0.0; n];
    loop {
        let mut w0 = 1.0;
        let mut sin_prod = 1.0;
        for (j, &i) in idx.iter().enumerate() {
            let (a, w) = polar[i];
            theta[j] = sin_prod * a.cos();
            w0 *= w * a.sin().powi((n - 2 - j) as i32);
            sin_prod *= a.sin();
        }
        for m in 0..az {
            let phi_angle = h * m as f64;
            theta[n - 2] = sin_prod * phi_angle.cos();
            theta[n - 1] = sin_prod * phi_angle.sin();
            if let Some((x, w)) = radial_node(form, phi, &theta) {
                points.extend_from_slice(&x);
                weights.push(w * w0 * h);
            }
        }
        // odometer over the polar indices
        let mut j = 0;
        while j < k {
            idx[j] += 1;
            if idx[j] < order {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == k {
            break;
        }
    }
    (points, weights)
}

fn random_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        // Box-Muller pairs
        for pair in out.chunks_mut(2) {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            pair[0] = r * (2.0 * PI * u2).cos();
            if pair.len() > 1 {
                pair[1] = r * (2.0 * PI * u2).sin();
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}
