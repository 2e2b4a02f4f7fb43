use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::bump::Bump;
use super::surface::SurfaceMeasure;
use crate::arith::{preferred_method, WeylTable};
use crate::error::{Error, Result};
use crate::forms::IntegralForm;
use crate::gridops::GridFunction;
use crate::numeric::{composite_gauss, sphere_area, sphere_fourier, CompensatedSum};

/// Dilation of the bump around each `b/L` in `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelScale {
    /// `hat zeta_{2L}`, as in the definition of `s`.
    Double,
    /// `hat zeta_L`.
    Single,
}

impl KernelScale {
    fn factor(&self, l: u64) -> f64 {
        match self {
            KernelScale::Double => 2.0 * l as f64,
            KernelScale::Single => l as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SKernel {
    pub l: u64,
    pub scale: KernelScale,
    #[serde(skip)]
    pub values: GridFunction,
    pub l1_mass: f64,
}

/// Radial profile with memoization on `|x|^2`.
struct RadialCache {
    n: usize,
    t: f64,
    memo: HashMap<i64, f64>,
}

impl RadialCache {
    fn new(n: usize, t: f64) -> Self {
        RadialCache {
            n,
            t,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, x: &[i64]) -> f64 {
        let r2: i64 = x.iter().map(|v| v * v).sum();
        let (n, t) = (self.n, self.t);
        *self
            .memo
            .entry(r2)
            .or_insert_with(|| Bump::ZETA.spatial_scaled(n, t, (r2 as f64).sqrt()))
    }
}

fn check_box(form: &IntegralForm, lo: &[i64], hi: &[i64]) -> Result<Vec<usize>> {
    if lo.len() != form.dim() || hi.len() != form.dim() || lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Err(Error::InvalidArgument("bad kernel box".into()));
    }
    Ok(lo.iter().zip(hi).map(|(a, b)| (b - a + 1) as usize).collect())
}

/// Closed form of the kernel of `s` on the box `[lo, hi]`:
/// `L zeta_t(x) 1_{R(x) = 0 mod L}` with `t` the bump dilation, which is
/// `zeta(x/L) L^{1-n} 1_{...}` for `t = L`.
pub fn kernel_of_s(form: &IntegralForm, l: u64, scale: KernelScale, lo: &[i64], hi: &[i64]) -> Result<SKernel> {
    if l == 0 {
        return Err(Error::InvalidArgument("L must be positive".into()));
    }
    let extents = check_box(form, lo, hi)?;
    let mut zeta = RadialCache::new(form.dim(), scale.factor(l));
    let mut xr = vec![0u64; form.dim()];
    let values = GridFunction::from_fn(lo.to_vec(), extents, |x| {
        for (r, v) in xr.iter_mut().zip(x) {
            *r = v.rem_euclid(l as i64) as u64;
        }
        if form.eval_mod(&xr, l) == 0 {
            Complex64::new(l as f64 * zeta.get(x), 0.0)
        } else {
            Complex64::default()
        }
    });
    let l1_mass = values.lp_norm(1.0);
    Ok(SKernel {
        l,
        scale,
        values,
        l1_mass,
    })
}

/// The same kernel from the double sum
/// `zeta_t(x) sum_{a in Z_L} sum_{b in Z_L^n} F_L(a,b) e(x.b/L)`.
pub fn kernel_of_s_oracle(
    form: &IntegralForm,
    l: u64,
    scale: KernelScale,
    lo: &[i64],
    hi: &[i64],
    budget: f64,
) -> Result<GridFunction> {
    let extents = check_box(form, lo, hi)?;
    let table = WeylTable::compute(form, l, preferred_method(form), budget)?;
    let mut zeta = RadialCache::new(form.dim(), scale.factor(l));
    Ok(GridFunction::from_fn(lo.to_vec(), extents, |x| table.inversion_lhs(x) * zeta.get(x)))
}

#[derive(Debug, Clone, Serialize)]
pub struct LowpassFit {
    pub t: f64,
    /// Sampled radii `|x|`.
    pub radii: Vec<f64>,
    /// `|zeta_t * d sigma|` at those radii.
    pub values: Vec<f64>,
    /// `max |zeta_t * d sigma(x)| t (1 + |x/t|)^{2n}` over the samples.
    pub fitted_k: f64,
}

/// `(zeta_t * d sigma)(x)` sampled on `|x| in radii` for a radial measure,
/// from the Hankel transform of `hat zeta(t rho) hat sigma(rho)`.
pub fn lowpass_decay(measure: &SurfaceMeasure, t: f64, radii: &[f64]) -> Result<LowpassFit> {
    let n = measure.dim();
    let values = lowpass_profile(measure, Bump::ZETA, t, radii)?;
    let fitted_k = radii
        .iter()
        .zip(&values)
        .map(|(&r, &v)| v * t * (1.0 + r / t).powi(2 * n as i32))
        .fold(0.0, f64::max);
    Ok(LowpassFit {
        t,
        radii: radii.to_vec(),
        values,
        fitted_k,
    })
}

/// `|(b_t * d sigma)(x)|` on `|x| in radii` for a radial measure and any
/// radial plateau `b`, where `hat b_t(xi) = hat b(t xi)`.
pub fn lowpass_profile(measure: &SurfaceMeasure, bump: Bump, t: f64, radii: &[f64]) -> Result<Vec<f64>> {
    if !measure.is_radial() {
        return Err(Error::Unsupported("the low-pass kernel scan needs a radial surface measure".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    let n = measure.dim();
    let top = bump.support(t);
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    // the integrand oscillates at frequency ~ (|x| + rho0) over [0, top]
    let panels = 32 + ((rmax + 2.0) * top * 2.0) as usize;
    let rule = composite_gauss(0.0, top, panels, 12);
    let profile: Vec<(f64, f64)> = rule
        .iter()
        .map(|&(rho, w)| (rho, w * bump.profile(t * rho) * measure.radial(rho).unwrap() * rho.powi(n as i32 - 1)))
        .collect();
    Ok(radii
        .iter()
        .map(|&r| {
            let acc: CompensatedSum = profile
                .iter()
                .map(|&(rho, w)| w * sphere_fourier(n, 2.0 * PI * r * rho))
                .collect();
            (sphere_area(n) * acc.value()).abs()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::DEFAULT_BUDGET;
    use crate::forms::Cutoff;
    use crate::multiplier::SurfaceMethod;

    #[test]
    fn closed_form_examples() {
        let f = IntegralForm::sphere(2);
        let k = kernel_of_s(&f, 2, KernelScale::Single, &[-3, -3], &[3, 3]).unwrap();
        // R(1,0) = 1 is odd
        assert_eq!(k.values.get(&[1, 0]).norm(), 0.0);
        // x = 0: zeta(0) / L^{n-1}
        let z0 = Bump::ZETA.spatial(2, 0.0);
        assert!((k.values.get(&[0, 0]).re - z0 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_double_sum() {
        let f = IntegralForm::sphere(2);
        for l in [2u64, 3] {
            for scale in [KernelScale::Single, KernelScale::Double] {
                let lo = [-(4 * l as i64); 2];
                let hi = [4 * l as i64; 2];
                let k = kernel_of_s(&f, l, scale, &lo, &hi).unwrap();
                let o = kernel_of_s_oracle(&f, l, scale, &lo, &hi, DEFAULT_BUDGET).unwrap();
                for (a, b) in k.values.values.iter().zip(&o.values) {
                    assert!((a - b).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn lowpass_is_smooth_sphere() {
        let m = SurfaceMeasure::new(&IntegralForm::sphere(3), &Cutoff::ConstantOne, SurfaceMethod::BesselSphere).unwrap();
        // at x = 0 the convolution is the pairing of hat zeta_t with hat sigma
        let fit = lowpass_decay(&m, 0.5, &[0.0, 1.0, 3.0]).unwrap();
        assert!(fit.values.iter().all(|v| v.is_finite()));
        assert!(fit.fitted_k > 0.0);
        assert!(lowpass_decay(&m, 0.0, &[1.0]).is_err());
    }
}
