use std::f64::consts::PI;

use serde::Serialize;

use crate::numeric::{composite_gauss, smooth_step_down, sphere_area, sphere_fourier, CompensatedSum};

/// Radial Fourier-side plateau: `hat(xi) = 1` for `|xi| <= inner`, `0` for
/// `|xi| >= outer`, smooth and monotone in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub inner: f64,
    pub outer: f64,
}

impl Bump {
    /// The bump `zeta` with plateau radius 1/2 and support radius 1.
    pub const ZETA: Bump = Bump { inner: 0.5, outer: 1.0 };
    /// The low-pass `psi` with plateau radius 1 and support radius 2.
    pub const PSI: Bump = Bump { inner: 1.0, outer: 2.0 };

    pub fn profile(&self, r: f64) -> f64 {
        smooth_step_down((r - self.inner) / (self.outer - self.inner))
    }

    /// `hat_t(xi) = hat(t xi)`.
    pub fn hat(&self, t: f64, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        self.profile(t * r2.sqrt())
    }

    /// Support radius of `hat_t`.
    pub fn support(&self, t: f64) -> f64 {
        self.outer / t
    }

    /// Spatial profile `zeta(x)` on R^n at `|x| = r`: the inverse Fourier
    /// transform of the radial plateau, by Gauss-Legendre quadrature of the
    /// Hankel integral.
    pub fn spatial(&self, n: usize, r: f64) -> f64 {
        let panels = 16 + (r * self.outer * 4.0) as usize;
        let mut acc = CompensatedSum::new();
        for (rho, w) in composite_gauss(0.0, self.outer, panels, 12) {
            let h = self.profile(rho);
            if h == 0.0 {
                continue;
            }
            acc.add(w * h * rho.powi(n as i32 - 1) * sphere_fourier(n, 2.0 * PI * r * rho));
        }
        sphere_area(n) * acc.value()
    }

    /// `zeta_t(x) = t^{-n} zeta(x / t)`, the inverse transform of `hat_t`.
    pub fn spatial_scaled(&self, n: usize, t: f64, r: f64) -> f64 {
        t.powi(-(n as i32)) * self.spatial(n, r / t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let z = Bump::ZETA;
        for i in 0..=100 {
            let r = i as f64 * 0.015;
            let v = z.profile(r);
            assert!((0.0..=1.0).contains(&v));
            if r <= 0.5 {
                assert_eq!(v, 1.0);
            }
            if r >= 1.0 {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(z.hat(4.0, &[0.1, 0.0]), 1.0);
        assert_eq!(z.hat(4.0, &[0.25, 0.1]), 0.0);
        assert_eq!(Bump::PSI.profile(1.0), 1.0);
        assert_eq!(Bump::PSI.profile(2.0), 0.0);
    }

    #[test]
    fn spatial_transform_inverts() {
        // zeta(0) equals the integral of the plateau over R^n
        let z = Bump::ZETA;
        for n in [1usize, 2, 3] {
            let direct: f64 = composite_gauss(0.0, 1.0, 64, 12)
                .into_iter()
                .map(|(r, w)| w * z.profile(r) * r.powi(n as i32 - 1))
                .sum::<f64>()
                * sphere_area(n);
            assert!((z.spatial(n, 0.0) - direct).abs() < 1e-12);
        }
        // in one dimension compare with a cosine transform on a fine rule
        for x in [0.3, 1.7, 4.2] {
            let oracle: f64 = composite_gauss(-1.0, 1.0, 400, 8)
                .into_iter()
                .map(|(t, w)| w * z.profile(t.abs()) * (2.0 * PI * x * t).cos())
                .sum();
            assert!((z.spatial(1, x) - oracle).abs() < 1e-10, "x={x}");
        }
    }
}
