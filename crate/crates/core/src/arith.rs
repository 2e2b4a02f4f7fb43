//! Complete exponential sums of a form, their inversion identity, congruence
//! counts and the divisor bookkeeping used by the multiplier pieces.
//!
//! `F_q(a, b) = q^{-n} sum_{m in Z_q^n} e((a R(m) + m.b) / q)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft;
use crate::forms::IntegralForm;
use crate::numeric::{roots_of_unity, ComplexSum};

/// Default cap on `q^n` style work.
pub const DEFAULT_BUDGET: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeylMethod {
    /// Literal summation over `Z_q^n` for each entry.
    Direct,
    /// One inverse n-dimensional DFT of `m -> e(a R(m)/q)` per `a`.
    Dft,
    /// Product of one-dimensional sums (diagonal forms only).
    Factorized,
}

/// Residues `R(m) mod q` for every `m in Z_q^n`, row-major.
pub fn form_residues(form: &IntegralForm, q: u64) -> Vec<u32> {
    let n = form.dim();
    let qs = q as usize;
    let total = qs.pow(n as u32);
    let d = form.degree() as usize;
    let mut pw = vec![0u64; qs * (d + 1)];
    for v in 0..qs {
        let mut p = 1 % q;
        for e in 0..=d {
            pw[v * (d + 1) + e] = p;
            p = p * v as u64 % q;
        }
    }
    let monos: Vec<(u64, Vec<u32>)> = form
        .monomials()
        .iter()
        .map(|m| (m.coeff.rem_euclid(q as i64) as u64, m.exponents.clone()))
        .collect();
    let mut out = vec![0u32; total];
    let mut idx = vec![0usize; n];
    for (flat, slot) in out.iter_mut().enumerate() {
        fft::unravel(flat, &vec![qs; n], &mut idx);
        let mut acc = 0u64;
        for (c, e) in &monos {
            let mut t = *c;
            for (k, &ek) in e.iter().enumerate() {
                if ek > 0 {
                    t = t * pw[idx[k] * (d + 1) + ek as usize] % q;
                }
            }
            acc += t;
        }
        *slot = (acc % q) as u32;
    }
    out
}

/// Single value by literal summation.
pub fn weyl_sum(form: &IntegralForm, q: u64, a: u64, b: &[u64], budget: f64) -> Result<Complex64> {
    check_args(form, q, a, b)?;
    let n = form.dim();
    let cost = (q as f64).powi(n as i32);
    if cost > budget {
        return Err(Error::budget("direct Weyl sum", cost, budget));
    }
    let roots = roots_of_unity(q);
    let residues = form_residues(form, q);
    Ok(direct_entry(&residues, &roots, q, n, a, b))
}

fn check_args(form: &IntegralForm, q: u64, a: u64, b: &[u64]) -> Result<()> {
    if q == 0 {
        return Err(Error::InvalidArgument("modulus must be positive".into()));
    }
    if a >= q || b.len() != form.dim() || b.iter().any(|&x| x >= q) {
        return Err(Error::InvalidArgument(format!(
            "need a in [0,{q}) and b in [0,{q})^{}",
            form.dim()
        )));
    }
    Ok(())
}

fn direct_entry(residues: &[u32], roots: &[Complex64], q: u64, n: usize, a: u64, b: &[u64]) -> Complex64 {
    let qs = q as usize;
    let mut idx = vec![0usize; n];
    let shape = vec![qs; n];
    let mut acc = ComplexSum::new();
    for (flat, &r) in residues.iter().enumerate() {
        fft::unravel(flat, &shape, &mut idx);
        let mut phase = a * r as u64 % q;
        for (m, bk) in idx.iter().zip(b) {
            phase += *m as u64 * bk % q;
        }
        acc.add(roots[(phase % q) as usize]);
    }
    acc.value() / (q as f64).powi(n as i32)
}

/// One-dimensional factor `q^{-1} sum_m e((a c m^d + m b)/q)` for all b.
fn factor_slice(coeff: i64, degree: u32, q: u64, a: u64, roots: &[Complex64]) -> Vec<Complex64> {
    let qs = q as usize;
    let c = coeff.rem_euclid(q as i64) as u64;
    let base: Vec<u64> = (0..q)
        .map(|m| {
            let mut p = 1 % q;
            for _ in 0..degree {
                p = p * m % q;
            }
            a * (c * p % q) % q
        })
        .collect();
    (0..qs)
        .map(|b| {
            let mut acc = ComplexSum::new();
            for (m, &r) in base.iter().enumerate() {
                acc.add(roots[((r + m as u64 * b as u64) % q) as usize]);
            }
            acc.value() / q as f64
        })
        .collect()
}

/// The whole slice `b -> F_q(a, b)` over `Z_q^n`, row-major in b.
pub fn weyl_slice(form: &IntegralForm, q: u64, a: u64, method: WeylMethod) -> Result<Vec<Complex64>> {
    if q == 0 || a >= q {
        return Err(Error::InvalidArgument(format!("need q > 0 and a in [0,{q})")));
    }
    let n = form.dim();
    let qs = q as usize;
    let roots = roots_of_unity(q);
    match method {
        WeylMethod::Factorized => {
            let coeffs = form.diagonal_coefficients().ok_or_else(|| {
                Error::Unsupported("factorized Weyl sums need a diagonal form".into())
            })?;
            let factors: Vec<Vec<Complex64>> = coeffs
                .iter()
                .map(|&c| factor_slice(c, form.degree(), q, a, &roots))
                .collect();
            let total = qs.pow(n as u32);
            let mut out = vec![Complex64::new(1.0, 0.0); total];
            let mut idx = vec![0usize; n];
            let shape = vec![qs; n];
            for (flat, v) in out.iter_mut().enumerate() {
                fft::unravel(flat, &shape, &mut idx);
                for (k, f) in factors.iter().enumerate() {
                    *v *= f[idx[k]];
                }
            }
            Ok(out)
        }
        WeylMethod::Dft => {
            let residues = form_residues(form, q);
            let mut data: Vec<Complex64> = residues
                .iter()
                .map(|&r| roots[(a * r as u64 % q) as usize])
                .collect();
            fft::fft_nd(&mut data, &vec![qs; n], rustfft::FftDirection::Inverse);
            let scale = 1.0 / (q as f64).powi(n as i32);
            for v in data.iter_mut() {
                *v *= scale;
            }
            Ok(data)
        }
        WeylMethod::Direct => {
            let residues = form_residues(form, q);
            let total = qs.pow(n as u32);
            let shape = vec![qs; n];
            Ok((0..total)
                .into_par_iter()
                .map(|flat| {
                    let mut b = vec![0usize; n];
                    fft::unravel(flat, &shape, &mut b);
                    let b: Vec<u64> = b.into_iter().map(|x| x as u64).collect();
                    direct_entry(&residues, &roots, q, n, a, &b)
                })
                .collect())
        }
    }
}

/// Fastest exact method available for the form.
pub fn preferred_method(form: &IntegralForm) -> WeylMethod {
    if form.diagonal_coefficients().is_some() {
        WeylMethod::Factorized
    } else {
        WeylMethod::Dft
    }
}

/// All values `F_q(a, b)`, stored a-major then b row-major.
#[derive(Debug, Clone)]
pub struct WeylTable {
    pub q: u64,
    pub dim: usize,
    pub method: WeylMethod,
    values: Vec<Complex64>,
}

impl WeylTable {
    pub fn compute(form: &IntegralForm, q: u64, method: WeylMethod, budget: f64) -> Result<Self> {
        let n = form.dim();
        let entries = (q as f64).powi(n as i32 + 1);
        let cost = match method {
            WeylMethod::Direct => entries * (q as f64).powi(n as i32),
            _ => entries,
        };
        if cost > budget {
            return Err(Error::budget(format!("Weyl table q={q}"), cost, budget));
        }
        let slices: Vec<Vec<Complex64>> = (0..q)
            .into_par_iter()
            .map(|a| weyl_slice(form, q, a, method))
            .collect::<Result<_>>()?;
        Ok(WeylTable {
            q,
            dim: n,
            method,
            values: slices.concat(),
        })
    }

    pub fn slice_len(&self) -> usize {
        (self.q as usize).pow(self.dim as u32)
    }

    pub fn slice(&self, a: u64) -> &[Complex64] {
        let len = self.slice_len();
        &self.values[a as usize * len..(a as usize + 1) * len]
    }

    pub fn get(&self, a: u64, b: &[u64]) -> Complex64 {
        self.slice(a)[b_index(b, self.q)]
    }

    /// `sum_{a in Z_L} sum_{b in Z_L^n} F_L(a,b) e(x.b/L)`.
    pub fn inversion_lhs(&self, x: &[i64]) -> Complex64 {
        let q = self.q;
        let qs = q as usize;
        let roots = roots_of_unity(q);
        let shape = vec![qs; self.dim];
        let xr: Vec<u64> = x.iter().map(|v| v.rem_euclid(q as i64) as u64).collect();
        let twiddle: Vec<Complex64> = {
            let mut b = vec![0usize; self.dim];
            (0..self.slice_len())
                .map(|flat| {
                    fft::unravel(flat, &shape, &mut b);
                    let phase: u64 = b.iter().zip(&xr).map(|(bk, xk)| *bk as u64 * xk % q).sum();
                    roots[(phase % q) as usize]
                })
                .collect()
        };
        let mut acc = ComplexSum::new();
        for a in 0..q {
            for (v, t) in self.slice(a).iter().zip(&twiddle) {
                acc.add(v * t);
            }
        }
        acc.value()
    }
}

pub fn b_index(b: &[u64], q: u64) -> usize {
    b.iter().fold(0usize, |acc, &v| acc * q as usize + v as usize)
}

/// Units `U_q` (with the convention `U_1 = {0}`).
pub fn units(q: u64) -> Vec<u64> {
    if q == 1 {
        return vec![0];
    }
    (1..q).filter(|a| a.gcd(&q) == 1).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionCheck {
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs: f64,
}

impl InversionCheck {
    pub fn error(&self) -> f64 {
        Complex64::new(self.lhs_re - self.rhs, self.lhs_im).norm()
    }
}

/// Both sides of `sum_a sum_b F_L(a,b) e(x.b/L) = L 1_{R(x) = 0 mod L}`.
pub fn weyl_inversion_check(form: &IntegralForm, l: u64, x: &[i64], budget: f64) -> Result<InversionCheck> {
    let table = WeylTable::compute(form, l, WeylMethod::Dft, budget)?;
    Ok(inversion_from_table(form, &table, x))
}

pub fn inversion_from_table(form: &IntegralForm, table: &WeylTable, x: &[i64]) -> InversionCheck {
    let l = table.q;
    let lhs = table.inversion_lhs(x);
    let hit = form.eval_i128(x).rem_euclid(l as i128) == 0;
    InversionCheck {
        lhs_re: lhs.re,
        lhs_im: lhs.im,
        rhs: if hit { l as f64 } else { 0.0 },
    }
}

/// `L^{1-n} #{x in Z_L^n : R(x) = 0 mod L}`.
pub fn congruence_count(form: &IntegralForm, l: u64, budget: f64) -> Result<f64> {
    if l == 0 {
        return Err(Error::InvalidArgument("L must be positive".into()));
    }
    let n = form.dim();
    let cost = (l as f64).powi(n as i32);
    if cost > budget {
        return Err(Error::budget("congruence count", cost, budget));
    }
    let zeros = form_residues(form, l).iter().filter(|&&r| r == 0).count();
    Ok(zeros as f64 / (l as f64).powi(n as i32 - 1))
}

/// Reduced fraction `a/L = num/q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Fraction {
    pub a: u64,
    pub num: u64,
    pub q: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivisorSplit {
    pub l: u64,
    pub n_cut: u64,
    /// Fractions with denominator `q <= N`.
    pub low: Vec<Fraction>,
    /// Fractions with `q > N` (necessarily `q | L`).
    pub high: Vec<Fraction>,
    /// Class size per denominator.
    pub sizes: BTreeMap<u64, usize>,
}

impl DivisorSplit {
    pub fn size_of(&self, q: u64) -> usize {
        self.sizes.get(&q).copied().unwrap_or(0)
    }
}

/// Map each `a in Z_L` to `(a/nu)/(L/nu)` with `nu = gcd(a, L)` and split by
/// whether the denominator is at most N.
pub fn divisor_split(l: u64, n_cut: u64) -> Result<DivisorSplit> {
    if l == 0 || n_cut > l {
        return Err(Error::InvalidArgument(format!("need 0 < N <= L, got N={n_cut}, L={l}")));
    }
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut sizes = BTreeMap::new();
    for a in 0..l {
        let nu = a.gcd(&l);
        let f = Fraction { a, num: a / nu, q: l / nu };
        *sizes.entry(f.q).or_insert(0) += 1;
        if f.q <= n_cut {
            low.push(f);
        } else {
            high.push(f);
        }
    }
    Ok(DivisorSplit { l, n_cut, low, high, sizes })
}

/// `gcd(a, b_1, ..., b_n, L)`.
pub fn tuple_gcd(a: u64, b: &[u64], l: u64) -> u64 {
    b.iter().fold(a.gcd(&l), |g, &x| g.gcd(&x))
}

pub fn factorial(n: u64) -> Option<u64> {
    (1..=n).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylDecayReport {
    pub c: f64,
    pub qs: Vec<u64>,
    /// `max |F_q(a,b)|` over `(a,q) = 1` and all b.
    pub maxima: Vec<f64>,
    /// `M(q) q^{c}`.
    pub scaled: Vec<f64>,
    /// Least-squares slope of `log M(q)` against `log q` over prime q.
    pub prime_slope: f64,
    pub bound: f64,
    pub violations: Vec<u64>,
}

/// `max_b |F_q(a, b)|` over units a.
pub fn weyl_unit_max(form: &IntegralForm, q: u64, budget: f64) -> Result<f64> {
    let n = form.dim();
    let method = preferred_method(form);
    if method != WeylMethod::Factorized && (q as f64).powi(n as i32) > budget {
        return Err(Error::budget(format!("Weyl slice q={q}"), (q as f64).powi(n as i32), budget));
    }
    let maxima: Vec<f64> = units(q)
        .into_par_iter()
        .map(|a| -> Result<f64> {
            if let (WeylMethod::Factorized, Some(coeffs)) = (method, form.diagonal_coefficients()) {
                // the sup of a product of independent factors is the product of sups
                let roots = roots_of_unity(q);
                Ok(coeffs
                    .iter()
                    .map(|&c| {
                        factor_slice(c, form.degree(), q, a, &roots)
                            .iter()
                            .map(|z| z.norm())
                            .fold(0.0, f64::max)
                    })
                    .product())
            } else {
                Ok(weyl_slice(form, q, a, method)?
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

pub fn is_prime(q: u64) -> bool {
    q >= 2 && (2..).take_while(|p| p * p <= q).all(|p| q % p != 0)
}

/// Per-modulus maxima for `2 <= q <= q_max` and the fitted decay over primes.
pub fn weyl_decay_scan(form: &IntegralForm, q_max: u64, bound: f64, budget: f64) -> Result<WeylDecayReport> {
    if q_max < 2 {
        return Err(Error::InvalidArgument("q_max must be at least 2".into()));
    }
    let c = form.constants()?.c_f64();
    let qs: Vec<u64> = (2..=q_max).collect();
    let maxima = qs
        .iter()
        .map(|&q| weyl_unit_max(form, q, budget))
        .collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = qs.iter().zip(&maxima).map(|(&q, &m)| m * (q as f64).powf(c)).collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = qs
        .iter()
        .zip(&maxima)
        .filter(|(&q, &m)| is_prime(q) && m > 0.0)
        .map(|(&q, &m)| ((q as f64).ln(), m.ln()))
        .unzip();
    let prime_slope = if lx.len() >= 2 {
        crate::numeric::least_squares_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    let violations = qs
        .iter()
        .zip(&scaled)
        .filter(|(_, &s)| s > bound)
        .map(|(&q, _)| q)
        .collect();
    Ok(WeylDecayReport {
        c,
        qs,
        maxima,
        scaled,
        prime_slope,
        bound,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::Monomial;
    use approx::assert_relative_eq;

    fn square() -> IntegralForm {
        IntegralForm::new(vec![Monomial { exponents: vec![2], coeff: 1 }], 2, 1, None).unwrap()
    }

    #[test]
    fn trivial_values() {
        let f = IntegralForm::sphere(3);
        assert_relative_eq!(weyl_sum(&f, 1, 0, &[0, 0, 0], 1e8).unwrap().re, 1.0);
        assert!((weyl_sum(&f, 5, 0, &[0, 0, 0], 1e8).unwrap() - 1.0).norm() < 1e-12);
        assert!(weyl_sum(&f, 5, 0, &[1, 0, 3], 1e8).unwrap().norm() < 1e-12);
    }

    #[test]
    fn gauss_sum_mod_three() {
        let z = weyl_sum(&square(), 3, 1, &[0], 1e8).unwrap();
        assert!((z - Complex64::new(0.0, 1.0 / 3f64.sqrt())).norm() < 1e-12);
    }

    #[test]
    fn q_two_vanishes_for_sphere() {
        let z = weyl_sum(&IntegralForm::sphere(5), 2, 1, &[0; 5], 1e8).unwrap();
        assert!(z.norm() < 1e-12);
    }

    #[test]
    fn methods_agree() {
        let mixed = IntegralForm::new(
            vec![
                Monomial { exponents: vec![2, 0, 0], coeff: 1 },
                Monomial { exponents: vec![1, 1, 0], coeff: 3 },
                Monomial { exponents: vec![0, 1, 1], coeff: -2 },
            ],
            2,
            3,
            None,
        )
        .unwrap();
        for form in [IntegralForm::sphere(3), IntegralForm::cubes(2), mixed] {
            for q in 1..=8u64 {
                let t_dir = WeylTable::compute(&form, q, WeylMethod::Direct, 1e9).unwrap();
                let t_dft = WeylTable::compute(&form, q, WeylMethod::Dft, 1e9).unwrap();
                for a in 0..q {
                    for (x, y) in t_dir.slice(a).iter().zip(t_dft.slice(a)) {
                        assert!((x - y).norm() < 1e-10, "q={q}");
                        assert!(x.norm() <= 1.0 + 1e-12);
                    }
                }
                if form.diagonal_coefficients().is_some() {
                    let t_fac = WeylTable::compute(&form, q, WeylMethod::Factorized, 1e9).unwrap();
                    for a in 0..q {
                        for (x, y) in t_dir.slice(a).iter().zip(t_fac.slice(a)) {
                            assert!((x - y).norm() < 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn multiplicativity_over_coprime_moduli() {
        let f = IntegralForm::sphere(2);
        for (q1, q2) in [(3u64, 4u64), (5, 3), (4, 5)] {
            let q = q1 * q2;
            for a in units(q) {
                let whole = weyl_sum(&f, q, a, &[0, 0], 1e8).unwrap().norm();
                let a1 = a * q2 % q1;
                let a2 = a * q1 % q2;
                let p = weyl_sum(&f, q1, a1, &[0, 0], 1e8).unwrap().norm()
                    * weyl_sum(&f, q2, a2, &[0, 0], 1e8).unwrap().norm();
                assert!((whole - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inversion_examples() {
        let r = weyl_inversion_check(&square(), 2, &[1], 1e8).unwrap();
        assert!(r.error() < 1e-12 && r.rhs == 0.0);
        let r = weyl_inversion_check(&square(), 2, &[0], 1e8).unwrap();
        assert!(r.error() < 1e-12 && r.rhs == 2.0);
        let r = weyl_inversion_check(&IntegralForm::sphere(3), 1, &[4, -2, 7], 1e8).unwrap();
        assert!((r.lhs_re - 1.0).abs() < 1e-12 && r.rhs == 1.0);
    }

    #[test]
    fn congruence_examples() {
        assert_relative_eq!(congruence_count(&IntegralForm::sphere(4), 2, 1e8).unwrap(), 1.0);
        assert_relative_eq!(congruence_count(&IntegralForm::cubes(3), 1, 1e8).unwrap(), 1.0);
        for l in [2u64, 3, 4, 6] {
            assert!(congruence_count(&IntegralForm::sphere(5), l, 1e8).unwrap() <= 4.0);
        }
    }

    #[test]
    fn divisor_split_examples() {
        let s = divisor_split(6, 2).unwrap();
        let low: Vec<(u64, u64)> = s.low.iter().map(|f| (f.num, f.q)).collect();
        assert_eq!(low, vec![(0, 1), (1, 2)]);
        assert!(s.high.iter().all(|f| f.q == 3 || f.q == 6));
        let s = divisor_split(24, 3).unwrap();
        assert_eq!((s.size_of(1), s.size_of(2), s.size_of(3)), (1, 1, 2));
        assert_eq!(s.high.len(), 20);
        assert_eq!(s.sizes.values().sum::<usize>(), 24);
        for n in 1..=5 {
            let l = factorial(n).unwrap();
            assert!((1..=n).all(|q| l % q == 0));
        }
        assert_eq!(tuple_gcd(4, &[6, 8], 12), 2);
        assert_eq!(tuple_gcd(0, &[0, 0], 12), 12);
    }

    #[test]
    fn decay_scan_odd_primes() {
        let r = weyl_decay_scan(&IntegralForm::sphere(5), 13, 2.0, 1e8).unwrap();
        for (&q, &s) in r.qs.iter().zip(&r.scaled) {
            if is_prime(q) && q > 2 {
                assert!((s - 1.0).abs() < 1e-9, "q={q} s={s}");
            }
        }
        assert!(r.maxima.iter().all(|&m| m <= 1.0 + 1e-12));
    }
}
