//! Weighted lattice shells `{y in Z^n : R(y) = lambda}`, the counting function
//! and a regular-value scanner.

pub mod cache;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{integer_root, shell_box_radius, Cutoff, IntegralForm};
use crate::numeric::CompensatedSum;

pub use cache::ShellCache;

/// Default cap on the number of lattice points visited by an enumeration.
pub const DEFAULT_BOX_BUDGET: f64 = 2e9;

/// Points of a shell stored flat (`dim` coordinates per point), sorted
/// lexicographically, with their cutoff weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeShell {
    pub lambda: u64,
    pub dim: usize,
    pub points: Vec<i64>,
    pub weights: Vec<f64>,
    pub r_value: f64,
}

impl LatticeShell {
    pub fn from_parts(lambda: u64, dim: usize, points: Vec<i64>, weights: Vec<f64>) -> Self {
        let r_value = weights.iter().copied().collect::<CompensatedSum>().value();
        LatticeShell {
            lambda,
            dim,
            points,
            weights,
            r_value,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64], f64)> + '_ {
        self.points.chunks_exact(self.dim.max(1)).zip(self.weights.iter().copied())
    }

    /// Largest `|y|_inf` over the shell (0 when empty).
    pub fn max_inf_norm(&self) -> i64 {
        self.points.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Per-axis `(min, max)` of the coordinates.
    pub fn bounds(&self) -> Vec<(i64, i64)> {
        let mut b = vec![(i64::MAX, i64::MIN); self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for (k, &v) in p.iter().enumerate() {
                b[k].0 = b[k].0.min(v);
                b[k].1 = b[k].1.max(v);
            }
        }
        b
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions {
    /// Maximal number of candidate points examined.
    pub budget: f64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            budget: DEFAULT_BOX_BUDGET,
        }
    }
}

/// Bound `B` with the shell inside `[-B, B]^n`.
pub fn box_bound(form: &IntegralForm, phi: &Cutoff, lambda: u64) -> Result<i64> {
    let rho = shell_box_radius(form, phi)?;
    let scale = (lambda as f64).powf(1.0 / form.degree() as f64);
    Ok((rho * scale * (1.0 + 1e-12)).floor() as i64)
}

/// All `y` with `R(y) = lambda` and `phi(y / lambda^{1/d}) > 0`.
pub fn enumerate_shell(
    form: &IntegralForm,
    phi: &Cutoff,
    lambda: u64,
    opts: &EnumerationOptions,
) -> Result<LatticeShell> {
    if lambda == 0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let n = form.dim();
    let b = box_bound(form, phi, lambda)?;
    let side = (2 * b + 1) as f64;
    let plan = Plan::for_form(form);
    let cost = match plan {
        Plan::DiagonalSolve { .. } => side.powi(n as i32 - 1),
        Plan::Pruned { .. } | Plan::FullScan => side.powi(n as i32),
    };
    if cost > opts.budget {
        return Err(Error::budget("shell enumeration", cost, opts.budget));
    }
    let scale = (lambda as f64).powf(1.0 / form.degree() as f64);
    let target = lambda as i128;
    let slices: Vec<Vec<i64>> = (-b..=b)
        .into_par_iter()
        .map(|y0| {
            let mut out = Vec::new();
            let mut y = vec![0i64; n];
            y[0] = y0;
            walk(form, &plan, b, target, false, &mut y, 1, &mut out);
            out
        })
        .collect();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut xs = vec![0.0; n];
    for slice in slices {
        for p in slice.chunks_exact(n) {
            for (x, &v) in xs.iter_mut().zip(p) {
                *x = v as f64 / scale;
            }
            let w = phi.value(&xs);
            if w > 0.0 {
                points.extend_from_slice(p);
                weights.push(w);
            }
        }
    }
    Ok(LatticeShell::from_parts(lambda, n, points, weights))
}

/// Enumeration strategy derived from the monomial signs.
#[derive(Debug, Clone)]
enum Plan {
    /// `sum a_i x_i^d` with all `a_i > 0`, d even: prune and solve the last
    /// coordinate.
    DiagonalSolve { coeffs: Vec<i64>, degree: u32 },
    /// Positive coefficients, even exponents: monomials completed at depth k
    /// give a monotone partial sum.
    Pruned { completes_at: Vec<usize> },
    FullScan,
}

impl Plan {
    fn for_form(form: &IntegralForm) -> Plan {
        if form.is_positive_even() {
            if let Some(c) = form.diagonal_coefficients() {
                if c.iter().all(|&a| a > 0) {
                    return Plan::DiagonalSolve {
                        coeffs: c,
                        degree: form.degree(),
                    };
                }
            }
            let completes_at = form
                .monomials()
                .iter()
                .map(|m| {
                    m.exponents
                        .iter()
                        .rposition(|&e| e > 0)
                        .map(|i| i + 1)
                        .unwrap_or(0)
                })
                .collect();
            return Plan::Pruned { completes_at };
        }
        Plan::FullScan
    }
}

fn partial_value(form: &IntegralForm, completes_at: &[usize], y: &[i64], depth: usize) -> i128 {
    form.monomials()
        .iter()
        .zip(completes_at)
        .filter(|(_, &c)| c <= depth)
        .map(|(m, _)| {
            let mut t = m.coeff as i128;
            for (v, &e) in y.iter().zip(&m.exponents) {
                for _ in 0..e {
                    t *= *v as i128;
                }
            }
            t
        })
        .sum()
}

/// Depth-first walk over coordinates `depth..n`. With `at_most` the walk
/// emits every point with `R(y) <= target` instead of `R(y) = target`
/// (positive-even plans only).
#[allow(clippy::too_many_arguments)]
fn walk(
    form: &IntegralForm,
    plan: &Plan,
    b: i64,
    target: i128,
    at_most: bool,
    y: &mut Vec<i64>,
    depth: usize,
    out: &mut Vec<i64>,
) {
    let n = y.len();
    match plan {
        Plan::DiagonalSolve { coeffs, degree } => {
            let partial: i128 = (0..depth)
                .map(|i| coeffs[i] as i128 * (y[i] as i128).pow(*degree))
                .sum();
            if partial > target {
                return;
            }
            if depth == n {
                if at_most || partial == target {
                    out.extend_from_slice(y);
                }
                return;
            }
            let rest = target - partial;
            let a = coeffs[depth] as i128;
            if depth == n - 1 && !at_most {
                if rest % a != 0 {
                    return;
                }
                let v = rest / a;
                let t = integer_root(v as u64, *degree) as i64;
                if (t as i128).pow(*degree) != v || t > b {
                    return;
                }
                if t == 0 {
                    y[depth] = 0;
                    out.extend_from_slice(y);
                } else {
                    y[depth] = -t;
                    out.extend_from_slice(y);
                    y[depth] = t;
                    out.extend_from_slice(y);
                }
                return;
            }
            let reach = (integer_root((rest / a) as u64, *degree) as i64).min(b);
            for v in -reach..=reach {
                y[depth] = v;
                walk(form, plan, b, target, at_most, y, depth + 1, out);
            }
        }
        Plan::Pruned { completes_at } => {
            let partial = partial_value(form, completes_at, y, depth);
            if partial > target {
                return;
            }
            if depth == n {
                if at_most || partial == target {
                    out.extend_from_slice(y);
                }
                return;
            }
            for v in -b..=b {
                y[depth] = v;
                walk(form, plan, b, target, at_most, y, depth + 1, out);
            }
        }
        Plan::FullScan => {
            if depth == n {
                let v = form.eval_i128(y);
                if v == target || (at_most && v <= target) {
                    out.extend_from_slice(y);
                }
                return;
            }
            for v in -b..=b {
                y[depth] = v;
                walk(form, plan, b, target, at_most, y, depth + 1, out);
            }
        }
    }
}

/// An arithmetic progression `lambda = residue (mod modulus)` of flagged values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progression {
    pub modulus: u64,
    pub residue: u64,
    pub members: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularValueReport {
    pub lambdas: Vec<u64>,
    pub r_values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub flagged: Vec<bool>,
    pub band: (f64, f64),
    pub progressions: Vec<Progression>,
}

impl RegularValueReport {
    pub fn flagged_lambdas(&self) -> Vec<u64> {
        self.lambdas
            .iter()
            .zip(&self.flagged)
            .filter(|(_, &f)| f)
            .map(|(&l, _)| l)
            .collect()
    }

    pub fn ratio_at(&self, lambda: u64) -> Option<f64> {
        self.lambdas
            .iter()
            .position(|&l| l == lambda)
            .map(|i| self.ratios[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,r,ratio,flagged\n");
        for i in 0..self.lambdas.len() {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{}\n",
                self.lambdas[i], self.r_values[i], self.ratios[i], self.flagged[i]
            ));
        }
        s
    }
}

/// Counting function over `lo..=hi`.
///
/// Positive-even forms are handled in one pass over `{R(y) <= hi}`, binning
/// by value; other forms enumerate each shell separately.
pub fn counting_function(
    form: &IntegralForm,
    phi: &Cutoff,
    lo: u64,
    hi: u64,
    opts: &EnumerationOptions,
) -> Result<Vec<f64>> {
    if lo == 0 || hi < lo {
        return Err(Error::InvalidArgument(format!("bad lambda range {lo}:{hi}")));
    }
    let n = form.dim();
    let plan = Plan::for_form(form);
    if matches!(plan, Plan::FullScan) {
        return (lo..=hi)
            .map(|l| enumerate_shell(form, phi, l, opts).map(|s| s.r_value))
            .collect();
    }
    let b = box_bound(form, phi, hi)?;
    let cost = ((2 * b + 1) as f64).powi(n as i32);
    if cost > opts.budget {
        return Err(Error::budget("counting-function scan", cost, opts.budget));
    }
    let d = form.degree() as f64;
    let slices: Vec<Vec<CompensatedSum>> = (-b..=b)
        .into_par_iter()
        .map(|y0| {
            let mut pts = Vec::new();
            let mut y = vec![0i64; n];
            y[0] = y0;
            walk(form, &plan, b, hi as i128, true, &mut y, 1, &mut pts);
            let mut bins = vec![CompensatedSum::new(); (hi - lo + 1) as usize];
            let mut xs = vec![0.0; n];
            for p in pts.chunks_exact(n) {
                let v = form.eval_i128(p);
                if v < lo as i128 {
                    continue;
                }
                let scale = (v as f64).powf(1.0 / d);
                for (x, &c) in xs.iter_mut().zip(p) {
                    *x = c as f64 / scale;
                }
                let w = phi.value(&xs);
                if w > 0.0 {
                    bins[(v as u64 - lo) as usize].add(w);
                }
            }
            bins
        })
        .collect();
    // bins are combined slice by slice in ascending order
    let mut total = vec![0.0f64; (hi - lo + 1) as usize];
    let mut acc = vec![CompensatedSum::new(); total.len()];
    for s in &slices {
        for (a, v) in acc.iter_mut().zip(s) {
            a.add(v.value());
        }
    }
    for (t, a) in total.iter_mut().zip(&acc) {
        *t = a.value();
    }
    Ok(total)
}

/// Ratios `r(lambda) / lambda^{n/d - 1}` over a range, flags inside `band`,
/// and progressions of flagged values with modulus up to `max_modulus`.
pub fn scan_regular_values(
    form: &IntegralForm,
    phi: &Cutoff,
    lo: u64,
    hi: u64,
    band: (f64, f64),
    max_modulus: u64,
    opts: &EnumerationOptions,
) -> Result<RegularValueReport> {
    if !(band.0 > 0.0) || band.1 < band.0 {
        return Err(Error::InvalidArgument(format!("bad band {band:?}")));
    }
    let r_values = counting_function(form, phi, lo, hi, opts)?;
    let lambdas: Vec<u64> = (lo..=hi).collect();
    let exponent = form.dim() as f64 / form.degree() as f64 - 1.0;
    let ratios: Vec<f64> = lambdas
        .iter()
        .zip(&r_values)
        .map(|(&l, &r)| r / (l as f64).powf(exponent))
        .collect();
    let flagged: Vec<bool> = ratios.iter().map(|&x| x >= band.0 && x <= band.1).collect();
    let progressions = detect_progressions(&lambdas, &flagged, max_modulus);
    Ok(RegularValueReport {
        lambdas,
        r_values,
        ratios,
        flagged,
        band,
        progressions,
    })
}

/// Residue classes all of whose members in the range are flagged (at least
/// three members), skipping classes implied by one with a smaller modulus.
pub fn detect_progressions(lambdas: &[u64], flagged: &[bool], max_modulus: u64) -> Vec<Progression> {
    let mut found: Vec<Progression> = Vec::new();
    for m in 1..=max_modulus.max(1) {
        for c in 0..m {
            if found
                .iter()
                .any(|p| m % p.modulus == 0 && c % p.modulus == p.residue)
            {
                continue;
            }
            let mut members = 0;
            let mut all = true;
            for (l, &f) in lambdas.iter().zip(flagged) {
                if l % m == c {
                    members += 1;
                    all &= f;
                }
            }
            if all && members >= 3 {
                found.push(Progression {
                    modulus: m,
                    residue: c,
                    members,
                });
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(form: &IntegralForm, lambda: u64, b: i64) -> usize {
        let n = form.dim();
        let side = (2 * b + 1) as usize;
        let total = side.pow(n as u32);
        let mut y = vec![0i64; n];
        let mut count = 0;
        for idx in 0..total {
            let mut r = idx;
            for v in y.iter_mut() {
                *v = (r % side) as i64 - b;
                r /= side;
            }
            if form.eval_i128(&y) == lambda as i128 {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn sphere_examples() {
        let opts = EnumerationOptions::default();
        let s = enumerate_shell(&IntegralForm::sphere(4), &Cutoff::ConstantOne, 2, &opts).unwrap();
        assert_eq!(s.len(), 24);
        assert_eq!(s.r_value, 24.0);
        let s = enumerate_shell(&IntegralForm::sphere(5), &Cutoff::ConstantOne, 1, &opts).unwrap();
        assert_eq!(s.len(), 10);
        let s = enumerate_shell(&IntegralForm::sphere(3), &Cutoff::ConstantOne, 7, &opts).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.r_value, 0.0);
    }

    #[test]
    fn output_is_lexicographic() {
        let s = enumerate_shell(
            &IntegralForm::sphere(3),
            &Cutoff::ConstantOne,
            26,
            &EnumerationOptions::default(),
        )
        .unwrap();
        let pts: Vec<&[i64]> = s.iter().map(|(p, _)| p).collect();
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        for p in pts {
            assert_eq!(IntegralForm::sphere(3).eval_i128(p), 26);
        }
    }

    #[test]
    fn matches_brute_force_small() {
        let opts = EnumerationOptions::default();
        for n in 2..=4 {
            let f = IntegralForm::sphere(n);
            for lambda in 1..=50u64 {
                let s = enumerate_shell(&f, &Cutoff::ConstantOne, lambda, &opts).unwrap();
                let b = (lambda as f64).sqrt().floor() as i64;
                assert_eq!(s.len(), brute(&f, lambda, b), "n={n} lambda={lambda}");
                assert_eq!(s.r_value, s.len() as f64);
            }
        }
    }

    #[test]
    fn full_scan_for_indefinite_forms() {
        use crate::forms::Monomial;
        // x^2 - y^2 inside the box bump
        let f = IntegralForm::new(
            vec![
                Monomial { exponents: vec![2, 0], coeff: 1 },
                Monomial { exponents: vec![0, 2], coeff: -1 },
            ],
            2,
            2,
            None,
        )
        .unwrap();
        let phi = Cutoff::BoxIndicator { half_width: 3.0 };
        let s = enumerate_shell(&f, &phi, 4, &EnumerationOptions::default()).unwrap();
        // y in [-6, 6]^2 with x^2 - y^2 = 4: (+-2, 0)
        assert_eq!(s.len(), 2);
        let q = enumerate_shell(&f, &phi, 5, &EnumerationOptions::default()).unwrap();
        // (+-3, +-2)
        assert_eq!(q.len(), 4);
    }

    #[test]
    fn budget_refusal() {
        let opts = EnumerationOptions { budget: 100.0 };
        let err = enumerate_shell(&IntegralForm::sphere(5), &Cutoff::ConstantOne, 100, &opts).unwrap_err();
        assert_eq!(err.kind(), "budget");
    }

    #[test]
    fn counting_function_matches_shells() {
        let f = IntegralForm::sphere(4);
        let phi = Cutoff::SmoothBump { radius: 1.5 };
        let opts = EnumerationOptions::default();
        let r = counting_function(&f, &phi, 1, 40, &opts).unwrap();
        for (i, l) in (1..=40u64).enumerate() {
            let s = enumerate_shell(&f, &phi, l, &opts).unwrap();
            assert!((r[i] - s.r_value).abs() < 1e-12 * s.r_value.max(1.0));
        }
    }

    #[test]
    fn progression_detection() {
        let lambdas: Vec<u64> = (1..=30).collect();
        let flagged: Vec<bool> = lambdas.iter().map(|l| l % 4 != 0).collect();
        let p = detect_progressions(&lambdas, &flagged, 8);
        assert!(p.contains(&Progression { modulus: 2, residue: 1, members: 15 }));
        assert!(p.contains(&Progression { modulus: 4, residue: 2, members: 8 }));
        // implied by the odd class
        assert!(!p.iter().any(|x| x.modulus == 4 && x.residue == 1));
        assert!(p.iter().all(|x| x.modulus % 4 != 0 || x.residue % 4 != 0));
        let none = detect_progressions(&lambdas, &vec![false; 30], 8);
        assert!(none.is_empty());
    }
}
