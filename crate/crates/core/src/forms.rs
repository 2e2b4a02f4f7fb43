//! Integral forms, cutoff functions and the constants derived from the Birch
//! rank.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::halton;

/// A single term `coeff * x^exponents`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSource {
    Derived,
    /// Supplied by the caller and not checked.
    Declared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BirchRank {
    pub value: usize,
    pub source: RankSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankDerivation {
    Rank(usize),
    Undecidable,
}

/// A homogeneous polynomial with integer coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralForm {
    monomials: Vec<Monomial>,
    degree: u32,
    dim: usize,
    birch_rank: Option<BirchRank>,
    label: Option<String>,
}

impl IntegralForm {
    /// Build a form, merging equal monomials and dropping zero terms.
    ///
    /// When the Birch rank can be derived it is, and a conflicting declared
    /// rank is an error. Otherwise a declared rank is kept and tagged.
    pub fn new(
        monomials: Vec<Monomial>,
        degree: u32,
        dim: usize,
        declared_rank: Option<usize>,
    ) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidForm(format!("degree must exceed 1, got {degree}")));
        }
        if dim == 0 {
            return Err(Error::InvalidForm("dimension must be positive".into()));
        }
        let mut merged: Vec<Monomial> = Vec::new();
        for m in monomials {
            if m.exponents.len() != dim {
                return Err(Error::InvalidForm(format!(
                    "monomial {:?} has {} exponents, dimension is {dim}",
                    m.exponents,
                    m.exponents.len()
                )));
            }
            let total: u32 = m.exponents.iter().sum();
            if total != degree {
                return Err(Error::InvalidForm(format!(
                    "monomial {:?} has total degree {total}, form is not homogeneous of degree {degree}",
                    m.exponents
                )));
            }
            match merged.iter_mut().find(|x| x.exponents == m.exponents) {
                Some(x) => {
                    x.coeff = x
                        .coeff
                        .checked_add(m.coeff)
                        .ok_or_else(|| Error::InvalidForm("coefficient overflow".into()))?
                }
                None => merged.push(m),
            }
        }
        merged.retain(|m| m.coeff != 0);
        if merged.is_empty() {
            return Err(Error::InvalidForm("all coefficients are zero".into()));
        }
        merged.sort();
        let mut form = IntegralForm {
            monomials: merged,
            degree,
            dim,
            birch_rank: None,
            label: None,
        };
        match (form.derive_birch_rank(), declared_rank) {
            (RankDerivation::Rank(r), None) => {
                form.birch_rank = Some(BirchRank { value: r, source: RankSource::Derived })
            }
            (RankDerivation::Rank(r), Some(decl)) => {
                if r != decl {
                    return Err(Error::InvalidForm(format!(
                        "declared Birch rank {decl} contradicts derived rank {r}"
                    )));
                }
                form.birch_rank = Some(BirchRank { value: r, source: RankSource::Derived });
            }
            (RankDerivation::Undecidable, Some(decl)) => {
                if decl == 0 || decl > dim {
                    return Err(Error::InvalidForm(format!(
                        "declared Birch rank {decl} outside 1..={dim}"
                    )));
                }
                form.birch_rank = Some(BirchRank { value: decl, source: RankSource::Declared });
            }
            (RankDerivation::Undecidable, None) => {}
        }
        Ok(form)
    }

    /// `sum_i x_i^2` in n variables.
    pub fn sphere(n: usize) -> Self {
        let mut f = Self::kpowers(n, 2);
        f.label = Some(format!("sphere-{n}"));
        f
    }

    /// `sum_i x_i^d` in n variables.
    pub fn kpowers(n: usize, d: u32) -> Self {
        let monomials = (0..n)
            .map(|i| {
                let mut e = vec![0; n];
                e[i] = d;
                Monomial { exponents: e, coeff: 1 }
            })
            .collect();
        let mut f = Self::new(monomials, d, n, None).expect("power-sum form is valid");
        f.label = Some(format!("kpowers-{n}-{d}"));
        f
    }

    /// `sum_i x_i^3` in n variables.
    pub fn cubes(n: usize) -> Self {
        let mut f = Self::kpowers(n, 3);
        f.label = Some(format!("cubes-{n}"));
        f
    }

    /// Diagonal form `sum_i a_i x_i^d`.
    pub fn diagonal(coeffs: &[i64], d: u32) -> Result<Self> {
        let n = coeffs.len();
        let monomials = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut e = vec![0; n];
                e[i] = d;
                Monomial { exponents: e, coeff: c }
            })
            .collect();
        Self::new(monomials, d, n, None)
    }

    /// Parse a preset name (`sphere-5`, `kpowers-4-3`, `cubes-2`).
    pub fn preset(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split('-').collect();
        let num = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {s:?} in preset {name:?}")))
        };
        let f = match parts.as_slice() {
            ["sphere", n] => Self::sphere(num(n)?.max(1)),
            ["cubes", n] => Self::cubes(num(n)?.max(1)),
            ["kpowers", n, d] => {
                let d = num(d)? as u32;
                if d < 2 {
                    return Err(Error::InvalidForm("degree must exceed 1".into()));
                }
                Self::kpowers(num(n)?.max(1), d)
            }
            _ => return Err(Error::InvalidArgument(format!("unknown form preset {name:?}"))),
        };
        if num(parts[1])? == 0 {
            return Err(Error::InvalidForm("dimension must be positive".into()));
        }
        Ok(f)
    }

    /// A preset name, or a path to a JSON form description.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if spec.ends_with(".json") || path.is_file() {
            Self::load_json(path)
        } else {
            Self::preset(spec)
        }
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: FormFile = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut f = file.into_form()?;
        f.label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        Ok(f)
    }

    pub fn to_file(&self) -> FormFile {
        FormFile {
            monomials: self
                .monomials
                .iter()
                .map(|m| (m.exponents.clone(), m.coeff))
                .collect(),
            degree: self.degree,
            dimension: self.dim,
            birch_rank: self.birch_rank.map(|b| b.value),
        }
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn birch_rank(&self) -> Option<BirchRank> {
        self.birch_rank
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.canonical())
    }

    /// Canonical text used for hashing: sorted monomials, degree and dimension.
    pub fn canonical(&self) -> String {
        let terms: Vec<String> = self
            .monomials
            .iter()
            .map(|m| {
                let e: Vec<String> = m.exponents.iter().map(|x| x.to_string()).collect();
                format!("{}*[{}]", m.coeff, e.join(","))
            })
            .collect();
        format!("n={};d={};{}", self.dim, self.degree, terms.join("+"))
    }

    /// Coefficients `a_i` when the form is `sum_i a_i x_i^d` (zero for absent
    /// variables).
    pub fn diagonal_coefficients(&self) -> Option<Vec<i64>> {
        let mut coeffs = vec![0i64; self.dim];
        for m in &self.monomials {
            let nz: Vec<usize> = (0..self.dim).filter(|&i| m.exponents[i] > 0).collect();
            if nz.len() != 1 {
                return None;
            }
            coeffs[nz[0]] = m.coeff;
        }
        Some(coeffs)
    }

    /// True when every coefficient is positive and every exponent even, so the
    /// form restricted to any coordinate subset is a sum of nonnegative terms.
    pub fn is_positive_even(&self) -> bool {
        self.monomials
            .iter()
            .all(|m| m.coeff > 0 && m.exponents.iter().all(|e| e % 2 == 0))
    }

    /// Even-degree diagonal form with one common positive coefficient; such a
    /// form is invariant under signed permutations of the coordinates.
    pub fn is_symmetric_diagonal(&self) -> bool {
        match self.diagonal_coefficients() {
            Some(c) => {
                self.degree % 2 == 0 && c[0] > 0 && c.iter().all(|&x| x == c[0])
            }
            None => false,
        }
    }

    /// `a |x|^2` for some positive integer a.
    pub fn isotropic_quadratic_coefficient(&self) -> Option<i64> {
        if self.degree == 2 && self.is_symmetric_diagonal() {
            self.diagonal_coefficients().map(|c| c[0])
        } else {
            None
        }
    }

    pub fn eval_i128(&self, x: &[i64]) -> i128 {
        let mut total = 0i128;
        for m in &self.monomials {
            let mut t = m.coeff as i128;
            for (xi, &e) in x.iter().zip(&m.exponents) {
                for _ in 0..e {
                    t *= *xi as i128;
                }
            }
            total += t;
        }
        total
    }

    /// `R(x) mod q` for nonnegative residues `x`.
    pub fn eval_mod(&self, x: &[u64], q: u64) -> u64 {
        let q128 = q as u128;
        let mut total = 0u128;
        for m in &self.monomials {
            let c = (m.coeff.rem_euclid(q as i64)) as u128;
            let mut t = c;
            for (xi, &e) in x.iter().zip(&m.exponents) {
                for _ in 0..e {
                    t = t * (*xi as u128 % q128) % q128;
                }
            }
            total = (total + t) % q128;
        }
        total as u64
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.monomials
            .iter()
            .map(|m| {
                let mut t = m.coeff as f64;
                for (xi, &e) in x.iter().zip(&m.exponents) {
                    t *= xi.powi(e as i32);
                }
                t
            })
            .sum()
    }

    pub fn gradient_f64(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for m in &self.monomials {
            for (j, gj) in g.iter_mut().enumerate() {
                let ej = m.exponents[j];
                if ej == 0 {
                    continue;
                }
                let mut t = m.coeff as f64 * ej as f64;
                for (i, (xi, &e)) in x.iter().zip(&m.exponents).enumerate() {
                    let p = if i == j { e - 1 } else { e };
                    t *= xi.powi(p as i32);
                }
                *gj += t;
            }
        }
        g
    }

    /// Birch rank `n - dim V(R)` where it can be computed without elimination
    /// theory: quadratic forms (rank of the Gram matrix over Q) and diagonal
    /// forms (number of variables present).
    pub fn derive_birch_rank(&self) -> RankDerivation {
        if self.degree == 2 {
            let n = self.dim;
            let mut a = vec![vec![Ratio::<i128>::zero(); n]; n];
            for m in &self.monomials {
                let idx: Vec<usize> = (0..n).filter(|&i| m.exponents[i] > 0).collect();
                let c = Ratio::from_integer(m.coeff as i128);
                if idx.len() == 1 {
                    a[idx[0]][idx[0]] = c * Ratio::from_integer(2);
                } else {
                    a[idx[0]][idx[1]] = c;
                    a[idx[1]][idx[0]] = c;
                }
            }
            return RankDerivation::Rank(rational_rank(a));
        }
        match self.diagonal_coefficients() {
            Some(c) => RankDerivation::Rank(c.iter().filter(|&&x| x != 0).count()),
            None => RankDerivation::Undecidable,
        }
    }

    pub fn constants(&self) -> Result<FormConstants> {
        let b = self
            .birch_rank
            .ok_or_else(|| Error::InvalidForm("Birch rank is undecidable and was not declared".into()))?;
        Ok(FormConstants::from_rank(b.value, self.degree))
    }

    /// Search `supp(phi)` for a nonsingular real solution of `R(x) = 1`.
    pub fn probe_phi_regularity(&self, phi: &Cutoff, samples: usize) -> Regularity {
        let Some(b) = self.birch_rank else {
            return Regularity::RankTooSmall;
        };
        let threshold = (self.degree as usize - 1) << self.degree;
        if b.value <= threshold {
            return Regularity::RankTooSmall;
        }
        let box_radius = phi.support_inf_radius().unwrap_or(2.0);
        let n = self.dim;
        for s in 0..samples.max(1) {
            let mut x: Vec<f64> = (0..n)
                .map(|k| box_radius * (2.0 * halton(s as u64 + 1, k) - 1.0))
                .collect();
            for _ in 0..200 {
                let r = self.eval_f64(&x) - 1.0;
                let g = self.gradient_f64(&x);
                let g2: f64 = g.iter().map(|v| v * v).sum();
                if g2 < 1e-24 {
                    break;
                }
                // damped minimum-norm Newton step for the scalar equation
                let mut step = 1.0;
                let norm_now = r.abs();
                let mut accepted = false;
                while step > 1e-6 {
                    let trial: Vec<f64> = x
                        .iter()
                        .zip(&g)
                        .map(|(xi, gi)| xi - step * r * gi / g2)
                        .collect();
                    if (self.eval_f64(&trial) - 1.0).abs() < norm_now {
                        x = trial;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted || (self.eval_f64(&x) - 1.0).abs() < 1e-13 {
                    break;
                }
            }
            let residual = (self.eval_f64(&x) - 1.0).abs();
            let gnorm: f64 = self.gradient_f64(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
            if residual < 1e-10 && gnorm > 1e-8 && phi.value(&x) > 0.0 {
                return Regularity::Regular { witness: x };
            }
        }
        Regularity::NoNonsingularSolutionFound
    }
}

impl fmt::Display for IntegralForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

fn rational_rank(mut a: Vec<Vec<Ratio<i128>>>) -> usize {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, pivot);
        let p = a[rank][col];
        for r in 0..rows {
            if r != rank && !a[r][col].is_zero() {
                let factor = a[r][col] / p;
                for c in col..cols {
                    let v = a[rank][c] * factor;
                    a[r][c] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// On-disk JSON description of a form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormFile {
    pub monomials: Vec<(Vec<u32>, i64)>,
    pub degree: u32,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birch_rank: Option<usize>,
}

impl FormFile {
    pub fn into_form(self) -> Result<IntegralForm> {
        let monomials = self
            .monomials
            .into_iter()
            .map(|(exponents, coeff)| Monomial { exponents, coeff })
            .collect();
        IntegralForm::new(monomials, self.degree, self.dimension, self.birch_rank)
    }
}

/// Exact constants `c_R`, `eta_R` and `d * eta_R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormConstants {
    pub birch_rank: usize,
    pub degree: u32,
    pub c: Ratio<i64>,
    pub eta: Ratio<i64>,
    pub d_eta: Ratio<i64>,
}

impl FormConstants {
    pub fn from_rank(b: usize, d: u32) -> Self {
        let c = Ratio::new(b as i64, (d as i64 - 1) << (d - 1));
        let eta = (c / 2 - Ratio::one()) / (6 * d as i64);
        FormConstants {
            birch_rank: b,
            degree: d,
            c,
            eta,
            d_eta: eta * d as i64,
        }
    }

    /// `c_R > 2`, the necessary condition attached to regularity.
    pub fn c_exceeds_two(&self) -> bool {
        self.c > Ratio::from_integer(2)
    }

    /// `d * eta_R < c_R - 2`, checked exactly.
    pub fn gap_holds(&self) -> bool {
        self.d_eta < self.c - 2
    }

    pub fn c_f64(&self) -> f64 {
        ratio_f64(self.c)
    }

    pub fn eta_f64(&self) -> f64 {
        ratio_f64(self.eta)
    }

    pub fn d_eta_f64(&self) -> f64 {
        ratio_f64(self.d_eta)
    }
}

pub fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn ratio_string(r: Ratio<i64>) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Regularity {
    Regular { witness: Vec<f64> },
    RankTooSmall,
    /// The search failed; this does not prove the form irregular.
    NoNonsingularSolutionFound,
}

/// The cutoff `phi` weighting the shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cutoff {
    /// `exp(1 - 1/(1 - |x/r|^2))` on `|x| < r`.
    SmoothBump { radius: f64 },
    /// Indicator of the closed box `|x_i| <= h`.
    BoxIndicator { half_width: f64 },
    ConstantOne,
}

impl Cutoff {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Cutoff::SmoothBump { radius } => {
                let t: f64 = x.iter().map(|v| v * v).sum::<f64>() / (radius * radius);
                if t >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - t)).exp()
                }
            }
            Cutoff::BoxIndicator { half_width } => {
                if x.iter().all(|v| v.abs() <= half_width) {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::ConstantOne => 1.0,
        }
    }

    /// Radius of an l-infinity box containing the support, if compact.
    pub fn support_inf_radius(&self) -> Option<f64> {
        match *self {
            Cutoff::SmoothBump { radius } => Some(radius),
            Cutoff::BoxIndicator { half_width } => Some(half_width),
            Cutoff::ConstantOne => None,
        }
    }

    /// Radial profile `phi(x) = h(|x|)` when phi is radial.
    pub fn radial_profile(&self, r: f64) -> Option<f64> {
        match *self {
            Cutoff::SmoothBump { radius } => {
                let t = r * r / (radius * radius);
                Some(if t >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - t)).exp() })
            }
            Cutoff::ConstantOne => Some(1.0),
            Cutoff::BoxIndicator { .. } => None,
        }
    }

    pub fn descriptor(&self) -> String {
        match *self {
            Cutoff::SmoothBump { radius } => format!("bump:{radius:?}"),
            Cutoff::BoxIndicator { half_width } => format!("box:{half_width:?}"),
            Cutoff::ConstantOne => "one".into(),
        }
    }

    /// Parse `one`, `bump:R` or `box:H`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad cutoff {s:?}; expected one, bump:R or box:H"));
        if s == "one" {
            return Ok(Cutoff::ConstantOne);
        }
        let (kind, val) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = val.parse().map_err(|_| bad())?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad());
        }
        match kind {
            "bump" => Ok(Cutoff::SmoothBump { radius: v }),
            "box" => Ok(Cutoff::BoxIndicator { half_width: v }),
            _ => Err(bad()),
        }
    }
}

/// l-infinity radius `rho` such that `{R(y) = lambda, phi(y/lambda^{1/d}) > 0}`
/// lies in `|y_i| <= rho * lambda^{1/d}`.
///
/// For the constant cutoff this needs a positive definite diagonal form.
pub fn shell_box_radius(form: &IntegralForm, phi: &Cutoff) -> Result<f64> {
    if let Some(r) = phi.support_inf_radius() {
        return Ok(r);
    }
    match form.diagonal_coefficients() {
        Some(c) if form.degree() % 2 == 0 && c.iter().all(|&a| a > 0) => {
            let amin = *c.iter().min().unwrap() as f64;
            Ok(amin.powf(-1.0 / form.degree() as f64))
        }
        _ => Err(Error::Unsupported(
            "the constant cutoff needs a positive definite even diagonal form to bound the shell".into(),
        )),
    }
}

/// Integer part of `lambda^{1/d}`, computed exactly.
pub fn integer_root(lambda: u64, d: u32) -> u64 {
    let mut r = (lambda as f64).powf(1.0 / d as f64).round() as u64;
    let pow = |x: u64| -> Option<u64> { (0..d).try_fold(1u64, |acc, _| acc.checked_mul(x)) };
    while r > 0 && pow(r).is_none_or(|p| p > lambda) {
        r -= 1;
    }
    while pow(r + 1).is_some_and(|p| p <= lambda) {
        r += 1;
    }
    r
}
