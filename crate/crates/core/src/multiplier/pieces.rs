use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;

use super::bump::Bump;
use super::grid::{Layout, MultiplierGrid, TorusGrid};
use super::surface::SurfaceMeasure;
use crate::arith::{self, b_index, preferred_method, units, weyl_slice};
use crate::error::{Error, Result};
use crate::fft;
use crate::forms::{integer_root, Cutoff, IntegralForm};
use crate::lattice::{enumerate_shell, EnumerationOptions, LatticeShell};
use crate::numeric::{e, roots_of_unity};

/// The named multiplier pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Piece {
    /// The exact multiplier of the average.
    W,
    /// Main term.
    C,
    M11,
    M12,
    M21,
    M22,
    M23,
    /// `Omega - sum_{q <= N} ...`, the variant built on the modulus L.
    M22k,
    M221,
    M222,
    Omega,
    V,
    S,
}

impl Piece {
    pub const ALL: [Piece; 13] = [
        Piece::W,
        Piece::C,
        Piece::M11,
        Piece::M12,
        Piece::M21,
        Piece::M22,
        Piece::M23,
        Piece::M22k,
        Piece::M221,
        Piece::M222,
        Piece::Omega,
        Piece::V,
        Piece::S,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Piece::W => "w",
            Piece::C => "c",
            Piece::M11 => "m11",
            Piece::M12 => "m12",
            Piece::M21 => "m21",
            Piece::M22 => "m22",
            Piece::M23 => "m23",
            Piece::M22k => "m22k",
            Piece::M221 => "m221",
            Piece::M222 => "m222",
            Piece::Omega => "omega",
            Piece::V => "v",
            Piece::S => "s",
        }
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Piece {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Piece::ALL
            .iter()
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown piece {s:?}")))
    }
}

/// Form, cutoff and surface measure shared by all pieces.
#[derive(Debug, Clone)]
pub struct MultiplierContext {
    pub form: IntegralForm,
    pub phi: Cutoff,
    pub measure: SurfaceMeasure,
    pub budget: f64,
}

impl MultiplierContext {
    pub fn new(form: IntegralForm, phi: Cutoff, budget: f64) -> Result<Self> {
        let measure = SurfaceMeasure::auto(&form, &phi)?;
        Ok(MultiplierContext {
            form,
            phi,
            measure,
            budget,
        })
    }

    pub fn with_measure(form: IntegralForm, phi: Cutoff, measure: SurfaceMeasure, budget: f64) -> Self {
        MultiplierContext {
            form,
            phi,
            measure,
            budget,
        }
    }

    /// Orbit layout when the form is invariant under signed permutations
    /// (every supported cutoff is), dense otherwise.
    pub fn grid(&self, g: usize) -> Result<TorusGrid> {
        let layout = if self.form.is_symmetric_diagonal() {
            Layout::Orbit
        } else {
            Layout::Dense
        };
        TorusGrid::new(g, self.form.dim(), layout, self.budget)
    }

    pub fn shell(&self, lambda: u64) -> Result<LatticeShell> {
        let shell = enumerate_shell(&self.form, &self.phi, lambda, &EnumerationOptions::default())?;
        if shell.is_empty() {
            return Err(Error::NotRepresented(lambda));
        }
        Ok(shell)
    }

    /// Data for the decomposition at `lambda` with cut `N` and modulus `L`
    /// (default `N!`).
    pub fn decomposition(&self, lambda: u64, n_cut: u64, modulus: Option<u64>) -> Result<Decomposition<'_>> {
        let shell = self.shell(lambda)?;
        Decomposition::new(self, shell, n_cut, modulus)
    }
}

/// `hat sigma_lambda`-free data of one `(lambda, N, L)` choice.
pub struct Decomposition<'a> {
    ctx: &'a MultiplierContext,
    pub lambda: u64,
    pub shell: LatticeShell,
    /// `lambda^{1/d}` as a real number.
    pub root: f64,
    /// Largest q in the main term, `floor(lambda^{1/d})`.
    pub q_max: u64,
    pub n_cut: u64,
    pub modulus: u64,
    /// `lambda^{n/d - 1} / r(lambda)`, turning the main term into an
    /// approximation of the normalized multiplier.
    pub kappa: f64,
    /// Include `e_q(-a lambda)` in the pieces built on the modulus L.
    pub twist: bool,
    cache: Mutex<HashMap<(u64, u8), Arc<Vec<Complex64>>>>,
    nu_cache: Mutex<Option<Arc<NuTables>>>,
}

/// Per `nu | L`, the table `b' -> sum_{gcd(a, nu b', L) = nu} F_L(a, nu b')`
/// over `Z_{L/nu}^n`, and the full sum `b -> sum_a F_L(a, b)`.
struct NuTables {
    by_nu: BTreeMap<u64, Vec<Complex64>>,
    full: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy)]
enum Window {
    /// `hat zeta_t`.
    Bump(f64),
    /// `hat zeta_s - hat zeta_t`.
    Diff(f64, f64),
}

impl Window {
    fn support(&self) -> f64 {
        match *self {
            Window::Bump(t) => Bump::ZETA.support(t),
            Window::Diff(s, t) => Bump::ZETA.support(s).max(Bump::ZETA.support(t)),
        }
    }

    fn value(&self, r: f64) -> f64 {
        match *self {
            Window::Bump(t) => Bump::ZETA.profile(t * r),
            Window::Diff(s, t) => Bump::ZETA.profile(s * r) - Bump::ZETA.profile(t * r),
        }
    }
}

/// `sum_{b in Z^n} table(b mod q) window(xi - b/q) [kappa hat sigma(root (xi - b/q))]`.
struct Term<'t> {
    q: u64,
    table: Option<&'t [Complex64]>,
    window: Window,
    surface: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub checked: usize,
    /// Samples where some `hat zeta_L(. - b1/L)` overlaps
    /// `hat zeta_{2L}(. - b2/L)` with `b1 != b2`.
    pub excluded: usize,
    /// `max |Omega - v s|` over the checked samples.
    pub max_residual: f64,
    /// `max |Omega - v s|` over the excluded samples.
    pub max_excluded_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailBound {
    /// `kappa sup|hat sigma| sum_{N<q<=Q} 2^n max_b |sum_{a in U_q} e_q(-a lambda) F_q(a,b)|`.
    pub rigorous: f64,
    /// `sum_{N<q<=Q} q^{1-c}`.
    pub heuristic: f64,
}

const UNIT_TWISTED: u8 = 0;
const UNIT_PLAIN: u8 = 1;

impl<'a> Decomposition<'a> {
    pub fn new(ctx: &'a MultiplierContext, shell: LatticeShell, n_cut: u64, modulus: Option<u64>) -> Result<Self> {
        if n_cut == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if shell.is_empty() || shell.r_value <= 0.0 {
            return Err(Error::NotRepresented(shell.lambda));
        }
        let modulus = match modulus {
            Some(l) => l,
            None => arith::factorial(n_cut).ok_or_else(|| Error::InvalidArgument(format!("{n_cut}! overflows")))?,
        };
        let lcm = (1..=n_cut).fold(1u64, |acc, q| acc.lcm(&q));
        if modulus == 0 || modulus % lcm != 0 {
            return Err(Error::InvalidArgument(format!(
                "L = {modulus} is not divisible by every q <= N = {n_cut}"
            )));
        }
        let d = ctx.form.degree();
        let n = ctx.form.dim() as f64;
        let lambda = shell.lambda;
        let kappa = (lambda as f64).powf(n / d as f64 - 1.0) / shell.r_value;
        Ok(Decomposition {
            ctx,
            lambda,
            root: (lambda as f64).powf(1.0 / d as f64),
            q_max: integer_root(lambda, d),
            n_cut,
            modulus,
            kappa,
            twist: false,
            shell,
            cache: Mutex::new(HashMap::new()),
            nu_cache: Mutex::new(None),
        })
    }

    pub fn with_twist(mut self, twist: bool) -> Self {
        self.twist = twist;
        self.nu_cache = Mutex::new(None);
        self
    }

    pub fn context(&self) -> &MultiplierContext {
        self.ctx
    }

    /// `b -> sum_{a in U_q} [e_q(-a lambda)] F_q(a, b)`.
    fn unit_table(&self, q: u64, twisted: bool) -> Result<Arc<Vec<Complex64>>> {
        let key = (q, if twisted { UNIT_TWISTED } else { UNIT_PLAIN });
        if let Some(t) = self.cache.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let n = self.ctx.form.dim();
        let us = units(q);
        let cost = (q as f64).powi(n as i32) * us.len() as f64;
        if cost > self.ctx.budget {
            return Err(Error::budget(format!("unit-sum table q={q}"), cost, self.ctx.budget));
        }
        let method = preferred_method(&self.ctx.form);
        let slices: Vec<(u64, Vec<Complex64>)> = us
            .par_iter()
            .map(|&a| weyl_slice(&self.ctx.form, q, a, method).map(|s| (a, s)))
            .collect::<Result<_>>()?;
        let mut table = vec![Complex64::default(); (q as usize).pow(n as u32)];
        for (a, s) in slices {
            let tw = if twisted { twist_factor(a, self.lambda, q) } else { Complex64::new(1.0, 0.0) };
            for (t, v) in table.iter_mut().zip(&s) {
                *t += v * tw;
            }
        }
        let table = Arc::new(table);
        self.cache.lock().unwrap().insert(key, table.clone());
        Ok(table)
    }

    fn nu_tables(&self) -> Result<Arc<NuTables>> {
        if let Some(t) = self.nu_cache.lock().unwrap().as_ref() {
            return Ok(t.clone());
        }
        let l = self.modulus;
        let n = self.ctx.form.dim();
        let ls = l as usize;
        let cost = (l as f64).powi(n as i32 + 1);
        if cost > self.ctx.budget {
            return Err(Error::budget(format!("Weyl sums modulo L={l}"), cost, self.ctx.budget));
        }
        let total = ls.pow(n as u32);
        let shape = vec![ls; n];
        let mut b = vec![0usize; n];
        let gcd_b: Vec<u64> = (0..total)
            .map(|flat| {
                fft::unravel(flat, &shape, &mut b);
                b.iter().fold(l, |g, &x| g.gcd(&(x as u64)))
            })
            .collect();
        let method = preferred_method(&self.ctx.form);
        let mut by_nu: BTreeMap<u64, Vec<Complex64>> = BTreeMap::new();
        for nu in (1..=l).filter(|v| l % v == 0) {
            by_nu.insert(nu, vec![Complex64::default(); ((l / nu) as usize).pow(n as u32)]);
        }
        let mut full = vec![Complex64::default(); total];
        for a in 0..l {
            let slice = weyl_slice(&self.ctx.form, l, a, method)?;
            let tw = if self.twist { twist_factor(a, self.lambda, l) } else { Complex64::new(1.0, 0.0) };
            for (flat, v) in slice.iter().enumerate() {
                let v = v * tw;
                full[flat] += v;
                let nu = a.gcd(&gcd_b[flat]);
                let q = l / nu;
                fft::unravel(flat, &shape, &mut b);
                let reduced: Vec<u64> = b.iter().map(|&x| x as u64 / nu).collect();
                by_nu.get_mut(&nu).unwrap()[b_index(&reduced, q)] += v;
            }
        }
        let t = Arc::new(NuTables { by_nu, full });
        *self.nu_cache.lock().unwrap() = Some(t.clone());
        Ok(t)
    }

    fn main_terms<'t>(&self, tables: &'t [(u64, Arc<Vec<Complex64>>)], window: impl Fn(u64) -> Window) -> Vec<Term<'t>> {
        tables
            .iter()
            .map(|(q, t)| Term {
                q: *q,
                table: Some(&t[..]),
                window: window(*q),
                surface: true,
            })
            .collect()
    }

    fn tables(&self, qs: impl Iterator<Item = u64>, twisted: bool) -> Result<Vec<(u64, Arc<Vec<Complex64>>)>> {
        qs.map(|q| self.unit_table(q, twisted).map(|t| (q, t))).collect()
    }

    /// Sample one piece on the grid.
    pub fn piece(&self, piece: Piece, grid: &TorusGrid) -> Result<MultiplierGrid> {
        if grid.dim != self.ctx.form.dim() {
            return Err(Error::InvalidArgument("grid and form dimensions differ".into()));
        }
        let n_cut = self.n_cut;
        let root = self.root;
        let nf = n_cut as f64;
        let values = match piece {
            Piece::W => exact_multiplier(&self.shell, grid),
            Piece::M11 => {
                if root <= nf {
                    exact_multiplier(&self.shell, grid)
                } else {
                    vec![Complex64::default(); grid.len()]
                }
            }
            Piece::C => {
                let t = self.tables(1..=self.q_max, true)?;
                self.evaluate(&self.main_terms(&t, |q| Window::Bump(q as f64)), grid)?
            }
            Piece::M12 => {
                let t = self.tables(1..=n_cut.min(self.q_max), true)?;
                self.evaluate(&self.main_terms(&t, |q| Window::Bump(q as f64 * root / nf)), grid)?
            }
            Piece::M22 => {
                let t = self.tables(1..=n_cut.min(self.q_max), true)?;
                self.evaluate(
                    &self.main_terms(&t, |q| Window::Diff(q as f64, q as f64 * root / nf)),
                    grid,
                )?
            }
            Piece::M23 => {
                let t = self.tables(n_cut + 1..=self.q_max, true)?;
                self.evaluate(&self.main_terms(&t, |q| Window::Bump(q as f64)), grid)?
            }
            Piece::M21 => {
                let w = exact_multiplier(&self.shell, grid);
                let c = self.piece(Piece::C, grid)?;
                w.iter().zip(&c.values).map(|(a, b)| a - b).collect()
            }
            Piece::Omega | Piece::S => {
                let nu = self.nu_tables()?;
                let term = Term {
                    q: self.modulus,
                    table: Some(&nu.full),
                    window: Window::Bump(2.0 * self.modulus as f64),
                    surface: piece == Piece::Omega,
                };
                self.evaluate(&[term], grid)?
            }
            Piece::V => {
                let term = Term {
                    q: self.modulus,
                    table: None,
                    window: Window::Bump(self.modulus as f64),
                    surface: true,
                };
                self.evaluate(&[term], grid)?
            }
            Piece::M22k => {
                let omega = self.piece(Piece::Omega, grid)?;
                let t = self.tables(1..=n_cut, self.twist)?;
                let low = self.evaluate(&self.main_terms(&t, |q| Window::Bump(q as f64)), grid)?;
                omega.values.iter().zip(&low).map(|(a, b)| a - b).collect()
            }
            Piece::M221 | Piece::M222 => {
                let nu = self.nu_tables()?;
                let l = self.modulus;
                let terms: Vec<Term> = nu
                    .by_nu
                    .iter()
                    .filter(|(v, _)| (l / **v <= n_cut) == (piece == Piece::M221))
                    .map(|(v, t)| {
                        let q = l / v;
                        Term {
                            q,
                            table: Some(&t[..]),
                            window: if piece == Piece::M221 {
                                Window::Diff(2.0 * l as f64, q as f64)
                            } else {
                                Window::Bump(2.0 * l as f64)
                            },
                            surface: true,
                        }
                    })
                    .collect();
                self.evaluate(&terms, grid)?
            }
        };
        Ok(MultiplierGrid::new(piece.name(), grid.clone(), values))
    }

    fn evaluate(&self, terms: &[Term], grid: &TorusGrid) -> Result<Vec<Complex64>> {
        let n = grid.dim;
        let measure = &self.ctx.measure;
        if !measure.is_radial() && terms.iter().any(|t| t.surface) {
            let nodes = measure.nodes().map(|(_, w)| w.len()).unwrap_or(1) as f64;
            let cost = grid.len() as f64 * terms.len() as f64 * 2f64.powi(n as i32) * nodes;
            if cost > self.ctx.budget * 100.0 {
                return Err(Error::budget("surface transforms on the grid", cost, self.ctx.budget * 100.0));
            }
        }
        let kappa = self.kappa;
        let root = self.root;
        let out = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let xi = grid.point(i);
                let mut acc = Complex64::default();
                let mut eta = vec![0.0; n];
                let mut scaled = vec![0.0; n];
                let mut b = vec![0i64; n];
                for term in terms {
                    let q = term.q as i64;
                    let qf = term.q as f64;
                    let rho = term.window.support();
                    let lo: Vec<i64> = xi.iter().map(|x| ((x - rho) * qf).ceil() as i64).collect();
                    let hi: Vec<i64> = xi.iter().map(|x| ((x + rho) * qf).floor() as i64).collect();
                    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
                        continue;
                    }
                    b.copy_from_slice(&lo);
                    'combos: loop {
                        let mut r2 = 0.0;
                        for k in 0..n {
                            eta[k] = xi[k] - b[k] as f64 / qf;
                            r2 += eta[k] * eta[k];
                        }
                        if r2 < rho * rho {
                            let r = r2.sqrt();
                            let w = term.window.value(r);
                            if w != 0.0 {
                                let coef = match term.table {
                                    Some(t) => {
                                        let idx = b.iter().fold(0usize, |acc, &v| acc * q as usize + v.rem_euclid(q) as usize);
                                        t[idx]
                                    }
                                    None => Complex64::new(1.0, 0.0),
                                };
                                let mut v = coef * w;
                                if term.surface {
                                    let s = match measure.radial(root * r) {
                                        Some(s) => Complex64::new(s, 0.0),
                                        None => {
                                            for k in 0..n {
                                                scaled[k] = root * eta[k];
                                            }
                                            measure.eval(&scaled)
                                        }
                                    };
                                    v *= s * kappa;
                                }
                                acc += v;
                            }
                        }
                        // odometer over the candidate box
                        let mut k = n;
                        loop {
                            if k == 0 {
                                break 'combos;
                            }
                            k -= 1;
                            if b[k] < hi[k] {
                                b[k] += 1;
                                for j in k + 1..n {
                                    b[j] = lo[j];
                                }
                                break;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        Ok(out)
    }

    /// Compare `Omega` with `v s` sample by sample, separating the samples
    /// where the bumps around different `b/L` overlap.
    pub fn factorization_check(&self, grid: &TorusGrid) -> Result<FactorizationReport> {
        let omega = self.piece(Piece::Omega, grid)?;
        let v = self.piece(Piece::V, grid)?;
        let s = self.piece(Piece::S, grid)?;
        let l = self.modulus as f64;
        let mut report = FactorizationReport {
            checked: 0,
            excluded: 0,
            max_residual: 0.0,
            max_excluded_residual: 0.0,
        };
        for i in 0..grid.len() {
            let xi = grid.point(i);
            let narrow = bump_centres(&xi, l, Window::Bump(2.0 * l));
            let wide = bump_centres(&xi, l, Window::Bump(l));
            let residual = (omega.values[i] - v.values[i] * s.values[i]).norm();
            if narrow > 0 && wide > 1 {
                report.excluded += 1;
                report.max_excluded_residual = report.max_excluded_residual.max(residual);
            } else {
                report.checked += 1;
                report.max_residual = report.max_residual.max(residual);
            }
        }
        Ok(report)
    }

    /// Bounds for `sup |m23|`.
    pub fn m23_tail_bound(&self) -> Result<TailBound> {
        let n = self.ctx.form.dim();
        let c = self.ctx.form.constants()?.c_f64();
        let mut rigorous = 0.0;
        let mut heuristic = 0.0;
        for q in self.n_cut + 1..=self.q_max {
            let t = self.unit_table(q, true)?;
            rigorous += 2f64.powi(n as i32) * t.iter().map(|v| v.norm()).fold(0.0, f64::max);
            heuristic += (q as f64).powf(1.0 - c);
        }
        Ok(TailBound {
            rigorous: rigorous * self.kappa * self.ctx.measure.total_mass().abs(),
            heuristic,
        })
    }
}

/// Number of `b in Z^n` with `window(xi - b/l) != 0`.
fn bump_centres(xi: &[f64], l: f64, window: Window) -> usize {
    let rho = window.support();
    let n = xi.len();
    let lo: Vec<i64> = xi.iter().map(|x| ((x - rho) * l).ceil() as i64).collect();
    let hi: Vec<i64> = xi.iter().map(|x| ((x + rho) * l).floor() as i64).collect();
    if lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return 0;
    }
    let mut b = lo.clone();
    let mut count = 0;
    loop {
        let r = xi.iter().zip(&b).map(|(x, &v)| (x - v as f64 / l).powi(2)).sum::<f64>().sqrt();
        if window.value(r) != 0.0 {
            count += 1;
        }
        let mut k = n;
        loop {
            if k == 0 {
                return count;
            }
            k -= 1;
            if b[k] < hi[k] {
                b[k] += 1;
                for j in k + 1..n {
                    b[j] = lo[j];
                }
                break;
            }
        }
    }
}

fn twist_factor(a: u64, lambda: u64, q: u64) -> Complex64 {
    let roots = roots_of_unity(q);
    let k = (a as u128 * lambda as u128 % q as u128) as u64;
    roots[((q - k) % q) as usize]
}

/// `hat w(xi) = r^{-1} sum_y phi(y / lambda^{1/d}) e(-y.xi)` at one point.
pub fn exact_multiplier_at(shell: &LatticeShell, xi: &[f64]) -> Complex64 {
    let mut acc = crate::numeric::ComplexSum::new();
    for (y, w) in shell.iter() {
        let phase: f64 = y.iter().zip(xi).map(|(a, b)| *a as f64 * b).sum();
        acc.add(e(-phase) * w);
    }
    acc.value() / shell.r_value
}

/// `hat w` on every sample of the grid: folded onto `Z_G^n` and transformed
/// for the dense layout, summed with per-axis phase tables otherwise.
pub fn exact_multiplier(shell: &LatticeShell, grid: &TorusGrid) -> Vec<Complex64> {
    let n = grid.dim;
    let g = grid.g;
    let c = ((g - 1) / 2) as i64;
    let inv_r = 1.0 / shell.r_value;
    let roots = roots_of_unity(g as u64);
    match grid.layout {
        Layout::Dense => {
            // e(-y.(j - c)/G) = e(y.c/G) e(-y.j/G)
            let mut data = vec![Complex64::default(); g.pow(n as u32)];
            for (y, w) in shell.iter() {
                let mut idx = 0usize;
                let mut shift = 0i64;
                for &v in y {
                    let r = v.rem_euclid(g as i64);
                    idx = idx * g + r as usize;
                    shift += r * c;
                }
                data[idx] += roots[shift.rem_euclid(g as i64) as usize] * (w * inv_r);
            }
            fft::forward(&mut data, &vec![g; n]);
            data
        }
        Layout::Orbit => {
            let bounds = shell.bounds();
            let lo = bounds.iter().map(|b| b.0).min().unwrap_or(0);
            let hi = bounds.iter().map(|b| b.1).max().unwrap_or(0);
            let span = (hi - lo + 1) as usize;
            // phase[(y - lo) * g + j] = e(-y (j - c) / G)
            let mut phase = vec![Complex64::default(); span * g];
            for y in lo..=hi {
                for j in 0..g {
                    let k = (y * (j as i64 - c)).rem_euclid(g as i64) as usize;
                    phase[(y - lo) as usize * g + j] = roots[(g - k) % g];
                }
            }
            let pts: Vec<(Vec<usize>, f64)> = shell
                .iter()
                .map(|(y, w)| (y.iter().map(|&v| (v - lo) as usize * g).collect(), w * inv_r))
                .collect();
            (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let j = grid.index(i);
                    let mut acc = crate::numeric::ComplexSum::new();
                    for (offs, w) in &pts {
                        let mut z = Complex64::new(*w, 0.0);
                        for k in 0..n {
                            z *= phase[offs[k] + j[k] as usize];
                        }
                        acc.add(z);
                    }
                    acc.value()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{weyl_sum, DEFAULT_BUDGET};

    fn ctx(n: usize) -> MultiplierContext {
        MultiplierContext::new(IntegralForm::sphere(n), Cutoff::ConstantOne, 1e8).unwrap()
    }

    #[test]
    fn exact_multiplier_examples() {
        let c = ctx(4);
        let shell = c.shell(2).unwrap();
        let dense = TorusGrid::new(9, 4, Layout::Dense, 1e8).unwrap();
        let orbit = TorusGrid::new(9, 4, Layout::Orbit, 1e8).unwrap();
        let wd = exact_multiplier(&shell, &dense);
        let wo = exact_multiplier(&shell, &orbit);
        let zero = dense.position(&[4, 4, 4, 4]).unwrap();
        assert!((wd[zero] - 1.0).norm() < 1e-12);
        for i in 0..dense.len() {
            let j: Vec<usize> = dense.index(i).iter().map(|&v| v as usize).collect();
            let direct = exact_multiplier_at(&shell, &dense.point(i));
            assert!((wd[i] - direct).norm() < 1e-12);
            assert!((wo[orbit.position(&j).unwrap()] - direct).norm() < 1e-12);
            // real kernel
            let neg: Vec<usize> = j.iter().map(|&v| 8 - v).collect();
            assert!((wd[i] - wd[dense.position(&neg).unwrap()].conj()).norm() < 1e-12);
        }
        // 24-term oracle at (1/2, 0, 0, 0): points with y_1 = 0 give 1, y_1 = +-1 give -1
        let w: f64 = shell
            .iter()
            .map(|(y, _)| if y[0] == 0 { 1.0 } else { -1.0 })
            .sum::<f64>()
            / 24.0;
        assert!((exact_multiplier_at(&shell, &[0.5, 0.0, 0.0, 0.0]).re - w).abs() < 1e-14);
    }

    #[test]
    fn unit_sphere_multiplier_is_cosine_mean() {
        let c = ctx(5);
        let shell = c.shell(1).unwrap();
        let xi = [0.1, -0.2, 0.3, 0.05, 0.45];
        let expect: f64 = xi.iter().map(|x| (2.0 * std::f64::consts::PI * x).cos()).sum::<f64>() / 5.0;
        assert!((exact_multiplier_at(&shell, &xi).re - expect).abs() < 1e-14);
    }

    #[test]
    fn main_term_pieces_partition() {
        let c = ctx(5);
        let grid = TorusGrid::new(9, 5, Layout::Orbit, 1e8).unwrap();
        let dec = c.decomposition(25, 2, None).unwrap();
        let total = dec.piece(Piece::C, &grid).unwrap();
        let parts: Vec<MultiplierGrid> = [Piece::M12, Piece::M22, Piece::M23]
            .iter()
            .map(|&p| dec.piece(p, &grid).unwrap())
            .collect();
        for i in 0..grid.len() {
            let s: Complex64 = parts.iter().map(|p| p.values[i]).sum();
            assert!((s - total.values[i]).norm() < 1e-10);
        }
        // m22 vanishes at xi = b/q for q <= N: both bumps equal one there
        let zero = grid.position(&[4; 5]).unwrap();
        assert!(parts[1].values[zero].norm() < 1e-15);
        // near xi = 0 the main term approximates hat w(0) = 1
        assert!((total.values[zero] - 1.0).norm() < 0.5);
    }

    #[test]
    fn main_term_at_zero_from_q_one() {
        let c = ctx(5);
        let grid = TorusGrid::new(3, 5, Layout::Orbit, 1e8).unwrap();
        let dec = c.decomposition(25, 1, None).unwrap();
        let m12 = dec.piece(Piece::M12, &grid).unwrap();
        let zero = grid.position(&[1; 5]).unwrap();
        // only q = 1 contributes at xi = 0 for N = 1: F_1 = 1, bump 1
        let expect = dec.kappa * c.measure.total_mass();
        assert!((m12.values[zero].re - expect).abs() < 1e-12);
    }

    #[test]
    fn s_on_its_plateau_is_the_full_weyl_sum() {
        let c = MultiplierContext::new(IntegralForm::sphere(2), Cutoff::ConstantOne, 1e8).unwrap();
        let dec = c.decomposition(25, 2, None).unwrap();
        assert_eq!(dec.modulus, 2);
        // G = 9 has no sample at b/2 other than 0; use xi = 0
        let grid = TorusGrid::new(9, 2, Layout::Orbit, 1e8).unwrap();
        let s = dec.piece(Piece::S, &grid).unwrap();
        let expect: Complex64 = (0..2)
            .map(|a| weyl_sum(&c.form, 2, a, &[0, 0], DEFAULT_BUDGET).unwrap())
            .sum();
        assert!((s.at(&[4, 4]).unwrap() - expect).norm() < 1e-14);
    }

    #[test]
    fn nu_split_reassembles() {
        let c = ctx(3);
        let grid = TorusGrid::new(15, 3, Layout::Orbit, 1e8).unwrap();
        for (lambda, n_cut) in [(36u64, 3u64), (49, 2)] {
            let dec = c.decomposition(lambda, n_cut, None).unwrap();
            let m22k = dec.piece(Piece::M22k, &grid).unwrap();
            let a = dec.piece(Piece::M221, &grid).unwrap();
            let b = dec.piece(Piece::M222, &grid).unwrap();
            for i in 0..grid.len() {
                assert!((m22k.values[i] - a.values[i] - b.values[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn twist_is_invisible_when_l_divides_lambda() {
        let c = ctx(3);
        let grid = TorusGrid::new(15, 3, Layout::Orbit, 1e8).unwrap();
        let plain = c.decomposition(36, 3, None).unwrap();
        let twisted = c.decomposition(36, 3, None).unwrap().with_twist(true);
        for p in [Piece::Omega, Piece::M22k] {
            let d = plain.piece(p, &grid).unwrap().max_abs_diff(&twisted.piece(p, &grid).unwrap()).unwrap();
            assert!(d < 1e-12);
        }
        // and it matters when L does not divide lambda
        let plain = c.decomposition(25, 3, None).unwrap();
        let twisted = c.decomposition(25, 3, None).unwrap().with_twist(true);
        let d = plain.piece(Piece::Omega, &grid).unwrap().max_abs_diff(&twisted.piece(Piece::Omega, &grid).unwrap()).unwrap();
        assert!(d > 1e-6);
    }

    #[test]
    fn inconsistent_modulus_is_rejected() {
        let c = ctx(3);
        assert!(c.decomposition(25, 3, Some(4)).is_err());
        assert!(c.decomposition(25, 3, Some(12)).is_ok());
        assert!(c.decomposition(25, 0, None).is_err());
    }

    #[test]
    fn m23_below_tail_bound() {
        let c = ctx(5);
        let grid = TorusGrid::new(11, 5, Layout::Orbit, 1e8).unwrap();
        let dec = c.decomposition(49, 2, None).unwrap();
        let m23 = dec.piece(Piece::M23, &grid).unwrap();
        let bound = dec.m23_tail_bound().unwrap();
        assert!(m23.sup_norm() <= bound.rigorous);
        assert!(bound.heuristic > 0.0);
    }
}
