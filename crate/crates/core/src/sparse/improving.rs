use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft;
use crate::forms::{integer_root, Cutoff, IntegralForm};
use crate::lattice::{enumerate_shell, EnumerationOptions, LatticeShell};
use crate::numeric::least_squares_slope;

/// Subsets of the cube `E = [0, s)^n` as one u64 row per point of the first
/// `n - 1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeSet {
    pub side: usize,
    pub dim: usize,
    rows: Vec<u64>,
}

impl CubeSet {
    pub fn empty(side: usize, dim: usize) -> Result<Self> {
        if side == 0 || side > 64 || dim == 0 {
            return Err(Error::Unsupported(format!("cube side {side} outside 1..=64")));
        }
        Ok(CubeSet {
            side,
            dim,
            rows: vec![0; side.pow(dim as u32 - 1)],
        })
    }

    pub fn from_fn(side: usize, dim: usize, mut member: impl FnMut(&[i64]) -> bool) -> Result<Self> {
        let mut s = Self::empty(side, dim)?;
        let mut x = vec![0i64; dim];
        for r in 0..s.rows.len() {
            let mut t = r;
            for k in (0..dim - 1).rev() {
                x[k] = (t % side) as i64;
                t /= side;
            }
            for j in 0..side {
                x[dim - 1] = j as i64;
                if member(&x) {
                    s.rows[r] |= 1 << j;
                }
            }
        }
        Ok(s)
    }

    pub fn full(side: usize, dim: usize) -> Result<Self> {
        Self::from_fn(side, dim, |_| true)
    }

    pub fn insert(&mut self, x: &[i64]) {
        let r = x[..self.dim - 1].iter().fold(0usize, |acc, &v| acc * self.side + v as usize);
        self.rows[r] |= 1 << x[self.dim - 1];
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }

    pub fn volume(&self) -> usize {
        self.side.pow(self.dim as u32)
    }
}

/// `<M 1_F, 1_G> = r^{-1} sum_y w(y) |G cap (F + y)|` by shifted-row popcounts.
pub fn set_pairing(shell: &LatticeShell, f: &CubeSet, g: &CubeSet) -> f64 {
    let n = f.dim;
    let s = f.side as i64;
    if n == 1 {
        let mut acc = 0.0;
        for (y, w) in shell.iter() {
            acc += w * shifted_and(f.rows[0], g.rows[0], y[0]) as f64;
        }
        return acc / shell.r_value;
    }
    // group the shell by its first n - 1 coordinates
    let mut groups: Vec<(Vec<i64>, Vec<(i64, f64)>)> = Vec::new();
    for (y, w) in shell.iter() {
        let head = &y[..n - 1];
        match groups.last_mut() {
            Some((h, v)) if h.as_slice() == head => v.push((y[n - 1], w)),
            _ => groups.push((head.to_vec(), vec![(y[n - 1], w)])),
        }
    }
    let strides = fft::strides(&vec![f.side; n - 1]);
    let total: f64 = groups
        .par_iter()
        .map(|(head, tails)| {
            // rows r of G with r - head inside the cube
            let lo: Vec<i64> = head.iter().map(|&h| h.max(0)).collect();
            let hi: Vec<i64> = head.iter().map(|&h| (s + h).min(s)).collect();
            if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
                return 0.0;
            }
            let shift: i64 = head.iter().zip(&strides).map(|(h, st)| h * *st as i64).sum();
            let mut r = lo.clone();
            let mut counts = vec![0u64; tails.len()];
            loop {
                let gi: usize = r.iter().zip(&strides).map(|(v, st)| *v as usize * st).sum();
                let grow = g.rows[gi];
                if grow != 0 {
                    let frow = f.rows[(gi as i64 - shift) as usize];
                    if frow != 0 {
                        for (c, &(t, _)) in counts.iter_mut().zip(tails) {
                            *c += shifted_and(frow, grow, t) as u64;
                        }
                    }
                }
                let mut k = n - 1;
                loop {
                    if k == 0 {
                        return counts.iter().zip(tails).map(|(&c, &(_, w))| c as f64 * w).sum();
                    }
                    k -= 1;
                    r[k] += 1;
                    if r[k] < hi[k] {
                        break;
                    }
                    r[k] = lo[k];
                }
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / shell.r_value
}

/// `popcount(g & (f shifted up by t))`.
#[inline]
fn shifted_and(f: u64, g: u64, t: i64) -> u32 {
    let sh = if t >= 64 || t <= -64 {
        0
    } else if t >= 0 {
        f << t
    } else {
        f >> -t
    };
    (sh & g).count_ones()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub family: String,
    pub f_size: usize,
    pub g_size: usize,
    pub pairing: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImprovingReport {
    pub lambda: u64,
    pub side: usize,
    pub shell_size: usize,
    pub inv_p: f64,
    pub inv_q: f64,
    pub max_ratio: f64,
    pub argmax: TrialOutcome,
    pub random_max: f64,
    pub adversarial: Vec<TrialOutcome>,
}

/// `|E| <1_F>_{E,p} <1_G>_{E,q}` with exponents given as `1/p`, `1/q`.
fn denominator(e: usize, f: usize, g: usize, inv_p: f64, inv_q: f64) -> f64 {
    let e = e as f64;
    e * (f as f64 / e).powf(inv_p) * (g as f64 / e).powf(inv_q)
}

/// Side of `E = [0, lambda^{1/d}]^n cap Z^n`.
pub fn cube_side(form: &IntegralForm, lambda: u64) -> usize {
    integer_root(lambda, form.degree()) as usize + 1
}

/// The fixed adversarial pairs on E: full sets, point masses, slabs and
/// shell neighbourhoods.
pub fn adversarial_pairs(form: &IntegralForm, lambda: u64, side: usize) -> Result<Vec<(String, CubeSet, CubeSet)>> {
    let n = form.dim();
    let s = side as i64;
    let c: Vec<i64> = vec![s / 2; n];
    let origin = vec![0i64; n];
    let at = |z: &[i64]| CubeSet::from_fn(side, n, |x| x == z);
    let shell_of = |z: &[i64]| {
        CubeSet::from_fn(side, n, |x| {
            let d: Vec<i64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
            form.eval_i128(&d) == lambda as i128
        })
    };
    let band = (lambda as f64).powf(1.0 - 1.0 / form.degree() as f64).max(1.0);
    let near_shell = CubeSet::from_fn(side, n, |x| {
        let d: Vec<i64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
        ((form.eval_i128(&d) - lambda as i128) as f64).abs() <= band
    })?;
    let full = CubeSet::full(side, n)?;
    Ok(vec![
        ("full".into(), full.clone(), full.clone()),
        ("point-full".into(), at(&c)?, full.clone()),
        ("full-point".into(), full.clone(), at(&c)?),
        ("slab-full".into(), CubeSet::from_fn(side, n, |x| x[0] == 0)?, full.clone()),
        ("slab-slab".into(), CubeSet::from_fn(side, n, |x| x[0] < s / 2)?, CubeSet::from_fn(side, n, |x| x[0] >= s / 2)?),
        ("point-shell".into(), at(&origin)?, shell_of(&origin)?),
        ("shell-point".into(), shell_of(&c)?.reflect_through(&c), at(&c)?),
        ("shell-band".into(), near_shell.clone(), near_shell),
    ])
}

impl CubeSet {
    /// `{2c - x : x in self} cap E`.
    fn reflect_through(&self, c: &[i64]) -> CubeSet {
        let mut out = CubeSet::empty(self.side, self.dim).unwrap();
        let s = self.side as i64;
        let mut x = vec![0i64; self.dim];
        for r in 0..self.rows.len() {
            let mut t = r;
            for k in (0..self.dim - 1).rev() {
                x[k] = (t % self.side) as i64;
                t /= self.side;
            }
            for j in 0..self.side {
                if self.rows[r] >> j & 1 == 1 {
                    x[self.dim - 1] = j as i64;
                    let y: Vec<i64> = x.iter().zip(c).map(|(v, cc)| 2 * cc - v).collect();
                    if y.iter().all(|&v| (0..s).contains(&v)) {
                        out.insert(&y);
                    }
                }
            }
        }
        out
    }
}

/// Bernoulli subset of E with a log-uniform density in `[1/|E|, 1]`,
/// never empty.
fn random_set(rng: &mut ChaCha8Rng, side: usize, dim: usize) -> CubeSet {
    let vol = side.pow(dim as u32) as f64;
    let density = (-(vol.ln()) * rng.gen::<f64>()).exp();
    let mut set = CubeSet::from_fn(side, dim, |_| rng.gen::<f64>() < density).unwrap();
    if set.is_empty() {
        let x: Vec<i64> = (0..dim).map(|_| rng.gen_range(0..side as i64)).collect();
        set.insert(&x);
    }
    set
}

/// Max over trials of `<M_lambda 1_F, 1_G> / (|E| <1_F>_{E,p} <1_G>_{E,q})`.
///
/// Exponents are passed as `1/p` and `1/q` so that the endpoints 0 and 1
/// are representable. Random trial `t` draws from a ChaCha8 stream keyed by
/// `(seed, lambda, t)`; ties keep the earliest trial, adversarial first.
pub fn improving_ratio(form: &IntegralForm, phi: &Cutoff, lambda: u64, inv_p: f64, inv_q: f64, trials: usize, seed: u64) -> Result<ImprovingReport> {
    if !(0.0..=1.0).contains(&inv_p) || !(0.0..=1.0).contains(&inv_q) {
        return Err(Error::InvalidArgument("1/p and 1/q must lie in [0, 1]".into()));
    }
    let shell = enumerate_shell(form, phi, lambda, &EnumerationOptions::default())?;
    if shell.is_empty() {
        return Err(Error::NotRepresented(lambda));
    }
    let side = cube_side(form, lambda);
    let n = form.dim();
    let vol = side.pow(n as u32);
    let outcome = |family: String, f: &CubeSet, g: &CubeSet| {
        let pairing = set_pairing(&shell, f, g);
        let (fs, gs) = (f.len(), g.len());
        let den = denominator(vol, fs, gs, inv_p, inv_q);
        TrialOutcome {
            family,
            f_size: fs,
            g_size: gs,
            pairing,
            ratio: if den > 0.0 { pairing / den } else { 0.0 },
        }
    };
    let adversarial: Vec<TrialOutcome> = adversarial_pairs(form, lambda, side)?
        .into_iter()
        .map(|(name, f, g)| outcome(name, &f, &g))
        .collect();
    let random: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ lambda.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            rng.set_stream(t as u64);
            let f = random_set(&mut rng, side, n);
            let g = random_set(&mut rng, side, n);
            outcome(format!("random-{t}"), &f, &g)
        })
        .collect();
    let random_max = random.iter().map(|o| o.ratio).fold(0.0, f64::max);
    let mut best = adversarial[0].clone();
    for o in adversarial.iter().chain(&random) {
        if o.ratio > best.ratio {
            best = o.clone();
        }
    }
    Ok(ImprovingReport {
        lambda,
        side,
        shell_size: shell.len(),
        inv_p,
        inv_q,
        max_ratio: best.ratio,
        argmax: best,
        random_max,
        adversarial,
    })
}

/// `M_lambda` restricted to the cube E, as a periodic convolution on a torus
/// large enough that nothing wraps back into E.
struct CubeAverager {
    side: usize,
    dim: usize,
    shape: Vec<usize>,
    kernel_hat: Vec<Complex64>,
}

impl CubeAverager {
    fn new(shell: &LatticeShell, side: usize) -> Self {
        let n = shell.dim;
        let t = fft::smooth_size(side + shell.max_inf_norm() as usize);
        let shape = vec![t; n];
        let st = fft::strides(&shape);
        let mut k = vec![Complex64::default(); t.pow(n as u32)];
        for (y, w) in shell.iter() {
            let i: usize = y.iter().zip(&st).map(|(v, s)| v.rem_euclid(t as i64) as usize * s).sum();
            k[i] += w / shell.r_value;
        }
        fft::forward(&mut k, &shape);
        CubeAverager {
            side,
            dim: n,
            shape,
            kernel_hat: k,
        }
    }

    fn embed(&self, values: &[f64]) -> Vec<Complex64> {
        let st = fft::strides(&self.shape);
        let mut a = vec![Complex64::default(); self.kernel_hat.len()];
        let cube = vec![self.side; self.dim];
        let mut idx = vec![0usize; self.dim];
        for (i, v) in values.iter().enumerate() {
            fft::unravel(i, &cube, &mut idx);
            a[idx.iter().zip(&st).map(|(a, b)| a * b).sum::<usize>()] = Complex64::new(*v, 0.0);
        }
        a
    }

    fn restrict(&self, a: &[Complex64]) -> Vec<f64> {
        let st = fft::strides(&self.shape);
        let cube = vec![self.side; self.dim];
        let mut idx = vec![0usize; self.dim];
        (0..self.side.pow(self.dim as u32))
            .map(|i| {
                fft::unravel(i, &cube, &mut idx);
                a[idx.iter().zip(&st).map(|(a, b)| a * b).sum::<usize>()].re
            })
            .collect()
    }

    /// `(M f) 1_E` for f supported in E.
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut a = self.embed(f);
        fft::forward(&mut a, &self.shape);
        for (x, k) in a.iter_mut().zip(&self.kernel_hat) {
            *x *= k;
        }
        fft::inverse_normalized(&mut a, &self.shape);
        self.restrict(&a)
    }
}

fn lp(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormPoint {
    pub lambda: u64,
    pub lower_bound: f64,
    pub family: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormScan {
    pub p: f64,
    pub q_dual: f64,
    pub points: Vec<NormPoint>,
    /// Least-squares slope of log lower bound against log lambda.
    pub fitted_slope: f64,
    /// `n (1/q' - 1/p)`.
    pub stated_exponent: f64,
    /// `(n/d)(1/q' - 1/p)`, the exponent of `|E|^{1/q' - 1/p}`.
    pub cube_exponent: f64,
    /// `-n (2/p - 1)` when `q' = p'`.
    pub dual_pair_exponent: Option<f64>,
}

/// Lower bounds for `||M_lambda||_{l^p -> l^{q'}}` from the adversarial
/// family (point mass, full cube, slab, shell and a random set), outputs
/// restricted to E.
pub fn norm_scaling_scan(form: &IntegralForm, phi: &Cutoff, p: f64, q_dual: f64, lambdas: &[u64], seed: u64) -> Result<NormScan> {
    if !(p >= 1.0) || !(q_dual >= 1.0) {
        return Err(Error::InvalidArgument("exponents must lie in [1, inf]".into()));
    }
    if lambdas.len() < 2 {
        return Err(Error::InvalidArgument("a slope needs at least two radii".into()));
    }
    let n = form.dim();
    let d = form.degree() as f64;
    let mut points = Vec::new();
    for &lambda in lambdas {
        let shell = enumerate_shell(form, phi, lambda, &EnumerationOptions::default())?;
        if shell.is_empty() {
            return Err(Error::NotRepresented(lambda));
        }
        let side = cube_side(form, lambda);
        let avg = CubeAverager::new(&shell, side);
        let mut family: Vec<(String, CubeSet)> = adversarial_pairs(form, lambda, side)?
            .into_iter()
            .flat_map(|(name, f, g)| [(format!("{name}/F"), f), (format!("{name}/G"), g)])
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ lambda);
        family.push(("random".into(), random_set(&mut rng, side, n)));
        family.dedup_by(|a, b| a.1 == b.1);
        let mut best = NormPoint {
            lambda,
            lower_bound: 0.0,
            family: String::new(),
        };
        for (name, set) in family {
            let cube = vec![side; n];
            let mut idx = vec![0usize; n];
            let f: Vec<f64> = (0..side.pow(n as u32))
                .map(|i| {
                    fft::unravel(i, &cube, &mut idx);
                    let x: Vec<i64> = idx.iter().map(|&v| v as i64).collect();
                    if set.contains(&x) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let fl = lp(&f, p);
            if fl == 0.0 {
                continue;
            }
            let ratio = lp(&avg.apply(&f), q_dual) / fl;
            if ratio > best.lower_bound {
                best.lower_bound = ratio;
                best.family = name;
            }
        }
        points.push(best);
    }
    let lx: Vec<f64> = points.iter().map(|pt| (pt.lambda as f64).ln()).collect();
    let ly: Vec<f64> = points.iter().map(|pt| pt.lower_bound.ln()).collect();
    let gap = 1.0 / q_dual - 1.0 / p;
    let dual = (1.0 / p + 1.0 / q_dual - 1.0).abs() < 1e-12;
    Ok(NormScan {
        p,
        q_dual,
        fitted_slope: least_squares_slope(&lx, &ly),
        stated_exponent: n as f64 * gap,
        cube_exponent: n as f64 / d * gap,
        dual_pair_exponent: dual.then(|| -(n as f64) * (2.0 / p - 1.0)),
        points,
    })
}

impl CubeSet {
    pub fn contains(&self, x: &[i64]) -> bool {
        let s = self.side as i64;
        if x.iter().any(|&v| v < 0 || v >= s) {
            return false;
        }
        let r = x[..self.dim - 1].iter().fold(0usize, |acc, &v| acc * self.side + v as usize);
        self.rows[r] >> x[self.dim - 1] & 1 == 1
    }
}

/// Power iteration for `||M_lambda||_{2 -> 2}` on the torus `Z_T^n` from
/// the start vector `1_E`; returns the Rayleigh-quotient lower bound
/// `||M v_k|| / ||v_k||` after each step.
pub fn power_iteration(shell: &LatticeShell, side: usize, iterations: usize) -> Vec<f64> {
    let avg = CubeAverager::new(shell, side);
    let norm = |a: &[Complex64]| a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut v = avg.embed(&vec![1.0; side.pow(shell.dim as u32)]);
    fft::forward(&mut v, &avg.shape);
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        // in Fourier variables M acts by multiplication, and Parseval holds
        // up to the same constant for both norms
        let mv: Vec<Complex64> = v.iter().zip(&avg.kernel_hat).map(|(a, k)| a * k).collect();
        out.push(norm(&mv) / norm(&v));
        let nv = norm(&mv);
        v = mv.iter().zip(&avg.kernel_hat).map(|(a, k)| a * k.conj() / nv).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shell(form: &IntegralForm, l: u64) -> LatticeShell {
        enumerate_shell(form, &Cutoff::ConstantOne, l, &EnumerationOptions::default()).unwrap()
    }

    #[test]
    fn pairing_matches_direct_sum() {
        use rand::Rng;
        let form = IntegralForm::sphere(3);
        let sh = shell(&form, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = CubeSet::from_fn(7, 3, |_| rng.gen::<f64>() < 0.4).unwrap();
        let g = CubeSet::from_fn(7, 3, |_| rng.gen::<f64>() < 0.3).unwrap();
        let mut direct = 0.0;
        let e = CubeSet::full(7, 3).unwrap();
        for x in (0..343).map(|i| vec![i / 49, i / 7 % 7, i % 7]) {
            if !g.contains(&x) {
                continue;
            }
            for (y, w) in sh.iter() {
                let z: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                if f.contains(&z) {
                    direct += w;
                }
            }
        }
        direct /= sh.r_value;
        assert!((set_pairing(&sh, &f, &g) - direct).abs() < 1e-12);
        assert!(e.contains(&[6, 6, 6]) && !e.contains(&[7, 0, 0]));
    }

    #[test]
    fn full_cube_ratio_is_at_most_one() {
        let form = IntegralForm::sphere(4);
        for (ip, iq) in [(0.5, 0.5), (0.3, 0.9), (1.0, 0.0)] {
            let r = improving_ratio(&form, &Cutoff::ConstantOne, 9, ip, iq, 4, 1).unwrap();
            let full = &r.adversarial[0];
            assert_eq!(full.family, "full");
            assert!(full.ratio <= 1.0 + 1e-12);
            if (ip, iq) == (1.0, 0.0) {
                // <M 1_F, 1_G> <= sum M 1_F = |F|
                assert!(r.max_ratio <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn ratio_is_reproducible() {
        let form = IntegralForm::sphere(3);
        let a = improving_ratio(&form, &Cutoff::ConstantOne, 9, 0.6, 0.6, 16, 7).unwrap();
        let b = improving_ratio(&form, &Cutoff::ConstantOne, 9, 0.6, 0.6, 16, 7).unwrap();
        assert_eq!(a.max_ratio, b.max_ratio);
        assert_eq!(a.argmax.family, b.argmax.family);
    }

    #[test]
    fn averager_matches_direct_average() {
        let form = IntegralForm::sphere(2);
        let sh = shell(&form, 25);
        let side = 6;
        let f: Vec<f64> = (0..36).map(|i| ((i * 7) % 5) as f64).collect();
        let out = CubeAverager::new(&sh, side).apply(&f);
        for i in 0..36i64 {
            let x = [i / 6, i % 6];
            let mut acc = 0.0;
            for (y, w) in sh.iter() {
                let z = [x[0] - y[0], x[1] - y[1]];
                if (0..6).contains(&z[0]) && (0..6).contains(&z[1]) {
                    acc += w * f[(z[0] * 6 + z[1]) as usize];
                }
            }
            assert!((out[i as usize] - acc / sh.r_value).abs() < 1e-12);
        }
    }

    #[test]
    fn power_iteration_is_monotone() {
        let form = IntegralForm::sphere(5);
        let sh = shell(&form, 9);
        let it = power_iteration(&sh, 4, 12);
        assert!(it.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(*it.last().unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn endpoint_scan_is_flat() {
        // p = q' = inf: norms are at most 1 and the full cube attains ~1
        let form = IntegralForm::sphere(3);
        let scan = norm_scaling_scan(&form, &Cutoff::ConstantOne, f64::INFINITY, f64::INFINITY, &[9, 25, 49], 3).unwrap();
        assert!(scan.points.iter().all(|p| p.lower_bound <= 1.0 + 1e-12));
        assert_eq!(scan.stated_exponent, 0.0);
        assert!(scan.fitted_slope.abs() < 0.05);
    }
}
