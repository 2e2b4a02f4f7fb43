//! Experiment configuration, dispatch and reports.
//!
//! A run is a pure function of its [`ExperimentConfig`]: the report embeds
//! the config, its hash and the seed, and every written file carries the
//! hash. Worker count is deliberately not part of the config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{congruence_count, inversion_from_table, weyl_decay_scan, WeylMethod, WeylTable};
use crate::continuous::{endpoint_scan, fourier_decay, Gaussian};
use crate::error::{Error, Result};
use crate::forms::{Cutoff, IntegralForm};
use crate::gridops::{apply_average_shell, maximal_shells, AverageMode, GridFunction, RadiiSequence};
use crate::lattice::cache::CACHE_ENV;
use crate::lattice::{enumerate_shell, EnumerationOptions, LatticeShell, ShellCache};
use crate::multiplier::{kernel_of_s, kernel_of_s_oracle, Bump, KernelScale, MultiplierContext, Piece, SurfaceMeasure};
use crate::numeric::{median, theil_sen_slope};
use crate::sparse::{
    figure_svg, improving_ratio, norm_scaling_scan, power_iteration, random_blob_sets, region, region_s, region_v,
    stopping_time_recursion, DyadicCube, RecursionConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance for the exact identities.
pub const IDENTITY_TOL: f64 = 1e-8;

/// The experiments `run` can dispatch to.
pub const EXPERIMENTS: [&str; 11] = [
    "lattice", "arith", "ops", "mult", "certify", "recursion", "norm-scan", "cont", "regions", "selftest", "weyl",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Preset name or path to a JSON form file.
    pub form: String,
    /// `one`, `bump:R` or `box:H`.
    pub phi: String,
    /// Radii for maximal functions and the recursion, see
    /// [`RadiiSequence::parse`].
    pub sequence: Option<String>,
    pub region: Option<String>,
    /// `(1/p, 1/q)` pairs.
    pub exponents: Vec<[f64; 2]>,
    pub lambdas: Vec<u64>,
    /// Inclusive range used when `lambdas` is empty.
    pub lambda_range: Option<[u64; 2]>,
    /// Torus grid size for multipliers, box side for `ops`.
    pub grid: usize,
    pub n_cut: u64,
    /// Moduli L for congruence counts and inversion checks.
    pub moduli: Vec<u64>,
    pub q_max: u64,
    pub trials: usize,
    pub runs: usize,
    pub threshold: Option<f64>,
    pub root_level: u32,
    pub mesh: f64,
    pub half_width: f64,
    /// Frequency cut-offs N for the continuous split.
    pub cutoffs: Vec<f64>,
    pub width: f64,
    pub weyl_bound: f64,
    pub congruence_bound: f64,
    /// Allowed spread factor in stability checks.
    pub factor: f64,
    pub budget: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "selftest".into(),
            form: "sphere-5".into(),
            phi: "one".into(),
            sequence: None,
            region: None,
            exponents: Vec::new(),
            lambdas: Vec::new(),
            lambda_range: None,
            grid: 33,
            n_cut: 2,
            moduli: Vec::new(),
            q_max: 0,
            trials: 50,
            runs: 10,
            threshold: None,
            root_level: 4,
            mesh: 1.0 / 32.0,
            half_width: 1.5,
            cutoffs: vec![2.0, 4.0, 8.0],
            width: 0.05,
            weyl_bound: 2.0,
            congruence_bound: 4.0,
            factor: 5.0,
            budget: 1e8,
            seed: 0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// SHA-256 of the canonical JSON with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lambda_list(&self) -> Vec<u64> {
        if !self.lambdas.is_empty() {
            return self.lambdas.clone();
        }
        match self.lambda_range {
            Some([a, b]) => (a..=b).collect(),
            None => Vec::new(),
        }
    }

    fn form(&self) -> Result<IntegralForm> {
        IntegralForm::from_spec(&self.form)
    }

    fn cutoff(&self) -> Result<Cutoff> {
        Cutoff::parse(&self.phi)
    }

    fn need_lambdas(&self) -> Result<Vec<u64>> {
        let l = self.lambda_list();
        if l.is_empty() {
            return Err(Error::InvalidArgument(format!("experiment {} needs lambdas", self.experiment)));
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub measured: BTreeMap<String, f64>,
    /// Output file names, relative to the output directory.
    pub outputs: Vec<String>,
    pub elapsed_seconds: f64,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The report without timing, for run-to-run comparison.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.elapsed_seconds = 0.0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

/// Fixed-width scientific format with 17 significant digits, which
/// round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Accumulates checks, measured values and output files during a run.
struct Run {
    hash: String,
    checks: Vec<Check>,
    measured: BTreeMap<String, f64>,
    files: Vec<(String, String)>,
}

impl Run {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn measure(&mut self, name: impl Into<String>, v: f64) {
        self.measured.insert(name.into(), v);
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[Vec<String>]) {
        let mut s = format!("# bmlab {} config {}\n{header}\n", env!("CARGO_PKG_VERSION"), self.hash);
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.push((name.into(), s));
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let wrapped = serde_json::json!({ "config_hash": self.hash, "data": value });
        self.files.push((name.into(), serde_json::to_string_pretty(&wrapped)?));
        Ok(())
    }

    fn svg(&mut self, name: &str, body: String) {
        let s = body.replacen("<title>", &format!("<!-- config {} -->\n<title>", self.hash), 1);
        self.files.push((name.into(), s));
    }
}

/// Run an experiment and write its outputs (and `report.json`) to
/// `out_dir` when set.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut r = Run {
        hash: config.hash(),
        checks: Vec::new(),
        measured: BTreeMap::new(),
        files: Vec::new(),
    };
    match config.experiment.as_str() {
        "lattice" => lattice(config, &mut r)?,
        "arith" | "weyl" => arith(config, &mut r)?,
        "ops" => ops(config, &mut r)?,
        "mult" => mult(config, &mut r)?,
        "certify" => certify(config, &mut r)?,
        "recursion" => recursion(config, &mut r)?,
        "norm-scan" => norm_scan(config, &mut r)?,
        "cont" => cont(config, &mut r)?,
        "regions" => regions(config, &mut r)?,
        "selftest" => selftest(config, &mut r)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown experiment {other:?}; expected one of {}",
                EXPERIMENTS.join(", ")
            )))
        }
    }
    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        experiment: config.experiment.clone(),
        config_hash: r.hash.clone(),
        seed: config.seed,
        config: config.clone(),
        checks: r.checks,
        measured: r.measured,
        outputs: r.files.iter().map(|f| f.0.clone()).collect(),
        elapsed_seconds: 0.0,
    };
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
        for (name, body) in &r.files {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

fn shell_for(form: &IntegralForm, phi: &Cutoff, lambda: u64) -> Result<LatticeShell> {
    let opts = EnumerationOptions::default();
    if std::env::var_os(CACHE_ENV).is_some() {
        ShellCache::from_env().get_or_enumerate(form, phi, lambda, &opts)
    } else {
        enumerate_shell(form, phi, lambda, &opts)
    }
}

fn lattice(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let (form, phi) = (c.form()?, c.cutoff()?);
    let mut rows = Vec::new();
    let mut off_shell = 0usize;
    for lambda in c.need_lambdas()? {
        let shell = shell_for(&form, &phi, lambda)?;
        off_shell += shell.iter().filter(|(y, _)| form.eval_i128(y) != lambda as i128).count();
        rows.push(vec![
            lambda.to_string(),
            shell.len().to_string(),
            fmt_f64(shell.r_value),
            shell.max_inf_norm().to_string(),
        ]);
        r.measure(format!("r[{lambda}]"), shell.r_value);
    }
    r.check("points-on-level-set", off_shell == 0, format!("{off_shell} points off their shell"));
    r.csv("lattice.csv", "lambda,points,r,max_inf_norm", &rows);
    Ok(())
}

/// Largest inversion error over all `x in [0, L)^n`.
fn inversion_error(form: &IntegralForm, l: u64, budget: f64) -> Result<f64> {
    let table = WeylTable::compute(form, l, WeylMethod::Dft, budget)?;
    let n = form.dim();
    let total = (l as usize).pow(n as u32);
    let mut x = vec![0i64; n];
    let mut worst: f64 = 0.0;
    for i in 0..total {
        let mut t = i;
        for k in (0..n).rev() {
            x[k] = (t % l as usize) as i64;
            t /= l as usize;
        }
        worst = worst.max(inversion_from_table(form, &table, &x).error());
    }
    Ok(worst)
}

fn arith(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let form = c.form()?;
    let mut rows = Vec::new();
    let mut worst_count: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for &l in &c.moduli {
        let count = congruence_count(&form, l, c.budget)?;
        let inv = inversion_error(&form, l, c.budget)?;
        worst_count = worst_count.max(count);
        worst_inv = worst_inv.max(inv);
        rows.push(vec![l.to_string(), fmt_f64(count), fmt_f64(inv)]);
    }
    if !c.moduli.is_empty() {
        r.csv("congruence.csv", "L,count,inversion_error", &rows);
        r.measure("max_congruence_count", worst_count);
        r.measure("max_inversion_error", worst_inv);
        r.check("inversion-identity", worst_inv < IDENTITY_TOL, format!("max error {worst_inv:.3e}"));
        r.check(
            "congruence-bound",
            worst_count <= c.congruence_bound,
            format!("max count {worst_count:.6} against {}", c.congruence_bound),
        );
    }
    if c.q_max >= 2 {
        let rep = weyl_decay_scan(&form, c.q_max, c.weyl_bound, c.budget)?;
        let rows: Vec<Vec<String>> = rep
            .qs
            .iter()
            .zip(&rep.maxima)
            .zip(&rep.scaled)
            .map(|((q, m), s)| vec![q.to_string(), fmt_f64(*m), fmt_f64(*s)])
            .collect();
        r.csv("weyl.csv", "q,max_abs_F,scaled", &rows);
        r.measure("weyl_prime_slope", rep.prime_slope);
        r.check(
            "weyl-scaled-bound",
            rep.violations.is_empty(),
            format!("moduli above {}: {:?}", rep.bound, rep.violations),
        );
    }
    Ok(())
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize, side: usize) -> GridFunction {
    GridFunction::from_fn(vec![0; n], vec![side; n], |_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
}

fn ops(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let (form, phi) = (c.form()?, c.cutoff()?);
    let n = form.dim();
    let side = c.grid.clamp(1, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let shells: Vec<LatticeShell> = c
        .need_lambdas()?
        .into_iter()
        .map(|l| shell_for(&form, &phi, l))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut violations = 0usize;
    for t in 0..c.trials {
        let f = random_grid(&mut rng, n, side);
        let (sup_in, l1_in) = (f.lp_norm(f64::INFINITY), f.lp_norm(1.0));
        for shell in shells.iter().filter(|s| !s.is_empty()) {
            let out = apply_average_shell(shell, &f, &AverageMode::Direct)?;
            let (sup_out, l1_out) = (out.lp_norm(f64::INFINITY), out.lp_norm(1.0));
            if sup_out > sup_in * (1.0 + 1e-12) || l1_out > l1_in * (1.0 + 1e-12) {
                violations += 1;
            }
            rows.push(vec![
                shell.lambda.to_string(),
                t.to_string(),
                fmt_f64(sup_in),
                fmt_f64(sup_out),
                fmt_f64(l1_in),
                fmt_f64(l1_out),
            ]);
        }
    }
    r.csv("ops.csv", "lambda,trial,sup_in,sup_out,l1_in,l1_out", &rows);
    r.check("endpoint-contractions", violations == 0, format!("{violations} violations"));
    if let Some(spec) = &c.sequence {
        let seq = RadiiSequence::parse(spec)?;
        let seq_shells: Vec<LatticeShell> = seq
            .as_u64()?
            .into_iter()
            .map(|l| shell_for(&form, &phi, l))
            .collect::<Result<_>>()?;
        let f = random_grid(&mut rng, n, side);
        let m = maximal_shells(&seq_shells, &f)?;
        let ratio = m.values.lp_norm(f64::INFINITY) / f.lp_norm(f64::INFINITY);
        r.measure("maximal_sup_ratio", ratio);
        r.check("maximal-sup-bound", ratio <= 1.0 + 1e-12, format!("sup ratio {ratio:.6}"));
    }
    Ok(())
}

fn mult(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let ctx = MultiplierContext::new(c.form()?, c.cutoff()?, c.budget)?;
    let grid = ctx.grid(c.grid)?;
    let eta = ctx.form.constants()?.eta_f64();
    let modulus = c.moduli.first().copied();
    let mut rows = Vec::new();
    let (mut xs, mut scaled) = (Vec::new(), Vec::new());
    let (mut worst_w, mut worst_c): (f64, f64) = (0.0, 0.0);
    for lambda in c.need_lambdas()? {
        let dec = ctx.decomposition(lambda, c.n_cut, modulus)?;
        let get = |p: Piece| dec.piece(p, &grid);
        let (w, cc, m21) = (get(Piece::W)?, get(Piece::C)?, get(Piece::M21)?);
        let (m12, m22, m23) = (get(Piece::M12)?, get(Piece::M22)?, get(Piece::M23)?);
        let mut ew: f64 = 0.0;
        let mut ec: f64 = 0.0;
        for i in 0..grid.len() {
            ew = ew.max((w.values[i] - cc.values[i] - m21.values[i]).norm());
            ec = ec.max((cc.values[i] - m12.values[i] - m22.values[i] - m23.values[i]).norm());
        }
        worst_w = worst_w.max(ew);
        worst_c = worst_c.max(ec);
        let s = m21.sup_norm() * (lambda as f64).powf(eta);
        xs.push((lambda as f64).ln());
        scaled.push(s);
        rows.push(vec![
            lambda.to_string(),
            fmt_f64(w.sup_norm()),
            fmt_f64(cc.sup_norm()),
            fmt_f64(m21.sup_norm()),
            fmt_f64(s),
            fmt_f64(m12.sup_norm()),
            fmt_f64(m22.sup_norm()),
            fmt_f64(m23.sup_norm()),
        ]);
        r.measure(format!("m21_scaled[{lambda}]"), s);
    }
    r.csv("mult.csv", "lambda,sup_w,sup_c,sup_m21,m21_scaled,sup_m12,sup_m22,sup_m23", &rows);
    r.check("w-equals-c-plus-m21", worst_w < IDENTITY_TOL, format!("max residual {worst_w:.3e}"));
    r.check("c-equals-m12-m22-m23", worst_c < IDENTITY_TOL, format!("max residual {worst_c:.3e}"));
    if scaled.len() >= 2 {
        let (lo, hi) = min_max(&scaled);
        let logs: Vec<f64> = scaled.iter().map(|v| v.ln()).collect();
        let slope = theil_sen_slope(&xs, &logs);
        r.measure("m21_scaled_slope", slope);
        r.check("m21-scaled-spread", hi <= 10.0 * lo, format!("range [{lo:.4e}, {hi:.4e}]"));
        r.check("m21-scaled-no-upward-trend", slope <= 0.0, format!("Theil-Sen slope {slope:.4}"));
    }
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// The interior point halfway between the barycenter and the apex of
/// `S_n`, used when no exponents are given.
fn default_exponents(form: &IntegralForm) -> Result<Vec<[f64; 2]>> {
    let s = region_s(&form.constants()?).map_err(|e| {
        Error::InvalidArgument(format!("no default exponents for {} ({e}); give them explicitly", form.label()))
    })?;
    let p = s.interior_points()[2];
    Ok(vec![[crate::forms::ratio_f64(p.0), crate::forms::ratio_f64(p.1)]])
}

fn exponents(c: &ExperimentConfig, form: &IntegralForm) -> Result<Vec<[f64; 2]>> {
    if c.exponents.is_empty() {
        default_exponents(form)
    } else {
        Ok(c.exponents.clone())
    }
}

fn certify(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let (form, phi) = (c.form()?, c.cutoff()?);
    let lambdas = c.need_lambdas()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for [ip, iq] in exponents(c, &form)? {
        let mut maxima = Vec::new();
        for &lambda in &lambdas {
            let rep = improving_ratio(&form, &phi, lambda, ip, iq, c.trials, c.seed)?;
            rows.push(vec![
                lambda.to_string(),
                fmt_f64(ip),
                fmt_f64(iq),
                fmt_f64(rep.max_ratio),
                rep.argmax.family.clone(),
                fmt_f64(rep.random_max),
            ]);
            maxima.push(rep.max_ratio);
            reports.push(rep);
        }
        let (_, hi) = min_max(&maxima);
        let med = median(&mut maxima.clone());
        let key = format!("({ip:.6},{iq:.6})");
        r.measure(format!("max_ratio{key}"), hi);
        r.measure(format!("median_ratio{key}"), med);
        r.check(
            format!("scale-free{key}"),
            hi <= c.factor * med,
            format!("max {hi:.4} median {med:.4} factor {}", c.factor),
        );
    }
    r.csv("certify.csv", "lambda,inv_p,inv_q,max_ratio,argmax,random_max", &rows);
    r.json("certify.json", &reports)
}

fn recursion(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let (form, phi) = (c.form()?, c.cutoff()?);
    let n = form.dim();
    let seq = RadiiSequence::parse(c.sequence.as_deref().unwrap_or("factorial:2,3,4,6"))?;
    let [ip, iq] = exponents(c, &form)?[0];
    let mut cfg = RecursionConfig::new(n, 1.0 / ip, 1.0 / iq);
    if let Some(t) = c.threshold {
        cfg.threshold = t;
    }
    let root = DyadicCube::new(c.root_level, vec![0; n])?;
    let mut rows = Vec::new();
    let mut certs = Vec::new();
    let mut invalid = 0usize;
    for run in 0..c.runs {
        let (f, g) = random_blob_sets(&root, c.seed.wrapping_add(run as u64));
        let (coll, cert) = stopping_time_recursion(&form, &phi, &seq, &f, &g, &root, &cfg)?;
        if coll.validate().is_err() {
            invalid += 1;
        }
        rows.push(vec![
            run.to_string(),
            f.len().to_string(),
            g.len().to_string(),
            cert.collection.cubes.to_string(),
            fmt_f64(cert.tau_pairing),
            fmt_f64(cert.form_value),
            fmt_f64(cert.constant()),
        ]);
        certs.push(cert);
    }
    let worst = certs.iter().map(|c| c.constant()).fold(0.0, f64::max);
    r.measure("max_constant", worst);
    r.check("collections-valid", invalid == 0, format!("{invalid} invalid collections"));
    r.csv("recursion.csv", "run,f_size,g_size,cubes,tau_pairing,form_value,constant", &rows);
    r.json("recursion.json", &certs)
}

fn norm_scan(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let (form, phi) = (c.form()?, c.cutoff()?);
    let lambdas = c.need_lambdas()?;
    let mut scans = Vec::new();
    for [ip, iq] in exponents(c, &form)? {
        let p = 1.0 / ip;
        let q_dual = 1.0 / (1.0 - iq);
        let scan = norm_scaling_scan(&form, &phi, p, q_dual, &lambdas, c.seed)?;
        let key = format!("({ip:.6},{iq:.6})");
        r.measure(format!("fitted_slope{key}"), scan.fitted_slope);
        r.measure(format!("stated_exponent{key}"), scan.stated_exponent);
        r.measure(format!("cube_exponent{key}"), scan.cube_exponent);
        scans.push(scan);
    }
    if let Some(&lambda) = lambdas.last() {
        let shell = shell_for(&form, &phi, lambda)?;
        let side = crate::sparse::cube_side(&form, lambda);
        let it = power_iteration(&shell, side, 20);
        let monotone = it.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        r.measure("power_iteration_l2", *it.last().unwrap_or(&0.0));
        r.check("power-iteration-monotone", monotone, format!("{} iterations", it.len()));
    }
    r.json("norm_scan.json", &scans)
}

fn cont(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let (form, phi) = (c.form()?, c.cutoff()?);
    let k = form.constants()?;
    let measure = SurfaceMeasure::auto(&form, &phi)?;
    let f = Gaussian { width: c.width }.field(form.dim(), c.mesh, c.half_width)?;
    let scan = endpoint_scan(&measure, k.c_f64(), &f, &c.cutoffs, Bump::PSI)?;
    let rows: Vec<Vec<String>> = scan
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.n_cut),
                fmt_f64(p.low_sup),
                fmt_f64(p.high_l2),
                fmt_f64(p.high_l2_fourier),
                fmt_f64(p.k1),
                fmt_f64(p.k1_delta),
                fmt_f64(p.k2),
                fmt_f64(p.k2_multiplier),
            ]
        })
        .collect();
    r.csv("cont.csv", "N,low_sup,high_l2,high_l2_fourier,k1,k1_delta,k2,k2_multiplier", &rows);
    let (k1lo, k1hi) = min_max(&scan.points.iter().map(|p| p.k1_delta).collect::<Vec<_>>());
    let (k2lo, k2hi) = min_max(&scan.points.iter().map(|p| p.k2_multiplier).collect::<Vec<_>>());
    r.measure("k1_max", k1hi);
    r.measure("k2_max", k2hi);
    r.measure("parseval_gap", scan.parseval_gap);
    r.check("parseval", scan.parseval_gap < 1e-6, format!("relative gap {:.3e}", scan.parseval_gap));
    r.check("high-part-nonincreasing", scan.high_nonincreasing, "L2 norm of the high part along N");
    r.check("k1-stable", k1hi <= 3.0 * k1lo, format!("K1 in [{k1lo:.4}, {k1hi:.4}]"));
    r.check("k2-stable", k2hi <= 3.0 * k2lo, format!("K2 in [{k2lo:.4}, {k2hi:.4}]"));
    let decay = fourier_decay(&measure, k.c_f64() - 1.0, 64.0, 256, 8, c.seed)?;
    r.measure("fourier_decay_fitted", decay.fitted);
    r.measure("fourier_decay_slope", decay.slope);
    r.json("cont.json", &(&scan, &decay))
}

fn regions(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let form = c.form()?;
    let k = form.constants()?;
    let n = form.dim();
    let sphere = form.isotropic_quadratic_coefficient().is_some();
    let names: Vec<String> = match &c.region {
        Some(name) => vec![name.clone()],
        None => ["Sn", "Pn", "Vn", "Dn", "KLM"].iter().map(|s| s.to_string()).collect(),
    };
    let mut out = Vec::new();
    let mut outside = 0usize;
    for name in &names {
        match region(name, &k, n) {
            Ok(reg) => {
                outside += reg.interior_points().iter().filter(|p| !reg.contains(p)).count();
                out.push(reg.to_json());
            }
            // P_n and the polygon only exist for n >= 5
            Err(Error::Unsupported(_)) if c.region.is_none() => {}
            Err(e) => return Err(e),
        }
    }
    let (s, v) = (region_s(&k)?, region_v(&k)?);
    r.check("s-strictly-inside-v", v.strictly_contains(&s), "closure containment with smaller area");
    r.check("interior-points-inside", outside == 0, format!("{outside} points outside"));
    if let Some(s2) = s.vertices.get(1) {
        r.measure("s2", crate::forms::ratio_f64(s2.0));
    }
    r.json("regions.json", &out)?;
    r.svg("regions.svg", figure_svg(&k, n, sphere)?);
    Ok(())
}

fn selftest(c: &ExperimentConfig, r: &mut Run) -> Result<()> {
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for spec in ["sphere-2", "sphere-3", "cubes-2"] {
        let form = IntegralForm::preset(spec)?;
        for l in [1u64, 2, 3, 4, 6] {
            let e = inversion_error(&form, l, c.budget)?;
            worst = worst.max(e);
        }
        let _ = write!(detail, "{spec} ");
    }
    r.measure("inversion_max_error", worst);
    r.check("weyl-inversion", worst < IDENTITY_TOL, format!("{detail}max error {worst:.3e}"));

    let form = IntegralForm::sphere(2);
    let mut kworst: f64 = 0.0;
    for l in [2u64, 6] {
        let (lo, hi) = ([-8, -8], [8, 8]);
        let fast = kernel_of_s(&form, l, KernelScale::Double, &lo, &hi)?;
        let slow = kernel_of_s_oracle(&form, l, KernelScale::Double, &lo, &hi, c.budget)?;
        for (a, b) in fast.values.values.iter().zip(&slow.values) {
            kworst = kworst.max((a - b).norm());
        }
    }
    r.measure("kernel_max_error", kworst);
    r.check("kernel-of-s", kworst < IDENTITY_TOL, format!("max error {kworst:.3e}"));

    let lambdas = if c.lambdas.is_empty() { vec![25, 49] } else { c.lambdas.clone() };
    let sub = ExperimentConfig {
        experiment: "mult".into(),
        form: "sphere-5".into(),
        lambdas,
        ..c.clone()
    };
    let mut inner = Run {
        hash: r.hash.clone(),
        checks: Vec::new(),
        measured: BTreeMap::new(),
        files: Vec::new(),
    };
    mult(&sub, &mut inner)?;
    r.checks.extend(inner.checks.into_iter().filter(|ch| ch.name.contains("equals")));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_directory() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            out_dir: Some("/tmp/x".into()),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_fields() {
        let c = ExperimentConfig {
            lambdas: vec![4, 9],
            ..Default::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"nope": 1}"#).is_err());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"experiment": "regions"}"#).unwrap();
        assert_eq!(partial.form, "sphere-5");
    }

    #[test]
    fn formatted_floats_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let x: f64 = f64::from_bits(rng.gen::<u64>() >> 2);
            if x.is_finite() {
                assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
            }
        }
    }

    #[test]
    fn regions_run_reports_exact_apex() {
        let c = ExperimentConfig {
            experiment: "regions".into(),
            ..Default::default()
        };
        let rep = run(&c).unwrap();
        assert!(rep.all_passed());
        assert_eq!(rep.measured["s2"], 25.0 / 49.0);
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let c = ExperimentConfig {
            experiment: "nope".into(),
            ..Default::default()
        };
        assert_eq!(run(&c).unwrap_err().kind(), "invalid-argument");
    }
}
