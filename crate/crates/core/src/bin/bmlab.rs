use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bmlab::lattice::EnumerationOptions;
use bmlab::lattice::ShellCache;
use bmlab::runner::{run, ExperimentConfig};
use bmlab::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bmlab", version, about = "Experiments on discrete averages over integral level sets")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate shells and report counts.
    Lattice(Overrides),
    /// Congruence counts, inversion checks and Weyl sum decay.
    Arith(Overrides),
    /// Averages and maximal functions on random inputs.
    Ops(Overrides),
    /// Multiplier pieces and their identities.
    Mult(Overrides),
    #[command(subcommand)]
    Sparse(SparseCmd),
    /// Low/high frequency split of the continuous average.
    Cont(Overrides),
    /// Region vertices and the SVG figure.
    Regions(Overrides),
    /// Exact-identity suite.
    Selftest(Overrides),
    #[command(subcommand)]
    Cache(CacheCmd),
    /// Run any experiment by name.
    Run {
        experiment: Option<String>,
        #[command(flatten)]
        o: Overrides,
    },
}

#[derive(Subcommand)]
enum SparseCmd {
    /// Improving-ratio probes at the given exponents.
    Certify(Overrides),
    /// Stopping-time recursion on random sets.
    Recursion(Overrides),
    /// Lower bounds for the norm as lambda grows.
    NormScan(Overrides),
    /// One region of exponents.
    Region(Overrides),
}

#[derive(Subcommand)]
enum CacheCmd {
    List,
    Purge,
    Verify {
        #[arg(long, default_value_t = 8)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default, Clone)]
struct Overrides {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    region: Option<String>,
    /// `1/p,1/q`; entries may be fractions like 149/294. Repeatable.
    #[arg(long = "exponent", value_parser = parse_pair)]
    exponents: Vec<[f64; 2]>,
    #[arg(long = "lambda", value_delimiter = ',')]
    lambdas: Vec<u64>,
    /// Inclusive range `lo:hi`.
    #[arg(long, value_parser = parse_range)]
    lambda_range: Option<[u64; 2]>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    n_cut: Option<u64>,
    #[arg(long = "modulus", value_delimiter = ',')]
    moduli: Vec<u64>,
    #[arg(long)]
    q_max: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    root_level: Option<u32>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long = "cutoff", value_delimiter = ',')]
    cutoffs: Vec<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    weyl_bound: Option<f64>,
    #[arg(long)]
    congruence_bound: Option<f64>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_num(s: &str) -> Result<f64, String> {
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}")),
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected `1/p,1/q`")?;
    Ok([parse_num(a)?, parse_num(b)?])
}

fn parse_range(s: &str) -> Result<[u64; 2], String> {
    let (a, b) = s.split_once(':').ok_or("expected `lo:hi`")?;
    let lo = a.parse().map_err(|e| format!("{a}: {e}"))?;
    let hi = b.parse().map_err(|e| format!("{b}: {e}"))?;
    Ok([lo, hi])
}

impl Overrides {
    fn into_config(self, experiment: Option<&str>) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = experiment {
            c.experiment = e.to_string();
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { c.$f = self.$f; } )* };
        }
        macro_rules! set_vec {
            ($($f:ident),*) => { $( if !self.$f.is_empty() { c.$f = self.$f; } )* };
        }
        set!(form, phi, grid, n_cut, q_max, trials, runs, root_level, mesh, half_width, width);
        set!(weyl_bound, congruence_bound, factor, budget, seed);
        set_opt!(sequence, region, lambda_range, threshold);
        set_vec!(exponents, lambdas, moduli, cutoffs);
        if self.out.is_some() {
            c.out_dir = self.out;
        }
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget { .. } => 3,
        Error::InvalidArgument(_)
        | Error::InvalidForm(_)
        | Error::Unsupported(_)
        | Error::NotRepresented(_)
        | Error::Json(_)
        | Error::Format { .. } => 2,
        _ => 1,
    }
}

fn fail(e: Error) -> ExitCode {
    let json = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{json}");
    ExitCode::from(exit_code(&e))
}

fn experiment(o: Overrides, name: Option<&str>) -> ExitCode {
    let config = match o.into_config(name) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run(&config) {
        Ok(report) => {
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout(), "{json}");
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(e),
    }
}

fn cache(cmd: CacheCmd) -> ExitCode {
    let cache = ShellCache::from_env();
    let result = match cmd {
        CacheCmd::List => cache.list().map(|entries| {
            println!("form\tphi\tlambda\tpoints\tpath");
            for e in entries {
                println!("{}\t{}\t{}\t{}\t{}", e.form, e.phi, e.lambda, e.points, e.path.display());
            }
        }),
        CacheCmd::Purge => cache.purge().map(|n| println!("removed {n} shells")),
        CacheCmd::Verify { sample, seed } => cache
            .verify(sample, seed, &EnumerationOptions::default())
            .map(|n| println!("verified {n} shells")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(Error::InvalidArgument(e.to_string()));
        }
    }
    match cli.cmd {
        Cmd::Lattice(o) => experiment(o, Some("lattice")),
        Cmd::Arith(o) => experiment(o, Some("arith")),
        Cmd::Ops(o) => experiment(o, Some("ops")),
        Cmd::Mult(o) => experiment(o, Some("mult")),
        Cmd::Cont(o) => experiment(o, Some("cont")),
        Cmd::Regions(o) => experiment(o, Some("regions")),
        Cmd::Selftest(o) => experiment(o, Some("selftest")),
        Cmd::Sparse(s) => match s {
            SparseCmd::Certify(o) => experiment(o, Some("certify")),
            SparseCmd::Recursion(o) => experiment(o, Some("recursion")),
            SparseCmd::NormScan(o) => experiment(o, Some("norm-scan")),
            SparseCmd::Region(o) => experiment(o, Some("regions")),
        },
        Cmd::Cache(c) => cache(c),
        Cmd::Run { experiment: name, o } => experiment(o, name.as_deref()),
    }
}
