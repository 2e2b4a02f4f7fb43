//! Drive an experiment through the runner and compare two runs.

use bmlab::runner::{run, ExperimentConfig};

fn main() -> bmlab::Result<()> {
    let config = ExperimentConfig {
        experiment: "mult".into(),
        lambdas: vec![25, 49],
        out_dir: Some(std::env::temp_dir().join("bmlab_mult")),
        ..Default::default()
    };
    let a = run(&config)?;
    let b = run(&config)?;
    for c in &a.checks {
        println!("{:5} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("config {} outputs {:?}", a.config_hash, a.outputs);
    println!("identical reports: {}", a.canonical_json() == b.canonical_json());
    Ok(())
}
