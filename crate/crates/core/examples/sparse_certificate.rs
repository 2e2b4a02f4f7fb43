//! Stopping-time recursion and its sparse-form certificate.

use bmlab::gridops::RadiiSequence;
use bmlab::sparse::{random_blob_sets, stopping_time_recursion, DyadicCube, RecursionConfig};
use bmlab::{Cutoff, IntegralForm};

fn main() -> bmlab::Result<()> {
    let form = IntegralForm::sphere(4);
    let seq = RadiiSequence::parse("factorial:2,3,4,6")?;
    let root = DyadicCube::new(6, vec![0; 4])?;
    let (p, q) = (294.0 / 149.0, 294.0 / 149.0);
    let cfg = RecursionConfig::new(4, p, q);
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let (f, g) = random_blob_sets(&root, seed);
        let (coll, cert) = stopping_time_recursion(&form, &Cutoff::ConstantOne, &seq, &f, &g, &root, &cfg)?;
        coll.validate()?;
        println!(
            "seed {seed}: |F|={:6} |G|={:6} cubes={:3} <M f,g>={:.3e} tau={:.3e} form={:.3e} ratio={:.3}",
            f.len(),
            g.len(),
            cert.collection.cubes,
            cert.maximal_pairing,
            cert.tau_pairing,
            cert.form_value,
            cert.constant()
        );
        worst = worst.max(cert.constant());
    }
    println!("largest constant {worst:.3}");
    Ok(())
}
