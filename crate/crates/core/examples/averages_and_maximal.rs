//! Discrete averages and a maximal function on a random grid function.

use bmlab::gridops::{apply_average, maximal, AverageMode, GridFunction, RadiiSequence};
use bmlab::lattice::EnumerationOptions;
use bmlab::{Cutoff, IntegralForm};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn main() -> bmlab::Result<()> {
    let form = IntegralForm::sphere(4);
    let phi = Cutoff::ConstantOne;
    let opts = EnumerationOptions::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let f = GridFunction::from_fn(vec![0; 4], vec![12; 4], |_| Complex64::new(rng.gen_range(0.0..1.0), 0.0));
    println!("|f|_1 = {:.4} |f|_inf = {:.4}", f.lp_norm(1.0), f.lp_norm(f64::INFINITY));
    for lambda in [5u64, 10, 25, 50] {
        let m = apply_average(&form, &phi, lambda, &f, &AverageMode::Direct, &opts)?;
        println!(
            "lambda={lambda:2} |M f|_1 = {:.4} |M f|_inf = {:.4} |M f|_2 / |f|_2 = {:.4}",
            m.lp_norm(1.0),
            m.lp_norm(f64::INFINITY),
            m.lp_norm(2.0) / f.lp_norm(2.0)
        );
    }
    let seq = RadiiSequence::parse("factorial:2,3,4")?;
    let out = maximal(&form, &phi, &seq, &f, &opts)?;
    println!("maximal over {:?}: |M* f|_inf = {:.4}", seq.values, out.values.lp_norm(f64::INFINITY));
    Ok(())
}
