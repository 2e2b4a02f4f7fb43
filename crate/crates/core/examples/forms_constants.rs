//! Rank constants and the exponent regions they determine.

use bmlab::sparse::{region_s, region_v};
use bmlab::{FormConstants, IntegralForm};

fn main() -> bmlab::Result<()> {
    for spec in ["sphere-5", "sphere-8", "cubes-10", "kpowers-20-4"] {
        let form = IntegralForm::preset(spec)?;
        let k = form.constants()?;
        let s = region_s(&k)?;
        let v = region_v(&k)?;
        println!(
            "{spec:14} n={:2} d={} c={} eta={} S apex {:?} V apex {:?}",
            form.dim(),
            form.degree(),
            k.c,
            k.eta,
            s.vertex_strings()[1],
            v.vertex_strings()[1],
        );
    }
    // rank alone fixes the constants
    let k = FormConstants::from_rank(5, 2);
    println!("rank 5, degree 2: c={} eta={}", k.c, k.eta);
    let form = IntegralForm::sphere(5);
    println!("R(1,2,0,-1,3) = {}", form.eval_i128(&[1, 2, 0, -1, 3]));
    Ok(())
}
