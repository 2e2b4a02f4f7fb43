//! Normalised Weyl sums: inversion, congruence counts and decay in q.

use bmlab::arith::{congruence_count, weyl_decay_scan, weyl_inversion_check, DEFAULT_BUDGET};
use bmlab::IntegralForm;

fn main() -> bmlab::Result<()> {
    let sphere3 = IntegralForm::sphere(3);
    let check = weyl_inversion_check(&sphere3, 6, &[1, 2, 5], DEFAULT_BUDGET)?;
    println!("inversion at L=6, x=(1,2,5): error {:.2e}", check.error());

    let sphere5 = IntegralForm::sphere(5);
    for l in [1u64, 2, 3, 4, 6, 8, 12, 24] {
        println!("congruence count L={l:2}: {:.6}", congruence_count(&sphere5, l, DEFAULT_BUDGET)?);
    }

    let rep = weyl_decay_scan(&sphere5, 31, 2.0, DEFAULT_BUDGET)?;
    for (q, (m, s)) in rep.qs.iter().zip(rep.maxima.iter().zip(&rep.scaled)) {
        println!("q={q:2} max|F|={m:.4e} q^(n/2)|F|={s:.4}");
    }
    println!("slope over primes {:.3}, expected {:.3}", rep.prime_slope, -2.5);
    Ok(())
}
