//! Restricted-type improving ratios and lower bounds for the norm growth.

use bmlab::sparse::{improving_ratio, norm_scaling_scan};
use bmlab::{Cutoff, IntegralForm};

fn main() -> bmlab::Result<()> {
    let form = IntegralForm::sphere(5);
    let phi = Cutoff::ConstantOne;
    let (ip, iq) = (149.0 / 294.0, 149.0 / 294.0);
    for lambda in [9u64, 16, 25, 36, 49] {
        let rep = improving_ratio(&form, &phi, lambda, ip, iq, 50, 1)?;
        println!(
            "lambda={lambda:2} side={:2} |shell|={:4} max ratio {:.4} ({}) random max {:.4}",
            rep.side, rep.shell_size, rep.max_ratio, rep.argmax.family, rep.random_max
        );
    }
    let scan = norm_scaling_scan(&form, &phi, 49.0 / 25.0, 49.0 / 24.0, &[9, 16, 25, 36, 49], 1)?;
    for p in &scan.points {
        println!("lambda={:2} lower bound {:.4} from {}", p.lambda, p.lower_bound, p.family);
    }
    println!(
        "fitted slope {:.3}; n(1/q'-1/p) = {:.3}, (n/d)(1/q'-1/p) = {:.3}",
        scan.fitted_slope, scan.stated_exponent, scan.cube_exponent
    );
    Ok(())
}
