//! Low/high frequency split of the continuous sphere average.

use bmlab::continuous::{endpoint_scan, fourier_decay, Gaussian};
use bmlab::multiplier::{Bump, SurfaceMeasure};
use bmlab::{Cutoff, IntegralForm};

fn main() -> bmlab::Result<()> {
    let form = IntegralForm::sphere(3);
    let c = form.constants()?.c_f64();
    let measure = SurfaceMeasure::auto(&form, &Cutoff::ConstantOne)?;
    let f = Gaussian { width: 0.05 }.field(3, 1.0 / 64.0, 1.5)?;
    let scan = endpoint_scan(&measure, c, &f, &[2.0, 4.0, 8.0, 16.0], Bump::PSI)?;
    for p in &scan.points {
        println!(
            "N={:4} |low|_inf={:.4e} |high|_2={:.4e} K1={:.4} K2={:.4}",
            p.n_cut, p.low_sup, p.high_l2, p.k1_delta, p.k2_multiplier
        );
    }
    println!("Parseval gap {:.2e}", scan.parseval_gap);
    let decay = fourier_decay(&measure, c - 1.0, 64.0, 64, 4, 0)?;
    println!("|sigma^(xi)| |xi|^(c-1) bounded by {:.4e}; log-log slope {:.3}", decay.fitted, decay.slope);
    Ok(())
}
