//! Shell enumeration, counting function and regular-value scan.

use bmlab::lattice::{counting_function, enumerate_shell, scan_regular_values, EnumerationOptions};
use bmlab::{Cutoff, IntegralForm};

fn main() -> bmlab::Result<()> {
    let opts = EnumerationOptions::default();
    let sphere = IntegralForm::sphere(4);
    for lambda in [1u64, 2, 3, 4, 5, 8] {
        let shell = enumerate_shell(&sphere, &Cutoff::ConstantOne, lambda, &opts)?;
        // Jacobi: r_4(m) = 8 * sum of divisors not divisible by 4
        let jacobi: u64 = 8 * (1..=lambda).filter(|d| lambda % d == 0 && d % 4 != 0).sum::<u64>();
        println!("r_4({lambda}) = {} (Jacobi {jacobi})", shell.len());
    }

    let counts = counting_function(&IntegralForm::sphere(3), &Cutoff::ConstantOne, 1, 32, &opts)?;
    let zeros: Vec<usize> = counts.iter().enumerate().filter(|(_, &r)| r == 0.0).map(|(i, _)| i + 1).collect();
    println!("sums of three squares missing in 1..=32: {zeros:?}");

    let cubes = IntegralForm::preset("cubes-4")?;
    let rep = scan_regular_values(&cubes, &Cutoff::parse("bump:1.5")?, 1, 200, (0.05, 50.0), 9, &opts)?;
    println!("cubes-4 with a smooth cut-off: {} regular values in 1..=200", rep.flagged_lambdas().len());
    print!("{}", rep.to_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
