use std::collections::HashMap;

use bmlab::arith::DEFAULT_BUDGET;
use bmlab::lattice::{enumerate_shell, EnumerationOptions};
use bmlab::multiplier::{MultiplierContext, Piece};
use bmlab::{Cutoff, IntegralForm};

/// Mean of `|w-hat|^2` over the `G^n` torus samples equals
/// `r^{-2} #{(y, y') : y = y' mod G}`, counted here by residue classes.
fn plancherel_oracle(form: &IntegralForm, lambda: u64, g: i64) -> f64 {
    let shell = enumerate_shell(form, &Cutoff::ConstantOne, lambda, &EnumerationOptions::default()).unwrap();
    let mut classes: HashMap<Vec<i64>, f64> = HashMap::new();
    for (y, w) in shell.iter() {
        let key: Vec<i64> = y.iter().map(|v| v.rem_euclid(g)).collect();
        *classes.entry(key).or_insert(0.0) += w;
    }
    classes.values().map(|m| m * m).sum::<f64>() / (shell.r_value * shell.r_value)
}

#[test]
fn exact_multiplier_satisfies_plancherel() {
    let form = IntegralForm::sphere(5);
    let ctx = MultiplierContext::new(form.clone(), Cutoff::ConstantOne, DEFAULT_BUDGET).unwrap();
    // G = 7 aliases distinct shell points, G = 33 does not
    for g in [7usize, 33] {
        let grid = ctx.grid(g).unwrap();
        for lambda in [9u64, 25] {
            let w = ctx.decomposition(lambda, 1, None).unwrap().piece(Piece::W, &grid).unwrap();
            let got = w.l2_mean().powi(2);
            let want = plancherel_oracle(&form, lambda, g as i64);
            assert!((got - want).abs() < 1e-12, "G={g} lambda={lambda}: {got} vs {want}");
        }
    }
}

#[test]
fn multiplier_at_zero_is_one() {
    let ctx = MultiplierContext::new(IntegralForm::sphere(4), Cutoff::ConstantOne, DEFAULT_BUDGET).unwrap();
    let grid = ctx.grid(9).unwrap();
    let w = ctx.decomposition(10, 1, None).unwrap().piece(Piece::W, &grid).unwrap();
    let centre = w.at(&[4, 4, 4, 4]).unwrap();
    assert!((centre.re - 1.0).abs() < 1e-14 && centre.im.abs() < 1e-14);
    assert!(w.sup_norm() <= 1.0 + 1e-14);
}
