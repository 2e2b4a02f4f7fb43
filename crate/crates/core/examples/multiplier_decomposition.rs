//! Main term and error pieces of the sphere average in five variables.

use bmlab::multiplier::{MultiplierContext, Piece};
use bmlab::{Cutoff, IntegralForm};

fn main() -> bmlab::Result<()> {
    let ctx = MultiplierContext::new(IntegralForm::sphere(5), Cutoff::ConstantOne, 1e8)?;
    let grid = ctx.grid(33)?;
    let eta = ctx.form.constants()?.eta_f64();
    println!("{} orbit representatives", grid.len());
    for lambda in [25u64, 49, 81, 121] {
        let t = std::time::Instant::now();
        let dec = ctx.decomposition(lambda, 2, None)?;
        let w = dec.piece(Piece::W, &grid)?;
        let c = dec.piece(Piece::C, &grid)?;
        let m21 = w.zip_with(&c, "m21", |a, b| a - b)?;
        let parts: Vec<_> = [Piece::M12, Piece::M22, Piece::M23]
            .iter()
            .map(|&p| dec.piece(p, &grid))
            .collect::<Result<_, _>>()?;
        let mut split = 0.0f64;
        for i in 0..grid.len() {
            let s = parts[0].values[i] + parts[1].values[i] + parts[2].values[i];
            split = split.max((s - c.values[i]).norm());
        }
        println!(
            "lambda={lambda:4} sup|m21|={:.4e} scaled={:.4e} |c-(m12+m22+m23)|={split:.1e} sup|m22|={:.3e} sup|m23|={:.3e} ({:.1?})",
            m21.sup_norm(),
            m21.sup_norm() * (lambda as f64).powf(eta),
            parts[1].sup_norm(),
            parts[2].sup_norm(),
            t.elapsed()
        );
    }
    let dec = ctx.decomposition(49, 3, None)?;
    let f = dec.factorization_check(&grid)?;
    println!("Omega = v s: {f:?}");
    Ok(())
}
