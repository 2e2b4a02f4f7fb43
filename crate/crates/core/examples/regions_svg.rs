//! Exponent regions as exact rationals, and the figure as SVG.

use bmlab::sparse::{figure_svg, region};
use bmlab::IntegralForm;

fn main() -> bmlab::Result<()> {
    let form = IntegralForm::sphere(5);
    let k = form.constants()?;
    for name in ["Sn", "Vn", "Dn", "Pn", "KLM"] {
        let r = region(name, &k, 5)?;
        println!("{name:3} area {:8} vertices {:?}", r.area().to_string(), r.vertex_strings());
    }
    let svg = figure_svg(&k, 5, true)?;
    let path = std::env::temp_dir().join("bmlab_regions.svg");
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}
