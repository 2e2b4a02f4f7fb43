use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{ratio_f64, ratio_string, FormConstants};

pub type Q = Ratio<i64>;
pub type Vertex = (Q, Q);

fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Triangle,
    Polygon,
}

/// An open convex polygon in the `(1/p, 1/q)` square with exact vertices,
/// stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub kind: RegionKind,
    pub vertices: Vec<Vertex>,
}

fn cross(o: &Vertex, a: &Vertex, b: &Vertex) -> Q {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

impl Region {
    pub fn new(name: impl Into<String>, mut vertices: Vec<Vertex>) -> Result<Self> {
        let name = name.into();
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument(format!("region {name} needs three vertices")));
        }
        let unit = |v: &Q| *v >= Q::zero() && *v <= Q::one();
        if !vertices.iter().all(|(x, y)| unit(x) && unit(y)) {
            return Err(Error::InvalidArgument(format!("region {name} leaves the unit square")));
        }
        if signed_area2(&vertices) < Q::zero() {
            vertices.reverse();
        }
        let m = vertices.len();
        for i in 0..m {
            if cross(&vertices[i], &vertices[(i + 1) % m], &vertices[(i + 2) % m]) <= Q::zero() {
                return Err(Error::InvalidArgument(format!("region {name} is not strictly convex")));
            }
        }
        let kind = if m == 3 { RegionKind::Triangle } else { RegionKind::Polygon };
        Ok(Region { name, kind, vertices })
    }

    /// Membership of `(1/p, 1/q)` in the open region.
    pub fn contains(&self, p: &Vertex) -> bool {
        let m = self.vertices.len();
        (0..m).all(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % m], p) > Q::zero())
    }

    /// Membership in the closure.
    pub fn contains_closed(&self, p: &Vertex) -> bool {
        let m = self.vertices.len();
        (0..m).all(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % m], p) >= Q::zero())
    }

    pub fn contains_f64(&self, x: f64, y: f64) -> bool {
        let m = self.vertices.len();
        (0..m).all(|i| {
            let (a, b) = (&self.vertices[i], &self.vertices[(i + 1) % m]);
            let (ax, ay, bx, by) = (ratio_f64(a.0), ratio_f64(a.1), ratio_f64(b.0), ratio_f64(b.1));
            (bx - ax) * (y - ay) - (by - ay) * (x - ax) > 0.0
        })
    }

    pub fn area(&self) -> Q {
        signed_area2(&self.vertices) / 2
    }

    pub fn barycenter(&self) -> Vertex {
        let m = self.vertices.len() as i64;
        let sx: Q = self.vertices.iter().map(|v| v.0).sum();
        let sy: Q = self.vertices.iter().map(|v| v.1).sum();
        (sx / m, sy / m)
    }

    /// The barycenter and the midpoints of the segments joining it to each
    /// vertex.
    pub fn interior_points(&self) -> Vec<Vertex> {
        let b = self.barycenter();
        let mut out = vec![b];
        out.extend(self.vertices.iter().map(|v| ((v.0 + b.0) / 2, (v.1 + b.1) / 2)));
        out
    }

    /// `other` lies in the closure of `self` and is a proper subset.
    pub fn strictly_contains(&self, other: &Region) -> bool {
        other.vertices.iter().all(|v| self.contains_closed(v)) && other.area() < self.area()
    }

    pub fn vertex_strings(&self) -> Vec<[String; 2]> {
        self.vertices.iter().map(|(x, y)| [ratio_string(*x), ratio_string(*y)]).collect()
    }

    pub fn to_json(&self) -> RegionJson {
        RegionJson {
            name: self.name.clone(),
            kind: self.kind,
            vertices: self.vertex_strings(),
            barycenter: {
                let b = self.barycenter();
                [ratio_string(b.0), ratio_string(b.1)]
            },
        }
    }
}

fn signed_area2(v: &[Vertex]) -> Q {
    let m = v.len();
    (0..m).map(|i| v[i].0 * v[(i + 1) % m].1 - v[(i + 1) % m].0 * v[i].1).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionJson {
    pub name: String,
    pub kind: RegionKind,
    pub vertices: Vec<[String; 2]>,
    pub barycenter: [String; 2],
}

fn diag(t: Q) -> Vertex {
    (t, t)
}

/// Triangle `(0,1)`, `(t,t)`, `(1,0)`.
fn diagonal_triangle(name: &str, t: Q) -> Result<Region> {
    Region::new(name, vec![(Q::zero(), Q::one()), diag(t), (Q::one(), Q::zero())])
}

/// `S_n`, apex `(1 + 2 eta) / (2 (1 + eta))` on the diagonal.
pub fn region_s(k: &FormConstants) -> Result<Region> {
    let one = Q::one();
    diagonal_triangle("Sn", (one + k.eta * 2) / ((one + k.eta) * 2))
}

/// `V_n`, apex `(2c - 1) / (2c)` on the diagonal.
pub fn region_v(k: &FormConstants) -> Result<Region> {
    diagonal_triangle("Vn", (k.c * 2 - 1) / (k.c * 2))
}

/// `D_n`: `(0,0)`, `((2c-1)/(2c), 1/(2c))`, `(1,1)`.
pub fn region_d(k: &FormConstants) -> Result<Region> {
    let c2 = k.c * 2;
    Region::new("Dn", vec![(Q::zero(), Q::zero()), ((c2 - 1) / c2, Q::one() / c2), (Q::one(), Q::one())])
}

/// `P_n`, apex `(n-1)/(n+1)`, for `n >= 5`.
pub fn region_p(n: usize) -> Result<Region> {
    if n < 5 {
        return Err(Error::Unsupported(format!("P_n needs n >= 5, got {n}")));
    }
    let n = n as i64;
    diagonal_triangle("Pn", q(n - 1, n + 1))
}

/// The polygon `Z_0 Z_1 Z_2 Z_3` for the discrete spherical maximal function.
pub fn klm_vertices(n: usize) -> Result<[Vertex; 4]> {
    if n < 5 {
        return Err(Error::Unsupported(format!("the spherical polygon needs n >= 5, got {n}")));
    }
    let n = n as i64;
    let den = n * n * n - 2 * n * n + n - 2;
    Ok([
        (q(n - 2, n), q(2, n)),
        (q(n - 2, n), q(n - 2, n)),
        (q(n * n * n - 4 * n * n + 4 * n + 1, den), q(n * n * n - 4 * n * n + 6 * n - 7, den)),
        (Q::zero(), Q::one()),
    ])
}

pub fn region_klm(n: usize) -> Result<Region> {
    Region::new("KLM", klm_vertices(n)?.to_vec())
}

/// Look up a region by name: `Sn`, `Pn`, `Vn`, `Dn` or `KLM`.
pub fn region(name: &str, k: &FormConstants, n: usize) -> Result<Region> {
    match name.to_ascii_lowercase().as_str() {
        "sn" | "s" => region_s(k),
        "pn" | "p" => region_p(n),
        "vn" | "v" => region_v(k),
        "dn" | "d" => region_d(k),
        "klm" | "klm-polygon" | "z" => region_klm(n),
        _ => Err(Error::InvalidArgument(format!("unknown region {name:?}; expected Sn, Pn, Vn, Dn or KLM"))),
    }
}

/// One drawn region in an SVG plot.
#[derive(Debug, Clone)]
pub struct Layer {
    pub region: Region,
    pub fill: Option<(&'static str, f64)>,
    pub stroke: &'static str,
    pub dotted: bool,
}

const SIZE: f64 = 480.0;
const PAD: f64 = 60.0;

fn px(v: &Vertex) -> (f64, f64) {
    let s = SIZE - 2.0 * PAD;
    (PAD + ratio_f64(v.0) * s, SIZE - PAD - ratio_f64(v.1) * s)
}

/// A static SVG of the unit square with the given layers and labelled
/// points.
pub fn render_svg(title: &str, layers: &[Layer], labels: &[(String, Vertex)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="serif" font-size="12">"#);
    let _ = writeln!(s, "<title>{title}</title>");
    let (ox, oy) = px(&(Q::zero(), Q::zero()));
    let _ = writeln!(s, r#"<line x1="{}" y1="{oy}" x2="{}" y2="{oy}" stroke="black"/>"#, ox - 10.0, SIZE - PAD / 2.0);
    let _ = writeln!(s, r#"<line x1="{ox}" y1="{}" x2="{ox}" y2="{}" stroke="black"/>"#, oy + 10.0, PAD / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">1/p</text>"#, SIZE - PAD / 2.0, oy + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">1/q</text>"#, ox - 30.0, PAD / 2.0);
    for l in layers {
        let pts: Vec<String> = l.region.vertices.iter().map(|v| {
            let (x, y) = px(v);
            format!("{x:.2},{y:.2}")
        }).collect();
        let (fill, op) = l.fill.unwrap_or(("none", 0.0));
        let dash = if l.dotted { r#" stroke-dasharray="2,3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polygon id="{}" points="{}" fill="{fill}" fill-opacity="{op}" stroke="{}"{dash}/>"#,
            l.region.name,
            pts.join(" "),
            l.stroke
        );
    }
    for (text, v) in labels {
        let (x, y) = px(v);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{text}</text>"#, x + 4.0, y - 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn label(name: &str, v: &Vertex) -> (String, Vertex) {
    (format!("{name}=({},{})", ratio_string(v.0), ratio_string(v.1)), *v)
}

/// Region diagram for a form in `n` variables. For the sphere with `n >= 5`
/// this is the polygon `Z_0..Z_3`, the triangle `P_n`, the dotted triangle
/// through `(n/(n+1), n/(n+1))` and `S_n`; otherwise `S_n`, `V_n` and `D_n`.
pub fn figure_svg(k: &FormConstants, n: usize, sphere: bool) -> Result<String> {
    let s = region_s(k)?;
    let s2 = s.vertices[1];
    let mut labels = vec![label("S2", &s2)];
    let mut layers = Vec::new();
    if sphere && n >= 5 {
        let ni = n as i64;
        let z = klm_vertices(n)?;
        let p = region_p(n)?;
        layers.push(Layer {
            region: diagonal_triangle("outer", q(ni, ni + 1))?,
            fill: None,
            stroke: "blue",
            dotted: true,
        });
        layers.push(Layer {
            region: p.clone(),
            fill: Some(("blue", 0.1)),
            stroke: "blue",
            dotted: false,
        });
        layers.push(Layer {
            region: region_klm(n)?,
            fill: Some(("cyan", 0.2)),
            stroke: "teal",
            dotted: false,
        });
        for (i, v) in z.iter().enumerate() {
            labels.push(label(&format!("Z{i}"), v));
        }
        labels.push(label("P2", &p.vertices[1]));
        labels.push(label("apex", &diag(q(ni, ni + 1))));
    } else {
        let v = region_v(k)?;
        let d = region_d(k)?;
        labels.push(label("V", &v.vertices[1]));
        labels.push(label("D", &d.vertices[1]));
        layers.push(Layer {
            region: d,
            fill: Some(("orange", 0.1)),
            stroke: "orange",
            dotted: true,
        });
        layers.push(Layer {
            region: v,
            fill: Some(("blue", 0.1)),
            stroke: "blue",
            dotted: false,
        });
    }
    layers.push(Layer {
        region: s,
        fill: Some(("green", 0.15)),
        stroke: "darkgreen",
        dotted: false,
    });
    Ok(render_svg(&format!("sparse regions, n = {n}"), &layers, &labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::IntegralForm;
    use proptest::prelude::*;

    #[test]
    fn sphere_five_vertices() {
        let k = IntegralForm::sphere(5).constants().unwrap();
        assert_eq!(region_s(&k).unwrap().vertices[1], diag(q(25, 49)));
        assert_eq!(region_p(5).unwrap().vertices[1], diag(q(2, 3)));
        assert_eq!(region_v(&k).unwrap().vertices[1], diag(q(4, 5)));
        assert_eq!(klm_vertices(5).unwrap()[0], (q(3, 5), q(2, 5)));
        assert_eq!(region_d(&k).unwrap().vertices[1], (q(4, 5), q(1, 5)));
    }

    #[test]
    fn s_inside_v_for_several_forms() {
        for f in ["sphere-5", "sphere-8", "kpowers-40-3", "cubes-64"] {
            let k = IntegralForm::preset(f).unwrap().constants().unwrap();
            let (s, v) = (region_s(&k).unwrap(), region_v(&k).unwrap());
            assert!(v.strictly_contains(&s), "{f}");
            assert!(!s.strictly_contains(&v), "{f}");
        }
    }

    #[test]
    fn klm_polygon_is_convex_and_inside_p() {
        for n in 5..12 {
            let klm = region_klm(n).unwrap();
            assert_eq!(klm.kind, RegionKind::Polygon);
            let p = region_p(n).unwrap();
            assert!(klm.vertices.iter().all(|v| p.contains_closed(v)), "{n}");
            assert!(p.strictly_contains(&klm));
        }
        assert!(region_p(4).is_err());
    }

    #[test]
    fn interior_points_are_interior() {
        let k = IntegralForm::sphere(5).constants().unwrap();
        for name in ["Sn", "Pn", "Vn", "Dn", "KLM"] {
            let r = region(name, &k, 5).unwrap();
            for p in r.interior_points() {
                assert!(r.contains(&p), "{name}");
            }
            for v in &r.vertices {
                assert!(!r.contains(v) && r.contains_closed(v));
            }
        }
    }

    #[test]
    fn svg_has_every_layer() {
        let k = IntegralForm::sphere(5).constants().unwrap();
        let svg = figure_svg(&k, 5, true).unwrap();
        for id in ["outer", "Pn", "KLM", "Sn"] {
            assert!(svg.contains(&format!("id=\"{id}\"")));
        }
        assert!(svg.contains("S2=(25/49,25/49)"));
        let other = figure_svg(&IntegralForm::cubes(64).constants().unwrap(), 64, false).unwrap();
        assert!(other.contains("id=\"Vn\"") && other.contains("id=\"Dn\""));
    }

    proptest! {
        #[test]
        fn exact_and_float_membership_agree(a in 0u32..=200, b in 0u32..=200) {
            let k = IntegralForm::sphere(7).constants().unwrap();
            let r = region_s(&k).unwrap();
            let p = (q(a as i64, 200), q(b as i64, 200));
            // points within rounding distance of an edge are skipped
            let m = r.vertices.len();
            let near = (0..m).any(|i| {
                let c = cross(&r.vertices[i], &r.vertices[(i + 1) % m], &p);
                ratio_f64(c).abs() < 1e-9
            });
            if !near {
                prop_assert_eq!(r.contains(&p), r.contains_f64(a as f64 / 200.0, b as f64 / 200.0));
            }
        }
    }
}
