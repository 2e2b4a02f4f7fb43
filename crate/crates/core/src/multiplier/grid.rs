use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Every sample of the `G^n` grid.
    Dense,
    /// One representative per orbit of signed coordinate permutations, with
    /// its orbit size as weight. Only valid for functions with that symmetry.
    Orbit,
}

/// Uniform samples `xi_j = (j - (G-1)/2) / G`, `0 <= j < G`, of the torus
/// `[-1/2, 1/2]^n`; G is odd so `xi = 0` is a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    pub g: usize,
    pub dim: usize,
    pub layout: Layout,
    indices: Vec<u16>,
    weights: Vec<f64>,
}

impl TorusGrid {
    pub fn new(g: usize, dim: usize, layout: Layout, budget: f64) -> Result<Self> {
        if g % 2 == 0 || g == 0 || g > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("grid size {g} must be odd")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("grid dimension must be positive".into()));
        }
        let count = match layout {
            Layout::Dense => (g as f64).powi(dim as i32),
            Layout::Orbit => binomial((g - 1) / 2 + dim, dim),
        };
        if count > budget {
            return Err(Error::budget(format!("torus grid G={g} n={dim} ({layout:?})"), count, budget));
        }
        let mut indices = Vec::with_capacity(count as usize * dim);
        let mut weights = Vec::with_capacity(count as usize);
        match layout {
            Layout::Dense => {
                let total = g.pow(dim as u32);
                let mut j = vec![0usize; dim];
                for flat in 0..total {
                    crate::fft::unravel(flat, &vec![g; dim], &mut j);
                    indices.extend(j.iter().map(|&v| v as u16));
                    weights.push(1.0);
                }
            }
            Layout::Orbit => {
                let c = (g - 1) / 2;
                let mut k = vec![0usize; dim];
                loop {
                    indices.extend(k.iter().map(|&v| (v + c) as u16));
                    weights.push(orbit_size(&k));
                    // next nondecreasing tuple in lexicographic order
                    let mut i = dim;
                    while i > 0 && k[i - 1] == c {
                        i -= 1;
                    }
                    if i == 0 {
                        break;
                    }
                    k[i - 1] += 1;
                    let v = k[i - 1];
                    for slot in k.iter_mut().skip(i) {
                        *slot = v;
                    }
                }
            }
        }
        Ok(TorusGrid {
            g,
            dim,
            layout,
            indices,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of torus samples represented, `G^n`.
    pub fn total_samples(&self) -> f64 {
        (self.g as f64).powi(self.dim as i32)
    }

    pub fn index(&self, i: usize) -> &[u16] {
        &self.indices[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        (j as f64 - ((self.g - 1) / 2) as f64) / self.g as f64
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.index(i).iter().map(|&j| self.coordinate(j as usize)).collect()
    }

    /// Position of the sample with grid indices `j` (its orbit
    /// representative in the orbit layout).
    pub fn position(&self, j: &[usize]) -> Option<usize> {
        if j.len() != self.dim || j.iter().any(|&v| v >= self.g) {
            return None;
        }
        match self.layout {
            Layout::Dense => Some(j.iter().fold(0, |acc, &v| acc * self.g + v)),
            Layout::Orbit => {
                let c = (self.g - 1) / 2;
                let mut key: Vec<u16> = j.iter().map(|&v| (v.abs_diff(c) + c) as u16).collect();
                key.sort_unstable();
                // representatives are sorted lexicographically
                let (mut lo, mut hi) = (0usize, self.len());
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    match self.index(mid).cmp(&key[..]) {
                        std::cmp::Ordering::Less => lo = mid + 1,
                        std::cmp::Ordering::Greater => hi = mid,
                        std::cmp::Ordering::Equal => return Some(mid),
                    }
                }
                None
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Size of the signed-permutation orbit of a nonnegative sorted tuple.
fn orbit_size(k: &[usize]) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &v in k {
        *counts.entry(v).or_default() += 1;
    }
    let fact = |m: usize| (1..=m).fold(1.0, |a, b| a * b as f64);
    let perms = counts.values().fold(fact(k.len()), |acc, &c| acc / fact(c));
    let signs = 2f64.powi(k.iter().filter(|&&v| v > 0).count() as i32);
    perms * signs
}

/// Samples of one multiplier piece on a torus grid.
#[derive(Debug, Clone)]
pub struct MultiplierGrid {
    pub label: String,
    pub grid: TorusGrid,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub label: String,
    pub g: usize,
    pub dim: usize,
    pub layout: Layout,
    pub samples: usize,
    /// Largest sampled modulus; a lower bound for the true sup.
    pub sup: f64,
    /// `(G^{-n} sum |m|^2)^{1/2}` over the full grid.
    pub l2_mean: f64,
}

impl MultiplierGrid {
    pub fn new(label: impl Into<String>, grid: TorusGrid, values: Vec<Complex64>) -> Self {
        assert_eq!(grid.len(), values.len());
        MultiplierGrid {
            label: label.into(),
            grid,
            values,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn l2_mean(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v.norm_sqr() * self.grid.weight(i))
            .sum();
        (s / self.grid.total_samples()).sqrt()
    }

    pub fn at(&self, j: &[usize]) -> Option<Complex64> {
        self.grid.position(j).map(|i| self.values[i])
    }

    /// Pointwise combination of two pieces on the same grid.
    pub fn zip_with(&self, other: &MultiplierGrid, label: &str, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("pieces live on different grids".into()));
        }
        Ok(MultiplierGrid {
            label: label.into(),
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &MultiplierGrid) -> Result<f64> {
        Ok(self.zip_with(other, "diff", |a, b| a - b)?.sup_norm())
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            label: self.label.clone(),
            g: self.grid.g,
            dim: self.grid.dim,
            layout: self.grid.layout,
            samples: self.grid.len(),
            sup: self.sup_norm(),
            l2_mean: self.l2_mean(),
        }
    }

    /// Columns `xi_1..xi_n, re, im`, plus `orbit_size` in the orbit layout.
    /// Floats use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let n = self.grid.dim;
        let mut out = String::new();
        let cols: Vec<String> = (1..=n).map(|k| format!("xi{k}")).collect();
        out.push_str(&cols.join(","));
        out.push_str(",re,im");
        if self.grid.layout == Layout::Orbit {
            out.push_str(",orbit_size");
        }
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            for x in self.grid.point(i) {
                let _ = write!(out, "{x:?},");
            }
            let _ = write!(out, "{:?},{:?}", v.re, v.im);
            if self.grid.layout == Layout::Orbit {
                let _ = write!(out, ",{}", self.grid.weight(i));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_weights_cover_the_grid() {
        for (g, n) in [(5usize, 2usize), (7, 3), (33, 5)] {
            let t = TorusGrid::new(g, n, Layout::Orbit, 1e7).unwrap();
            let total: f64 = (0..t.len()).map(|i| t.weight(i)).sum();
            assert_eq!(total, (g as f64).powi(n as i32));
        }
        assert_eq!(TorusGrid::new(33, 5, Layout::Orbit, 1e7).unwrap().len(), 20349);
    }

    #[test]
    fn positions_resolve_to_representatives() {
        let t = TorusGrid::new(7, 3, Layout::Orbit, 1e7).unwrap();
        // indices 0..7 map to xi = -3/7..3/7
        let i = t.position(&[0, 5, 3]).unwrap();
        assert_eq!(t.point(i), vec![0.0, 2.0 / 7.0, 3.0 / 7.0]);
        let d = TorusGrid::new(7, 3, Layout::Dense, 1e7).unwrap();
        assert_eq!(d.point(d.position(&[0, 5, 3]).unwrap()), vec![-3.0 / 7.0, 2.0 / 7.0, 0.0]);
        assert!(TorusGrid::new(8, 2, Layout::Dense, 1e7).is_err());
        assert!(TorusGrid::new(101, 5, Layout::Dense, 1e7).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let t = TorusGrid::new(3, 2, Layout::Dense, 1e7).unwrap();
        let vals: Vec<Complex64> = (0..9).map(|k| Complex64::new(1.0 / (k as f64 + 3.0), -0.1 * k as f64)).collect();
        let m = MultiplierGrid::new("s", t, vals.clone());
        let csv = m.to_csv();
        for (line, v) in csv.lines().skip(1).zip(&vals) {
            let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            assert_eq!(cols[2], v.re);
            assert_eq!(cols[3], v.im);
        }
    }
}
