use serde::Serialize;

use super::dyadic::{DyadicCube, FxHashMap, PointSet, WeightedPoints};
use crate::error::{Error, Result};
use crate::gridops::GridFunction;

/// The set `E_Q` attached to a cube of a sparse collection.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Points(PointSet),
    /// `Q` minus the union of the listed dyadic subcubes.
    Complement(Vec<DyadicCube>),
}

#[derive(Debug, Clone)]
pub struct SparseCollection {
    dim: usize,
    pub cubes: Vec<DyadicCube>,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollectionSummary {
    pub cubes: usize,
    pub levels: Vec<(u32, usize)>,
    /// Smallest `|E_Q| / |Q|` in the collection.
    pub min_density: f64,
}

impl SparseCollection {
    pub fn new(dim: usize) -> Self {
        SparseCollection {
            dim,
            cubes: Vec::new(),
            witnesses: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn push(&mut self, cube: DyadicCube, witness: Witness) {
        assert_eq!(cube.dim(), self.dim);
        self.cubes.push(cube);
        self.witnesses.push(witness);
    }

    /// `|E_Q|`, assuming the witness has already been checked to lie in Q.
    fn witness_size(&self, i: usize) -> u128 {
        match &self.witnesses[i] {
            Witness::Points(s) => s.len() as u128,
            Witness::Complement(holes) => self.cubes[i].volume() - holes.iter().map(|h| h.volume()).sum::<u128>(),
        }
    }

    fn witness_contains(&self, i: usize, x: &[i64]) -> bool {
        match &self.witnesses[i] {
            Witness::Points(s) => s.contains(x),
            Witness::Complement(holes) => self.cubes[i].contains(x) && !holes.iter().any(|h| h.contains(x)),
        }
    }

    fn witness_points(&self, i: usize) -> Vec<Vec<i64>> {
        match &self.witnesses[i] {
            Witness::Points(s) => s.sorted_points(),
            Witness::Complement(_) => self.cubes[i].points().filter(|x| self.witness_contains(i, x)).collect(),
        }
    }

    fn check_shape(&self, i: usize) -> Result<()> {
        let q = &self.cubes[i];
        match &self.witnesses[i] {
            Witness::Points(s) => {
                if s.dim() != self.dim {
                    return Err(Error::InvalidCollection(format!("witness of {q} has the wrong dimension")));
                }
                if let Some(x) = s.sorted_points().into_iter().find(|x| !q.contains(x)) {
                    return Err(Error::InvalidCollection(format!("witness point {x:?} lies outside {q}")));
                }
            }
            Witness::Complement(holes) => {
                for (a, h) in holes.iter().enumerate() {
                    if h.dim() != self.dim || !q.contains_cube(h) || h == q {
                        return Err(Error::InvalidCollection(format!("hole {h} is not a proper subcube of {q}")));
                    }
                    if let Some(o) = holes[..a].iter().find(|o| o.contains_cube(h) || h.contains_cube(o)) {
                        return Err(Error::InvalidCollection(format!("holes {o} and {h} of {q} overlap")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Does `E_i` meet `E_j`? Exact; uses the dyadic structure when both
    /// witnesses are complements and falls back to enumeration otherwise.
    fn witnesses_meet(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.cubes[i], &self.cubes[j]);
        if !(a.contains_cube(b) || b.contains_cube(a)) {
            return false;
        }
        // order so that `small` lies inside `big`
        let (big, small) = if a.contains_cube(b) && a != b { (i, j) } else { (j, i) };
        if let (Witness::Complement(holes), Witness::Complement(_)) = (&self.witnesses[big], &self.witnesses[small]) {
            if self.cubes[big] != self.cubes[small] && holes.iter().any(|h| h.contains_cube(&self.cubes[small])) {
                return false;
            }
        }
        let (probe, other) = if self.witness_size(small) <= self.witness_size(big) { (small, big) } else { (big, small) };
        self.witness_points(probe).iter().any(|x| self.witness_contains(other, x))
    }

    /// Accepts iff every witness lies in its cube, has `|E_Q| > |Q|/4`, and
    /// the witnesses are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.len() {
            self.check_shape(i)?;
            let q = &self.cubes[i];
            let size = self.witness_size(i);
            if 4 * size <= q.volume() {
                return Err(Error::InvalidCollection(format!(
                    "witness of {q} has {size} points, not more than |Q|/4 = {}/4",
                    q.volume()
                )));
            }
        }
        // only nested cubes can share points; sort so ancestors come first
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.cubes[b].level.cmp(&self.cubes[a].level).then(self.cubes[a].corner.cmp(&self.cubes[b].corner)));
        for (pos, &i) in order.iter().enumerate() {
            for &j in &order[pos + 1..] {
                if self.witnesses_meet(i, j) {
                    return Err(Error::InvalidCollection(format!(
                        "witnesses of {} and {} overlap",
                        self.cubes[i], self.cubes[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> CollectionSummary {
        let mut levels: FxHashMap<u32, usize> = FxHashMap::default();
        for q in &self.cubes {
            *levels.entry(q.level).or_default() += 1;
        }
        let mut levels: Vec<(u32, usize)> = levels.into_iter().collect();
        levels.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        let min_density = (0..self.len())
            .map(|i| self.witness_size(i) as f64 / self.cubes[i].volume() as f64)
            .fold(f64::INFINITY, f64::min);
        CollectionSummary {
            cubes: self.len(),
            levels,
            min_density: if self.is_empty() { 0.0 } else { min_density },
        }
    }
}

/// Per-cell statistics `(sum |f|^p, max |f|)` of a nonnegative function on
/// the level-`level` dyadic grid, optionally over tripled cubes.
fn cell_stats(f: &WeightedPoints, level: u32, p: f64, triple: bool) -> FxHashMap<u64, (f64, f64)> {
    let n = f.dim();
    let packer = f.packer();
    let side = 1i64 << level;
    let mut cells: FxHashMap<u64, (f64, f64)> = FxHashMap::default();
    let mut x = vec![0; n];
    let mut idx = vec![0; n];
    let pw = |w: f64| if p.is_infinite() { 0.0 } else { w.powf(p) };
    for (&k, &w) in f.keys.iter().zip(&f.weights) {
        packer.unpack(k, &mut x);
        for (i, v) in idx.iter_mut().zip(&x) {
            *i = v.div_euclid(side);
        }
        let e = cells.entry(packer.pack(&idx)).or_insert((0.0, 0.0));
        e.0 += pw(w);
        e.1 = e.1.max(w);
    }
    if !triple {
        return cells;
    }
    let mut sorted: Vec<(u64, (f64, f64))> = cells.into_iter().collect();
    sorted.sort_unstable_by_key(|e| e.0);
    let mut out: FxHashMap<u64, (f64, f64)> = FxHashMap::default();
    for (key, (s, m)) in sorted {
        packer.unpack(key, &mut idx);
        for t in 0..3usize.pow(n as u32) {
            let mut t = t;
            for (k, slot) in x.iter_mut().enumerate() {
                *slot = idx[k] + (t % 3) as i64 - 1;
                t /= 3;
            }
            let e = out.entry(packer.pack(&x)).or_insert((0.0, 0.0));
            e.0 += s;
            e.1 = e.1.max(m);
        }
    }
    out
}

/// `<f>_{Q,p}` from cell statistics, `p = inf` giving the maximum.
fn lp_average(stats: Option<&(f64, f64)>, volume: f64, p: f64) -> f64 {
    match stats {
        None => 0.0,
        Some(&(s, m)) => {
            if p.is_infinite() {
                m
            } else {
                (s / volume).powf(1.0 / p)
            }
        }
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("exponent {p} must lie in [1, inf]")));
    }
    Ok(())
}

/// `Lambda_{S,p,q}` over a validated collection.
#[derive(Debug, Clone, Copy)]
pub struct SparseForm<'a> {
    pub collection: &'a SparseCollection,
    pub p: f64,
    pub q: f64,
}

impl<'a> SparseForm<'a> {
    pub fn new(collection: &'a SparseCollection, p: f64, q: f64) -> Result<Self> {
        check_exponent(p)?;
        check_exponent(q)?;
        collection.validate()?;
        Ok(SparseForm { collection, p, q })
    }

    fn sum(&self, f: &WeightedPoints, g: &WeightedPoints, triple_f: bool) -> f64 {
        let n = self.collection.dim;
        let mut levels: Vec<u32> = self.collection.cubes.iter().map(|c| c.level).collect();
        levels.sort_unstable();
        levels.dedup();
        let packer = f.packer();
        let mut total = 0.0;
        let mut idx = vec![0; n];
        for level in levels {
            let fs = cell_stats(f, level, self.p, triple_f);
            let gs = cell_stats(g, level, self.q, false);
            let side = 1i64 << level;
            let vol = (side as f64).powi(n as i32);
            let fvol = if triple_f { 3f64.powi(n as i32) * vol } else { vol };
            for q in self.collection.cubes.iter().filter(|c| c.level == level) {
                for (i, c) in idx.iter_mut().zip(&q.corner) {
                    *i = c / side;
                }
                let key = packer.pack(&idx);
                total += vol * lp_average(fs.get(&key), fvol, self.p) * lp_average(gs.get(&key), vol, self.q);
            }
        }
        total
    }

    /// `sum_Q |Q| <f>_{Q,p} <g>_{Q,q}`.
    pub fn value(&self, f: &WeightedPoints, g: &WeightedPoints) -> f64 {
        self.sum(f, g, false)
    }

    /// `sum_Q |Q| <f>_{3Q,p} <g>_{Q,q}`, the form produced by the stopping
    /// recursion.
    pub fn value_tripled(&self, f: &WeightedPoints, g: &WeightedPoints) -> f64 {
        self.sum(f, g, true)
    }
}

/// `Lambda_{S,p,q}(f, g)` for grid functions; the collection is validated
/// first.
pub fn sparse_form_value(collection: &SparseCollection, p: f64, q: f64, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    let form = SparseForm::new(collection, p, q)?;
    if f.dim() != collection.dim() || g.dim() != collection.dim() {
        return Err(Error::InvalidArgument("function and collection dimensions differ".into()));
    }
    let fw = WeightedPoints::new(f.dim(), f.support_masses())?;
    let gw = WeightedPoints::new(g.dim(), g.support_masses())?;
    Ok(form.value(&fw, &gw))
}
