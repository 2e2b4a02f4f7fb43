//! Dyadic cubes on Z^n, packed point sets and sparse cube-sum maps.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use serde::Serialize;

use crate::error::{Error, Result};

/// Multiply-rotate hasher for the packed u64 keys used throughout.
#[derive(Default, Clone, Copy)]
pub struct FxHasher {
    hash: u64,
}

impl Hasher for FxHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.hash
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u64(b as u64);
        }
    }

    #[inline]
    fn write_u64(&mut self, i: u64) {
        self.hash = (self.hash.rotate_left(5) ^ i).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }
}

pub type FxBuild = BuildHasherDefault<FxHasher>;
pub type FxHashMap<K, V> = HashMap<K, V, FxBuild>;
pub type FxHashSet<K> = HashSet<K, FxBuild>;

/// Packs points of Z^n into u64 with `min(64/n, 32)` bits per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packer {
    dim: usize,
    bits: u32,
}

impl Packer {
    pub fn new(dim: usize) -> Self {
        assert!((1..=16).contains(&dim));
        Packer {
            dim,
            bits: (64 / dim as u32).min(32),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self) -> i64 {
        1i64 << (self.bits - 1)
    }

    pub fn fits(&self, x: &[i64]) -> bool {
        let off = self.offset();
        x.iter().all(|&v| v >= -off && v < off)
    }

    pub fn try_pack(&self, x: &[i64]) -> Result<u64> {
        if !self.fits(x) {
            return Err(Error::InvalidArgument(format!(
                "coordinate of {x:?} exceeds the packable range +-{}",
                self.offset()
            )));
        }
        Ok(self.pack(x))
    }

    #[inline]
    pub fn pack(&self, x: &[i64]) -> u64 {
        debug_assert!(self.fits(x));
        let off = self.offset();
        let mask = if self.bits == 64 { u64::MAX } else { (1u64 << self.bits) - 1 };
        x.iter()
            .fold(0u64, |acc, &v| (acc << self.bits) | (((v + off) as u64) & mask))
    }

    #[inline]
    pub fn unpack(&self, key: u64, out: &mut [i64]) {
        let off = self.offset();
        let mask = if self.bits == 64 { u64::MAX } else { (1u64 << self.bits) - 1 };
        let mut k = key;
        for slot in out.iter_mut().rev() {
            *slot = (k & mask) as i64 - off;
            k >>= self.bits;
        }
    }
}

/// A set of lattice points.
#[derive(Debug, Clone)]
pub struct PointSet {
    packer: Packer,
    set: FxHashSet<u64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet {
            packer: Packer::new(dim),
            set: FxHashSet::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.packer.dim
    }

    pub fn insert(&mut self, x: &[i64]) -> bool {
        self.set.insert(self.packer.pack(x))
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.packer.fits(x) && self.set.contains(&self.packer.pack(x))
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Points in ascending key order, which is lexicographic.
    pub fn sorted_points(&self) -> Vec<Vec<i64>> {
        let mut keys: Vec<u64> = self.set.iter().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|k| {
                let mut p = vec![0; self.dim()];
                self.packer.unpack(k, &mut p);
                p
            })
            .collect()
    }

    pub fn packer(&self) -> Packer {
        self.packer
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.set.iter().copied()
    }

    pub fn contains_key(&self, k: u64) -> bool {
        self.set.contains(&k)
    }
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.set == other.set
    }
}

/// `[corner, corner + 2^level)^n` with `corner` in `2^level Z^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicCube {
    pub level: u32,
    pub corner: Vec<i64>,
}

impl DyadicCube {
    pub fn new(level: u32, corner: Vec<i64>) -> Result<Self> {
        let side = 1i64 << level;
        if corner.iter().any(|c| c.rem_euclid(side) != 0) {
            return Err(Error::InvalidArgument(format!(
                "corner {corner:?} is not on the level-{level} dyadic lattice"
            )));
        }
        Ok(DyadicCube { level, corner })
    }

    /// Level-`level` cube containing x.
    pub fn containing(x: &[i64], level: u32) -> Self {
        let side = 1i64 << level;
        DyadicCube {
            level,
            corner: x.iter().map(|v| v.div_euclid(side) * side).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn side(&self) -> i64 {
        1i64 << self.level
    }

    pub fn volume(&self) -> u128 {
        (self.side() as u128).pow(self.dim() as u32)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        let s = self.side();
        x.iter().zip(&self.corner).all(|(v, c)| *v >= *c && *v < c + s)
    }

    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        other.level <= self.level && self.contains(&other.corner)
    }

    /// Concentric tripled cube as `(low corner, side)`.
    pub fn triple(&self) -> (Vec<i64>, i64) {
        let s = self.side();
        (self.corner.iter().map(|c| c - s).collect(), 3 * s)
    }

    pub fn triple_contains(&self, x: &[i64]) -> bool {
        let s = self.side();
        x.iter().zip(&self.corner).all(|(v, c)| *v >= c - s && *v < c + 2 * s)
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        assert!(self.level > 0, "unit cubes have no children");
        let half = self.side() / 2;
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| DyadicCube {
                level: self.level - 1,
                corner: (0..n)
                    .map(|k| self.corner[k] + if mask >> k & 1 == 1 { half } else { 0 })
                    .collect(),
            })
            .collect()
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube::containing(&self.corner, self.level + 1)
    }

    /// Lattice points of the cube in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let s = self.side() as usize;
        let n = self.dim();
        let total = s.pow(n as u32);
        (0..total).map(move |mut idx| {
            let mut p = self.corner.clone();
            for k in (0..n).rev() {
                p[k] += (idx % s) as i64;
                idx /= s;
            }
            p
        })
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c: Vec<String> = self.corner.iter().map(|v| v.to_string()).collect();
        write!(f, "Q(level {}, corner [{}])", self.level, c.join(","))
    }
}

/// Nonnegative point masses, kept sorted by packed key.
#[derive(Debug, Clone)]
pub struct WeightedPoints {
    packer: Packer,
    pub keys: Vec<u64>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(dim: usize, mut entries: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        let packer = Packer::new(dim);
        entries.retain(|(_, w)| *w != 0.0);
        let mut packed: Vec<(u64, f64)> = entries
            .iter()
            .map(|(p, w)| packer.try_pack(p).map(|k| (k, w.abs())))
            .collect::<Result<_>>()?;
        packed.sort_by_key(|e| e.0);
        packed.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        Ok(WeightedPoints {
            packer,
            keys: packed.iter().map(|e| e.0).collect(),
            weights: packed.iter().map(|e| e.1).collect(),
        })
    }

    pub fn from_set(set: &PointSet) -> Self {
        let mut keys: Vec<u64> = set.keys().collect();
        keys.sort_unstable();
        let weights = vec![1.0; keys.len()];
        WeightedPoints {
            packer: set.packer(),
            keys,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.packer.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.keys.iter().zip(&self.weights).map(move |(&k, &w)| {
            let mut p = vec![0; self.dim()];
            self.packer.unpack(k, &mut p);
            (p, w)
        })
    }

    /// Total mass inside the box `[low, low + side)^n`.
    pub fn mass_in_box(&self, low: &[i64], side: i64) -> f64 {
        let mut p = vec![0; self.dim()];
        let mut total = 0.0;
        for (&k, &w) in self.keys.iter().zip(&self.weights) {
            self.packer.unpack(k, &mut p);
            if p.iter().zip(low).all(|(v, l)| *v >= *l && *v < l + side) {
                total += w;
            }
        }
        total
    }

    /// `<f>_{3P}` (p = 1) for the tripled cube of P.
    pub fn triple_average(&self, cube: &DyadicCube) -> f64 {
        let (low, side) = cube.triple();
        self.mass_in_box(&low, side) / (side as f64).powi(self.dim() as i32)
    }

    /// Masses of the level-k cells meeting the support, sorted by key.
    fn cell_masses(&self, level: u32) -> Vec<(u64, f64)> {
        let n = self.dim();
        let side = 1i64 << level;
        let mut p = vec![0; n];
        let mut cells: Vec<(u64, f64)> = self
            .keys
            .iter()
            .zip(&self.weights)
            .map(|(&k, &w)| {
                self.packer.unpack(k, &mut p);
                for v in p.iter_mut() {
                    *v = v.div_euclid(side);
                }
                (self.packer.pack(&p), w)
            })
            .collect();
        cells.sort_by_key(|e| e.0);
        let mut out: Vec<(u64, f64)> = Vec::with_capacity(cells.len());
        for (k, w) in cells {
            match out.last_mut() {
                Some(last) if last.0 == k => last.1 += w,
                _ => out.push((k, w)),
            }
        }
        out
    }

    /// Tripled-cube masses at level k as a sorted list: the box sum of the
    /// cell masses over `{-1, 0, 1}^n`, one axis at a time. Shifting a packed
    /// key along an axis adds a constant, so each pass is a sorted merge.
    pub fn triple_masses_sorted(&self, level: u32) -> Vec<(u64, f64)> {
        let n = self.dim();
        let mut cur = self.cell_masses(level);
        let off = self.packer.offset();
        let mut idx = vec![0; n];
        let interior = cur.iter().all(|&(k, _)| {
            self.packer.unpack(k, &mut idx);
            idx.iter().all(|&v| v > -off && v < off - 1)
        });
        assert!(interior, "cell indices at the edge of the packable range");
        for axis in 0..n {
            let step = 1u64 << (self.packer.bits as usize * (n - 1 - axis));
            cur = shift_sum(&cur, step);
        }
        cur
    }

    /// The entries of [`triple_masses`](Self::triple_masses) above
    /// `min_mass`, sorted by key.
    pub fn dense_triple_masses(&self, level: u32, min_mass: f64) -> Vec<(u64, f64)> {
        let mut out = self.triple_masses_sorted(level);
        out.retain(|e| e.1 > min_mass);
        out
    }

    /// Map from level-k cube index (corner / 2^k, packed) to the mass of f in
    /// the tripled cube, over every cube whose triple meets the support.
    pub fn triple_masses(&self, level: u32) -> FxHashMap<u64, f64> {
        self.triple_masses_sorted(level).into_iter().collect()
    }

    pub fn packer(&self) -> Packer {
        self.packer
    }
}

/// `out[k] = v[k - step] + v[k] + v[k + step]` over sorted `(key, value)`
/// lists, keeping every key with a contribution.
fn shift_sum(v: &[(u64, f64)], step: u64) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = Vec::with_capacity(v.len() * 2);
    // sources: v shifted by +step, v itself, v shifted by -step
    let (mut a, mut b, mut c) = (0usize, 0usize, 0usize);
    loop {
        let ka = v.get(a).map(|e| e.0 + step);
        let kb = v.get(b).map(|e| e.0);
        let kc = v.get(c).map(|e| e.0 - step);
        let Some(k) = [ka, kb, kc].into_iter().flatten().min() else {
            break;
        };
        let mut m = 0.0;
        if kc == Some(k) {
            m += v[c].1;
            c += 1;
        }
        if kb == Some(k) {
            m += v[b].1;
            b += 1;
        }
        if ka == Some(k) {
            m += v[a].1;
            a += 1;
        }
        out.push((k, m));
    }
    out
}

/// Membership bitmap over the bounding box of a point set, for fast lookups
/// in inner loops.
#[derive(Debug, Clone)]
pub struct BoxBits {
    low: Vec<i64>,
    extents: Vec<usize>,
    words_per_row: usize,
    bits: Vec<u64>,
    count: usize,
}

impl BoxBits {
    /// Bitmap of `points`; refuses boxes with more than `max_bits` cells.
    pub fn new(dim: usize, points: &[Vec<i64>], max_bits: f64) -> Result<Self> {
        if points.is_empty() {
            return Ok(BoxBits {
                low: vec![0; dim],
                extents: vec![0; dim],
                words_per_row: 0,
                bits: Vec::new(),
                count: 0,
            });
        }
        let low: Vec<i64> = (0..dim).map(|k| points.iter().map(|p| p[k]).min().unwrap()).collect();
        let high: Vec<i64> = (0..dim).map(|k| points.iter().map(|p| p[k]).max().unwrap()).collect();
        let extents: Vec<usize> = low.iter().zip(&high).map(|(l, h)| (h - l + 1) as usize).collect();
        let cells: f64 = extents.iter().map(|&e| e as f64).product();
        if cells > max_bits {
            return Err(Error::budget("membership bitmap", cells, max_bits));
        }
        let words_per_row = extents[dim - 1].div_ceil(64);
        let rows: usize = extents[..dim - 1].iter().product();
        let mut b = BoxBits {
            low,
            extents,
            words_per_row,
            bits: vec![0; rows * words_per_row],
            count: 0,
        };
        for p in points {
            let (w, bit) = b.locate(p).unwrap();
            if b.bits[w] & bit == 0 {
                b.bits[w] |= bit;
                b.count += 1;
            }
        }
        Ok(b)
    }

    #[inline]
    fn locate(&self, x: &[i64]) -> Option<(usize, u64)> {
        let n = self.low.len();
        let mut row = 0usize;
        for k in 0..n - 1 {
            let o = x[k] - self.low[k];
            if o < 0 || o as usize >= self.extents[k] {
                return None;
            }
            row = row * self.extents[k] + o as usize;
        }
        let o = x[n - 1] - self.low[n - 1];
        if o < 0 || o as usize >= self.extents[n - 1] {
            return None;
        }
        let o = o as usize;
        Some((row * self.words_per_row + o / 64, 1u64 << (o % 64)))
    }

    #[inline]
    pub fn contains(&self, x: &[i64]) -> bool {
        match self.locate(x) {
            Some((w, bit)) => self.bits[w] & bit != 0,
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn box_bits_membership() {
        let pts = vec![vec![3, -2, 70], vec![0, 0, 0], vec![3, -2, 70], vec![1, 5, 129]];
        let b = BoxBits::new(3, &pts, 1e6).unwrap();
        assert_eq!(b.len(), 3);
        for p in &pts {
            assert!(b.contains(p));
        }
        assert!(!b.contains(&[3, -2, 69]) && !b.contains(&[9, 9, 9]) && !b.contains(&[1, 5, 130]));
        assert!(BoxBits::new(3, &pts, 10.0).is_err());
    }

    #[test]
    fn cube_geometry() {
        let q = DyadicCube::new(3, vec![8, -8]).unwrap();
        assert_eq!(q.volume(), 64);
        assert!(q.contains(&[8, -1]) && !q.contains(&[16, -1]));
        let kids = q.children();
        assert_eq!(kids.len(), 4);
        assert_eq!(kids.iter().map(|c| c.volume()).sum::<u128>(), q.volume());
        assert!(kids.iter().all(|c| c.parent() == q && q.contains_cube(c)));
        let (low, side) = q.triple();
        assert_eq!((low, side), (vec![0, -16], 24));
        assert_eq!((side as u128).pow(2), 9 * q.volume());
        assert!(DyadicCube::new(3, vec![4, 0]).is_err());
        assert_eq!(q.points().count(), 64);
    }

    #[test]
    fn triple_masses_match_direct() {
        let pts = vec![(vec![0, 0], 1.0), (vec![5, 3], 2.0), (vec![-3, 7], 0.5), (vec![12, -9], 1.0)];
        let f = WeightedPoints::new(2, pts).unwrap();
        for level in 0..4u32 {
            let m = f.triple_masses(level);
            let side = 1i64 << level;
            for i in -6..6 {
                for j in -6..6 {
                    let cube = DyadicCube::new(level, vec![i * side, j * side]).unwrap();
                    let direct = f.triple_average(&cube) * (3.0 * side as f64).powi(2);
                    let key = f.packer().pack(&[i, j]);
                    let got = m.get(&key).copied().unwrap_or(0.0);
                    assert!((direct - got).abs() < 1e-12, "level {level} cube {cube}");
                }
            }
        }
    }

    #[test]
    fn dense_masses_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<(Vec<i64>, f64)> = (0..300)
            .map(|_| (vec![rng.gen_range(-40..40), rng.gen_range(-40..40), rng.gen_range(-40..40)], 1.0))
            .collect();
        for x in 0..4 {
            for y in 0..4 {
                pts.push((vec![x, y, 7], 1.0));
            }
        }
        pts.sort_by(|a, b| a.0.cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let f = WeightedPoints::new(3, pts.clone()).unwrap();
        for level in 0..5u32 {
            let side = 1i64 << level;
            // every cube whose triple meets a point, counted point by point
            let mut want: std::collections::BTreeMap<u64, f64> = Default::default();
            for (x, w) in &pts {
                let c: Vec<i64> = x.iter().map(|v| v.div_euclid(side)).collect();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let key = f.packer().pack(&[c[0] + dx, c[1] + dy, c[2] + dz]);
                            *want.entry(key).or_insert(0.0) += w;
                        }
                    }
                }
            }
            for min_mass in [0.5, 1.5, 4.0, 12.0] {
                let w: Vec<(u64, f64)> = want.iter().filter(|e| *e.1 > min_mass).map(|(&k, &m)| (k, m)).collect();
                assert_eq!(f.dense_triple_masses(level, min_mass), w, "level {level} min {min_mass}");
            }
        }
    }

    proptest! {
        #[test]
        fn pack_round_trip(x in proptest::collection::vec(-2000i64..2000, 5)) {
            let p = Packer::new(5);
            let mut back = vec![0; 5];
            p.unpack(p.pack(&x), &mut back);
            prop_assert_eq!(back, x);
        }

        #[test]
        fn pack_order_is_lexicographic(a in proptest::collection::vec(-500i64..500, 4), b in proptest::collection::vec(-500i64..500, 4)) {
            let p = Packer::new(4);
            prop_assert_eq!(p.pack(&a).cmp(&p.pack(&b)), a.cmp(&b));
        }
    }
}
