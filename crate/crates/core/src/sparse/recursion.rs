use rayon::prelude::*;
use serde::Serialize;

use super::collection::{CollectionSummary, SparseCollection, SparseForm, Witness};
use super::dyadic::{BoxBits, DyadicCube, FxHashSet, PointSet, WeightedPoints};
use crate::error::{Error, Result};
use crate::forms::{Cutoff, IntegralForm};
use crate::gridops::{RadiiSequence, StoppingTime};
use crate::lattice::{enumerate_shell, EnumerationOptions, LatticeShell};

#[derive(Debug, Clone, Serialize)]
pub struct RecursionConfig {
    /// Density threshold `C` in `<f>_{3P} > C <f>_{3Q}`.
    pub threshold: f64,
    pub p: f64,
    pub q: f64,
    pub max_depth: usize,
    /// Re-check each node's stopping time with the admissibility validator.
    pub verify_admissible: bool,
    /// Largest membership bitmap allowed for F.
    pub max_bits: f64,
}

impl RecursionConfig {
    /// Defaults: `C = 4 * 3^n`, depth cap 64.
    pub fn new(dim: usize, p: f64, q: f64) -> Self {
        RecursionConfig {
            threshold: 4.0 * 3f64.powi(dim as i32),
            p,
            q,
            max_depth: 64,
            verify_admissible: true,
            max_bits: 4e9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeRecord {
    pub cube: DyadicCube,
    pub depth: usize,
    pub stopping_cubes: usize,
    /// `sum |P|` over the stopping cubes.
    pub covered: u128,
    /// `<M_tau f, g 1_Q>` for this node's stopping time.
    pub pairing: f64,
    /// `<f>_{3Q,p}`.
    pub f_average: f64,
    /// `<g>_{Q,q}`.
    pub g_average: f64,
    /// `pairing / (|Q| <f>_{3Q,p} <g>_{Q,q})`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub threshold: f64,
    pub p: f64,
    pub q: f64,
    pub root: DyadicCube,
    pub nodes: Vec<NodeRecord>,
    /// `<sup_k M_k f, g>` over the radii whose scale fits the root.
    pub maximal_pairing: f64,
    /// Sum of the node pairings; dominates `maximal_pairing`.
    pub tau_pairing: f64,
    /// `Lambda_{S,p,q}(f, g)` with cube averages of f.
    pub form_value: f64,
    /// The same sum with `<f>_{3Q,p}`.
    pub tripled_form_value: f64,
    pub max_node_ratio: f64,
    pub collection: CollectionSummary,
}

impl Certificate {
    /// Smallest C with `tau_pairing <= C Lambda_{S,p,q}(f, g)`.
    pub fn constant(&self) -> f64 {
        if self.tau_pairing == 0.0 {
            0.0
        } else {
            self.tau_pairing / self.form_value
        }
    }
}

fn restrict(points: &[Vec<i64>], keep: impl Fn(&[i64]) -> bool) -> Vec<Vec<i64>> {
    points.iter().filter(|x| keep(x)).cloned().collect()
}

fn weighted(dim: usize, points: &[Vec<i64>]) -> Result<WeightedPoints> {
    WeightedPoints::new(dim, points.iter().map(|p| (p.clone(), 1.0)).collect())
}

/// Maximal dyadic `P` strictly inside `q` with `<f>_{3P} > C <f>_{3Q}`, where
/// `f` is first restricted to `3Q`. Sorted.
pub fn stopping_cubes(f: &WeightedPoints, q: &DyadicCube, threshold: f64) -> Result<Vec<DyadicCube>> {
    let n = q.dim();
    let local = WeightedPoints::new(n, f.iter().filter(|(x, _)| q.triple_contains(x)).collect())?;
    let avg = local.triple_average(q);
    if avg == 0.0 || q.level == 0 {
        return Ok(Vec::new());
    }
    let limit = threshold * avg;
    let packer = local.packer();
    let mut chosen: FxHashSet<(u32, Vec<i64>)> = FxHashSet::default();
    let mut out = Vec::new();
    let mut idx = vec![0i64; n];
    for level in (0..q.level).rev() {
        let side = 1i64 << level;
        let vol = (3.0 * side as f64).powi(n as i32);
        let mut dense: Vec<DyadicCube> = local
            .dense_triple_masses(level, limit * vol)
            .into_iter()
            .filter(|(_, m)| m / vol > limit)
            .map(|(key, _)| {
                packer.unpack(key, &mut idx);
                DyadicCube {
                    level,
                    corner: idx.iter().map(|i| i * side).collect(),
                }
            })
            .filter(|c| q.contains_cube(c))
            .collect();
        dense.sort();
        for c in dense {
            let covered = (level + 1..q.level).any(|l| chosen.contains(&(l, DyadicCube::containing(&c.corner, l).corner)));
            if !covered {
                chosen.insert((level, c.corner.clone()));
                out.push(c);
            }
        }
    }
    out.sort();
    Ok(out)
}

struct Engine<'a> {
    shells: &'a [LatticeShell],
    scales: Vec<i64>,
    fbits: BoxBits,
    f_all: Vec<Vec<i64>>,
    cfg: &'a RecursionConfig,
    dim: usize,
}

impl Engine<'_> {
    fn average(&self, k: usize, x: &[i64]) -> f64 {
        let s = &self.shells[k];
        let mut z = vec![0i64; self.dim];
        let mut acc = 0.0;
        for (y, w) in s.iter() {
            for j in 0..self.dim {
                z[j] = x[j] - y[j];
            }
            if self.fbits.contains(&z) {
                acc += w;
            }
        }
        acc / s.r_value
    }

    /// Best allowed radius at x: scale at most `top`, and above `floor`.
    fn best(&self, x: &[i64], top: i64, floor: Option<i64>) -> (Option<usize>, f64) {
        let mut best = (None, 0.0);
        for k in 0..self.shells.len() {
            let s = self.scales[k];
            if s > top || floor.is_some_and(|fl| s <= fl) {
                continue;
            }
            let v = self.average(k, x);
            if best.0.is_none() || v > best.1 {
                best = (Some(k), v);
            }
        }
        best
    }

    fn node(
        &self,
        q: &DyadicCube,
        g: Vec<Vec<i64>>,
        depth: usize,
        collection: &mut SparseCollection,
        nodes: &mut Vec<NodeRecord>,
    ) -> Result<()> {
        if depth > self.cfg.max_depth {
            return Err(Error::DepthCap(self.cfg.max_depth));
        }
        let n = self.dim;
        let f_local = restrict(&self.f_all, |x| q.triple_contains(x));
        let fw = weighted(n, &f_local)?;
        let holes = stopping_cubes(&fw, q, self.cfg.threshold)?;
        let covered: u128 = holes.iter().map(|h| h.volume()).sum();
        if 4 * covered > q.volume() {
            return Err(Error::Packing {
                cube: q.to_string(),
                covered,
                limit: q.volume() / 4,
            });
        }
        let side = q.side();
        let choices: Vec<(Option<usize>, f64)> = g
            .par_iter()
            .map(|x| {
                let floor = holes.iter().find(|h| h.contains(x)).map(|h| h.side());
                self.best(x, side, floor)
            })
            .collect();
        let pairing: f64 = choices.iter().map(|c| c.1).sum();
        if self.cfg.verify_admissible {
            let mut tau = StoppingTime::new(q.clone(), self.cfg.threshold, self.shells, None);
            for (x, c) in g.iter().zip(&choices) {
                tau.set(x, c.0);
            }
            tau.check_admissible(&fw)?;
        }
        let vol = q.volume() as f64;
        let f_average = avg_p(f_local.len() as f64 / (3f64.powi(n as i32) * vol), self.cfg.p);
        let g_average = avg_p(g.len() as f64 / vol, self.cfg.q);
        let denom = vol * f_average * g_average;
        nodes.push(NodeRecord {
            cube: q.clone(),
            depth,
            stopping_cubes: holes.len(),
            covered,
            pairing,
            f_average,
            g_average,
            ratio: if denom > 0.0 { pairing / denom } else { 0.0 },
        });
        collection.push(q.clone(), Witness::Complement(holes.clone()));
        for h in holes {
            let gh = restrict(&g, |x| h.contains(x));
            // with g = 0 on P every term below vanishes
            if !gh.is_empty() {
                self.node(&h, gh, depth + 1, collection, nodes)?;
            }
        }
        Ok(())
    }
}

/// `<1_A>_{p}` for a set of relative size `density`.
fn avg_p(density: f64, p: f64) -> f64 {
    if density == 0.0 {
        0.0
    } else if p.is_infinite() {
        1.0
    } else {
        density.powf(1.0 / p)
    }
}

/// Runs the stopping-time recursion on `f = 1_F`, `g = 1_G` below `root`.
///
/// At each node the stopping cubes are the maximal dyadic `P` with
/// `<f>_{3P} > C <f>_{3Q}`; the node's stopping time picks, at each point of
/// G, the radius maximizing the average among those whose spatial scale
/// `max |y|_inf` is at most `side(Q)` and, inside a stopping cube P, larger
/// than `side(P)`. Subtrees with `g = 0` are skipped.
pub fn stopping_time_recursion_shells(
    shells: &[LatticeShell],
    f: &PointSet,
    g: &PointSet,
    root: &DyadicCube,
    cfg: &RecursionConfig,
) -> Result<(SparseCollection, Certificate)> {
    let n = root.dim();
    if f.dim() != n || g.dim() != n || shells.iter().any(|s| s.dim != n) {
        return Err(Error::InvalidArgument("dimension mismatch in the recursion inputs".into()));
    }
    if shells.is_empty() {
        return Err(Error::InvalidArgument("empty radius sequence".into()));
    }
    if !(cfg.threshold > 1.0) {
        return Err(Error::InvalidArgument("the threshold C must exceed 1".into()));
    }
    let f_all = f.sorted_points();
    let g_all = g.sorted_points();
    if let Some(x) = f_all.iter().find(|x| !root.triple_contains(x)) {
        return Err(Error::InvalidArgument(format!("F point {x:?} lies outside 3Q")));
    }
    if let Some(x) = g_all.iter().find(|x| !root.contains(x)) {
        return Err(Error::InvalidArgument(format!("G point {x:?} lies outside Q")));
    }
    let engine = Engine {
        shells,
        scales: shells.iter().map(|s| s.max_inf_norm()).collect(),
        fbits: BoxBits::new(n, &f_all, cfg.max_bits)?,
        f_all,
        cfg,
        dim: n,
    };
    let mut collection = SparseCollection::new(n);
    let mut nodes = Vec::new();
    if !g_all.is_empty() {
        engine.node(root, g_all.clone(), 0, &mut collection, &mut nodes)?;
    }
    let side = root.side();
    let maximal_pairing: f64 = g_all.par_iter().map(|x| engine.best(x, side, None).1).collect::<Vec<f64>>().iter().sum();
    let tau_pairing: f64 = nodes.iter().map(|r| r.pairing).sum();
    let form = SparseForm::new(&collection, cfg.p, cfg.q)?;
    let fw = weighted(n, &engine.f_all)?;
    let gw = weighted(n, &g_all)?;
    let cert = Certificate {
        threshold: cfg.threshold,
        p: cfg.p,
        q: cfg.q,
        root: root.clone(),
        maximal_pairing,
        tau_pairing,
        form_value: form.value(&fw, &gw),
        tripled_form_value: form.value_tripled(&fw, &gw),
        max_node_ratio: nodes.iter().map(|r| r.ratio).fold(0.0, f64::max),
        collection: collection.summary(),
        nodes,
    };
    Ok((collection, cert))
}

/// [`stopping_time_recursion_shells`] with the shells of `seq` enumerated
/// first.
pub fn stopping_time_recursion(
    form: &IntegralForm,
    phi: &Cutoff,
    seq: &RadiiSequence,
    f: &PointSet,
    g: &PointSet,
    root: &DyadicCube,
    cfg: &RecursionConfig,
) -> Result<(SparseCollection, Certificate)> {
    let opts = EnumerationOptions::default();
    let shells: Vec<LatticeShell> = seq
        .as_u64()?
        .into_iter()
        .map(|l| enumerate_shell(form, phi, l, &opts))
        .collect::<Result<_>>()?;
    stopping_time_recursion_shells(&shells, f, g, root, cfg)
}

/// Random `F in 3Q`, `G in Q` for certificate runs: a uniform sprinkle with
/// log-uniform density in `[1e-5, 1e-3]` plus a few filled dyadic blobs of
/// side 2 to 8, all from a ChaCha8 stream keyed by `seed`.
pub fn random_blob_sets(root: &DyadicCube, seed: u64) -> (PointSet, PointSet) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = root.dim();
    let (t_low, t_side) = root.triple();
    let draw = |low: &[i64], side: i64, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut set = PointSet::new(n);
        let volume = (side as f64).powi(n as i32);
        let density = 10f64.powf(rng.gen_range(-5.0..-3.0));
        let count = (volume * density).round().max(1.0) as usize;
        for _ in 0..count {
            let x: Vec<i64> = low.iter().map(|&l| l + rng.gen_range(0..side)).collect();
            set.insert(&x);
        }
        for _ in 0..rng.gen_range(1..=4) {
            let level = rng.gen_range(1..=3u32).min(root.level);
            let cells = side >> level;
            let corner: Vec<i64> = low.iter().map(|&l| l + (rng.gen_range(0..cells) << level)).collect();
            for x in DyadicCube::new(level, corner).expect("blob corner is aligned").points() {
                set.insert(&x);
            }
        }
        set
    };
    let f = draw(&t_low, t_side, &mut rng);
    let g = draw(&root.corner, root.side(), &mut rng);
    (f, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shells(n: usize, lambdas: &[u64]) -> Vec<LatticeShell> {
        lambdas
            .iter()
            .map(|&l| enumerate_shell(&IntegralForm::sphere(n), &Cutoff::ConstantOne, l, &EnumerationOptions::default()).unwrap())
            .collect()
    }

    fn set(points: impl IntoIterator<Item = Vec<i64>>, n: usize) -> PointSet {
        let mut s = PointSet::new(n);
        for p in points {
            s.insert(&p);
        }
        s
    }

    #[test]
    fn full_cube_has_no_stopping_cubes() {
        let root = DyadicCube::new(3, vec![0, 0]).unwrap();
        let q = set(root.points(), 2);
        let sh = shells(2, &[1, 2, 5]);
        let cfg = RecursionConfig::new(2, 1.5, 1.5);
        let (s, cert) = stopping_time_recursion_shells(&sh, &q, &q, &root, &cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(cert.nodes[0].stopping_cubes, 0);
        // with f = 1_{3Q} every triple average is at most 1 = <f>_{3Q}
        let (low, side) = root.triple();
        let triple = set((0..side * side).map(|i| vec![low[0] + i / side, low[1] + i % side]), 2);
        let mut cfg = cfg.clone();
        cfg.threshold = 1.01;
        let (s, _) = stopping_time_recursion_shells(&sh, &triple, &q, &root, &cfg).unwrap();
        assert_eq!(s.len(), 1);
    }

    /// Maximal dense cubes by scanning every dyadic subcube.
    fn brute_stopping(points: &[Vec<i64>], q: &DyadicCube, c: f64) -> Vec<DyadicCube> {
        let n = q.dim();
        let local: Vec<&Vec<i64>> = points.iter().filter(|x| q.triple_contains(x)).collect();
        let avg = local.len() as f64 / (3.0 * q.side() as f64).powi(n as i32);
        let mut dense = Vec::new();
        for level in 0..q.level {
            let side = 1i64 << level;
            let per = q.side() / side;
            for i in 0..per.pow(n as u32) {
                let mut t = i;
                let corner: Vec<i64> = (0..n)
                    .map(|k| {
                        let v = q.corner[k] + (t % per) * side;
                        t /= per;
                        v
                    })
                    .collect();
                let p = DyadicCube { level, corner };
                let m = local.iter().filter(|x| p.triple_contains(x)).count() as f64;
                if m / (3.0 * side as f64).powi(n as i32) > c * avg {
                    dense.push(p);
                }
            }
        }
        let mut maximal: Vec<DyadicCube> = dense
            .iter()
            .filter(|p| !dense.iter().any(|o| o != *p && o.contains_cube(p)))
            .cloned()
            .collect();
        maximal.sort();
        maximal
    }

    #[test]
    fn point_mass_stopping_cubes_match_scan() {
        let q = DyadicCube::new(4, vec![0, 0]).unwrap();
        for z in [vec![5i64, 9], vec![0, 0], vec![-3, 17], vec![15, 15]] {
            let f = WeightedPoints::new(2, vec![(z.clone(), 1.0)]).unwrap();
            for c in [4.0, 36.0] {
                let got = stopping_cubes(&f, &q, c).unwrap();
                assert_eq!(got, brute_stopping(&[z.clone()], &q, c), "z={z:?} C={c}");
            }
        }
    }

    #[test]
    fn point_mass_packing() {
        // C = 4 in the plane stops at side |Q|/16 cubes, up to nine of them
        let root = DyadicCube::new(4, vec![0, 0]).unwrap();
        let f = set([vec![8, 8]], 2);
        let g = set(root.points(), 2);
        let sh = shells(2, &[1, 4]);
        let mut cfg = RecursionConfig::new(2, 2.0, 2.0);
        cfg.threshold = 4.0;
        assert!(matches!(
            stopping_time_recursion_shells(&sh, &f, &g, &root, &cfg),
            Err(Error::Packing { .. })
        ));
        cfg.threshold = 36.0;
        let (s, cert) = stopping_time_recursion_shells(&sh, &f, &g, &root, &cfg).unwrap();
        s.validate().unwrap();
        assert!(cert.maximal_pairing <= cert.tau_pairing + 1e-9);
    }

    #[test]
    fn random_sets_give_valid_certificates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let root = DyadicCube::new(4, vec![0, 0, 0]).unwrap();
        let sh = shells(3, &[2, 6, 24]);
        for _ in 0..5 {
            let f = set(root.points().filter(|_| rng.gen::<f64>() < 0.05), 3);
            // a dense clump forces stopping cubes
            let mut f2 = f.clone();
            for x in DyadicCube::new(1, vec![4, 4, 4]).unwrap().points() {
                f2.insert(&x);
            }
            let g = set(root.points().filter(|_| rng.gen::<f64>() < 0.1), 3);
            let cfg = RecursionConfig::new(3, 1.8, 1.8);
            let (s, cert) = stopping_time_recursion_shells(&sh, &f2, &g, &root, &cfg).unwrap();
            s.validate().unwrap();
            assert!(cert.maximal_pairing <= cert.tau_pairing * (1.0 + 1e-12));
            assert!(cert.form_value > 0.0 && cert.tripled_form_value > 0.0);
        }
    }

    #[test]
    fn blob_sets_stay_inside() {
        let root = DyadicCube::new(5, vec![0, 0, 0]).unwrap();
        let (f, g) = random_blob_sets(&root, 3);
        assert!(f.sorted_points().iter().all(|x| root.triple_contains(x)));
        assert!(g.sorted_points().iter().all(|x| root.contains(x)));
        assert!(!f.is_empty() && !g.is_empty());
        assert_eq!(random_blob_sets(&root, 3).0.sorted_points(), f.sorted_points());
    }

    #[test]
    fn inputs_outside_the_root_are_rejected() {
        let root = DyadicCube::new(2, vec![0, 0]).unwrap();
        let sh = shells(2, &[1]);
        let cfg = RecursionConfig::new(2, 2.0, 2.0);
        let inside = set([vec![1, 1]], 2);
        let outside = set([vec![4, 0]], 2);
        assert!(stopping_time_recursion_shells(&sh, &inside, &outside, &root, &cfg).is_err());
        let far = set([vec![9, 0]], 2);
        assert!(stopping_time_recursion_shells(&sh, &far, &inside, &root, &cfg).is_err());
    }
}
