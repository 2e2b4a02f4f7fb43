use num_complex::Complex64;
use rayon::prelude::*;

use super::{average::average_at, GridFunction};
use crate::error::{Error, Result};
use crate::lattice::LatticeShell;
use crate::sparse::dyadic::{DyadicCube, FxHashMap, Packer, WeightedPoints};

/// A choice of radius per point of a root cube.
///
/// Values are indices into `radii`; `None` stands for an infinite radius,
/// whose average of a finitely supported function vanishes.
#[derive(Debug, Clone)]
pub struct StoppingTime {
    pub root: DyadicCube,
    pub threshold: f64,
    pub radii: Vec<u64>,
    /// Spatial scale of each radius, `max |y|_inf` over its shell.
    pub scales: Vec<f64>,
    pub default: Option<usize>,
    packer: Packer,
    overrides: FxHashMap<u64, Option<usize>>,
}

impl StoppingTime {
    pub fn new(root: DyadicCube, threshold: f64, shells: &[LatticeShell], default: Option<usize>) -> Self {
        let packer = Packer::new(root.dim());
        StoppingTime {
            radii: shells.iter().map(|s| s.lambda).collect(),
            scales: shells.iter().map(|s| s.max_inf_norm() as f64).collect(),
            root,
            threshold,
            default,
            packer,
            overrides: FxHashMap::default(),
        }
    }

    pub fn set(&mut self, x: &[i64], value: Option<usize>) {
        self.overrides.insert(self.packer.pack(x), value);
    }

    pub fn get(&self, x: &[i64]) -> Option<usize> {
        if !self.root.contains(x) {
            return None;
        }
        match self.overrides.get(&self.packer.pack(x)) {
            Some(v) => *v,
            None => self.default,
        }
    }

    pub fn override_count(&self) -> usize {
        self.overrides.len()
    }

    fn scale(&self, v: Option<usize>) -> f64 {
        v.map(|k| self.scales[k]).unwrap_or(f64::INFINITY)
    }

    /// For every dyadic `P` inside the root with `<f>_{3P} > C <f>_{3Q}`,
    /// require `min_{x in P} scale(tau(x)) > side(P)`.
    pub fn check_admissible(&self, f: &WeightedPoints) -> Result<()> {
        let n = self.root.dim();
        let limit = self.threshold * f.triple_average(&self.root);
        let default_scale = self.scale(self.default);
        let mut idx = vec![0i64; n];
        let mut p = vec![0i64; n];
        for level in 0..=self.root.level {
            let side = 1i64 << level;
            let triple_vol = (3.0 * side as f64).powi(n as i32);
            let masses = f.dense_triple_masses(level, limit * triple_vol);
            // per cube: (number of overrides, smallest override scale)
            let mut inside: FxHashMap<u64, (u128, f64)> = FxHashMap::default();
            for (&key, &v) in &self.overrides {
                self.packer.unpack(key, &mut p);
                for (i, c) in idx.iter_mut().zip(&p) {
                    *i = c.div_euclid(side);
                }
                let e = inside.entry(self.packer.pack(&idx)).or_insert((0, f64::INFINITY));
                e.0 += 1;
                e.1 = e.1.min(self.scale(v));
            }
            let mut dense: Vec<(u64, f64)> = masses
                .into_iter()
                .filter(|(_, m)| m / triple_vol > limit)
                .collect();
            dense.sort_unstable_by_key(|e| e.0);
            for (key, _) in dense {
                self.packer.unpack(key, &mut idx);
                let corner: Vec<i64> = idx.iter().map(|i| i * side).collect();
                let cube = DyadicCube { level, corner };
                if !self.root.contains_cube(&cube) {
                    continue;
                }
                let (count, min_override) = inside.get(&key).copied().unwrap_or((0, f64::INFINITY));
                let mut min_scale = min_override;
                if count < cube.volume() {
                    min_scale = min_scale.min(default_scale);
                }
                if min_scale <= side as f64 {
                    return Err(Error::Inadmissible {
                        cube: cube.to_string(),
                        min_scale,
                        side,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `(M_tau f)(x) = M_{tau(x)} f(x)` on the root cube, after checking that tau
/// is admissible for f.
pub fn maximal_with_stopping_time(
    shells: &[LatticeShell],
    tau: &StoppingTime,
    f: &GridFunction,
) -> Result<GridFunction> {
    if shells.len() != tau.radii.len() || shells.iter().zip(&tau.radii).any(|(s, &l)| s.lambda != l) {
        return Err(Error::InvalidArgument("shells do not match the stopping-time radii".into()));
    }
    let masses = WeightedPoints::new(f.dim(), f.support_masses())?;
    tau.check_admissible(&masses)?;
    let side = tau.root.side() as usize;
    let n = f.dim();
    let mut out = GridFunction::zeros(tau.root.corner.clone(), vec![side; n]);
    let coords: Vec<Vec<i64>> = (0..out.len()).map(|i| out.coords(i)).collect();
    out.values = coords
        .par_iter()
        .map(|x| match tau.get(x) {
            Some(k) => average_at(&shells[k], f, x),
            None => Complex64::default(),
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{Cutoff, IntegralForm};
    use crate::gridops::{apply_average_shell, maximal_shells, AverageMode};
    use crate::lattice::{enumerate_shell, EnumerationOptions};

    fn shells(n: usize, lambdas: &[u64]) -> Vec<LatticeShell> {
        lambdas
            .iter()
            .map(|&l| enumerate_shell(&IntegralForm::sphere(n), &Cutoff::ConstantOne, l, &EnumerationOptions::default()).unwrap())
            .collect()
    }

    #[test]
    fn constant_tau_is_the_average() {
        let sh = shells(2, &[25]);
        let root = DyadicCube::new(3, vec![0, 0]).unwrap();
        let tau = StoppingTime::new(root, 4.0 * 9.0, &sh, Some(0));
        let f = GridFunction::characteristic(vec![-8, -8], vec![24, 24], |x| (x[0] + x[1]) % 3 == 0);
        let m = maximal_with_stopping_time(&sh, &tau, &f).unwrap();
        let avg = apply_average_shell(&sh[0], &f, &AverageMode::Direct).unwrap();
        for i in 0..m.len() {
            let x = m.coords(i);
            assert!((m.values[i] - avg.get(&x)).norm() < 1e-14);
        }
    }

    #[test]
    fn tau_is_dominated_by_the_maximal_function() {
        let sh = shells(2, &[1, 25, 100]);
        let root = DyadicCube::new(2, vec![0, 0]).unwrap();
        let mut tau = StoppingTime::new(root.clone(), 1e9, &sh, Some(2));
        for (i, x) in root.points().enumerate() {
            tau.set(&x, if i % 3 == 0 { None } else { Some(i % 3) });
        }
        let f = GridFunction::characteristic(vec![-6, -6], vec![16, 16], |x| x[0] * x[1] % 5 == 1);
        let m = maximal_with_stopping_time(&sh, &tau, &f).unwrap();
        let sup = maximal_shells(&sh, &f).unwrap();
        for i in 0..m.len() {
            assert!(m.values[i].norm() <= sup.values.get(&m.coords(i)).re + 1e-15);
        }
    }

    #[test]
    fn inadmissible_tau_names_the_cube() {
        let sh = shells(2, &[1]);
        let root = DyadicCube::new(3, vec![0, 0]).unwrap();
        let tau = StoppingTime::new(root, 2.0, &sh, Some(0));
        // a point mass makes the unit cubes around it dense, and scale 1 is
        // not larger than side 1
        let f = GridFunction::delta(&[3, 3]);
        match maximal_with_stopping_time(&sh, &tau, &f) {
            Err(Error::Inadmissible { side, .. }) => assert_eq!(side, 1),
            other => panic!("expected inadmissible, got {other:?}"),
        }
    }
}
