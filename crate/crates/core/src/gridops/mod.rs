//! Finitely supported functions on Z^n and the averaging operators acting on
//! them.

mod average;
mod sequence;
mod stopping;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{strides, unravel};

pub use average::{
    apply_average, apply_average_shell, average_at, maximal, maximal_shells, AverageMode, MaximalOutput,
};
pub use sequence::{RadiiSequence, SequenceKind};
pub use stopping::{maximal_with_stopping_time, StoppingTime};

/// Values on the box `origin + [0, extents)`, row-major, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub origin: Vec<i64>,
    pub extents: Vec<usize>,
    pub values: Vec<Complex64>,
    pub characteristic: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    origin: Vec<i64>,
    extents: Vec<usize>,
    dtype: String,
    characteristic: bool,
}

impl GridFunction {
    pub fn zeros(origin: Vec<i64>, extents: Vec<usize>) -> Self {
        assert_eq!(origin.len(), extents.len());
        let len = extents.iter().product();
        GridFunction {
            origin,
            extents,
            values: vec![Complex64::default(); len],
            characteristic: false,
        }
    }

    pub fn from_fn(origin: Vec<i64>, extents: Vec<usize>, mut f: impl FnMut(&[i64]) -> Complex64) -> Self {
        let mut g = Self::zeros(origin, extents);
        let mut x = vec![0i64; g.dim()];
        for i in 0..g.values.len() {
            g.coords_into(i, &mut x);
            g.values[i] = f(&x);
        }
        g
    }

    pub fn from_real(origin: Vec<i64>, extents: Vec<usize>, values: Vec<f64>) -> Self {
        let mut g = Self::zeros(origin, extents);
        assert_eq!(values.len(), g.values.len());
        for (v, r) in g.values.iter_mut().zip(values) {
            *v = Complex64::new(r, 0.0);
        }
        g
    }

    /// Indicator of the points satisfying `member` inside the box.
    pub fn characteristic(origin: Vec<i64>, extents: Vec<usize>, mut member: impl FnMut(&[i64]) -> bool) -> Self {
        let mut g = Self::from_fn(origin, extents, |x| {
            if member(x) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        });
        g.characteristic = true;
        g
    }

    /// Unit mass at `x`.
    pub fn delta(x: &[i64]) -> Self {
        let mut g = Self::zeros(x.to_vec(), vec![1; x.len()]);
        g.values[0] = Complex64::new(1.0, 0.0);
        g.characteristic = true;
        g
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coords_into(&self, flat: usize, out: &mut [i64]) {
        let mut idx = vec![0usize; self.dim()];
        unravel(flat, &self.extents, &mut idx);
        for k in 0..self.dim() {
            out[k] = self.origin[k] + idx[k] as i64;
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<i64> {
        let mut x = vec![0; self.dim()];
        self.coords_into(flat, &mut x);
        x
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..self.dim() {
            let off = x[k] - self.origin[k];
            if off < 0 || off as usize >= self.extents[k] {
                return None;
            }
            idx = idx * self.extents[k] + off as usize;
        }
        Some(idx)
    }

    pub fn get(&self, x: &[i64]) -> Complex64 {
        self.index_of(x).map(|i| self.values[i]).unwrap_or_default()
    }

    /// Check that the characteristic flag is honest.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.extents.iter().product::<usize>() {
            return Err(Error::InvalidArgument("value count does not match extents".into()));
        }
        if self.characteristic
            && self
                .values
                .iter()
                .any(|v| v.im != 0.0 || (v.re != 0.0 && v.re != 1.0))
        {
            return Err(Error::InvalidArgument("characteristic grid holds values outside {0,1}".into()));
        }
        Ok(())
    }

    /// `l^p` norm; `p = f64::INFINITY` gives the sup norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        let s: f64 = self.values.iter().map(|v| v.norm().powf(p)).sum();
        s.powf(1.0 / p)
    }

    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    /// `<f>_{Q,p} = (|Q|^{-1} sum_{x in Q} |f(x)|^p)^{1/p}` for the box
    /// `low + [0, side)^n`.
    pub fn box_average(&self, low: &[i64], side: i64, p: f64) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        let mut x = vec![0; n];
        for i in 0..self.values.len() {
            self.coords_into(i, &mut x);
            if x.iter().zip(low).all(|(v, l)| *v >= *l && *v < l + side) {
                acc += self.values[i].norm().powf(p);
            }
        }
        (acc / (side as f64).powi(n as i32)).powf(1.0 / p)
    }

    /// `f(. - z)`.
    pub fn translate(&self, z: &[i64]) -> Self {
        let mut g = self.clone();
        for (o, s) in g.origin.iter_mut().zip(z) {
            *o += s;
        }
        g
    }

    /// Copy onto a larger box (values outside the original box are zero).
    pub fn embed(&self, origin: &[i64], extents: &[usize]) -> Self {
        let mut g = Self::zeros(origin.to_vec(), extents.to_vec());
        g.characteristic = self.characteristic;
        let mut x = vec![0; self.dim()];
        for i in 0..self.values.len() {
            self.coords_into(i, &mut x);
            if let Some(j) = g.index_of(&x) {
                g.values[j] = self.values[i];
            }
        }
        g
    }

    /// Nonzero entries as `(point, |value|)`.
    pub fn support_masses(&self) -> Vec<(Vec<i64>, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|(i, v)| (self.coords(i), v.norm()))
            .collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.extents)
    }

    /// One JSON header line followed by little-endian `(re, im)` f64 pairs.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            origin: self.origin.clone(),
            extents: self.extents.clone(),
            dtype: "c128".into(),
            characteristic: self.characteristic,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(self.values.len() * 16);
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut r = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| fail(e.to_string()))?;
        if h.dtype != "c128" {
            return Err(fail(format!("unsupported dtype {}", h.dtype)));
        }
        if h.origin.len() != h.extents.len() {
            return Err(fail("origin and extents differ in length".into()));
        }
        let len: usize = h.extents.iter().product();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 16 {
            return Err(fail(format!("expected {} data bytes, found {}", len * 16, bytes.len())));
        }
        let values = bytes
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let g = GridFunction {
            origin: h.origin,
            extents: h.extents,
            values,
            characteristic: h.characteristic,
        };
        g.validate().map_err(|e| fail(e.to_string()))?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn io_round_trip() {
        let g = GridFunction::from_fn(vec![-1, 2], vec![3, 4], |x| Complex64::new(x[0] as f64 * 0.1, x[1] as f64));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.grid");
        g.save(&p).unwrap();
        assert_eq!(GridFunction::load(&p).unwrap(), g);
        std::fs::write(&p, b"{\"origin\":[0],\"extents\":[2],\"dtype\":\"c128\",\"characteristic\":false}\nabc").unwrap();
        assert!(GridFunction::load(&p).is_err());
    }

    #[test]
    fn norms_and_averages() {
        let g = GridFunction::characteristic(vec![0, 0], vec![4, 4], |x| x[0] < 2);
        assert_eq!(g.lp_norm(1.0), 8.0);
        assert_eq!(g.lp_norm(f64::INFINITY), 1.0);
        assert!((g.lp_norm(2.0) - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.box_average(&[0, 0], 4, 1.0), 0.5);
        assert!((g.box_average(&[0, 0], 4, 2.0) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(g.validate().is_ok());
        let mut bad = g.clone();
        bad.values[0] = Complex64::new(0.5, 0.0);
        assert!(bad.validate().is_err());
    }
}
