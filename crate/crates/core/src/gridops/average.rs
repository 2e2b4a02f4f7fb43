use num_complex::Complex64;
use rayon::prelude::*;

use super::{GridFunction, RadiiSequence};
use crate::error::{Error, Result};
use crate::fft::{self, unravel};
use crate::forms::{Cutoff, IntegralForm};
use crate::lattice::{enumerate_shell, EnumerationOptions, LatticeShell};

#[derive(Debug, Clone, PartialEq, Default)]
pub enum AverageMode {
    /// Shift-and-add over the shell.
    #[default]
    Direct,
    /// Zero-padded torus convolution; `torus` overrides the automatic size
    /// and must be at least `f-extent + diameter + 1` per axis.
    Fft { torus: Option<Vec<usize>> },
}

/// `(M_lambda f)(x) = r^{-1} sum_{R(y)=lambda} phi(y/lambda^{1/d}) f(x - y)`.
pub fn apply_average(
    form: &IntegralForm,
    phi: &Cutoff,
    lambda: u64,
    f: &GridFunction,
    mode: &AverageMode,
    opts: &EnumerationOptions,
) -> Result<GridFunction> {
    let shell = enumerate_shell(form, phi, lambda, opts)?;
    apply_average_shell(&shell, f, mode)
}

/// Output box of the average: the input box dilated by the shell bounds.
fn output_box(shell: &LatticeShell, f: &GridFunction) -> (Vec<i64>, Vec<usize>, Vec<i64>) {
    let bounds = shell.bounds();
    let lo: Vec<i64> = bounds.iter().map(|b| b.0).collect();
    let origin: Vec<i64> = f.origin.iter().zip(&lo).map(|(o, l)| o + l).collect();
    let extents: Vec<usize> = f
        .extents
        .iter()
        .zip(&bounds)
        .map(|(e, b)| e + (b.1 - b.0) as usize)
        .collect();
    (origin, extents, lo)
}

pub fn apply_average_shell(shell: &LatticeShell, f: &GridFunction, mode: &AverageMode) -> Result<GridFunction> {
    if shell.is_empty() || shell.r_value <= 0.0 {
        return Err(Error::NotRepresented(shell.lambda));
    }
    if shell.dim != f.dim() {
        return Err(Error::InvalidArgument("shell and grid dimensions differ".into()));
    }
    match mode {
        AverageMode::Direct => Ok(average_direct(shell, f)),
        AverageMode::Fft { torus } => average_fft(shell, f, torus.as_deref()),
    }
}

fn average_direct(shell: &LatticeShell, f: &GridFunction) -> GridFunction {
    let n = f.dim();
    let (origin, extents, lo) = output_box(shell, f);
    let mut out = GridFunction::zeros(origin, extents.clone());
    if f.is_empty() {
        return out;
    }
    let inv_r = 1.0 / shell.r_value;
    let out_strides = fft::strides(&extents);
    // offset of each input entry within the output, before the shift by y
    let in_row: usize = f.extents[1..].iter().product();
    let mut row_map = vec![0usize; in_row];
    let sub_shape = &f.extents[1..];
    let mut idx = vec![0usize; n.saturating_sub(1)];
    for (j, slot) in row_map.iter_mut().enumerate() {
        unravel(j, sub_shape, &mut idx);
        *slot = idx.iter().zip(&out_strides[1..]).map(|(i, s)| i * s).sum();
    }
    let shifts: Vec<(i64, usize, f64)> = shell
        .iter()
        .map(|(y, w)| {
            let s: usize = (1..n).map(|k| (y[k] - lo[k]) as usize * out_strides[k]).sum();
            (y[0] - lo[0], s, w * inv_r)
        })
        .collect();
    let out_row = out_strides[0];
    let f0 = f.extents[0] as i64;
    out.values
        .par_chunks_mut(out_row)
        .enumerate()
        .for_each(|(i0, row)| {
            for &(s0, s, w) in &shifts {
                let u0 = i0 as i64 - s0;
                if u0 < 0 || u0 >= f0 {
                    continue;
                }
                let src = &f.values[u0 as usize * in_row..(u0 as usize + 1) * in_row];
                for (v, &m) in src.iter().zip(&row_map) {
                    row[m + s] += v * w;
                }
            }
        });
    out
}

fn average_fft(shell: &LatticeShell, f: &GridFunction, torus: Option<&[usize]>) -> Result<GridFunction> {
    let n = f.dim();
    let (origin, extents, lo) = output_box(shell, f);
    let bounds = shell.bounds();
    let required: Vec<usize> = f
        .extents
        .iter()
        .zip(&bounds)
        .map(|(e, b)| e + (b.1 - b.0) as usize + 1)
        .collect();
    let shape: Vec<usize> = match torus {
        Some(t) => {
            if t.len() != n || t.iter().zip(&required).any(|(a, b)| a < b) {
                return Err(Error::InvalidArgument(format!(
                    "torus {t:?} is smaller than the wraparound-free size {required:?}"
                )));
            }
            t.to_vec()
        }
        None => required.iter().map(|&r| fft::smooth_size(r)).collect(),
    };
    let total: usize = shape.iter().product();
    let st = fft::strides(&shape);
    let mut a = vec![Complex64::default(); total];
    let mut idx = vec![0usize; n];
    for (i, v) in f.values.iter().enumerate() {
        unravel(i, &f.extents, &mut idx);
        let t: usize = idx.iter().zip(&st).map(|(a, b)| a * b).sum();
        a[t] = *v;
    }
    let mut k = vec![Complex64::default(); total];
    let inv_r = 1.0 / shell.r_value;
    for (y, w) in shell.iter() {
        let t: usize = (0..n).map(|j| (y[j] - lo[j]) as usize * st[j]).sum();
        k[t] += Complex64::new(w * inv_r, 0.0);
    }
    fft::forward(&mut a, &shape);
    fft::forward(&mut k, &shape);
    for (x, y) in a.iter_mut().zip(&k) {
        *x *= y;
    }
    fft::inverse_normalized(&mut a, &shape);
    let mut out = GridFunction::zeros(origin, extents.clone());
    for (i, v) in out.values.iter_mut().enumerate() {
        unravel(i, &extents, &mut idx);
        let t: usize = idx.iter().zip(&st).map(|(a, b)| a * b).sum();
        *v = a[t];
    }
    Ok(out)
}

/// `(M_lambda f)(x)` at a single point.
pub fn average_at(shell: &LatticeShell, f: &GridFunction, x: &[i64]) -> Complex64 {
    if shell.r_value <= 0.0 {
        return Complex64::default();
    }
    let mut z = vec![0i64; x.len()];
    let mut acc = Complex64::default();
    for (y, w) in shell.iter() {
        for k in 0..x.len() {
            z[k] = x[k] - y[k];
        }
        acc += f.get(&z) * w;
    }
    acc / shell.r_value
}

#[derive(Debug, Clone)]
pub struct MaximalOutput {
    /// `sup_k |M_{lambda_k} f|` as real values.
    pub values: GridFunction,
    /// Sequence index attaining the sup (smallest index on ties).
    pub argmax: Vec<u32>,
}

/// Pointwise `sup_k |M_{lambda_k} f|` over the union of the output boxes.
pub fn maximal(
    form: &IntegralForm,
    phi: &Cutoff,
    seq: &RadiiSequence,
    f: &GridFunction,
    opts: &EnumerationOptions,
) -> Result<MaximalOutput> {
    let shells: Vec<LatticeShell> = seq
        .values
        .iter()
        .map(|&l| {
            let l = u64::try_from(l).map_err(|_| Error::budget("shell enumeration", l as f64, opts.budget))?;
            enumerate_shell(form, phi, l, opts)
        })
        .collect::<Result<_>>()?;
    maximal_shells(&shells, f)
}

pub fn maximal_shells(shells: &[LatticeShell], f: &GridFunction) -> Result<MaximalOutput> {
    if shells.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let avgs: Vec<GridFunction> = shells
        .par_iter()
        .map(|s| apply_average_shell(s, f, &AverageMode::Direct))
        .collect::<Result<_>>()?;
    let n = f.dim();
    let lo: Vec<i64> = (0..n).map(|k| avgs.iter().map(|g| g.origin[k]).min().unwrap()).collect();
    let hi: Vec<i64> = (0..n)
        .map(|k| avgs.iter().map(|g| g.origin[k] + g.extents[k] as i64).max().unwrap())
        .collect();
    let extents: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| (h - l) as usize).collect();
    let mut values = GridFunction::zeros(lo, extents);
    let mut best = vec![-1.0f64; values.len()];
    let mut argmax = vec![0u32; values.len()];
    for (k, g) in avgs.iter().enumerate() {
        let mut x = vec![0; n];
        for i in 0..g.len() {
            g.coords_into(i, &mut x);
            let j = values.index_of(&x).unwrap();
            let v = g.values[i].norm();
            if v > best[j] {
                best[j] = v;
                argmax[j] = k as u32;
            }
        }
    }
    // points outside every member's box
    for (j, b) in best.iter_mut().enumerate() {
        if *b < 0.0 {
            *b = 0.0;
            argmax[j] = 0;
        }
        values.values[j] = Complex64::new(*b, 0.0);
    }
    Ok(MaximalOutput { values, argmax })
}
