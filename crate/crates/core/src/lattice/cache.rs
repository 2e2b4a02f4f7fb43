//! On-disk shell cache.
//!
//! Layout: `<root>/<key>/meta.json` plus one `<lambda>.shell` record per
//! shell, where `key` is a hash of the canonical form and the cutoff. Records
//! are little-endian: magic `BMSHELL1`, dim (u32), lambda (u64), count (u64),
//! `count * dim` i64 coordinates, `count` f64 weights, r (f64).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{enumerate_shell, EnumerationOptions, LatticeShell};
use crate::error::{Error, Result};
use crate::forms::{Cutoff, FormFile, IntegralForm};

const MAGIC: &[u8; 8] = b"BMSHELL1";

/// Environment variable overriding the cache root.
pub const CACHE_ENV: &str = "BMLAB_CACHE";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    form: FormFile,
    canonical: String,
    phi: Cutoff,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheEntry {
    pub key: String,
    pub form: String,
    pub phi: String,
    pub lambda: u64,
    pub points: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ShellCache {
    root: PathBuf,
}

impl ShellCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ShellCache { root: root.into() }
    }

    /// Root from `BMLAB_CACHE`, else `./cache`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| "cache".into()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(form: &IntegralForm, phi: &Cutoff) -> String {
        let mut h = Sha256::new();
        h.update(form.canonical().as_bytes());
        h.update(b"|");
        h.update(phi.descriptor().as_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn shell_path(&self, form: &IntegralForm, phi: &Cutoff, lambda: u64) -> PathBuf {
        self.root.join(Self::key(form, phi)).join(format!("{lambda}.shell"))
    }

    pub fn store(&self, form: &IntegralForm, phi: &Cutoff, shell: &LatticeShell) -> Result<PathBuf> {
        let dir = self.root.join(Self::key(form, phi));
        fs::create_dir_all(&dir)?;
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            let meta = Meta {
                form: form.to_file(),
                canonical: form.canonical(),
                phi: *phi,
            };
            fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
        }
        let path = dir.join(format!("{}.shell", shell.lambda));
        let tmp = dir.join(format!("{}.shell.tmp", shell.lambda));
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&encode(shell))?;
        file.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(&self, form: &IntegralForm, phi: &Cutoff, lambda: u64) -> Result<Option<LatticeShell>> {
        let path = self.shell_path(form, phi, lambda);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path)?;
        decode(&bytes, &path).map(Some)
    }

    /// Load from the cache, or enumerate and store.
    pub fn get_or_enumerate(
        &self,
        form: &IntegralForm,
        phi: &Cutoff,
        lambda: u64,
        opts: &EnumerationOptions,
    ) -> Result<LatticeShell> {
        if let Some(s) = self.load(form, phi, lambda)? {
            return Ok(s);
        }
        let s = enumerate_shell(form, phi, lambda, opts)?;
        self.store(form, phi, &s)?;
        Ok(s)
    }

    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        let mut out = Vec::new();
        if !self.root.exists() {
            return Ok(out);
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let key = dir.file_name().unwrap().to_string_lossy().into_owned();
            let meta: Option<Meta> = fs::read(dir.join("meta.json"))
                .ok()
                .and_then(|b| serde_json::from_slice(&b).ok());
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "shell"))
                .collect();
            files.sort();
            for path in files {
                let lambda: u64 = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(0);
                let points = read_header(&path).map(|(_, _, c)| c).unwrap_or(0);
                out.push(CacheEntry {
                    key: key.clone(),
                    form: meta.as_ref().map(|m| m.canonical.clone()).unwrap_or_default(),
                    phi: meta.as_ref().map(|m| m.phi.descriptor()).unwrap_or_default(),
                    lambda,
                    points,
                    path,
                });
            }
        }
        out.sort_by(|a, b| (&a.key, a.lambda).cmp(&(&b.key, b.lambda)));
        Ok(out)
    }

    pub fn purge(&self) -> Result<usize> {
        let n = self.list()?.len();
        if self.root.exists() {
            for e in fs::read_dir(&self.root)? {
                let p = e?.path();
                if p.is_dir() {
                    fs::remove_dir_all(&p)?;
                }
            }
        }
        Ok(n)
    }

    /// Re-enumerate up to `sample` cached shells and compare bit-exactly.
    /// Returns the number checked; mismatches become `CacheCorrupt`.
    pub fn verify(&self, sample: usize, seed: u64, opts: &EnumerationOptions) -> Result<usize> {
        let mut entries = self.list()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        entries.shuffle(&mut rng);
        entries.truncate(sample);
        let mut bad = Vec::new();
        for e in &entries {
            let dir = e.path.parent().unwrap();
            let meta: Meta = match fs::read(dir.join("meta.json"))
                .ok()
                .and_then(|b| serde_json::from_slice(&b).ok())
            {
                Some(m) => m,
                None => {
                    bad.push(dir.join("meta.json"));
                    continue;
                }
            };
            let stored = match fs::read(&e.path).map_err(Error::from).and_then(|b| decode(&b, &e.path)) {
                Ok(s) => s,
                Err(_) => {
                    bad.push(e.path.clone());
                    continue;
                }
            };
            let form = meta.form.into_form()?;
            let fresh = enumerate_shell(&form, &meta.phi, e.lambda, opts)?;
            if !bit_identical(&stored, &fresh) {
                bad.push(e.path.clone());
            }
        }
        if bad.is_empty() {
            Ok(entries.len())
        } else {
            Err(Error::CacheCorrupt(bad))
        }
    }
}

pub fn bit_identical(a: &LatticeShell, b: &LatticeShell) -> bool {
    a.lambda == b.lambda
        && a.dim == b.dim
        && a.points == b.points
        && a.weights.len() == b.weights.len()
        && a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.r_value.to_bits() == b.r_value.to_bits()
}

pub fn encode(shell: &LatticeShell) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + shell.points.len() * 8 + shell.weights.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shell.dim as u32).to_le_bytes());
    out.extend_from_slice(&shell.lambda.to_le_bytes());
    out.extend_from_slice(&(shell.len() as u64).to_le_bytes());
    for v in &shell.points {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for w in &shell.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&shell.r_value.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<LatticeShell> {
    let fail = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < 28 || &bytes[..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let lambda = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let expected = 28 + count * dim * 8 + count * 8 + 8;
    if bytes.len() != expected {
        return Err(fail("length does not match header"));
    }
    let mut off = 28;
    let mut points = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        points.push(i64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        weights.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    let r_value = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    Ok(LatticeShell {
        lambda,
        dim,
        points,
        weights,
        r_value,
    })
}

fn read_header(path: &Path) -> Option<(usize, u64, u64)> {
    use std::io::Read;
    let mut f = fs::File::open(path).ok()?;
    let mut h = [0u8; 28];
    f.read_exact(&mut h).ok()?;
    if &h[..8] != MAGIC {
        return None;
    }
    Some((
        u32::from_le_bytes(h[8..12].try_into().unwrap()) as usize,
        u64::from_le_bytes(h[12..20].try_into().unwrap()),
        u64::from_le_bytes(h[20..28].try_into().unwrap()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_admin() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ShellCache::new(dir.path());
        assert!(cache.list().unwrap().is_empty());
        let f = IntegralForm::sphere(4);
        let phi = Cutoff::SmoothBump { radius: 1.5 };
        let opts = EnumerationOptions::default();
        let s = cache.get_or_enumerate(&f, &phi, 2, &opts).unwrap();
        let back = cache.load(&f, &phi, 2).unwrap().unwrap();
        assert!(bit_identical(&s, &back));
        cache.get_or_enumerate(&f, &phi, 6, &opts).unwrap();
        let listed = cache.list().unwrap();
        assert_eq!(listed.len(), 2);
        assert_eq!(listed[0].points, 24);
        assert_eq!(cache.verify(10, 1, &opts).unwrap(), 2);

        // flip one coordinate in a record
        let path = cache.shell_path(&f, &phi, 6);
        let mut bytes = fs::read(&path).unwrap();
        bytes[28] ^= 1;
        fs::write(&path, bytes).unwrap();
        match cache.verify(10, 1, &opts) {
            Err(Error::CacheCorrupt(files)) => assert_eq!(files, vec![path]),
            other => panic!("expected corruption, got {other:?}"),
        }

        assert_eq!(cache.purge().unwrap(), 2);
        assert!(cache.list().unwrap().is_empty());
    }

    #[test]
    fn truncated_record_rejected() {
        let s = LatticeShell::from_parts(1, 1, vec![-1, 1], vec![1.0, 1.0]);
        let bytes = encode(&s);
        assert!(decode(&bytes, Path::new("x")).is_ok());
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
    }
}
