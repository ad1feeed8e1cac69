//! On-disk cache of generator vectors, one file per level.
//!
//! Layout (all little-endian): magic `FMG1`, format version `u32`, level `u32`,
//! `n_k u32`, `l_k u32`, `alpha f64`, `c f64`, atom count `u32`, the atoms as
//! `(angle f64, weight f64)` pairs, then the generator values as `f64`.
//!
//! The file name carries a SHA-256 digest of everything the values depend on,
//! the domain included (it is not stored in the header). A header that does not
//! match the request is a cache miss.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fracmg_core::assembly::{build_generators, ParamsDigest};
use fracmg_core::{Atom, DirectionalMeasure, GeneratorVector, Hierarchy, KernelParams, MeshLevel};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"FMG1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    /// The file is not a complete, well-formed cache file.
    #[error("corrupt cache file {path}: {reason}")]
    Integrity { path: PathBuf, reason: String },
    /// The file is well formed but describes a different problem.
    #[error("cache file {path} does not match the request: {reason}")]
    Mismatch { path: PathBuf, reason: String },
}

/// Header plus values, exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub level: u32,
    pub nx: u32,
    pub ny: u32,
    pub alpha: f64,
    pub c: f64,
    pub atoms: Vec<Atom>,
    pub values: Vec<f64>,
}

impl CacheRecord {
    pub fn from_generator(g: &GeneratorVector) -> Self {
        let (lvl, d) = (g.level(), g.digest());
        Self {
            level: lvl.k as u32,
            nx: lvl.nx as u32,
            ny: lvl.ny as u32,
            alpha: d.alpha,
            c: d.c,
            atoms: d.atoms.clone(),
            values: g.values().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(36 + 16 * self.atoms.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, self.level, self.nx, self.ny] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&self.c.to_le_bytes());
        out.extend_from_slice(&(self.atoms.len() as u32).to_le_bytes());
        for a in &self.atoms {
            out.extend_from_slice(&a.theta.to_le_bytes());
            out.extend_from_slice(&a.weight.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a complete file; any structural problem is an integrity error
    /// described by the returned string.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic bytes".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let (level, nx, ny) = (r.u32()?, r.u32()?, r.u32()?);
        if nx < 1 || ny < 1 {
            return Err(format!("empty grid {nx}x{ny}"));
        }
        let (alpha, c) = (r.f64()?, r.f64()?);
        let count = r.u32()? as usize;
        if count > bytes.len() / 16 {
            return Err(format!("atom count {count} exceeds the file size"));
        }
        let atoms = (0..count)
            .map(|_| {
                Ok(Atom {
                    theta: r.f64()?,
                    weight: r.f64()?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let (n, l) = (nx as usize, ny as usize);
        let len = (2 * n - 1) * l - n + 1;
        if bytes.len() - r.pos != 8 * len {
            return Err(format!(
                "expected {} bytes of values for a {nx}x{ny} level, found {}",
                8 * len,
                bytes.len() - r.pos
            ));
        }
        let values: Vec<f64> = (0..len).map(|_| r.f64()).collect::<Result<_, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err("non-finite generator value".into());
        }
        Ok(Self {
            level,
            nx,
            ny,
            alpha,
            c,
            atoms,
            values,
        })
    }

    /// First difference from the requested problem, if any. Floats are
    /// compared bitwise.
    fn mismatch(
        &self,
        level: &MeshLevel,
        params: &KernelParams,
        measure: &DirectionalMeasure,
    ) -> Option<String> {
        let same_atoms = self.atoms.len() == measure.atoms().len()
            && self.atoms.iter().zip(measure.atoms()).all(|(a, b)| {
                a.theta.to_bits() == b.theta.to_bits() && a.weight.to_bits() == b.weight.to_bits()
            });
        if (self.level, self.nx, self.ny) != (level.k as u32, level.nx as u32, level.ny as u32) {
            Some(format!(
                "level {} ({}x{}) stored, level {} ({}x{}) requested",
                self.level, self.nx, self.ny, level.k, level.nx, level.ny
            ))
        } else if self.alpha.to_bits() != params.alpha().to_bits() {
            Some(format!(
                "alpha {} stored, {} requested",
                self.alpha,
                params.alpha()
            ))
        } else if self.c.to_bits() != params.c().to_bits() {
            Some(format!("c {} stored, {} requested", self.c, params.c()))
        } else if !same_atoms {
            Some("directional measure differs".into())
        } else {
            None
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.bytes.len()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// SHA-256 over the level shape, domain, parameters and atoms, hex encoded.
pub fn digest_hex(
    level: &MeshLevel,
    params: &KernelParams,
    measure: &DirectionalMeasure,
) -> String {
    let mut h = Sha256::new();
    h.update(MAGIC);
    for v in [level.k as u64, level.nx as u64, level.ny as u64] {
        h.update(v.to_le_bytes());
    }
    for v in [
        level.domain.width,
        level.domain.height,
        params.alpha(),
        params.c(),
    ] {
        h.update(v.to_le_bytes());
    }
    h.update((measure.atoms().len() as u64).to_le_bytes());
    for a in measure.atoms() {
        h.update(a.theta.to_le_bytes());
        h.update(a.weight.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `g` to `path` atomically (temporary file, then rename).
pub fn write_generator(path: &Path, g: &GeneratorVector) -> Result<(), CacheError> {
    let io_err = |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(&CacheRecord::from_generator(g).to_bytes())
        .map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// Reads the generator of `level` from `path`, checking that the stored
/// header matches the request.
pub fn read_generator(
    path: &Path,
    level: &MeshLevel,
    params: &KernelParams,
    measure: &DirectionalMeasure,
) -> Result<GeneratorVector, CacheError> {
    let bytes = fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let record = CacheRecord::from_bytes(&bytes).map_err(|reason| CacheError::Integrity {
        path: path.to_path_buf(),
        reason,
    })?;
    if let Some(reason) = record.mismatch(level, params, measure) {
        return Err(CacheError::Mismatch {
            path: path.to_path_buf(),
            reason,
        });
    }
    let digest = ParamsDigest::new(params, measure, level.domain);
    GeneratorVector::from_parts(*level, record.values, digest).map_err(|e| CacheError::Integrity {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// A directory of cached generators.
#[derive(Debug, Clone)]
pub struct GeneratorCache {
    dir: PathBuf,
}

impl GeneratorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| CacheError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(
        &self,
        level: &MeshLevel,
        params: &KernelParams,
        measure: &DirectionalMeasure,
    ) -> PathBuf {
        let digest = digest_hex(level, params, measure);
        self.dir
            .join(format!("gen-k{:02}-{}.fmg", level.k, &digest[..32]))
    }

    /// `Ok(None)` when no file exists for the request.
    pub fn load(
        &self,
        level: &MeshLevel,
        params: &KernelParams,
        measure: &DirectionalMeasure,
    ) -> Result<Option<GeneratorVector>, CacheError> {
        let path = self.path_for(level, params, measure);
        if !path.exists() {
            return Ok(None);
        }
        read_generator(&path, level, params, measure).map(Some)
    }

    pub fn store(
        &self,
        g: &GeneratorVector,
        params: &KernelParams,
        measure: &DirectionalMeasure,
    ) -> Result<PathBuf, CacheError> {
        let path = self.path_for(g.level(), params, measure);
        write_generator(&path, g)?;
        Ok(path)
    }

    /// Generators for every level of `hierarchy`, read from the cache where
    /// possible. Unreadable or mismatching files are reported, recomputed and
    /// overwritten.
    pub fn load_or_build(
        &self,
        hierarchy: &Hierarchy,
        measure: &DirectionalMeasure,
        params: &KernelParams,
    ) -> crate::Result<Vec<GeneratorVector>> {
        let mut found = Vec::with_capacity(hierarchy.num_levels());
        for lvl in hierarchy.levels() {
            match self.load(lvl, params, measure) {
                Ok(g) => found.push(g),
                Err(e @ (CacheError::Mismatch { .. } | CacheError::Integrity { .. })) => {
                    log::warn!("{e}; recomputing");
                    found.push(None);
                }
                Err(e) => return Err(e.into()),
            }
        }
        if found.iter().all(Option::is_some) {
            log::debug!(
                "all {} generators read from {}",
                found.len(),
                self.dir.display()
            );
            return Ok(found.into_iter().flatten().collect());
        }
        let built = build_generators(hierarchy, measure, params)?;
        for (g, cached) in built.iter().zip(&found) {
            if cached.is_none() {
                let path = self.store(g, params, measure)?;
                log::debug!(
                    "stored level {} generator in {}",
                    g.level().k,
                    path.display()
                );
            }
        }
        Ok(built)
    }
}
