//! Checksummed, sectioned binary snapshots.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SPHK"            4 bytes magic
//! version           u32 (= 1)
//! section count     u32
//! per section:
//!   name length     u32
//!   name            UTF-8 bytes
//!   payload length  u64
//!   payload         bytes
//!   checksum        u64, FNV-1a 64 of the payload
//! ```

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;

use crate::particle::{LayoutConfig, LayoutError, Particle, ParticleAoS};
use crate::scalar::Real;

pub const MAGIC: [u8; 4] = *b"SPHK";
pub const VERSION: u32 = 1;

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Section names in file order.
pub type Sections = IndexMap<String, Vec<u8>>;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a snapshot: bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch in section '{section}': stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch {
        section: String,
        stored: u64,
        computed: u64,
    },
    #[error("snapshot truncated while reading {0}")]
    Truncated(String),
    #[error("{0} unexpected bytes after the last section")]
    TrailingBytes(usize),
    #[error("section name is not valid UTF-8")]
    InvalidSectionName,
    #[error("duplicate section '{0}'")]
    DuplicateSection(String),
    #[error("missing section '{0}'")]
    MissingSection(String),
    #[error("malformed section '{section}': {reason}")]
    Malformed { section: String, reason: String },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// FNV-1a, 64-bit.
pub fn checksum64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

pub fn encode(sections: &Sections) -> Vec<u8> {
    let payload: usize = sections.iter().map(|(k, v)| k.len() + v.len() + 20).sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, data) in sections {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        out.extend_from_slice(data);
        out.extend_from_slice(&checksum64(data).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SnapshotError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| SnapshotError::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses and verifies a snapshot image. Nothing is returned unless every
/// section checksum matches.
pub fn decode(bytes: &[u8]) -> Result<Sections, SnapshotError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let count = r.u32("section count")?;
    let mut sections = Sections::new();
    for s in 0..count {
        let name_len = r.u32(&format!("name length of section {s}"))? as usize;
        let name = r.take(name_len, &format!("name of section {s}"))?;
        let name = std::str::from_utf8(name)
            .map_err(|_| SnapshotError::InvalidSectionName)?
            .to_string();
        let len = r.u64(&format!("payload length of section '{name}'"))?;
        let len = usize::try_from(len).map_err(|_| SnapshotError::Truncated(name.clone()))?;
        let data = r.take(len, &format!("payload of section '{name}'"))?;
        let stored = r.u64(&format!("checksum of section '{name}'"))?;
        let computed = checksum64(data);
        if stored != computed {
            return Err(SnapshotError::ChecksumMismatch {
                section: name,
                stored,
                computed,
            });
        }
        if sections.insert(name.clone(), data.to_vec()).is_some() {
            return Err(SnapshotError::DuplicateSection(name));
        }
    }
    if r.pos != bytes.len() {
        return Err(SnapshotError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(sections)
}

pub fn dump(path: impl AsRef<Path>, sections: &Sections) -> Result<(), SnapshotError> {
    let path = path.as_ref();
    std::fs::write(path, encode(sections)).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<Sections, SnapshotError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Section holding particle fields.
pub const PARTICLES: &str = "particles";

/// Particle count (u64) followed by one array per field in declaration
/// order: id (u64), x, y, z, mass, smoothing length, density (f64) and the
/// recompute flag (u64, 0 or 1).
pub fn encode_particles<T: Real>(particles: &ParticleAoS<T>) -> Vec<u8> {
    let n = particles.len();
    let mut out = Vec::with_capacity(8 + n * 8 * 8);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let all: Vec<Particle<T>> = particles.iter().collect();
    let mut put_u64 = |f: &dyn Fn(&Particle<T>) -> u64| {
        for p in &all {
            out.extend_from_slice(&f(p).to_le_bytes());
        }
    };
    put_u64(&|p| p.id);
    put_u64(&|p| p.position[0].widen().to_bits());
    put_u64(&|p| p.position[1].widen().to_bits());
    put_u64(&|p| p.position[2].widen().to_bits());
    put_u64(&|p| p.mass.widen().to_bits());
    put_u64(&|p| p.smoothing_length.widen().to_bits());
    put_u64(&|p| p.density.widen().to_bits());
    put_u64(&|p| p.needs_recompute as u64);
    out
}

pub fn decode_particles<T: Real>(
    bytes: &[u8],
    layout: &LayoutConfig,
) -> Result<ParticleAoS<T>, SnapshotError> {
    let malformed = |reason: String| SnapshotError::Malformed {
        section: PARTICLES.to_string(),
        reason,
    };
    if bytes.len() < 8 {
        return Err(malformed("missing particle count".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(64)
        .and_then(|b| b.checked_add(8))
        .ok_or_else(|| malformed(format!("particle count {n} too large")))?;
    if bytes.len() != expected {
        return Err(malformed(format!(
            "{} bytes for {n} particles, expected {expected}",
            bytes.len()
        )));
    }
    let word = |field: usize, i: usize| {
        let at = 8 + (field * n + i) * 8;
        u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
    };
    let real = |field: usize, i: usize| T::lit(f64::from_bits(word(field, i)));
    let mut particles = Vec::with_capacity(n);
    for i in 0..n {
        let flag = word(7, i);
        if flag > 1 {
            return Err(malformed(format!("particle {i} has recompute flag {flag}")));
        }
        particles.push(Particle {
            id: word(0, i),
            position: [real(1, i), real(2, i), real(3, i)],
            mass: real(4, i),
            smoothing_length: real(5, i),
            density: real(6, i),
            needs_recompute: flag == 1,
        });
    }
    Ok(ParticleAoS::from_particles(layout, particles)?)
}

pub fn f64_array_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f64_array_from_bytes(section: &str, bytes: &[u8]) -> Result<Vec<f64>, SnapshotError> {
    if bytes.len() % 8 != 0 {
        return Err(SnapshotError::Malformed {
            section: section.to_string(),
            reason: format!("length {} is not a multiple of 8", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// FNV-1a over the densities widened to little-endian f64.
pub fn density_checksum<T: Real>(densities: &[T]) -> u64 {
    checksum64(&f64_array_bytes(densities.iter().map(|d| d.widen())))
}
