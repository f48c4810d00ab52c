//! Particle storage in two layouts.
//!
//! [`ParticleAoS`] keeps one fixed-size record per particle in a single
//! strided buffer. Only the leading bytes of each record hold live fields;
//! the rest is an opaque padding block that stands in for the physics state
//! a full simulation code would carry, so neighbour loops pay the same
//! stride as they would against a large particle struct.
//!
//! [`ParticleSoA`] holds one contiguous array per field and only the fields
//! the density kernel touches. [`gather_to_soa`] and [`scatter_from_soa`]
//! convert between the two.

use std::mem::size_of;

use bitflags::bitflags;
use bytemuck::{Pod, Zeroable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Vec3};

/// Record size used when nothing else is configured.
pub const DEFAULT_AOS_RECORD_BYTES: usize = 224;

/// Smallest record size accepted by [`LayoutConfig`].
pub const MIN_AOS_RECORD_BYTES: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("AoS record of {requested} bytes is below the minimum of {minimum}")]
    RecordTooSmall { requested: usize, minimum: usize },
    #[error("AoS record size {0} is not a multiple of 8 bytes")]
    RecordMisaligned(usize),
    #[error("SoA holds {soa} particles but the AoS collection holds {aos}")]
    SizeMismatch { soa: usize, aos: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    #[default]
    AoS,
    SoA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub aos_record_bytes: usize,
    pub layout_kind: LayoutKind,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            aos_record_bytes: DEFAULT_AOS_RECORD_BYTES,
            layout_kind: LayoutKind::AoS,
        }
    }
}

impl LayoutConfig {
    pub fn validate<T: Real>(&self) -> Result<(), LayoutError> {
        let minimum = MIN_AOS_RECORD_BYTES.max(live_bytes::<T>());
        if self.aos_record_bytes < minimum {
            return Err(LayoutError::RecordTooSmall {
                requested: self.aos_record_bytes,
                minimum,
            });
        }
        if self.aos_record_bytes % 8 != 0 {
            return Err(LayoutError::RecordMisaligned(self.aos_record_bytes));
        }
        Ok(())
    }
}

/// One particle, detached from any layout.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Particle<T> {
    pub id: u64,
    pub position: Vec3<T>,
    pub mass: T,
    pub smoothing_length: T,
    pub density: T,
    pub needs_recompute: bool,
}

// Live prefix of an AoS record. `Real` is sealed to f32/f64, so the six
// scalars are followed by the two u64 words with no implicit padding.
#[repr(C)]
#[derive(Clone, Copy)]
struct LiveFields<T> {
    position: [T; 3],
    mass: T,
    smoothing_length: T,
    density: T,
    id: u64,
    needs_recompute: u64,
}

unsafe impl<T: Real> Zeroable for LiveFields<T> {}
unsafe impl<T: Real> Pod for LiveFields<T> {}

const fn live_bytes<T>() -> usize {
    size_of::<LiveFields<T>>()
}

const fn live_words<T>() -> usize {
    live_bytes::<T>().div_ceil(8)
}

#[inline]
fn live<T: Real>(record: &[u64]) -> &LiveFields<T> {
    let bytes: &[u8] = bytemuck::cast_slice(&record[..live_words::<T>()]);
    bytemuck::from_bytes(&bytes[..live_bytes::<T>()])
}

#[inline]
fn live_mut<T: Real>(record: &mut [u64]) -> &mut LiveFields<T> {
    let bytes: &mut [u8] = bytemuck::cast_slice_mut(&mut record[..live_words::<T>()]);
    bytemuck::from_bytes_mut(&mut bytes[..live_bytes::<T>()])
}

/// Array of fixed-size particle records in one strided buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleAoS<T> {
    stride_words: usize,
    len: usize,
    words: Vec<u64>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real> ParticleAoS<T> {
    pub fn new(config: &LayoutConfig) -> Result<Self, LayoutError> {
        config.validate::<T>()?;
        Ok(Self {
            stride_words: config.aos_record_bytes / 8,
            len: 0,
            words: Vec::new(),
            _scalar: std::marker::PhantomData,
        })
    }

    pub fn from_particles(
        config: &LayoutConfig,
        particles: impl IntoIterator<Item = Particle<T>>,
    ) -> Result<Self, LayoutError> {
        let mut aos = Self::new(config)?;
        for p in particles {
            aos.push(p);
        }
        Ok(aos)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bytes occupied by one record, padding included.
    pub fn record_bytes(&self) -> usize {
        self.stride_words * 8
    }

    pub fn push(&mut self, p: Particle<T>) {
        let start = self.words.len();
        self.words.resize(start + self.stride_words, 0);
        self.len += 1;
        self.set(self.len - 1, &p);
    }

    #[inline]
    fn record(&self, i: usize) -> &[u64] {
        let start = i * self.stride_words;
        &self.words[start..start + self.stride_words]
    }

    #[inline]
    fn record_mut(&mut self, i: usize) -> &mut [u64] {
        let start = i * self.stride_words;
        &mut self.words[start..start + self.stride_words]
    }

    pub fn get(&self, i: usize) -> Particle<T> {
        let f = live::<T>(self.record(i));
        Particle {
            id: f.id,
            position: f.position,
            mass: f.mass,
            smoothing_length: f.smoothing_length,
            density: f.density,
            needs_recompute: f.needs_recompute != 0,
        }
    }

    pub fn set(&mut self, i: usize, p: &Particle<T>) {
        let f = live_mut::<T>(self.record_mut(i));
        f.id = p.id;
        f.position = p.position;
        f.mass = p.mass;
        f.smoothing_length = p.smoothing_length;
        f.density = p.density;
        f.needs_recompute = p.needs_recompute as u64;
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Particle<T>> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    #[inline]
    pub fn position(&self, i: usize) -> Vec3<T> {
        live::<T>(self.record(i)).position
    }

    #[inline]
    pub fn mass(&self, i: usize) -> T {
        live::<T>(self.record(i)).mass
    }

    #[inline]
    pub fn smoothing_length(&self, i: usize) -> T {
        live::<T>(self.record(i)).smoothing_length
    }

    #[inline]
    pub fn density(&self, i: usize) -> T {
        live::<T>(self.record(i)).density
    }

    #[inline]
    pub fn needs_recompute(&self, i: usize) -> bool {
        live::<T>(self.record(i)).needs_recompute != 0
    }

    pub fn set_smoothing_length(&mut self, i: usize, h: T) {
        live_mut::<T>(self.record_mut(i)).smoothing_length = h;
    }

    pub fn set_density(&mut self, i: usize, rho: T) {
        live_mut::<T>(self.record_mut(i)).density = rho;
    }

    pub fn set_needs_recompute(&mut self, i: usize, flag: bool) {
        live_mut::<T>(self.record_mut(i)).needs_recompute = flag as u64;
    }

    pub fn densities(&self) -> Vec<T> {
        (0..self.len).map(|i| self.density(i)).collect()
    }

    pub fn smoothing_lengths(&self) -> Vec<T> {
        (0..self.len).map(|i| self.smoothing_length(i)).collect()
    }
}

/// One array per live field, all of length [`ParticleSoA::len`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleSoA<T> {
    id: Vec<u64>,
    x: Vec<T>,
    y: Vec<T>,
    z: Vec<T>,
    mass: Vec<T>,
    smoothing_length: Vec<T>,
    density: Vec<T>,
    needs_recompute: Vec<bool>,
}

impl<T: Real> ParticleSoA<T> {
    /// Stored bytes per particle across all arrays.
    pub const fn bytes_per_particle() -> usize {
        6 * size_of::<T>() + size_of::<u64>() + size_of::<bool>()
    }

    pub fn with_len(n: usize) -> Self {
        Self {
            id: vec![0; n],
            x: vec![T::zero(); n],
            y: vec![T::zero(); n],
            z: vec![T::zero(); n],
            mass: vec![T::zero(); n],
            smoothing_length: vec![T::zero(); n],
            density: vec![T::zero(); n],
            needs_recompute: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.id
    }
    pub fn positions_x(&self) -> &[T] {
        &self.x
    }
    pub fn positions_y(&self) -> &[T] {
        &self.y
    }
    pub fn positions_z(&self) -> &[T] {
        &self.z
    }
    pub fn masses(&self) -> &[T] {
        &self.mass
    }
    pub fn smoothing_lengths(&self) -> &[T] {
        &self.smoothing_length
    }
    pub fn densities(&self) -> &[T] {
        &self.density
    }
    pub fn recompute_flags(&self) -> &[bool] {
        &self.needs_recompute
    }

    pub fn smoothing_lengths_mut(&mut self) -> &mut [T] {
        &mut self.smoothing_length
    }
    pub fn densities_mut(&mut self) -> &mut [T] {
        &mut self.density
    }
    pub fn recompute_flags_mut(&mut self) -> &mut [bool] {
        &mut self.needs_recompute
    }

    pub fn get(&self, i: usize) -> Particle<T> {
        Particle {
            id: self.id[i],
            position: [self.x[i], self.y[i], self.z[i]],
            mass: self.mass[i],
            smoothing_length: self.smoothing_length[i],
            density: self.density[i],
            needs_recompute: self.needs_recompute[i],
        }
    }

    fn chunks_mut(&mut self, chunk: usize) -> Vec<SoaChunkMut<'_, T>> {
        let chunk = chunk.max(1);
        let ids = self.id.chunks_mut(chunk);
        let mut x = self.x.chunks_mut(chunk);
        let mut y = self.y.chunks_mut(chunk);
        let mut z = self.z.chunks_mut(chunk);
        let mut mass = self.mass.chunks_mut(chunk);
        let mut h = self.smoothing_length.chunks_mut(chunk);
        let mut rho = self.density.chunks_mut(chunk);
        let mut flag = self.needs_recompute.chunks_mut(chunk);
        let mut out = Vec::new();
        for id in ids {
            out.push(SoaChunkMut {
                id,
                x: x.next().unwrap(),
                y: y.next().unwrap(),
                z: z.next().unwrap(),
                mass: mass.next().unwrap(),
                smoothing_length: h.next().unwrap(),
                density: rho.next().unwrap(),
                needs_recompute: flag.next().unwrap(),
            });
        }
        out
    }
}

struct SoaChunkMut<'a, T> {
    id: &'a mut [u64],
    x: &'a mut [T],
    y: &'a mut [T],
    z: &'a mut [T],
    mass: &'a mut [T],
    smoothing_length: &'a mut [T],
    density: &'a mut [T],
    needs_recompute: &'a mut [bool],
}

bitflags! {
    /// Fields written back by [`scatter_from_soa`].
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub struct FieldMask: u8 {
        const ID = 1 << 0;
        const POSITION = 1 << 1;
        const MASS = 1 << 2;
        const SMOOTHING_LENGTH = 1 << 3;
        const DENSITY = 1 << 4;
        const NEEDS_RECOMPUTE = 1 << 5;
        const ALL = Self::ID.bits()
            | Self::POSITION.bits()
            | Self::MASS.bits()
            | Self::SMOOTHING_LENGTH.bits()
            | Self::DENSITY.bits()
            | Self::NEEDS_RECOMPUTE.bits();
    }
}

impl Default for FieldMask {
    /// The outputs of a density pass.
    fn default() -> Self {
        FieldMask::DENSITY | FieldMask::SMOOTHING_LENGTH | FieldMask::NEEDS_RECOMPUTE
    }
}

pub fn gather_to_soa<T: Real>(particles: &ParticleAoS<T>) -> ParticleSoA<T> {
    gather_to_soa_parallel(particles, 1)
}

/// Gather with `workers` threads, each copying a disjoint index range.
pub fn gather_to_soa_parallel<T: Real>(particles: &ParticleAoS<T>, workers: usize) -> ParticleSoA<T> {
    let n = particles.len();
    let mut soa = ParticleSoA::with_len(n);
    let chunk = n.div_ceil(workers.max(1)).max(1);
    let fill = |base: usize, dst: SoaChunkMut<'_, T>| {
        for k in 0..dst.x.len() {
            let f = live::<T>(particles.record(base + k));
            dst.id[k] = f.id;
            dst.x[k] = f.position[0];
            dst.y[k] = f.position[1];
            dst.z[k] = f.position[2];
            dst.mass[k] = f.mass;
            dst.smoothing_length[k] = f.smoothing_length;
            dst.density[k] = f.density;
            dst.needs_recompute[k] = f.needs_recompute != 0;
        }
    };
    let chunks = soa.chunks_mut(chunk);
    if workers <= 1 || chunks.len() <= 1 {
        for (c, dst) in chunks.into_iter().enumerate() {
            fill(c * chunk, dst);
        }
    } else {
        std::thread::scope(|s| {
            for (c, dst) in chunks.into_iter().enumerate() {
                let fill = &fill;
                s.spawn(move || fill(c * chunk, dst));
            }
        });
    }
    soa
}

pub fn scatter_from_soa<T: Real>(
    soa: &ParticleSoA<T>,
    particles: &mut ParticleAoS<T>,
    fields: FieldMask,
) -> Result<(), LayoutError> {
    scatter_from_soa_parallel(soa, particles, fields, 1)
}

pub fn scatter_from_soa_parallel<T: Real>(
    soa: &ParticleSoA<T>,
    particles: &mut ParticleAoS<T>,
    fields: FieldMask,
    workers: usize,
) -> Result<(), LayoutError> {
    let n = particles.len();
    if soa.len() != n {
        return Err(LayoutError::SizeMismatch { soa: soa.len(), aos: n });
    }
    if n == 0 {
        return Ok(());
    }
    let stride = particles.stride_words;
    let chunk = n.div_ceil(workers.max(1)).max(1);
    let write = |base: usize, words: &mut [u64]| {
        for (k, record) in words.chunks_exact_mut(stride).enumerate() {
            let i = base + k;
            let f = live_mut::<T>(record);
            if fields.contains(FieldMask::ID) {
                f.id = soa.id[i];
            }
            if fields.contains(FieldMask::POSITION) {
                f.position = [soa.x[i], soa.y[i], soa.z[i]];
            }
            if fields.contains(FieldMask::MASS) {
                f.mass = soa.mass[i];
            }
            if fields.contains(FieldMask::SMOOTHING_LENGTH) {
                f.smoothing_length = soa.smoothing_length[i];
            }
            if fields.contains(FieldMask::DENSITY) {
                f.density = soa.density[i];
            }
            if fields.contains(FieldMask::NEEDS_RECOMPUTE) {
                f.needs_recompute = soa.needs_recompute[i] as u64;
            }
        }
    };
    if workers <= 1 {
        write(0, &mut particles.words);
    } else {
        std::thread::scope(|s| {
            for (c, words) in particles.words.chunks_mut(chunk * stride).enumerate() {
                let write = &write;
                s.spawn(move || write(c * chunk, words));
            }
        });
    }
    Ok(())
}

/// Read access to particle positions, independent of layout.
pub trait PositionSource<T> {
    fn count(&self) -> usize;
    fn position(&self, i: usize) -> Vec3<T>;
}

/// What the density kernel reads from a layout.
pub trait ParticleView<T>: PositionSource<T> + Sync {
    fn mass(&self, i: usize) -> T;
    fn smoothing_length(&self, i: usize) -> T;
}

impl<T: Real> PositionSource<T> for [Vec3<T>] {
    fn count(&self) -> usize {
        self.len()
    }
    #[inline]
    fn position(&self, i: usize) -> Vec3<T> {
        self[i]
    }
}

impl<T: Real> PositionSource<T> for Vec<Vec3<T>> {
    fn count(&self) -> usize {
        self.len()
    }
    #[inline]
    fn position(&self, i: usize) -> Vec3<T> {
        self[i]
    }
}

impl<T: Real> PositionSource<T> for ParticleAoS<T> {
    fn count(&self) -> usize {
        self.len
    }
    #[inline]
    fn position(&self, i: usize) -> Vec3<T> {
        ParticleAoS::position(self, i)
    }
}

impl<T: Real> ParticleView<T> for ParticleAoS<T> {
    #[inline]
    fn mass(&self, i: usize) -> T {
        ParticleAoS::mass(self, i)
    }
    #[inline]
    fn smoothing_length(&self, i: usize) -> T {
        ParticleAoS::smoothing_length(self, i)
    }
}

impl<T: Real> PositionSource<T> for ParticleSoA<T> {
    fn count(&self) -> usize {
        self.len()
    }
    #[inline]
    fn position(&self, i: usize) -> Vec3<T> {
        [self.x[i], self.y[i], self.z[i]]
    }
}

impl<T: Real> ParticleView<T> for ParticleSoA<T> {
    #[inline]
    fn mass(&self, i: usize) -> T {
        self.mass[i]
    }
    #[inline]
    fn smoothing_length(&self, i: usize) -> T {
        self.smoothing_length[i]
    }
}
