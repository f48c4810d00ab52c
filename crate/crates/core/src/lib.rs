//! Isolated SPH density kernel and the steps that speed it up.
//!
//! The library computes per-particle densities from the K nearest
//! neighbours, found through an octree and picked by full sort or
//! quickselect, with the work shared among threads by one of three
//! scheduling engines and the particle data held as either an array of
//! large records or a compact structure of arrays. All variants produce the
//! same densities; they differ only in speed.
//!
//! Math is generic over [`Real`] (`f32` or `f64`); the `*64` / `*32`
//! aliases below name the concrete instantiations.

pub mod bench;
pub mod density;
pub mod kernel;
pub mod octree;
pub mod particle;
pub mod prng;
pub mod scalar;
pub mod scheduler;
pub mod selection;
pub mod snapshot;
pub mod workload;

pub use density::{
    compute_density_pass, LoopStyle, PassError, PassOutput, PassStats, PhaseTimes, Preset,
    VariantConfig,
};
pub use kernel::kernel_w;
pub use octree::{CandidateBuffer, Octree, TreeNode};
pub use particle::{FieldMask, LayoutConfig, LayoutKind, Particle, ParticleAoS, ParticleSoA};
pub use scalar::{Real, Vec3};
pub use scheduler::{SchedulerKind, ScheduleStats};
pub use selection::{NeighborCandidate, SelectorKind};
pub use workload::{generate, WorkloadKind, WorkloadSpec};

pub type ParticleAoS64 = ParticleAoS<f64>;
pub type ParticleSoA64 = ParticleSoA<f64>;
pub type Particle64 = Particle<f64>;
pub type Octree64 = Octree<f64>;
pub type NeighborCandidate64 = NeighborCandidate<f64>;
pub type PassOutput64 = PassOutput<f64>;

pub type ParticleAoS32 = ParticleAoS<f32>;
pub type ParticleSoA32 = ParticleSoA<f32>;
pub type Particle32 = Particle<f32>;
pub type Octree32 = Octree<f32>;
pub type NeighborCandidate32 = NeighborCandidate<f32>;
pub type PassOutput32 = PassOutput<f32>;
