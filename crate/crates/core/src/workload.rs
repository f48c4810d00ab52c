//! Deterministic synthetic particle workloads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{initial_smoothing_length, DEFAULT_K_NEIGHBORS};
use crate::particle::{LayoutConfig, LayoutError, Particle, ParticleAoS};
use crate::prng::SplitMix64;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    #[default]
    Uniform,
    Blobs,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub n_particles: usize,
    pub box_side: f64,
    pub seed: u64,
    pub blob_count: usize,
    /// Blob standard deviation as a fraction of `box_side`.
    pub blob_sigma: f64,
    /// Neighbour count the initial smoothing lengths are sized for.
    pub k_neighbors: usize,
    pub aos_record_bytes: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            kind: WorkloadKind::Uniform,
            n_particles: 4096,
            box_side: 1.0,
            seed: 0,
            blob_count: 8,
            blob_sigma: 0.05,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            aos_record_bytes: crate::particle::DEFAULT_AOS_RECORD_BYTES,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("workload needs at least one particle")]
    NoParticles,
    #[error("box side must be positive and finite, got {0}")]
    BadBoxSide(f64),
    #[error("lattice workloads need a perfect cube particle count, got {0}")]
    NotACube(usize),
    #[error("blob workloads need at least one blob with positive sigma")]
    BadBlobs,
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

fn lattice_side(n: usize) -> Option<usize> {
    let side = (n as f64).cbrt().round() as usize;
    (side.pow(3) == n).then_some(side)
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.n_particles == 0 {
            return Err(WorkloadError::NoParticles);
        }
        if !(self.box_side > 0.0 && self.box_side.is_finite()) {
            return Err(WorkloadError::BadBoxSide(self.box_side));
        }
        match self.kind {
            WorkloadKind::Lattice if lattice_side(self.n_particles).is_none() => {
                Err(WorkloadError::NotACube(self.n_particles))
            }
            WorkloadKind::Blobs if self.blob_count == 0 || !(self.blob_sigma > 0.0) => {
                Err(WorkloadError::BadBlobs)
            }
            _ => Ok(()),
        }
    }

    pub fn layout(&self) -> LayoutConfig {
        LayoutConfig {
            aos_record_bytes: self.aos_record_bytes,
            ..Default::default()
        }
    }

    /// Positions in `[0, box_side)^3`, as doubles.
    pub fn positions(&self) -> Result<Vec<[f64; 3]>, WorkloadError> {
        self.validate()?;
        let n = self.n_particles;
        let l = self.box_side;
        let mut rng = SplitMix64::new(self.seed);
        let positions = match self.kind {
            WorkloadKind::Uniform => (0..n)
                .map(|_| [rng.next_f64() * l, rng.next_f64() * l, rng.next_f64() * l])
                .collect(),
            WorkloadKind::Lattice => {
                let side = lattice_side(n).expect("validated");
                let a = l / side as f64;
                let mut out = Vec::with_capacity(n);
                for i in 0..side {
                    for j in 0..side {
                        for k in 0..side {
                            out.push([i as f64 * a, j as f64 * a, k as f64 * a]);
                        }
                    }
                }
                out
            }
            WorkloadKind::Blobs => {
                let centers: Vec<[f64; 3]> = (0..self.blob_count)
                    .map(|_| [rng.next_f64() * l, rng.next_f64() * l, rng.next_f64() * l])
                    .collect();
                let sigma = self.blob_sigma * l;
                (0..n)
                    .map(|i| {
                        let c = centers[i % centers.len()];
                        let mut p = [0.0; 3];
                        for a in 0..3 {
                            p[a] = wrap(c[a] + sigma * rng.next_gaussian(), l);
                        }
                        p
                    })
                    .collect()
            }
        };
        Ok(positions)
    }
}

// Periodic wrap into [0, l).
fn wrap(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    if w >= l {
        0.0
    } else {
        w
    }
}

/// Builds the workload described by `spec`: unit masses, zero densities and
/// smoothing lengths sized for `spec.k_neighbors`.
pub fn generate<T: Real>(spec: &WorkloadSpec) -> Result<ParticleAoS<T>, WorkloadError> {
    let positions = spec.positions()?;
    let h0 = initial_smoothing_length(T::lit(spec.box_side), spec.k_neighbors, spec.n_particles);
    let particles = positions.iter().enumerate().map(|(i, p)| Particle {
        id: i as u64,
        position: [T::lit(p[0]), T::lit(p[1]), T::lit(p[2])],
        mass: T::one(),
        smoothing_length: h0,
        density: T::zero(),
        needs_recompute: true,
    });
    Ok(ParticleAoS::from_particles(&spec.layout(), particles)?)
}
