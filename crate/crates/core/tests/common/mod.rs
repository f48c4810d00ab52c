#![allow(dead_code)]

use sphlab::workload::{generate, WorkloadKind, WorkloadSpec};
use sphlab::ParticleAoS64;

pub fn workload(kind: WorkloadKind, n: usize, k: usize, seed: u64) -> ParticleAoS64 {
    generate(&WorkloadSpec {
        kind,
        n_particles: n,
        seed,
        k_neighbors: k,
        ..Default::default()
    })
    .unwrap()
}

pub fn positions(p: &ParticleAoS64) -> Vec<[f64; 3]> {
    p.iter().map(|q| q.position).collect()
}

pub fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Wendland C6 in 3D, written out from its closed form.
pub fn wendland_c6(r: f64, h: f64) -> f64 {
    let q = r / h;
    if q >= 1.0 {
        return 0.0;
    }
    let c = 1365.0 / (64.0 * std::f64::consts::PI);
    c / (h * h * h) * (1.0 - q).powi(8) * (1.0 + 8.0 * q + 25.0 * q * q + 32.0 * q * q * q)
}

/// All-pairs density of particle `i`: its own kernel weight plus the K
/// nearest others, with `h` the distance to the K-th of them.
pub fn brute_density(pos: &[[f64; 3]], masses: &[f64], i: usize, k: usize) -> (f64, f64) {
    let mut others: Vec<(f64, usize)> = (0..pos.len())
        .filter(|&j| j != i)
        .map(|j| (d2(&pos[i], &pos[j]), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let h = others[k - 1].0.sqrt();
    let mut rho = masses[i] * wendland_c6(0.0, h);
    for &(r2, j) in &others[..k] {
        rho += masses[j] * wendland_c6(r2.sqrt(), h);
    }
    (rho, h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Brute-force range query, sorted indices.
pub fn brute_range(pos: &[[f64; 3]], c: [f64; 3], r: f64) -> Vec<usize> {
    (0..pos.len()).filter(|&j| d2(&pos[j], &c) <= r * r).collect()
}
