//! The density pass: neighbour search, K-nearest selection and the kernel
//! sum, repeated over the particles whose smoothing length had to grow.
//!
//! Every variant of the pass computes each particle from the same inputs
//! and accumulates its neighbours in one canonical order, `(dist2, index)`,
//! so densities agree bit-for-bit across schedulers, thread counts, layouts,
//! loop styles and selectors.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{shape, WENDLAND_C6_NORM};
use crate::octree::{CandidateBuffer, Octree, TreeError, DEFAULT_LEAF_CAPACITY};
use crate::particle::{
    gather_to_soa_parallel, scatter_from_soa_parallel, FieldMask, LayoutError, LayoutKind,
    ParticleAoS, ParticleSoA, ParticleView,
};
use crate::scalar::Real;
use crate::scheduler::{
    run_dynamic_for, run_locked_queue, run_todo_list, ScheduleStats, Scheduled, SchedulerKind,
    DEFAULT_CHUNK_SIZE,
};
use crate::selection::{NeighborCandidate, SelectorKind};

pub const DEFAULT_K_NEIGHBORS: usize = 295;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

/// Growth applied to `h` when too few neighbours were found: doubles the
/// search volume.
pub const SMOOTHING_GROWTH: f64 = 1.259_921_049_894_873_2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopStyle {
    /// Support test guards the kernel call.
    #[default]
    Branchy,
    /// Kernel evaluated for every neighbour; the support test lives inside
    /// it and yields a zero weight.
    BranchLowered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub scheduler_kind: SchedulerKind,
    pub layout_kind: LayoutKind,
    pub loop_style: LoopStyle,
    pub selector_kind: SelectorKind,
    pub k_neighbors: usize,
    pub chunk_size: usize,
    pub leaf_capacity: usize,
    pub max_iterations: usize,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Preset::Original.config()
    }
}

impl VariantConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k_neighbors = k;
        self
    }

    pub fn validate(&self) -> Result<(), PassError> {
        let bad = |what: &str| Err(PassError::InvalidConfig(what.to_string()));
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be at least 1");
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be at least 1");
        }
        if self.leaf_capacity == 0 {
            return bad("leaf_capacity must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }
}

/// Named rungs of the optimisation ladder. Each adds one change to the
/// previous one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Original,
    TodoList,
    Lockless,
    Soa,
    Vectorised,
    Optimised,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Original,
        Preset::TodoList,
        Preset::Lockless,
        Preset::Soa,
        Preset::Vectorised,
        Preset::Optimised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Original => "original",
            Preset::TodoList => "todo-list",
            Preset::Lockless => "lockless",
            Preset::Soa => "soa",
            Preset::Vectorised => "vectorised",
            Preset::Optimised => "optimised",
        }
    }

    pub fn config(self) -> VariantConfig {
        use LayoutKind::*;
        use LoopStyle::*;
        use SchedulerKind::*;
        use SelectorKind::*;
        let (scheduler_kind, layout_kind, loop_style, selector_kind) = match self {
            Preset::Original => (LockedQueue, AoS, Branchy, FullSort),
            Preset::TodoList => (TodoList, AoS, Branchy, FullSort),
            Preset::Lockless => (DynamicFor, AoS, Branchy, FullSort),
            Preset::Soa => (DynamicFor, SoA, Branchy, FullSort),
            Preset::Vectorised => (DynamicFor, SoA, BranchLowered, FullSort),
            Preset::Optimised => (DynamicFor, SoA, BranchLowered, QuickSelect),
        };
        VariantConfig {
            scheduler_kind,
            layout_kind,
            loop_style,
            selector_kind,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            chunk_size: DEFAULT_CHUNK_SIZE,
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!("unknown variant '{s}', expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkerError {
    #[error("particle {particle}: K-th neighbour coincides with the particle, smoothing length collapsed to zero")]
    DegenerateSmoothingLength { particle: usize },
    #[error("particle {particle}: smoothing length is no longer finite")]
    NonFiniteSmoothingLength { particle: usize },
}

#[derive(Debug, Error)]
pub enum PassError {
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("thread count must be at least 1")]
    InvalidThreadCount,
    #[error("invalid variant configuration: {0}")]
    InvalidConfig(String),
    #[error("{n} particles cannot supply {k} neighbours each")]
    TooFewParticles { n: usize, k: usize },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("worker error: {0}")]
    Worker(#[from] WorkerError),
    #[error("{remaining} particles still lack neighbours after {iterations} iterations")]
    NonConvergence { remaining: usize, iterations: usize },
}

/// Wall-clock seconds per pipeline phase. Per-particle phases are summed
/// over workers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub tree_build: f64,
    pub search: f64,
    pub select: f64,
    pub interact: f64,
    pub layout: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PassStats {
    pub iteration_count: usize,
    /// Particles processed in each iteration, followed by a final 0 once
    /// the pass has converged.
    pub todo_sizes: Vec<usize>,
    pub phase_times: PhaseTimes,
    pub contention_time: f64,
    /// Items computed by each worker, summed over iterations.
    pub items_per_worker: Vec<usize>,
    pub skipped_items: usize,
    pub iterations: Vec<ScheduleStats>,
    pub total_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassOutput<T> {
    pub densities: Vec<T>,
    pub smoothing_lengths: Vec<T>,
    pub stats: PassStats,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingUpdate<T> {
    pub smoothing_length: T,
    pub needs_recompute: bool,
}

/// Radius enclosing `k` particles of a uniform box of side `box_side`
/// holding `n` particles.
pub fn initial_smoothing_length<T: Real>(box_side: T, k: usize, n: usize) -> T {
    let ratio = T::lit(3.0) * T::from_usize_lossy(k)
        / (T::lit(4.0) * T::PI() * T::from_usize_lossy(n.max(1)));
    box_side * ratio.cbrt()
}

pub fn initialize_smoothing_lengths<T: Real>(particles: &mut ParticleAoS<T>, box_side: T, k: usize) {
    let h0 = initial_smoothing_length(box_side, k, particles.len());
    for i in 0..particles.len() {
        particles.set_smoothing_length(i, h0);
    }
}

/// New smoothing length after a neighbour search that found
/// `candidates.len()` particles within `h`.
///
/// With fewer than `k` candidates `h` grows by [`SMOOTHING_GROWTH`] and the
/// particle stays flagged. Otherwise the first `k` entries must already be
/// the k nearest with the farthest at position `k - 1`, and `h` becomes
/// that distance.
pub fn adjust_smoothing_length<T: Real>(
    h: T,
    candidates: &[NeighborCandidate<T>],
    k: usize,
) -> SmoothingUpdate<T> {
    if candidates.len() < k {
        SmoothingUpdate {
            smoothing_length: h * T::lit(SMOOTHING_GROWTH),
            needs_recompute: true,
        }
    } else {
        SmoothingUpdate {
            smoothing_length: candidates[k - 1].dist2.sqrt(),
            needs_recompute: false,
        }
    }
}

#[inline(always)]
fn kernel_norm<T: Real>(h: T) -> (T, T) {
    let hinv = T::one() / h;
    (hinv, T::lit(WENDLAND_C6_NORM) * hinv * hinv * hinv)
}

/// `sum_j m_j W(r_ij, h)` over `neighbors`, in list order.
pub fn density_interact<T, V>(
    h: T,
    neighbors: &[NeighborCandidate<T>],
    data: &V,
    style: LoopStyle,
) -> T
where
    T: Real,
    V: ParticleView<T> + ?Sized,
{
    match style {
        LoopStyle::Branchy => interact_branchy(h, neighbors, data),
        LoopStyle::BranchLowered => interact_branch_lowered(h, neighbors, data),
    }
}

#[inline]
fn interact_branchy<T, V>(h: T, neighbors: &[NeighborCandidate<T>], data: &V) -> T
where
    T: Real,
    V: ParticleView<T> + ?Sized,
{
    let (hinv, norm) = kernel_norm(h);
    let mut rho = T::zero();
    for n in neighbors {
        let q = n.dist2.sqrt() * hinv;
        if q < T::one() {
            let w = norm * shape(q);
            rho = rho + data.mass(n.index) * w;
        }
    }
    rho
}

#[inline]
fn interact_branch_lowered<T, V>(h: T, neighbors: &[NeighborCandidate<T>], data: &V) -> T
where
    T: Real,
    V: ParticleView<T> + ?Sized,
{
    let (hinv, norm) = kernel_norm(h);
    let mut rho = T::zero();
    for n in neighbors {
        // shape(1) == 0 exactly
        let q = (n.dist2.sqrt() * hinv).min(T::one());
        let w = norm * shape(q);
        rho = rho + data.mass(n.index) * w;
    }
    rho
}

/// Layout the pass iterates over: readable by workers, updated between
/// iterations.
trait PassLayout<T: Real>: ParticleView<T> {
    fn recompute_flag(&self, i: usize) -> bool;
    fn store(&mut self, outcome: &Outcome<T>);
}

impl<T: Real> PassLayout<T> for ParticleAoS<T> {
    fn recompute_flag(&self, i: usize) -> bool {
        self.needs_recompute(i)
    }

    fn store(&mut self, o: &Outcome<T>) {
        self.set_smoothing_length(o.index, o.smoothing_length);
        self.set_needs_recompute(o.index, o.needs_recompute);
        if let Some(rho) = o.density {
            self.set_density(o.index, rho);
        }
    }
}

impl<T: Real> PassLayout<T> for ParticleSoA<T> {
    fn recompute_flag(&self, i: usize) -> bool {
        self.recompute_flags()[i]
    }

    fn store(&mut self, o: &Outcome<T>) {
        self.smoothing_lengths_mut()[o.index] = o.smoothing_length;
        self.recompute_flags_mut()[o.index] = o.needs_recompute;
        if let Some(rho) = o.density {
            self.densities_mut()[o.index] = rho;
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Outcome<T> {
    index: usize,
    smoothing_length: T,
    density: Option<T>,
    needs_recompute: bool,
}

struct WorkerState<T> {
    buffer: CandidateBuffer<T>,
    outcomes: Vec<Outcome<T>>,
    search: Duration,
    select: Duration,
    interact: Duration,
}

impl<T: Real> WorkerState<T> {
    fn new() -> Self {
        Self {
            buffer: CandidateBuffer::new(),
            outcomes: Vec::new(),
            search: Duration::ZERO,
            select: Duration::ZERO,
            interact: Duration::ZERO,
        }
    }
}

fn process_particle<T, L>(
    layout: &L,
    tree: &Octree<T>,
    config: &VariantConfig,
    i: usize,
    state: &mut WorkerState<T>,
) -> Result<(), WorkerError>
where
    T: Real,
    L: PassLayout<T>,
{
    let k = config.k_neighbors;
    let h = layout.smoothing_length(i);
    let started = Instant::now();
    tree.range_query(layout, layout.position(i), h, &mut state.buffer);
    let candidates = state.buffer.candidates_mut();
    candidates.retain(|c| c.index != i);
    let searched = Instant::now();
    state.search += searched - started;

    if candidates.len() < k {
        let update = adjust_smoothing_length(h, candidates, k);
        if !update.smoothing_length.is_finite() {
            return Err(WorkerError::NonFiniteSmoothingLength { particle: i });
        }
        state.outcomes.push(Outcome {
            index: i,
            smoothing_length: update.smoothing_length,
            density: None,
            needs_recompute: true,
        });
        return Ok(());
    }

    config
        .selector_kind
        .select(candidates, k)
        .expect("at least k candidates");
    let nearest = &mut candidates[..k];
    nearest.sort_by(NeighborCandidate::cmp_key);
    let selected = Instant::now();
    state.select += selected - searched;

    let update = adjust_smoothing_length(h, nearest, k);
    let h_new = update.smoothing_length;
    if !(h_new > T::zero()) {
        return Err(WorkerError::DegenerateSmoothingLength { particle: i });
    }
    let (_, norm) = kernel_norm(h_new);
    let rho = layout.mass(i) * norm + density_interact(h_new, nearest, layout, config.loop_style);
    state.interact += selected.elapsed();

    state.outcomes.push(Outcome {
        index: i,
        smoothing_length: h_new,
        density: Some(rho),
        needs_recompute: false,
    });
    Ok(())
}

fn run_iterations<T, L>(
    layout: &mut L,
    tree: &Octree<T>,
    config: &VariantConfig,
    threads: usize,
    stats: &mut PassStats,
) -> Result<(), PassError>
where
    T: Real,
    L: PassLayout<T>,
{
    let n = layout.count();
    let all: Vec<usize> = (0..n).collect();
    let mut todo = all.clone();
    stats.items_per_worker = vec![0; threads];

    while !todo.is_empty() {
        if stats.iteration_count == config.max_iterations {
            return Err(PassError::NonConvergence {
                remaining: todo.len(),
                iterations: stats.iteration_count,
            });
        }
        stats.todo_sizes.push(todo.len());
        let Scheduled {
            stats: round,
            states,
        } = {
            let view: &L = layout;
            let init = |_| WorkerState::<T>::new();
            let work = |s: &mut WorkerState<T>, i: usize| process_particle(view, tree, config, i, s);
            match config.scheduler_kind {
                SchedulerKind::LockedQueue => {
                    run_locked_queue(&all, |i| view.recompute_flag(i), threads, init, work)
                }
                SchedulerKind::TodoList => run_todo_list(&todo, threads, init, work),
                SchedulerKind::DynamicFor => {
                    run_dynamic_for(&todo, threads, config.chunk_size, init, work)
                }
            }?
        };

        for state in &states {
            stats.phase_times.search += state.search.as_secs_f64();
            stats.phase_times.select += state.select.as_secs_f64();
            stats.phase_times.interact += state.interact.as_secs_f64();
            for o in &state.outcomes {
                layout.store(o);
            }
        }
        stats.contention_time += round.contention_time;
        stats.skipped_items += round.skipped_items;
        for (total, items) in stats.items_per_worker.iter_mut().zip(&round.items_per_worker) {
            *total += items;
        }
        stats.iterations.push(round);
        stats.iteration_count += 1;

        todo.clear();
        todo.extend((0..n).filter(|&i| layout.recompute_flag(i)));
    }
    stats.todo_sizes.push(0);
    Ok(())
}

/// Computes the density of every particle from its `k_neighbors` nearest
/// neighbours, starting from the smoothing lengths already stored in
/// `particles`.
///
/// On success `particles` holds the final densities and smoothing lengths
/// and no particle is flagged for recomputation.
pub fn compute_density_pass<T: Real>(
    particles: &mut ParticleAoS<T>,
    config: &VariantConfig,
    threads: usize,
) -> Result<PassOutput<T>, PassError> {
    config.validate()?;
    if particles.is_empty() {
        return Err(PassError::EmptyWorkload);
    }
    if threads == 0 {
        return Err(PassError::InvalidThreadCount);
    }
    if particles.len() <= config.k_neighbors {
        return Err(PassError::TooFewParticles {
            n: particles.len(),
            k: config.k_neighbors,
        });
    }

    let pass_started = Instant::now();
    let mut stats = PassStats::default();
    for i in 0..particles.len() {
        particles.set_needs_recompute(i, true);
    }

    match config.layout_kind {
        LayoutKind::AoS => {
            let t = Instant::now();
            let tree = Octree::build(&*particles, config.leaf_capacity)?;
            stats.phase_times.tree_build = t.elapsed().as_secs_f64();
            run_iterations(particles, &tree, config, threads, &mut stats)?;
        }
        LayoutKind::SoA => {
            let t = Instant::now();
            let mut soa = gather_to_soa_parallel(particles, threads);
            stats.phase_times.layout += t.elapsed().as_secs_f64();

            let t = Instant::now();
            let tree = Octree::build(&soa, config.leaf_capacity)?;
            stats.phase_times.tree_build = t.elapsed().as_secs_f64();

            let result = run_iterations(&mut soa, &tree, config, threads, &mut stats);

            let t = Instant::now();
            scatter_from_soa_parallel(&soa, particles, FieldMask::default(), threads)?;
            stats.phase_times.layout += t.elapsed().as_secs_f64();
            result?;
        }
    }
    stats.total_time = pass_started.elapsed().as_secs_f64();

    Ok(PassOutput {
        densities: particles.densities(),
        smoothing_lengths: particles.smoothing_lengths(),
        stats,
    })
}
