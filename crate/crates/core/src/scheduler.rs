//! Work-sharing engines that hand particle indices to worker threads.
//!
//! All three engines run a closure over a list of item indices on scoped
//! worker threads and report how long workers waited for the shared item
//! cursor. They differ only in how items are handed out:
//!
//! * [`run_locked_queue`] pops every entry of the full particle list inside
//!   a mutex and only then asks whether the particle needs work.
//! * [`run_todo_list`] pops from a pre-filtered list, still one item per
//!   lock acquisition.
//! * [`run_dynamic_for`] claims chunks from a single atomic cursor. Errors
//!   raised by the work closure are only looked at once the loop is done.
//!
//! Each worker owns a state value created by `init`; the states are handed
//! back to the caller so per-worker results can be merged after the region.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Default number of items claimed per cursor bump in [`run_dynamic_for`].
pub const DEFAULT_CHUNK_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[default]
    LockedQueue,
    TodoList,
    DynamicFor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScheduleStats {
    /// Seconds between requesting and obtaining the shared cursor, summed
    /// over workers.
    pub contention_time: f64,
    /// Items actually computed by each worker.
    pub items_per_worker: Vec<usize>,
    /// Items popped but found not to need computation.
    pub skipped_items: usize,
}

impl ScheduleStats {
    pub fn processed(&self) -> usize {
        self.items_per_worker.iter().sum()
    }
}

#[derive(Debug)]
pub struct Scheduled<S> {
    pub stats: ScheduleStats,
    /// Worker states in worker order.
    pub states: Vec<S>,
}

struct ErrorSlot<E> {
    raised: AtomicBool,
    first: Mutex<Option<E>>,
}

impl<E> ErrorSlot<E> {
    fn new() -> Self {
        Self {
            raised: AtomicBool::new(false),
            first: Mutex::new(None),
        }
    }

    #[inline]
    fn is_raised(&self) -> bool {
        self.raised.load(Ordering::Relaxed)
    }

    fn raise(&self, e: E) {
        self.raised.store(true, Ordering::Relaxed);
        let mut first = self.first.lock().unwrap_or_else(|p| p.into_inner());
        if first.is_none() {
            *first = Some(e);
        }
    }

    fn into_inner(self) -> Option<E> {
        self.first.into_inner().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Default)]
struct Tally {
    waited: Duration,
    processed: usize,
    skipped: usize,
}

fn run_workers<S, E, I, B>(workers: usize, init: I, body: B) -> Result<Scheduled<S>, E>
where
    S: Send,
    E: Send,
    I: Fn(usize) -> S + Sync,
    B: Fn(&mut S, &mut Tally, &ErrorSlot<E>) + Sync,
{
    assert!(workers >= 1, "scheduler needs at least one worker");
    let errors = ErrorSlot::new();
    let run_one = |w: usize| {
        let mut state = init(w);
        let mut tally = Tally::default();
        body(&mut state, &mut tally, &errors);
        (state, tally)
    };
    let results: Vec<(S, Tally)> = if workers == 1 {
        vec![run_one(0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let run_one = &run_one;
                    s.spawn(move || run_one(w))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        })
    };
    // deferred error check, after every worker has left the region
    if let Some(e) = errors.into_inner() {
        return Err(e);
    }
    let mut stats = ScheduleStats::default();
    let mut states = Vec::with_capacity(workers);
    let mut waited = Duration::ZERO;
    for (state, tally) in results {
        waited += tally.waited;
        stats.items_per_worker.push(tally.processed);
        stats.skipped_items += tally.skipped;
        states.push(state);
    }
    stats.contention_time = waited.as_secs_f64();
    Ok(Scheduled { stats, states })
}

fn shared_queue<S, E, P, I, F>(
    items: &[usize],
    must_compute: P,
    workers: usize,
    init: I,
    work: F,
) -> Result<Scheduled<S>, E>
where
    S: Send,
    E: Send,
    P: Fn(usize) -> bool + Sync,
    I: Fn(usize) -> S + Sync,
    F: Fn(&mut S, usize) -> Result<(), E> + Sync,
{
    let cursor = Mutex::new(0usize);
    run_workers(workers, init, |state, tally, errors| loop {
        let requested = Instant::now();
        let mut next = cursor.lock().unwrap_or_else(|p| p.into_inner());
        tally.waited += requested.elapsed();
        let pos = *next;
        if pos < items.len() {
            *next += 1;
        }
        drop(next);
        let Some(&item) = items.get(pos) else {
            break;
        };
        if errors.is_raised() {
            // drain
            continue;
        }
        if !must_compute(item) {
            tally.skipped += 1;
            continue;
        }
        tally.processed += 1;
        if let Err(e) = work(state, item) {
            errors.raise(e);
        }
    })
}

/// Pops every item of the full list under a lock, then tests `must_compute`.
pub fn run_locked_queue<S, E, P, I, F>(
    items: &[usize],
    must_compute: P,
    workers: usize,
    init: I,
    work: F,
) -> Result<Scheduled<S>, E>
where
    S: Send,
    E: Send,
    P: Fn(usize) -> bool + Sync,
    I: Fn(usize) -> S + Sync,
    F: Fn(&mut S, usize) -> Result<(), E> + Sync,
{
    shared_queue(items, must_compute, workers, init, work)
}

/// Pops items of a pre-filtered list under a lock; every item is computed.
pub fn run_todo_list<S, E, I, F>(
    todo: &[usize],
    workers: usize,
    init: I,
    work: F,
) -> Result<Scheduled<S>, E>
where
    S: Send,
    E: Send,
    I: Fn(usize) -> S + Sync,
    F: Fn(&mut S, usize) -> Result<(), E> + Sync,
{
    shared_queue(todo, |_| true, workers, init, work)
}

/// Claims `chunk_size` items at a time from an atomic cursor.
pub fn run_dynamic_for<S, E, I, F>(
    todo: &[usize],
    workers: usize,
    chunk_size: usize,
    init: I,
    work: F,
) -> Result<Scheduled<S>, E>
where
    S: Send,
    E: Send,
    I: Fn(usize) -> S + Sync,
    F: Fn(&mut S, usize) -> Result<(), E> + Sync,
{
    assert!(chunk_size >= 1, "chunk size must be at least 1");
    let cursor = AtomicUsize::new(0);
    run_workers(workers, init, |state, tally, errors| loop {
        let requested = Instant::now();
        let start = cursor.fetch_add(chunk_size, Ordering::Relaxed);
        tally.waited += requested.elapsed();
        if start >= todo.len() {
            break;
        }
        let end = (start + chunk_size).min(todo.len());
        for &item in &todo[start..end] {
            tally.processed += 1;
            if let Err(e) = work(state, item) {
                errors.raise(e);
            }
        }
    })
}
