//! Picking the K nearest entries out of a neighbour candidate list.
//!
//! Candidates are totally ordered by `(dist2, index)`, which makes "the K
//! nearest" a well-defined set even when distances tie.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborCandidate<T> {
    pub index: usize,
    pub dist2: T,
}

impl<T: Real> NeighborCandidate<T> {
    pub fn new(index: usize, dist2: T) -> Self {
        Self { index, dist2 }
    }

    /// Total order by squared distance, then particle index.
    #[inline]
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        match self.dist2.partial_cmp(&other.dist2) {
            Some(Ordering::Equal) | None => self.index.cmp(&other.index),
            Some(o) => o,
        }
    }

    #[inline]
    fn lt(&self, other: &Self) -> bool {
        self.dist2 < other.dist2 || (self.dist2 == other.dist2 && self.index < other.index)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot select {k} nearest from {available} candidates")]
pub struct InsufficientCandidates {
    pub k: usize,
    pub available: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    #[default]
    FullSort,
    QuickSelect,
}

impl SelectorKind {
    pub fn select<T: Real>(
        self,
        candidates: &mut [NeighborCandidate<T>],
        k: usize,
    ) -> Result<(), InsufficientCandidates> {
        match self {
            SelectorKind::FullSort => select_k_fullsort(candidates, k),
            SelectorKind::QuickSelect => select_k_quickselect(candidates, k),
        }
    }
}

fn check_k(len: usize, k: usize) -> Result<(), InsufficientCandidates> {
    if k > len {
        Err(InsufficientCandidates { k, available: len })
    } else {
        Ok(())
    }
}

/// Sorts the whole list ascending; the first `k` entries are the k nearest.
pub fn select_k_fullsort<T: Real>(
    candidates: &mut [NeighborCandidate<T>],
    k: usize,
) -> Result<(), InsufficientCandidates> {
    check_k(candidates.len(), k)?;
    candidates.sort_unstable_by(NeighborCandidate::cmp_key);
    Ok(())
}

// Below this size a range is finished by insertion sort.
const SMALL_RANGE: usize = 8;

/// Partially orders the list so its first `k` entries are the k nearest
/// (in no particular order) and every later entry compares greater.
///
/// Hoare partitioning around a median-of-three pivot, iterating only into
/// the side that contains position `k - 1`. Average linear time.
pub fn select_k_quickselect<T: Real>(
    candidates: &mut [NeighborCandidate<T>],
    k: usize,
) -> Result<(), InsufficientCandidates> {
    check_k(candidates.len(), k)?;
    if k == 0 || k == candidates.len() {
        return Ok(());
    }
    let a = candidates;
    let target = k - 1;
    let mut lo = 0usize;
    let mut hi = a.len() - 1;

    while hi > lo {
        if hi - lo < SMALL_RANGE {
            insertion_sort(&mut a[lo..=hi]);
            return Ok(());
        }

        let mid = lo + (hi - lo) / 2;
        if a[mid].lt(&a[lo]) {
            a.swap(mid, lo);
        }
        if a[hi].lt(&a[lo]) {
            a.swap(hi, lo);
        }
        if a[hi].lt(&a[mid]) {
            a.swap(hi, mid);
        }
        let pivot = a[mid];

        // a[lo] <= pivot <= a[hi] bounds both scans on the first pass.
        let mut i = lo;
        let mut j = hi;
        loop {
            while a[i].lt(&pivot) {
                i += 1;
            }
            while pivot.lt(&a[j]) {
                j -= 1;
            }
            if i >= j {
                break;
            }
            a.swap(i, j);
            i += 1;
            j -= 1;
        }
        // a[lo..=j] <= pivot <= a[j+1..=hi]
        if target <= j {
            hi = j;
        } else {
            lo = j + 1;
        }
    }
    Ok(())
}

fn insertion_sort<T: Real>(a: &mut [NeighborCandidate<T>]) {
    for i in 1..a.len() {
        let mut j = i;
        while j > 0 && a[j].lt(&a[j - 1]) {
            a.swap(j, j - 1);
            j -= 1;
        }
    }
}
