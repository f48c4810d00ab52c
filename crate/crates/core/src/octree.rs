//! Octree over particle positions, stored as a flat node array.
//!
//! The tree never stores particles themselves, only a permutation of
//! particle indices; each leaf owns a contiguous range of that permutation.
//! The eight children of an internal node sit next to each other in the
//! node array, in octant order with the x bit most significant.

use std::ops::Range;

use thiserror::Error;

use crate::particle::PositionSource;
use crate::scalar::{dist2, Real, Vec3};
use crate::selection::NeighborCandidate;

pub const DEFAULT_LEAF_CAPACITY: usize = 8;

/// `child_base` of a leaf.
pub const NO_CHILDREN: u32 = u32::MAX;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("leaf capacity must be at least 1")]
    InvalidLeafCapacity,
    #[error("particle {0} has a non-finite coordinate")]
    NonFinitePosition(usize),
    #[error("{0} particles exceed the index range of the tree")]
    TooManyParticles(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeNode<T> {
    pub center: Vec3<T>,
    pub half_extent: T,
    pub child_base: u32,
    // For internal nodes this spans the whole subtree.
    start: u32,
    end: u32,
}

impl<T: Real> TreeNode<T> {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.child_base == NO_CHILDREN
    }

    /// Slice of the permutation owned by this leaf; empty for internal nodes.
    pub fn particle_range(&self) -> Range<usize> {
        if self.is_leaf() {
            self.start as usize..self.end as usize
        } else {
            0..0
        }
    }

    fn children(&self) -> Range<usize> {
        self.child_base as usize..self.child_base as usize + 8
    }
}

// Relative tolerance absorbing rounding in child centres and extents.
#[inline]
fn slack<T: Real>() -> T {
    T::epsilon() * T::lit(64.0)
}

#[inline]
fn cube_contains<T: Real>(center: &Vec3<T>, half: T, p: &Vec3<T>) -> bool {
    let h = half * (T::one() + slack::<T>());
    (0..3).all(|a| (p[a] - center[a]).abs() <= h)
}

/// Squared distance from `q` to the (slightly inflated) cube.
#[inline]
fn cube_dist2<T: Real>(center: &Vec3<T>, half: T, q: &Vec3<T>) -> T {
    let h = half * (T::one() + slack::<T>());
    let mut d2 = T::zero();
    for a in 0..3 {
        let d = ((q[a] - center[a]).abs() - h).max(T::zero());
        d2 = d2 + d * d;
    }
    d2
}

/// Scratch owned by one querying worker: the result list and the
/// traversal stack. Both keep their capacity between queries.
#[derive(Clone, Debug, Default)]
pub struct CandidateBuffer<T> {
    candidates: Vec<NeighborCandidate<T>>,
    stack: Vec<u32>,
}

impl<T: Real> CandidateBuffer<T> {
    pub fn new() -> Self {
        Self {
            candidates: Vec::new(),
            stack: Vec::new(),
        }
    }

    pub fn candidates(&self) -> &[NeighborCandidate<T>] {
        &self.candidates
    }

    pub fn candidates_mut(&mut self) -> &mut Vec<NeighborCandidate<T>> {
        &mut self.candidates
    }

    pub fn capacity(&self) -> (usize, usize) {
        (self.candidates.capacity(), self.stack.capacity())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Octree<T> {
    nodes: Vec<TreeNode<T>>,
    particle_perm: Vec<usize>,
    leaf_capacity: usize,
}

impl<T: Real> Octree<T> {
    pub fn build<P>(positions: &P, leaf_capacity: usize) -> Result<Self, TreeError>
    where
        P: PositionSource<T> + ?Sized,
    {
        if leaf_capacity == 0 {
            return Err(TreeError::InvalidLeafCapacity);
        }
        let n = positions.count();
        if n >= u32::MAX as usize {
            return Err(TreeError::TooManyParticles(n));
        }
        let pos: Vec<Vec3<T>> = (0..n).map(|i| positions.position(i)).collect();
        if let Some(bad) = pos.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(TreeError::NonFinitePosition(bad));
        }

        let (center, half) = bounding_cube(&pos);
        let mut tree = Octree {
            nodes: vec![TreeNode {
                center,
                half_extent: half,
                child_base: NO_CHILDREN,
                start: 0,
                end: n as u32,
            }],
            particle_perm: (0..n).collect(),
            leaf_capacity,
        };
        let mut scratch = vec![0usize; n];
        tree.split(0, &pos, &mut scratch, 0);
        Ok(tree)
    }

    fn split(&mut self, node: usize, pos: &[Vec3<T>], scratch: &mut [usize], depth: usize) {
        let TreeNode {
            center,
            half_extent: half,
            start,
            end,
            ..
        } = self.nodes[node];
        let (start, end) = (start as usize, end as usize);
        let members = &self.particle_perm[start..end];
        if members.len() <= self.leaf_capacity || depth >= MAX_DEPTH {
            return;
        }
        let first = pos[members[0]];
        if members.iter().all(|&i| pos[i] == first) {
            return;
        }
        let child_half = half * T::lit(0.5);
        let scale = center.iter().fold(half, |m, c| m.max(c.abs()));
        if child_half <= T::epsilon() * scale {
            // cannot place distinct child centres any more
            return;
        }

        let octant = |p: &Vec3<T>| -> usize {
            ((p[0] >= center[0]) as usize) << 2
                | ((p[1] >= center[1]) as usize) << 1
                | (p[2] >= center[2]) as usize
        };
        // stable counting sort of the member range by octant
        let mut counts = [0usize; 8];
        for &i in members {
            counts[octant(&pos[i])] += 1;
        }
        let mut offsets = [0usize; 9];
        for o in 0..8 {
            offsets[o + 1] = offsets[o] + counts[o];
        }
        let mut fill = offsets;
        for &i in members {
            let o = octant(&pos[i]);
            scratch[start + fill[o]] = i;
            fill[o] += 1;
        }
        self.particle_perm[start..end].copy_from_slice(&scratch[start..end]);

        let base = self.nodes.len();
        self.nodes[node].child_base = base as u32;
        for o in 0..8 {
            let mut c = center;
            for (a, bit) in [(0usize, 4usize), (1, 2), (2, 1)] {
                c[a] = if o & bit != 0 {
                    center[a] + child_half
                } else {
                    center[a] - child_half
                };
            }
            self.nodes.push(TreeNode {
                center: c,
                half_extent: child_half,
                child_base: NO_CHILDREN,
                start: (start + offsets[o]) as u32,
                end: (start + offsets[o + 1]) as u32,
            });
        }
        for o in 0..8 {
            self.split(base + o, pos, scratch, depth + 1);
        }
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn particle_perm(&self) -> &[usize] {
        &self.particle_perm
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    /// Collects every particle within `radius` of `center` (inclusive) into
    /// `out`, replacing its previous contents.
    pub fn range_query<'b, P>(
        &self,
        positions: &P,
        center: Vec3<T>,
        radius: T,
        out: &'b mut CandidateBuffer<T>,
    ) -> &'b [NeighborCandidate<T>]
    where
        P: PositionSource<T> + ?Sized,
    {
        out.candidates.clear();
        out.stack.clear();
        let r2 = radius * radius;
        let open_r2 = r2 * (T::one() + slack::<T>());
        out.stack.push(0);
        while let Some(n) = out.stack.pop() {
            let node = &self.nodes[n as usize];
            if cube_dist2(&node.center, node.half_extent, &center) > open_r2 {
                continue;
            }
            if node.is_leaf() {
                for &idx in &self.particle_perm[node.start as usize..node.end as usize] {
                    let d2 = dist2(&positions.position(idx), &center);
                    if d2 <= r2 {
                        out.candidates.push(NeighborCandidate::new(idx, d2));
                    }
                }
            } else {
                // reversed so children pop in octant order
                out.stack.extend(node.children().rev().map(|c| c as u32));
            }
        }
        &out.candidates
    }

    /// Checks the structural invariants against `positions`.
    pub fn validate<P>(&self, positions: &P) -> TreeReport
    where
        P: PositionSource<T> + ?Sized,
    {
        let mut violations = Vec::new();
        let n = positions.count();

        if self.particle_perm.len() != n {
            violations.push(TreeViolation::PermutationLength {
                expected: n,
                found: self.particle_perm.len(),
            });
        }
        let mut seen = vec![0usize; n];
        for &idx in &self.particle_perm {
            match seen.get_mut(idx) {
                Some(count) => *count += 1,
                None => violations.push(TreeViolation::IndexOutOfRange(idx)),
            }
        }

        let Some(root) = self.nodes.first() else {
            violations.push(TreeViolation::MissingRoot);
            return TreeReport { violations };
        };
        for i in 0..n {
            let p = positions.position(i);
            if !cube_contains(&root.center, root.half_extent, &p) {
                violations.push(TreeViolation::OutsideRoot(i));
            }
        }

        // walk from the root; count how many reachable leaves hold each index
        let mut in_leaves = vec![0usize; n];
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut visited[id], true) {
                violations.push(TreeViolation::NodeReachedTwice(id));
                continue;
            }
            let node = &self.nodes[id];
            if node.is_leaf() {
                let range = node.start as usize..node.end as usize;
                if range.start > range.end || range.end > self.particle_perm.len() {
                    violations.push(TreeViolation::BadLeafRange(id));
                    continue;
                }
                for &idx in &self.particle_perm[range] {
                    if idx >= n {
                        continue;
                    }
                    in_leaves[idx] += 1;
                    if !cube_contains(&node.center, node.half_extent, &positions.position(idx)) {
                        violations.push(TreeViolation::OutsideLeaf { node: id, particle: idx });
                    }
                }
                continue;
            }
            let children = node.children();
            if children.end > self.nodes.len() || children.start <= id {
                violations.push(TreeViolation::BadChildBase(id));
                continue;
            }
            for c in children {
                let child = &self.nodes[c];
                let reach = (0..3)
                    .map(|a| (child.center[a] - node.center[a]).abs())
                    .fold(T::zero(), T::max)
                    + child.half_extent;
                if reach > node.half_extent * (T::one() + slack::<T>()) {
                    violations.push(TreeViolation::ChildOutsideParent { parent: id, child: c });
                }
                stack.push(c);
            }
        }
        for (idx, (&count, &listed)) in in_leaves.iter().zip(&seen).enumerate() {
            if count > 1 || listed > 1 {
                violations.push(TreeViolation::DuplicateParticle(idx));
            } else if count == 0 {
                violations.push(TreeViolation::MissingParticle(idx));
            }
        }
        TreeReport { violations }
    }
}

fn bounding_cube<T: Real>(pos: &[Vec3<T>]) -> (Vec3<T>, T) {
    let Some(first) = pos.first() else {
        return ([T::zero(); 3], T::one());
    };
    let mut lo = *first;
    let mut hi = *first;
    for p in pos {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let two = T::lit(2.0);
    let center = [
        (lo[0] + hi[0]) / two,
        (lo[1] + hi[1]) / two,
        (lo[2] + hi[2]) / two,
    ];
    let half = (0..3)
        .map(|a| (hi[a] - lo[a]) / two)
        .fold(T::zero(), T::max);
    let half = if half > T::zero() { half } else { T::one() };
    (center, half)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeViolation {
    MissingRoot,
    PermutationLength { expected: usize, found: usize },
    IndexOutOfRange(usize),
    OutsideRoot(usize),
    OutsideLeaf { node: usize, particle: usize },
    ChildOutsideParent { parent: usize, child: usize },
    BadChildBase(usize),
    BadLeafRange(usize),
    NodeReachedTwice(usize),
    DuplicateParticle(usize),
    MissingParticle(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeReport {
    pub violations: Vec<TreeViolation>,
}

impl TreeReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&TreeViolation> {
        self.violations.first()
    }
}

/// Free-function form of [`Octree::validate`].
pub fn validate_tree<T: Real, P: PositionSource<T> + ?Sized>(tree: &Octree<T>, positions: &P) -> TreeReport {
    tree.validate(positions)
}
