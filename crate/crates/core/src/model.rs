//! Shared domain types: vertex ids, graph and search parameters, and the
//! bounded candidate pool every traversal works on.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::{Error, Result};

/// Dense vertex identifier. `VertexId::INVALID` marks empty slots.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VertexId(pub u32);

impl VertexId {
    pub const INVALID: VertexId = VertexId(u32::MAX);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_valid(self) -> bool {
        self != Self::INVALID
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            write!(f, "v{}", self.0)
        } else {
            f.write_str("v<invalid>")
        }
    }
}

impl From<u32> for VertexId {
    fn from(v: u32) -> Self {
        VertexId(v)
    }
}

/// Squared L2 distance, accumulated in index order so results are
/// bit-reproducible. Panics in debug builds on a length mismatch; use
/// [`l2_distance`] where the lengths are not already known to agree.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Checked squared L2 distance.
pub fn l2_distance(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(squared_l2(a, b))
}

/// Rejects vectors of the wrong dimensionality or with NaN/inf components.
pub fn check_vector(v: &[f32], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphParams {
    pub dim: usize,
    /// Maximum out-degree R.
    pub max_degree: usize,
    /// Candidates expanded per traversal round (W).
    pub beam_width: usize,
}

impl GraphParams {
    pub fn new(dim: usize, max_degree: usize, beam_width: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("dim must be at least 1"));
        }
        if max_degree == 0 {
            return Err(Error::InvalidParams("max degree must be at least 1"));
        }
        if beam_width == 0 {
            return Err(Error::InvalidParams("beam width must be at least 1"));
        }
        Ok(Self { dim, max_degree, beam_width })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    /// Explored-set capacity (|E_search| or |E_pos|).
    pub pool_size: usize,
    pub top_k: usize,
}

impl SearchParams {
    pub fn new(pool_size: usize, top_k: usize) -> Result<Self> {
        if top_k == 0 || pool_size < top_k {
            return Err(Error::InvalidParams("need pool size >= top-k >= 1"));
        }
        Ok(Self { pool_size, top_k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: VertexId,
    pub dist: f32,
    pub visited: bool,
}

impl Candidate {
    pub fn new(id: VertexId, dist: f32) -> Self {
        Self { id, dist, visited: false }
    }
}

/// Total order used for every ranking: distance ascending, lower id first on ties.
#[inline]
pub fn rank_cmp(a_dist: f32, a_id: VertexId, b_dist: f32, b_id: VertexId) -> Ordering {
    a_dist.total_cmp(&b_dist).then(a_id.cmp(&b_id))
}

/// Bounded, distance-ordered, duplicate-free candidate set.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    entries: Vec<Candidate>,
    capacity: usize,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "candidate pool capacity must be positive");
        Self { entries: Vec::with_capacity(capacity + 1), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.entries.iter().any(|c| c.id == id)
    }

    /// Inserts `c` at its ranked position, dropping the farthest entry if the
    /// pool overflows. Returns whether `c` was retained; duplicates are rejected.
    pub fn insert(&mut self, c: Candidate) -> bool {
        if self.entries.len() == self.capacity {
            let last = self.entries[self.capacity - 1];
            if rank_cmp(c.dist, c.id, last.dist, last.id) != Ordering::Less {
                return false;
            }
        }
        if self.contains(c.id) {
            return false;
        }
        let pos = self
            .entries
            .partition_point(|e| rank_cmp(e.dist, e.id, c.dist, c.id) == Ordering::Less);
        self.entries.insert(pos, c);
        if self.entries.len() > self.capacity {
            self.entries.pop();
        }
        true
    }

    /// Positions of up to `n` closest unvisited candidates.
    pub fn closest_unvisited(&self, n: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend(
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.visited)
                .map(|(i, _)| i)
                .take(n),
        );
    }

    pub fn mark_visited(&mut self, pos: usize) {
        self.entries[pos].visited = true;
    }

    pub fn all_visited(&self) -> bool {
        self.entries.iter().all(|c| c.visited)
    }

    pub fn ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.entries.iter().map(|c| c.id)
    }

    pub fn top(&self, n: usize) -> &[Candidate] {
        &self.entries[..n.min(self.entries.len())]
    }
}
