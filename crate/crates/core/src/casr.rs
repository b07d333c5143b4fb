//! Convergence-aware speculative reranking.
//!
//! Full vectors for a PQ-sorted candidate list are loaded in groups of `s`.
//! While group `i` is being consumed (exact distances computed, running
//! top-K refreshed), group `i + 1` is already submitted. The loop stops as
//! soon as one consumed group leaves the ordered top-K unchanged; at most one
//! speculative group is then in flight and is drained as overshoot.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::model::{rank_cmp, squared_l2, VertexId};

/// Source of full-precision vectors with a submit/wait split so loads can be
/// overlapped with computation.
pub trait VectorLoader {
    type Ticket;
    type Error;

    fn submit(&mut self, ids: &[VertexId]) -> Result<Self::Ticket, Self::Error>;

    /// Blocks until `ticket`'s group is complete and appends its vectors in
    /// request order.
    fn wait(&mut self, ticket: Self::Ticket, out: &mut Vec<(VertexId, Vec<f32>)>) -> Result<(), Self::Error>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RerankResult {
    /// Exact distances for every consumed candidate, in consumption order.
    pub exact: Vec<(VertexId, f32)>,
    /// Full vectors of the consumed candidates, parallel to `exact`.
    pub vectors: Vec<Vec<f32>>,
    /// Converged top-K, ranked by exact distance (ties: lower id).
    pub top: Vec<(VertexId, f32)>,
    /// Vectors fetched, including the unconsumed speculative group.
    pub vectors_loaded: usize,
    pub groups_consumed: usize,
    /// Fetched but never consumed.
    pub overshoot: Vec<VertexId>,
    /// Whether the convergence test fired before the list ran out.
    pub converged: bool,
}

impl RerankResult {
    pub fn consumed(&self) -> usize {
        self.exact.len()
    }

    pub fn top_ids(&self) -> Vec<VertexId> {
        self.top.iter().map(|t| t.0).collect()
    }
}

pub fn casr_rerank<L: VectorLoader>(
    loader: &mut L,
    query: &[f32],
    sorted: &[VertexId],
    top_k: usize,
    group: usize,
) -> Result<RerankResult, L::Error> {
    let mut out = RerankResult::default();
    if sorted.is_empty() {
        return Ok(out);
    }
    let n = sorted.len();
    let mut s = group.clamp(1, n);
    let mut idx = s;
    let mut pending = Some((loader.submit(&sorted[..s])?, s));
    out.vectors_loaded += s;

    let mut ranked: Vec<(VertexId, f32)> = Vec::with_capacity(n);
    let mut loaded: Vec<(VertexId, Vec<f32>)> = Vec::with_capacity(s);
    while let Some((ticket, _)) = pending.take() {
        loaded.clear();
        loader.wait(ticket, &mut loaded)?;

        if idx < n {
            s = s.min(n - idx);
            pending = Some((loader.submit(&sorted[idx..idx + s])?, s));
            out.vectors_loaded += s;
            idx += s;
        }

        for (id, v) in loaded.drain(..) {
            let d = squared_l2(query, &v);
            out.exact.push((id, d));
            out.vectors.push(v);
            let pos = ranked.partition_point(|e| rank_cmp(e.1, e.0, d, id) == Ordering::Less);
            ranked.insert(pos, (id, d));
        }
        out.groups_consumed += 1;

        let next = &ranked[..top_k.min(ranked.len())];
        let unchanged = next.len() == out.top.len() && next.iter().zip(&out.top).all(|(a, b)| a.0 == b.0);
        if unchanged {
            out.converged = true;
            break;
        }
        out.top.clear();
        out.top.extend_from_slice(next);
    }

    if let Some((ticket, count)) = pending {
        let mut spill = Vec::with_capacity(count);
        loader.wait(ticket, &mut spill)?;
        out.overshoot.extend(spill.into_iter().map(|(id, _)| id));
    }
    Ok(out)
}

/// Nearest-rank percentile: the `ceil(pct/100 * n)`-th smallest value.
pub fn nearest_rank_percentile(values: &[usize], pct: usize) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

/// Group size from per-query convergence counts (measured with `s = 1`):
/// their 25th percentile, clamped to `[1, max]`.
pub fn group_size_from_counts(counts: &[usize], max: usize) -> Option<usize> {
    nearest_rank_percentile(counts, 25).map(|p| p.clamp(1, max.max(1)))
}
