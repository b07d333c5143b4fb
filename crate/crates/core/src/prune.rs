//! α-pruning of neighbor candidate lists.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::model::{rank_cmp, VertexId};

pub const DEFAULT_ALPHA: f32 = 1.2;

/// Selects up to `cap` diverse neighbors for a vertex `p`.
///
/// `candidates` carries each candidate's distance to `p`. Candidates are
/// scanned in ranked order; `c` is kept unless an already-kept `k` satisfies
/// `alpha * dist(k, c) <= dist(p, c)`. Duplicate ids keep their first
/// (closest) occurrence.
pub fn alpha_prune<F>(candidates: &[(VertexId, f32)], cap: usize, alpha: f32, mut pair_dist: F) -> Vec<VertexId>
where
    F: FnMut(VertexId, VertexId) -> f32,
{
    let mut sorted: Vec<(VertexId, f32)> = candidates.to_vec();
    sorted.sort_by(|a, b| rank_cmp(a.1, a.0, b.1, b.0));
    let mut seen: Vec<VertexId> = Vec::with_capacity(sorted.len());
    sorted.retain(|c| {
        if seen.contains(&c.0) {
            false
        } else {
            seen.push(c.0);
            true
        }
    });

    let mut kept: Vec<VertexId> = Vec::with_capacity(cap);
    for &(c, d_pc) in &sorted {
        if kept.len() >= cap {
            break;
        }
        let dominated = kept
            .iter()
            .any(|&k| (alpha * pair_dist(k, c)).partial_cmp(&d_pc) != Some(Ordering::Greater));
        if !dominated {
            kept.push(c);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line_dist(pos: &[f32]) -> impl Fn(VertexId, VertexId) -> f32 + '_ {
        move |a, b| (pos[a.index()] - pos[b.index()]).abs()
    }

    #[test]
    fn diverse_candidates_are_all_kept() {
        // p at the origin of a plane; candidates on orthogonal axes.
        let pts = [(1.0f32, 0.0f32), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        let d = |a: VertexId, b: VertexId| {
            let (x, y) = (pts[a.index()], pts[b.index()]);
            (x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)
        };
        let cands: Vec<_> = (0..4).map(|i| (VertexId(i), 1.0)).collect();
        assert_eq!(alpha_prune(&cands, 8, 1.2, d), vec![VertexId(0), VertexId(1), VertexId(2), VertexId(3)]);
    }

    #[test]
    fn collinear_candidate_is_pruned() {
        // p = 0, k = 1, c = 1.05: 1.2 * 0.05 <= 1.05.
        let pos = [1.0f32, 1.05];
        let cands = [(VertexId(0), 1.0), (VertexId(1), 1.05)];
        assert_eq!(alpha_prune(&cands, 4, 1.2, line_dist(&pos)), vec![VertexId(0)]);
    }

    #[test]
    fn cap_one_keeps_nearest() {
        let pos = [5.0f32, -3.0, 2.0];
        let cands = [(VertexId(0), 5.0), (VertexId(1), 3.0), (VertexId(2), 2.0)];
        assert_eq!(alpha_prune(&cands, 1, 1.2, line_dist(&pos)), vec![VertexId(2)]);
    }

    #[test]
    fn duplicates_collapse_to_closest() {
        let pos = [1.0f32, -4.0];
        let cands = [(VertexId(1), 4.0), (VertexId(0), 1.0), (VertexId(1), 9.0)];
        assert_eq!(alpha_prune(&cands, 4, 1.2, line_dist(&pos)), vec![VertexId(0), VertexId(1)]);
    }
}
