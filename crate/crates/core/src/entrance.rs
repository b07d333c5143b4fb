//! Neighbor rules for incremental entrance-graph updates.
//!
//! These are the structure-free halves of the update: choosing the new
//! member's list from pools the insertion already computed, and deriving each
//! chosen neighbor's replacement list. The concurrent graph that installs the
//! results lives in the std crate.

use alloc::vec::Vec;

use crate::model::VertexId;
use crate::prune::alpha_prune;

/// Neighbor list for a new member `q`.
///
/// `pos_pool` and `ent_pool` are the insertion's position-seeking pool and the
/// entrance search pool, both ascending by PQ distance. Members found in the
/// position pool come first, in pool order; any shortfall up to `cap` is
/// filled from the entrance pool, skipping ids already chosen.
pub fn choose_neighbors<F>(q: VertexId, pos_pool: &[VertexId], ent_pool: &[VertexId], cap: usize, is_member: F) -> Vec<VertexId>
where
    F: Fn(VertexId) -> bool,
{
    let mut out: Vec<VertexId> = Vec::with_capacity(cap);
    for &v in pos_pool {
        if out.len() == cap {
            return out;
        }
        if v != q && is_member(v) && !out.contains(&v) {
            out.push(v);
        }
    }
    for &v in ent_pool {
        if out.len() == cap {
            break;
        }
        if v != q && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Replacement list for neighbor `p` after linking `q` back to it.
///
/// Appends when there is room; otherwise α-prunes `current ∪ {q}` down to
/// `cap`. `dist_p` is the distance from `p` to a candidate and `pair` the
/// distance between two candidates. Returns `None` when `q` is already there.
pub fn reciprocal_list<D, P>(
    current: &[VertexId],
    q: VertexId,
    cap: usize,
    alpha: f32,
    mut dist_p: D,
    pair: P,
) -> Option<Vec<VertexId>>
where
    D: FnMut(VertexId) -> f32,
    P: FnMut(VertexId, VertexId) -> f32,
{
    if current.contains(&q) {
        return None;
    }
    if current.len() < cap {
        let mut l = Vec::with_capacity(current.len() + 1);
        l.extend_from_slice(current);
        l.push(q);
        return Some(l);
    }
    let cands: Vec<(VertexId, f32)> = current.iter().chain(core::iter::once(&q)).map(|&v| (v, dist_p(v))).collect();
    Some(alpha_prune(&cands, cap, alpha, pair))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<VertexId> {
        v.iter().map(|&i| VertexId(i)).collect()
    }

    #[test]
    fn enough_members_in_pos_pool() {
        let members = [1u32, 3, 5, 7, 9];
        let is_m = |v: VertexId| members.contains(&v.0);
        let n = choose_neighbors(VertexId(100), &ids(&[9, 2, 3, 4, 5, 1]), &ids(&[7]), 3, is_m);
        assert_eq!(n, ids(&[9, 3, 5]));
    }

    #[test]
    fn shortfall_filled_from_entrance_pool() {
        let members = [1u32, 3, 5, 7, 9];
        let is_m = |v: VertexId| members.contains(&v.0);
        let n = choose_neighbors(VertexId(100), &ids(&[2, 3]), &ids(&[3, 7, 1, 9]), 3, is_m);
        assert_eq!(n, ids(&[3, 7, 1]));
        let n = choose_neighbors(VertexId(100), &ids(&[2, 4]), &ids(&[5, 1, 9]), 2, is_m);
        assert_eq!(n, ids(&[5, 1]));
    }

    #[test]
    fn reciprocal_append_then_prune() {
        let pos = [0.0f32, 1.0, 1.05, 5.0];
        let d = |a: VertexId, b: VertexId| (pos[a.index()] - pos[b.index()]).abs();
        let p = VertexId(0);
        assert_eq!(reciprocal_list(&ids(&[1]), VertexId(3), 2, 1.2, |v| d(p, v), d), Some(ids(&[1, 3])));
        assert_eq!(reciprocal_list(&ids(&[1, 3]), VertexId(3), 2, 1.2, |v| d(p, v), d), None);
        // Full list: 2 is dominated by 1, 3 is dominated by 1 as well on a line.
        let l = reciprocal_list(&ids(&[1, 3]), VertexId(2), 2, 1.2, |v| d(p, v), d).unwrap();
        assert_eq!(l, ids(&[1]));
    }
}
