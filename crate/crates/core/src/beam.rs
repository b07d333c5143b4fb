//! Best-first beam traversal, generic over where adjacency comes from.
//!
//! The on-disk engine implements [`GraphAccess`] over edgelist pages; the
//! entrance graph implements it over in-memory lists. Each round expands up
//! to `width` of the closest unvisited candidates as a single batch, so an
//! IO-backed implementation can issue one storage request group per hop.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::model::{Candidate, CandidatePool, VertexId};

pub trait GraphAccess {
    type Error;

    /// Distance from the query to `v`, or `None` when `v` is not visible yet
    /// (for example, a vertex whose insertion has not been published).
    fn distance(&mut self, v: VertexId) -> Option<f32>;

    /// Adjacency of every vertex in `batch`. `out` is cleared and receives one
    /// list per batch entry, in order.
    fn expand(&mut self, batch: &[VertexId], out: &mut Vec<Vec<VertexId>>) -> Result<(), Self::Error>;
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub pool: CandidatePool,
    /// Expansion rounds.
    pub hops: u32,
    pub expanded: u32,
    pub distance_evals: u64,
}

pub fn beam_search<G: GraphAccess>(
    graph: &mut G,
    entries: &[VertexId],
    pool_size: usize,
    width: usize,
) -> Result<BeamResult, G::Error> {
    let mut pool = CandidatePool::new(pool_size);
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut evals = 0u64;
    for &e in entries {
        if !seen.insert(e.0) {
            continue;
        }
        if let Some(d) = graph.distance(e) {
            evals += 1;
            pool.insert(Candidate::new(e, d));
        }
    }

    let mut hops = 0u32;
    let mut expanded = 0u32;
    let mut frontier: Vec<usize> = Vec::with_capacity(width);
    let mut batch: Vec<VertexId> = Vec::with_capacity(width);
    let mut lists: Vec<Vec<VertexId>> = Vec::with_capacity(width);
    loop {
        pool.closest_unvisited(width.max(1), &mut frontier);
        if frontier.is_empty() {
            break;
        }
        batch.clear();
        for &pos in &frontier {
            pool.mark_visited(pos);
            batch.push(pool.entries()[pos].id);
        }
        hops += 1;
        expanded += batch.len() as u32;
        graph.expand(&batch, &mut lists)?;
        for list in &lists {
            for &u in list {
                if !u.is_valid() || !seen.insert(u.0) {
                    continue;
                }
                if let Some(d) = graph.distance(u) {
                    evals += 1;
                    pool.insert(Candidate::new(u, d));
                }
            }
        }
    }
    Ok(BeamResult { pool, hops, expanded, distance_evals: evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::convert::Infallible;

    struct Line {
        adj: Vec<Vec<VertexId>>,
        pos: Vec<f32>,
        query: f32,
        hidden: Option<VertexId>,
    }

    impl GraphAccess for Line {
        type Error = Infallible;
        fn distance(&mut self, v: VertexId) -> Option<f32> {
            if Some(v) == self.hidden {
                return None;
            }
            let d = self.pos[v.index()] - self.query;
            Some(d * d)
        }
        fn expand(&mut self, batch: &[VertexId], out: &mut Vec<Vec<VertexId>>) -> Result<(), Infallible> {
            out.clear();
            out.extend(batch.iter().map(|v| self.adj[v.index()].clone()));
            Ok(())
        }
    }

    fn path(n: u32) -> Line {
        let adj = (0..n)
            .map(|i| {
                let mut l = Vec::new();
                if i > 0 {
                    l.push(VertexId(i - 1));
                }
                if i + 1 < n {
                    l.push(VertexId(i + 1));
                }
                l
            })
            .collect();
        Line { adj, pos: (0..n).map(|i| i as f32).collect(), query: 0.0, hidden: None }
    }

    #[test]
    fn single_vertex_graph() {
        let mut g = path(1);
        let r = beam_search(&mut g, &[VertexId(0)], 4, 4).unwrap();
        assert_eq!(r.hops, 1);
        assert_eq!(r.pool.ids().collect::<Vec<_>>(), vec![VertexId(0)]);
    }

    #[test]
    fn walks_a_path_to_the_query() {
        let mut g = path(20);
        g.query = 17.2;
        let r = beam_search(&mut g, &[VertexId(0)], 3, 1).unwrap();
        assert_eq!(r.pool.entries()[0].id, VertexId(17));
        assert!(r.pool.all_visited());
        assert!(r.hops >= 17);
    }

    #[test]
    fn invisible_vertices_are_skipped() {
        let mut g = path(5);
        g.query = 4.0;
        g.hidden = Some(VertexId(2));
        let r = beam_search(&mut g, &[VertexId(0)], 8, 2).unwrap();
        assert_eq!(r.pool.ids().collect::<Vec<_>>(), vec![VertexId(1), VertexId(0)]);
    }

    #[test]
    fn empty_entries_do_nothing() {
        let mut g = path(3);
        let r = beam_search(&mut g, &[], 4, 4).unwrap();
        assert_eq!(r.hops, 0);
        assert!(r.pool.is_empty());
    }
}
