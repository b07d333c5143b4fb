//! Greedy locality placement of edgelists into pages.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::VertexId;

/// Groups vertices into pages of at most `slots_per_page`.
///
/// Pages are seeded from a BFS frontier starting at `medoid`. Each page takes
/// its seed and then grows breadth-first through not-yet-placed neighbors of
/// its own members until full. Vertices unreachable from the medoid are
/// placed afterwards in id order. Every vertex appears exactly once.
pub fn greedy_placement(adj: &[Vec<VertexId>], medoid: VertexId, slots_per_page: usize) -> Vec<Vec<VertexId>> {
    assert!(slots_per_page > 0);
    let n = adj.len();
    let mut placed = vec![false; n];
    let mut pages: Vec<Vec<VertexId>> = Vec::with_capacity(n.div_ceil(slots_per_page));
    let mut frontier: VecDeque<VertexId> = VecDeque::new();
    if medoid.index() < n {
        frontier.push_back(medoid);
    }
    let mut scan = 0usize;

    loop {
        let seed = loop {
            match frontier.pop_front() {
                Some(v) if !placed[v.index()] => break Some(v),
                Some(_) => continue,
                None => {
                    while scan < n && placed[scan] {
                        scan += 1;
                    }
                    break (scan < n).then(|| VertexId(scan as u32));
                }
            }
        };
        let Some(seed) = seed else { break };

        let mut page = Vec::with_capacity(slots_per_page);
        placed[seed.index()] = true;
        page.push(seed);
        let mut i = 0;
        while page.len() < slots_per_page && i < page.len() {
            let u = page[i];
            for &w in &adj[u.index()] {
                if page.len() == slots_per_page {
                    break;
                }
                if w.index() < n && !placed[w.index()] {
                    placed[w.index()] = true;
                    page.push(w);
                }
            }
            i += 1;
        }
        for &u in &page {
            for &w in &adj[u.index()] {
                if w.index() < n && !placed[w.index()] {
                    frontier.push_back(w);
                }
            }
        }
        pages.push(page);
    }
    pages
}
