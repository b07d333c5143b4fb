//! Entrance-graph growth and its lock discipline, driven through inserts.

use std::sync::Arc;

use pagegraph::dataset::{synthetic, SyntheticSpec};
use pagegraph::entrance::{guarded_distance_calls, EntranceGraph, NavisOutcome};
use pagegraph::io::MemDevice;
use pagegraph::{Index, IndexParams, VertexId};

fn small_index(n: usize, ratio: f64, updates: bool) -> (Index, SyntheticSpec) {
    let dim = 16;
    let spec = SyntheticSpec::new(dim, 41);
    let base = synthetic(&spec, 0, n, 0);
    let mut p = IndexParams::new(dim);
    p.max_degree = 16;
    p.pq_m = 4;
    p.l_pos = 48;
    p.entrance.ratio = ratio;
    p.entrance.max_degree = 8;
    p.entrance_updates = updates;
    (Index::build(&base.data, p, Arc::new(MemDevice::new()), None).unwrap(), spec)
}

#[test]
fn build_samples_the_target_fraction() {
    let (idx, _) = small_index(2000, 0.02, true);
    let g = idx.entrance();
    assert_eq!(g.len(), 40);
    g.audit(2000, |v| idx.is_live(v)).unwrap();
    assert!(g.members().iter().all(|m| g.neighbors(*m).unwrap().len() <= 8));
}

#[test]
fn inserts_keep_the_graph_at_its_ratio() {
    let (idx, spec) = small_index(1000, 0.02, true);
    let extra = synthetic(&spec, 1000, 1000, 0);
    let mut admitted = 0;
    for row in extra.rows() {
        let out = idx.insert(row).unwrap();
        if out.stats.entrance == Some(NavisOutcome::Inserted) {
            admitted += 1;
            assert!(idx.entrance().is_member(out.id));
        }
    }
    let g = idx.entrance();
    // Admission stops exactly when the size reaches ratio * total.
    assert_eq!(g.len(), 40);
    assert_eq!(admitted, 20);
    g.audit(2000, |v| idx.is_live(v)).unwrap();
    assert_eq!(guarded_distance_calls(), 0);
}

#[test]
fn disabled_updates_freeze_the_graph() {
    let (idx, spec) = small_index(1000, 0.02, false);
    let before = idx.entrance().members();
    for row in synthetic(&spec, 1000, 300, 0).rows() {
        assert_eq!(idx.insert(row).unwrap().stats.entrance, None);
    }
    assert_eq!(idx.entrance().members(), before);
}

#[test]
fn new_members_link_back_from_their_neighbors() {
    let (idx, spec) = small_index(1000, 0.02, true);
    let mut joined = Vec::new();
    for row in synthetic(&spec, 1000, 600, 0).rows() {
        let out = idx.insert(row).unwrap();
        if out.stats.entrance == Some(NavisOutcome::Inserted) {
            joined.push(out.id);
        }
    }
    assert!(!joined.is_empty());
    let g = idx.entrance();
    for v in joined {
        let mine = g.neighbors(v).unwrap();
        assert!(!mine.is_empty());
        let inbound = g.members().iter().filter(|m| g.neighbors(**m).unwrap().contains(&v)).count();
        assert!(inbound > 0, "{v:?} has no inbound edge");
    }
}

#[test]
fn serialized_graph_round_trips() {
    let (idx, spec) = small_index(1000, 0.02, true);
    for row in synthetic(&spec, 1000, 200, 0).rows() {
        idx.insert(row).unwrap();
    }
    let g = idx.entrance();
    let back = EntranceGraph::from_bytes(*g.params(), &g.to_bytes()).unwrap();
    assert_eq!(back.members(), g.members());
    assert_eq!(back.entry_seed(), g.entry_seed());
    for m in g.members() {
        assert_eq!(back.neighbors(m), g.neighbors(m));
    }
    assert!(EntranceGraph::from_bytes(*g.params(), &g.to_bytes()[..7]).is_err());
    assert!(!g.is_member(VertexId(u32::MAX - 1)));
}

#[test]
fn decoded_code_distance_matches_the_centroid_sum() {
    let (idx, _) = small_index(600, 0.02, true);
    let q = idx.quantizer();
    let book = q.codebook();
    let ids: Vec<VertexId> = (0..600).step_by(37).map(VertexId).collect();
    let block = q.decode_block(&ids);
    for (i, &a) in ids.iter().enumerate() {
        for (j, &b) in ids.iter().enumerate() {
            let (ca, cb) = (q.codes().get(a), q.codes().get(b));
            let want: f64 = (0..book.m())
                .map(|s| {
                    let (x, y) = (book.centroid(s, ca[s] as usize), book.centroid(s, cb[s] as usize));
                    x.iter().zip(y).map(|(u, v)| ((u - v) as f64).powi(2)).sum::<f64>()
                })
                .sum();
            let got = q.sdc_decoded(&block, i, j) as f64;
            assert!((got - want).abs() <= 1e-5 * want.max(1e-3), "{a:?} {b:?}: {got} vs {want}");
            assert!((q.sdc(a, b) as f64 - got).abs() <= 1e-5 * want.max(1e-3));
        }
    }
}
