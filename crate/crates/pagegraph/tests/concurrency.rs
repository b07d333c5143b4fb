//! Searches racing inserts: no torn lists, no checksum failures, and a clean
//! audit afterwards.

use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;

use pagegraph::dataset::{synthetic, SyntheticSpec};
use pagegraph::io::{IoQueue, MemDevice};
use pagegraph::storage::{LayoutKind, Store, StoreConfig};
use pagegraph::workload::{run, WorkloadMode, WorkloadSpec};
use pagegraph::{Index, IndexParams, VertexId};

fn index(layout: LayoutKind, n: usize) -> (Index, SyntheticSpec) {
    let dim = 16;
    let spec = SyntheticSpec::new(dim, 61);
    let base = synthetic(&spec, 0, n, 0);
    let mut p = IndexParams::new(dim);
    p.layout = layout;
    p.max_degree = 16;
    p.pq_m = 4;
    p.l_pos = 48;
    p.cache_pages = 32;
    p.rmw_pages = 8;
    (Index::build(&base.data, p, Arc::new(MemDevice::new()), None).unwrap(), spec)
}

fn assert_clean(idx: &Index) {
    let c = idx.store().counters();
    assert_eq!(c.checksum_failures.load(Ordering::Relaxed), 0);
    assert_eq!(c.torn_reads.load(Ordering::Relaxed), 0);
    let report = idx.verify().unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn concurrent_workload_leaves_a_consistent_index() {
    for layout in [LayoutKind::Decoupled, LayoutKind::Packed] {
        let (idx, spec) = index(layout, 1500);
        let inserts = synthetic(&spec, 1500, 600, 0).to_rows();
        let queries = synthetic(&spec, 0, 100, 1).to_rows();
        let mut w = WorkloadSpec::new(WorkloadMode::Concurrent);
        w.search_threads = 3;
        w.insert_threads = 3;
        let events = run(&idx, &w, &queries, &inserts, &AtomicBool::new(false)).unwrap();
        assert!(events.iter().any(|e| e.kind == pagegraph::workload::EventKind::Search));
        assert_eq!(idx.len(), 2100);
        let mut ids: Vec<u32> = events.iter().filter(|e| e.kind == pagegraph::workload::EventKind::Insert).map(|e| e.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1500..2100).collect::<Vec<_>>());
        assert_clean(&idx);
    }
}

#[test]
fn many_insert_threads_keep_invariants() {
    let (idx, spec) = index(LayoutKind::Decoupled, 800);
    let inserts = synthetic(&spec, 800, 400, 0).to_rows();
    let mut w = WorkloadSpec::new(WorkloadMode::InsertOnly);
    w.insert_threads = 32;
    run(&idx, &w, &[], &inserts, &AtomicBool::new(false)).unwrap();
    assert_eq!(idx.len(), 1200);
    assert_clean(&idx);
    if let Some(s) = idx.store().decoupled() {
        s.drain_reclamation();
        s.ledger().audit(1200).unwrap();
    }
}

#[test]
fn readers_never_see_a_torn_edgelist() {
    // One writer keeps rewriting vertex 0 with consecutive runs [k-2, k-1, k];
    // any mix of two versions breaks the run.
    let dim = 4;
    let dev = Arc::new(MemDevice::new());
    let cfg = StoreConfig { layout: LayoutKind::Decoupled, dim, max_degree: 3, slots_override: Some(2), checked: true, cache_pages: 8, rmw_pages: 4 };
    let store = Store::create(dev.clone(), &cfg).unwrap();
    let commit = |v: u32, updates: &[(VertexId, Vec<VertexId>)]| {
        let touched: Vec<VertexId> = updates.iter().map(|u| u.0).collect();
        let lock = store.lock_for_update(&touched).unwrap();
        let mut io = IoQueue::new(dev.clone());
        store.commit_insert(&lock, VertexId(v), &[v as f32; 4], &[], updates, &mut io).unwrap();
    };
    for v in 0..3 {
        commit(v, &[]);
    }
    commit(3, &[(VertexId(0), vec![VertexId(1), VertexId(2), VertexId(3)])]);
    let last = AtomicU32::new(3);
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        for _ in 0..3 {
            s.spawn(|| {
                let mut reads = 0u64;
                while !done.load(Ordering::Acquire) || reads < 100 {
                    let mut ctx = store.new_ctx();
                    let before = last.load(Ordering::Acquire);
                    let l: Vec<u32> = store.read_edgelist(VertexId(0), &mut ctx).unwrap().iter().map(|v| v.0).collect();
                    assert_eq!(l.len(), 3);
                    assert!(l[1] == l[0] + 1 && l[2] == l[1] + 1, "torn list {l:?}");
                    assert!(l[2] >= before, "stale list {l:?} after {before}");
                    reads += 1;
                }
            });
        }
        for k in 4..600u32 {
            commit(k, &[(VertexId(0), vec![VertexId(k - 2), VertexId(k - 1), VertexId(k)])]);
            last.store(k, Ordering::Release);
        }
        done.store(true, Ordering::Release);
    });
    assert_eq!(store.counters().torn_reads.load(Ordering::Relaxed), 0);
}
