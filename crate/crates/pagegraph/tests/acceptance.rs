//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p pagegraph --test acceptance -- 1 9 10`.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pagegraph::dataset::{ground_truth, recall_at, synthetic, Dataset, SyntheticSpec};
use pagegraph::io::{Device, FileDevice, FileRole, IoMode, IoQueue, MemDevice, TraceOp};
use pagegraph::search::SearchOptions;
use pagegraph::stats::CommitStats;
use pagegraph::storage::{LayoutKind, Store, StoreConfig};
use pagegraph::trace::{make_policy, replay, scan_trace, skewed_trace, NavisReplay, PolicyKind};
use pagegraph::workload::{aggregate, run, Binning, RecallOracle, WorkloadMode, WorkloadSpec};
use pagegraph::{Index, IndexParams, InsertOptions, RerankMode, RerankPath, VertexId};
use pagegraph_core::casr::group_size_from_counts;

const DIM: usize = 64;
const K: usize = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn desk_params() -> IndexParams {
    let mut p = IndexParams::new(DIM);
    p.max_degree = 32;
    p.l_search = 40;
    p.l_pos = 100;
    p.top_k = K;
    p.beam_width = 4;
    p.pq_m = 8;
    p.cache_pages = 16_384;
    p
}

fn exact(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------- 1

fn example_store(layout: LayoutKind, dim: usize) -> (Arc<MemDevice>, Store) {
    let dev = Arc::new(MemDevice::new());
    let cfg = StoreConfig { layout, dim, max_degree: 3, slots_override: Some(4), checked: true, cache_pages: 64, rmw_pages: 16 };
    (dev.clone(), Store::create(dev, &cfg).unwrap())
}

fn commit(store: &Store, dim: usize, v: u32, edges: &[u32], updates: &[(u32, &[u32])]) -> CommitStats {
    let ids = |l: &[u32]| l.iter().map(|&i| VertexId(i)).collect::<Vec<_>>();
    let touched: BTreeSet<VertexId> = edges.iter().chain(updates.iter().map(|u| &u.0)).map(|&i| VertexId(i)).collect();
    let lock = store.lock_for_update(&touched.into_iter().collect::<Vec<_>>()).unwrap();
    let ups: Vec<_> = updates.iter().map(|(u, l)| (VertexId(*u), ids(l))).collect();
    let mut io = IoQueue::new(store.device().clone());
    store.commit_insert(&lock, VertexId(v), &vec![v as f32; dim], &ids(edges), &ups, &mut io).unwrap()
}

/// a..g exist with f already at R.
fn example_prefix(store: &Store, dim: usize) {
    commit(store, dim, 0, &[], &[]);
    commit(store, dim, 1, &[0], &[]);
    commit(store, dim, 2, &[0, 1], &[]);
    commit(store, dim, 3, &[1, 2], &[]);
    commit(store, dim, 4, &[3], &[]);
    commit(store, dim, 5, &[3, 4], &[]);
    commit(store, dim, 6, &[5], &[(5, &[3, 4, 6])]);
}

/// h joins with neighbors b, c, d, each of which gains h, and f is pruned to
/// make room for h.
fn example_insert(store: &Store, dim: usize) -> CommitStats {
    commit(store, dim, 7, &[1, 2, 3], &[(1, &[0, 7]), (2, &[0, 1, 7]), (3, &[1, 2, 7]), (5, &[3, 4, 7])])
}

/// Page writes of the scenario's insert, counted from the device trace.
fn example_writes(layout: LayoutKind, dim: usize) -> (CommitStats, usize, usize) {
    let (dev, store) = example_store(layout, dim);
    example_prefix(&store, dim);
    dev.start_trace();
    let st = example_insert(&store, dim);
    let trace = dev.take_trace();
    let writes = |role| trace.iter().filter(|(op, p)| *op == TraceOp::Write && p.role == role).count();
    (st, writes(FileRole::Edge), writes(FileRole::Vector))
}

fn criterion_1() -> Verdict {
    let r = 3;
    let (st, edge, vector) = example_writes(LayoutKind::Decoupled, 16);
    let decoupled_ok = (edge, vector) == (2, 1) && (st.edge_pages_written, st.vector_pages_written) == (2, 1);
    // dim 600 puts one packed record on each page.
    let (pst, pedge, pvector) = example_writes(LayoutKind::Packed, 600);
    let packed_writes = pedge + pvector;
    let packed_ok = packed_writes == r + 2 && pst.pages_written() == (r + 2) as u64;
    verdict(
        decoupled_ok && packed_ok,
        format!("decoupled: {edge} edge + {vector} vector page writes; packed: {packed_writes} page writes (R+2 = {})", r + 2),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let dim = 8;
    let n = 250;
    let spec = SyntheticSpec::new(dim, 101);
    let base = synthetic(&spec, 0, n, 0);
    let mut p = IndexParams::new(dim);
    p.pq_m = dim;
    p.pq_identity = true;
    p.max_degree = 16;
    p.l_search = 40;
    p.l_pos = 100;
    let idx = Index::build(&base.data, p, Arc::new(MemDevice::new()), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let row = base.row(rng.gen_range(0..n));
        let q: Vec<f32> = row.iter().map(|x| x + rng.gen_range(-0.5..0.5)).collect();
        idx.set_group_size(RerankPath::Pos, rng.gen_range(1..=100));
        let pl = idx.position_seek(&q, RerankMode::Casr).unwrap();
        let mut brute: Vec<(f32, u32)> = pl.pool.iter().map(|c| (exact(&q, base.row(c.id.index())), c.id.0)).collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u32> = brute.iter().take(K).map(|x| x.1).collect();
        let got: Vec<u32> = pl.rerank.top_ids().iter().map(|v| v.0).collect();
        if got != want {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches}/1000 trials differ from the brute-force top-{K} of the explored set"))
}

// ---------------------------------------------------------------- shared desk corpus

struct Desk {
    _dir: tempfile::TempDir,
    idx: Index,
    spec: SyntheticSpec,
    base: Dataset,
    queries: Dataset,
    built_in: Duration,
}

const BASE_N: usize = 100_000;

fn desk() -> Desk {
    let spec = SyntheticSpec::new(DIM, 7);
    let base = synthetic(&spec, 0, BASE_N, 0);
    let queries = synthetic(&spec, 0, 500, 1);
    let dir = tempfile::tempdir().unwrap();
    let dev = Arc::new(FileDevice::open(dir.path(), IoMode::Buffered).unwrap());
    let t = Instant::now();
    let idx = Index::build(&base.data, desk_params(), dev, Some(dir.path().to_path_buf())).unwrap();
    let built_in = t.elapsed();
    let warm = synthetic(&spec, 0, 100, 2).to_rows();
    idx.calibrate(&warm, RerankPath::Search).unwrap();
    idx.calibrate(&warm, RerankPath::Pos).unwrap();
    Desk { _dir: dir, idx, spec, base, queries, built_in }
}

/// Inserted rows continue the base stream: 1k for criterion 6, 10k for 8,
/// 20k for 7, in that order.
fn desk_inserts(d: &Desk, from: usize, n: usize) -> Dataset {
    synthetic(&d.spec, BASE_N + from, n, 0)
}

// ---------------------------------------------------------------- 3

fn criterion_3(d: &Desk) -> Verdict {
    let idx = &d.idx;
    let saved = idx.group_size(RerankPath::Pos);
    idx.set_group_size(RerankPath::Pos, idx.params().l_pos);
    let trials = synthetic(&d.spec, 0, 1000, 3);
    let mut bad = 0;
    for q in trials.rows() {
        let a = idx.position_seek(q, RerankMode::Casr).unwrap();
        let b = idx.position_seek(q, RerankMode::Full).unwrap();
        let same_d = a.rerank.exact.len() == a.pool.len()
            && a.rerank.exact.len() == b.rerank.exact.len()
            && a.rerank.exact.iter().zip(&b.rerank.exact).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
        let same_t = a.rerank.top.len() == b.rerank.top.len()
            && a.rerank.top.iter().zip(&b.rerank.top).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
        if !(same_d && same_t) {
            bad += 1;
        }
    }
    idx.set_group_size(RerankPath::Pos, saved);
    verdict(bad == 0, format!("{bad}/1000 trials differ (D and T compared bit for bit)"))
}

// ---------------------------------------------------------------- 5

fn criterion_5(d: &Desk) -> Verdict {
    let idx = &d.idx;
    let gt = ground_truth(&d.base, &d.queries, K);
    let recall = |mode| {
        let opts = SearchOptions { mode, ..idx.search_options() };
        d.queries
            .rows()
            .enumerate()
            .map(|(i, q)| {
                let ids: Vec<u32> = idx.search_with(q, &opts).unwrap().results.iter().map(|r| r.0 .0).collect();
                recall_at(&ids, &gt[i], K)
            })
            .sum::<f64>()
            / d.queries.len() as f64
    };
    let casr = recall(RerankMode::Casr);
    let full = recall(RerankMode::Full);
    verdict(
        casr >= 0.90 && casr >= full - 0.01,
        format!("recall@10 CASR {casr:.4} (s = {}), full rerank {full:.4}", idx.group_size(RerankPath::Search)),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6(d: &Desk) -> Verdict {
    let idx = &d.idx;
    let rows = desk_inserts(d, 0, 1000);
    let (mut casr_vec, mut full_vec, mut full_wasted) = (0u64, 0u64, 0u64);
    for row in rows.rows() {
        // Paired: the full-rerank seek sees exactly the state the CASR insert
        // then seeks through.
        let full = idx.position_seek(row, RerankMode::Full).unwrap().stats.bytes;
        full_vec += full.useful_vector + full.wasted_vector;
        full_wasted += full.wasted_vector;
        let out = idx.insert_with(row, &InsertOptions { mode: Some(RerankMode::Casr), ..Default::default() }).unwrap();
        casr_vec += out.stats.seek.bytes.useful_vector + out.stats.seek.bytes.wasted_vector;
    }
    let ratio = casr_vec as f64 / full_vec as f64;
    let share = full_wasted as f64 / full_vec as f64;
    verdict(
        ratio <= 0.7 && share >= 0.25,
        format!(
            "vector bytes per insert: CASR {:.0}, full {:.0} (ratio {ratio:.3}); wasted share under full {share:.3}",
            casr_vec as f64 / 1000.0,
            full_vec as f64 / 1000.0
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8(d: &Desk) -> Verdict {
    let idx = &d.idx;
    let rows = desk_inserts(d, 1000, 10_000);
    let (mut ent, mut total) = (Duration::ZERO, Duration::ZERO);
    let mut admitted = 0;
    for row in rows.rows() {
        let out = idx.insert(row).unwrap();
        ent += out.stats.ent_update;
        total += out.stats.total;
        admitted += usize::from(out.stats.entrance == Some(pagegraph::entrance::NavisOutcome::Inserted));
    }
    let share = ent.as_secs_f64() / total.as_secs_f64();
    verdict(
        share < 0.01,
        format!(
            "entrance update {:.1} us of {:.1} us mean insert latency ({:.3}%), {admitted} admissions",
            ent.as_secs_f64() * 1e6 / 1e4,
            total.as_secs_f64() * 1e6 / 1e4,
            share * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7(d: &Desk) -> Verdict {
    let idx = &d.idx;
    let before = idx.len() as usize;
    let inserts = desk_inserts(d, 11_000, 20_000);
    let everything = {
        let mut data = d.base.data.clone();
        data.extend_from_slice(&desk_inserts(d, 0, 31_000).data);
        Dataset::new(DIM, data).unwrap()
    };
    assert_eq!(before, everything.len() - 20_000, "criteria 6 and 8 run first");
    let oracle = RecallOracle { base_len: before, k: K, truth: ground_truth(&everything, &d.queries, 100) };
    let queries = d.queries.to_rows();
    let stop = AtomicBool::new(false);

    let mut base_spec = WorkloadSpec::new(WorkloadMode::SearchOnly);
    base_spec.search_threads = 8;
    base_spec.search_ops = Some(2 * queries.len());
    let baseline = aggregate(&run(idx, &base_spec, &queries, &[], &stop).unwrap(), Binning::Ops(usize::MAX), Some(&oracle))
        .overall_recall()
        .unwrap();

    let mut spec = WorkloadSpec::new(WorkloadMode::Concurrent);
    spec.search_threads = 8;
    spec.insert_threads = 4;
    let t = Instant::now();
    let events = run(idx, &spec, &queries, &inserts.to_rows(), &stop).unwrap();
    let took = t.elapsed();
    let report = aggregate(&events, Binning::Time(Duration::from_secs(1)), Some(&oracle));
    let rows: Vec<_> = report.rows.iter().filter(|r| r.recall.is_some()).collect();
    let worst = rows.iter().map(|r| r.recall.unwrap()).fold(f64::MAX, f64::min);
    let worst_n = rows.iter().min_by(|a, b| a.recall.partial_cmp(&b.recall).unwrap()).map_or(0, |r| r.recall_samples);

    let c = idx.store().counters();
    let checksum = c.checksum_failures.load(Ordering::Relaxed);
    let torn = c.torn_reads.load(Ordering::Relaxed);
    let audit = idx.verify().unwrap();
    let inserted = idx.len() as usize - before;
    verdict(
        checksum == 0 && torn == 0 && audit.passed() && inserted == 20_000 && worst >= baseline - 0.05 && report.recall_unknown == 0,
        format!(
            "{inserted} inserts in {:.0} s; checksum failures {checksum}, torn reads {torn}, audit {}; recall baseline {baseline:.4}, \
             worst 1 s interval {worst:.4} ({worst_n} searches) over {} intervals",
            took.as_secs_f64(),
            if audit.passed() { "clean".to_string() } else { format!("{} failures", audit.failures().count()) },
            rows.len()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let base_n = 50_000;
    let step = 10_000;
    let checkpoints = 8;
    let spec = SyntheticSpec { drift: 3.0, drift_span: base_n + step * checkpoints, ..SyntheticSpec::new(DIM, 17) };
    let base = synthetic(&spec, 0, base_n, 0);
    let idxs: Vec<Index> = [true, false]
        .into_iter()
        .map(|dynamic| {
            let mut p = desk_params();
            p.entrance_updates = dynamic;
            Index::build(&base.data, p, Arc::new(MemDevice::new()), None).unwrap()
        })
        .collect();
    let mut gaps = Vec::new();
    let mut lines = Vec::new();
    let mut ordered = true;
    for c in 0..checkpoints {
        let start = base_n + c * step;
        let rows = synthetic(&spec, start, step, 0);
        for idx in &idxs {
            for row in rows.rows() {
                idx.insert(row).unwrap();
            }
        }
        // Queries follow the stream's current position.
        let qs = synthetic(&spec, start, 500, 1);
        let hops: Vec<f64> =
            idxs.iter().map(|idx| qs.rows().map(|q| idx.search(q).unwrap().stats.hops as f64).sum::<f64>() / qs.len() as f64).collect();
        ordered &= hops[0] <= hops[1];
        gaps.push(hops[1] - hops[0]);
        lines.push(format!("{}k: {:.2}/{:.2}", (start + step) / 1000, hops[0], hops[1]));
    }
    let (first, last) = (gaps[0], gaps[checkpoints - 1]);
    verdict(
        ordered && last >= 2.0 * first,
        format!("hops dynamic/static {}; gap first {first:.3}, final {last:.3}", lines.join(", ")),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Verdict {
    let pages = 20_000;
    let cap = 1000;
    let trace = skewed_trace(pages, 800, 0.8, 400_000, 7);
    let rate = |kind| {
        let mut p = make_policy(kind, cap as usize).unwrap();
        replay(p.as_mut(), &trace).hit_rate()
    };
    let navis = rate(PolicyKind::Navis);
    let lru = rate(PolicyKind::Lru);

    let mut warm = NavisReplay::new(cap as usize).unwrap();
    replay(&mut warm, &trace);
    let frozen = warm.cache().frozen_len();
    let evicted = warm.cache().stats().frozen_evictions;
    replay(&mut warm, &scan_trace(pages, 100_000, 1));
    let scan_evictions = warm.cache().stats().frozen_evictions - evicted;
    verdict(
        navis >= lru + 0.05 && scan_evictions == 0 && warm.cache().frozen_len() == frozen,
        format!(
            "hit rate navis {navis:.4}, LRU {lru:.4} (+{:.1} pp); 100k-page scan evicted {scan_evictions} of {frozen} frozen pages",
            (navis - lru) * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Verdict {
    let constant = vec![8usize; 100];
    let ramp: Vec<usize> = (1..=100).collect();
    let a = group_size_from_counts(&constant, 100);
    let b = group_size_from_counts(&ramp, 100);
    verdict(a == Some(8) && b == Some(25), format!("constant fixture {a:?}, 1..100 fixture {b:?}"))
}

// ---------------------------------------------------------------- 11

fn criterion_11() -> Verdict {
    let spec = SyntheticSpec::new(DIM, 23);
    let base = synthetic(&spec, 0, 3000, 0);
    let rows = synthetic(&spec, 3000, 300, 0);
    let mut per_r = Vec::new();
    for r in [8usize, 32, 96] {
        let mut p = desk_params();
        p.max_degree = r;
        let dev = Arc::new(MemDevice::new());
        let idx = Index::build(&base.data, p, dev.clone(), None).unwrap();
        let before = dev.counters().role(FileRole::Vector).pages_written.load(Ordering::Relaxed);
        let bytes: Vec<u64> = rows.rows().map(|row| idx.insert(row).unwrap().stats.commit.bytes_written.vector).collect();
        let pages = dev.counters().role(FileRole::Vector).pages_written.load(Ordering::Relaxed) - before;
        per_r.push((r, bytes, pages));
    }
    let same = per_r.windows(2).all(|w| w[0].1 == w[1].1 && w[0].2 == w[1].2);
    let each = per_r[0].1.iter().all(|&b| b == (DIM * 4) as u64);
    verdict(
        same && each,
        format!(
            "vector bytes per insert {} for every R; vector pages written {}",
            per_r[0].1[0],
            per_r.iter().map(|(r, _, p)| format!("R={r}: {p}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() {
    let wanted: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.trim_start_matches(['a', 'A']).parse().ok()).collect();
    let on = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    let mut timed = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if on(n) {
            let t = Instant::now();
            let v = f();
            let line = (n, name, v, t.elapsed());
            println!("{} {:>2} {:<34} {} [{:.1} s]", if line.2.pass { "PASS" } else { "FAIL" }, n, name, line.2.detail, line.3.as_secs_f64());
            results.push(line);
        }
    };
    timed(1, "worked insert write counts", &mut criterion_1);
    timed(2, "CASR vs brute force (lossless PQ)", &mut criterion_2);
    timed(10, "calibration fixtures", &mut criterion_10);
    timed(11, "vector writes independent of R", &mut criterion_11);
    timed(9, "cache policy gap and scan", &mut criterion_9);
    if [3, 5, 6, 7, 8].into_iter().any(on) {
        let d = desk();
        println!("     desk index: {} vectors built in {:.0} s", d.idx.len(), d.built_in.as_secs_f64());
        timed(3, "CASR with s = |E| equals full", &mut || criterion_3(&d));
        timed(5, "recall floor", &mut || criterion_5(&d));
        // 6 and 8 insert the rows 7 expects to find already present.
        timed(6, "wasted vector I/O", &mut || criterion_6(&d));
        timed(8, "entrance update overhead", &mut || criterion_8(&d));
        if on(7) {
            if !on(6) {
                criterion_6(&d);
            }
            if !on(8) {
                criterion_8(&d);
            }
        }
        timed(7, "concurrency soundness", &mut || criterion_7(&d));
    }
    timed(4, "entrance staleness", &mut criterion_4);

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("\n{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
