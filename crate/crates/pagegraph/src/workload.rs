//! Benchmark workloads: worker threads drive searches and inserts against an
//! index and emit one raw event per operation; the aggregator turns an event
//! log into per-interval metric rows.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use pagegraph_core::casr::nearest_rank_percentile;

use crate::error::{Error, Result};
use crate::index::Index;
use crate::stats::{ByteCounts, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadMode {
    SearchOnly,
    InsertOnly,
    Concurrent,
}

impl WorkloadMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "search-only" | "search" => Ok(WorkloadMode::SearchOnly),
            "insert-only" | "insert" => Ok(WorkloadMode::InsertOnly),
            "concurrent" => Ok(WorkloadMode::Concurrent),
            _ => Err(Error::Config(format!("unknown workload mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub mode: WorkloadMode,
    pub search_threads: usize,
    pub insert_threads: usize,
    /// Wall-clock limit; `None` runs until the operation counts are done.
    pub duration: Option<Duration>,
    /// Total searches in search-only mode (default: one pass over the queries).
    pub search_ops: Option<usize>,
    /// Inserts to perform (default: every row of the insert set).
    pub insert_ops: Option<usize>,
    /// Shuffles the query order.
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(mode: WorkloadMode) -> Self {
        let (search_threads, insert_threads) = match mode {
            WorkloadMode::SearchOnly => (4, 0),
            WorkloadMode::InsertOnly => (0, 2),
            WorkloadMode::Concurrent => (4, 2),
        };
        Self { mode, search_threads, insert_threads, duration: None, search_ops: None, insert_ops: None, seed: 42 }
    }

    pub fn validate(&self, queries: usize, inserts: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        match self.mode {
            WorkloadMode::SearchOnly if self.search_threads == 0 => return bad("search-only needs search threads"),
            WorkloadMode::InsertOnly if self.insert_threads == 0 => return bad("insert-only needs insert threads"),
            WorkloadMode::Concurrent if self.search_threads == 0 || self.insert_threads == 0 => {
                return bad("concurrent mode needs both search and insert threads")
            }
            _ => {}
        }
        if self.search_threads > 0 && queries == 0 {
            return bad("search workers need a query set");
        }
        if self.insert_threads > 0 && inserts == 0 {
            return bad("insert workers need an insert set");
        }
        if self.insert_ops.is_some_and(|n| n > inserts) {
            return bad("more inserts requested than the insert set holds");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Search,
    Insert,
}

/// One completed operation. For searches `item` is the query row and `seq`
/// the commit sequence observed at the start; for inserts `item` is the
/// insert-set row, `id` the assigned vertex and `seq` its commit sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub start_us: u64,
    pub latency_ns: u64,
    pub item: u64,
    pub id: u32,
    pub seq: u64,
    pub hops: u64,
    pub useful_vector: u64,
    pub wasted_vector: u64,
    pub edgelist: u64,
    pub padding: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub pages_written: u64,
    pub ent_update_ns: u64,
    /// Result ids, space separated (searches only).
    pub results: String,
}

impl Event {
    fn bytes(&self) -> ByteCounts {
        ByteCounts {
            useful_vector: self.useful_vector,
            wasted_vector: self.wasted_vector,
            edgelist: self.edgelist,
            padding: self.padding,
        }
    }

    fn end_us(&self) -> u64 {
        self.start_us + self.latency_ns / 1000
    }

    pub fn result_ids(&self) -> Vec<u32> {
        self.results.split_whitespace().filter_map(|t| t.parse().ok()).collect()
    }

    fn blank(kind: EventKind, start: Instant, origin: Instant, item: usize) -> Self {
        Event {
            kind,
            start_us: start.duration_since(origin).as_micros() as u64,
            latency_ns: start.elapsed().as_nanos() as u64,
            item: item as u64,
            id: 0,
            seq: 0,
            hops: 0,
            useful_vector: 0,
            wasted_vector: 0,
            edgelist: 0,
            padding: 0,
            cache_hits: 0,
            cache_misses: 0,
            pages_written: 0,
            ent_update_ns: 0,
            results: String::new(),
        }
    }

    fn set_bytes(&mut self, b: ByteCounts, p: Provenance) {
        self.useful_vector = b.useful_vector;
        self.wasted_vector = b.wasted_vector;
        self.edgelist = b.edgelist;
        self.padding = b.padding;
        self.cache_hits = p.cache;
        self.cache_misses = p.disk;
    }
}

/// Runs `spec` to completion (or until `stop` is raised) and returns every
/// event in completion order. Worker errors abort the run.
pub fn run(index: &Index, spec: &WorkloadSpec, queries: &[Vec<f32>], inserts: &[Vec<f32>], stop: &AtomicBool) -> Result<Vec<Event>> {
    let searchers = if spec.mode == WorkloadMode::InsertOnly { 0 } else { spec.search_threads };
    let inserters = if spec.mode == WorkloadMode::SearchOnly { 0 } else { spec.insert_threads };
    spec.validate(if searchers > 0 { queries.len() } else { 1 }, if inserters > 0 { inserts.len() } else { 1 })?;
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let search_budget = match spec.mode {
        WorkloadMode::SearchOnly => spec.search_ops.unwrap_or(queries.len()),
        _ => usize::MAX,
    };
    let insert_budget = spec.insert_ops.unwrap_or(inserts.len());
    let next_search = AtomicUsize::new(0);
    let next_insert = AtomicUsize::new(0);
    let inserters_left = AtomicUsize::new(inserters);
    let failed = AtomicBool::new(false);
    let origin = Instant::now();
    let deadline = spec.duration.map(|d| origin + d);
    let halted = || stop.load(Ordering::Relaxed) || failed.load(Ordering::Relaxed) || deadline.is_some_and(|d| Instant::now() >= d);

    let (tx, rx) = mpsc::channel::<Result<Event>>();
    let mut events = Vec::new();
    let mut first_error = None;
    std::thread::scope(|s| {
        for _ in 0..searchers {
            let tx = tx.clone();
            let (order, next, left, halted) = (&order, &next_search, &inserters_left, &halted);
            s.spawn(move || loop {
                // Concurrent searches run for as long as inserts do.
                if halted() || (inserters > 0 && left.load(Ordering::Acquire) == 0) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= search_budget {
                    break;
                }
                let q = order[k % order.len()];
                if tx.send(search_event(index, &queries[q], q, origin)).is_err() {
                    break;
                }
            });
        }
        for _ in 0..inserters {
            let tx = tx.clone();
            let (next, left, halted) = (&next_insert, &inserters_left, &halted);
            s.spawn(move || {
                loop {
                    if halted() {
                        break;
                    }
                    let row = next.fetch_add(1, Ordering::Relaxed);
                    if row >= insert_budget {
                        break;
                    }
                    if tx.send(insert_event(index, &inserts[row], row, origin)).is_err() {
                        break;
                    }
                }
                left.fetch_sub(1, Ordering::AcqRel);
            });
        }
        drop(tx);
        for ev in rx {
            match ev {
                Ok(e) => events.push(e),
                Err(e) => {
                    failed.store(true, Ordering::Relaxed);
                    first_error.get_or_insert(e);
                }
            }
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(events),
    }
}

fn search_event(index: &Index, q: &[f32], row: usize, origin: Instant) -> Result<Event> {
    let start = Instant::now();
    let seq = index.commit_seq();
    let out = index.search(q)?;
    let mut ev = Event::blank(EventKind::Search, start, origin, row);
    ev.seq = seq;
    ev.hops = out.stats.hops;
    ev.set_bytes(out.stats.bytes, out.stats.provenance);
    ev.results = out.results.iter().map(|r| r.0 .0.to_string()).collect::<Vec<_>>().join(" ");
    Ok(ev)
}

fn insert_event(index: &Index, v: &[f32], row: usize, origin: Instant) -> Result<Event> {
    let start = Instant::now();
    let out = index.insert(v)?;
    let st = &out.stats;
    let mut ev = Event::blank(EventKind::Insert, start, origin, row);
    ev.id = out.id.0;
    ev.seq = st.commit_seq;
    ev.hops = st.seek.hops;
    let mut bytes = st.seek.bytes;
    bytes += st.structural_reads.bytes;
    let mut prov = st.seek.provenance;
    prov += st.structural_reads.provenance;
    ev.set_bytes(bytes, prov);
    ev.pages_written = st.commit.pages_written();
    ev.ent_update_ns = st.ent_update.as_nanos() as u64;
    Ok(ev)
}

pub fn write_events(w: impl Write, events: &[Event]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in events {
        out.serialize(e).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events(r: impl Read) -> Result<Vec<Event>> {
    csv::Reader::from_reader(r).deserialize().map(|e| e.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Config(format!("event log: {k:?}")),
    }
}

/// Exact nearest neighbors of each query over the base set followed by the
/// insert set (row `base_len + i` is insert row `i`), deep enough that the
/// top-K of any prefix of inserts can be read off.
#[derive(Debug, Clone)]
pub struct RecallOracle {
    pub base_len: usize,
    pub k: usize,
    pub truth: Vec<Vec<u32>>,
}

impl RecallOracle {
    /// Recall of one search, or `None` when the stored ranking is too shallow
    /// to know the answer. A vertex counts as present if it committed before
    /// the search started or the search returned it.
    fn recall(&self, ev: &Event, seq_of_row: &HashMap<u64, (u32, u64)>) -> Option<f64> {
        let truth = self.truth.get(ev.item as usize)?;
        let got = ev.result_ids();
        let mut top = Vec::with_capacity(self.k);
        for &row in truth {
            let id = if (row as usize) < self.base_len {
                Some(row)
            } else {
                seq_of_row.get(&(row as u64 - self.base_len as u64)).and_then(|&(id, seq)| (seq <= ev.seq || got.contains(&id)).then_some(id))
            };
            if let Some(id) = id {
                top.push(id);
                if top.len() == self.k {
                    break;
                }
            }
        }
        if top.len() < self.k {
            return None;
        }
        Some(got.iter().take(self.k).filter(|g| top.contains(g)).count() as f64 / self.k as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Fixed wall-clock intervals by completion time.
    Time(Duration),
    /// Fixed operation counts in completion order; reproducible across runs.
    Ops(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub interval: usize,
    /// Seconds since the run started at the end of the interval.
    pub t_end_s: f64,
    pub searches: u64,
    pub inserts: u64,
    pub search_qps: f64,
    pub insert_per_s: f64,
    pub search_p50_ms: f64,
    pub search_p90_ms: f64,
    pub search_p99_ms: f64,
    pub insert_p50_ms: f64,
    pub insert_p90_ms: f64,
    pub insert_p99_ms: f64,
    pub recall: Option<f64>,
    pub recall_samples: u64,
    pub mean_hops: f64,
    pub search_bytes: [f64; 4],
    pub insert_bytes: [f64; 4],
    pub cache_hit_rate: f64,
    pub pages_written_per_insert: f64,
    pub ent_update_share: f64,
}

pub const CSV_HEADER: &str = "interval,t_end_s,searches,inserts,search_qps,insert_per_s,\
search_p50_ms,search_p90_ms,search_p99_ms,insert_p50_ms,insert_p90_ms,insert_p99_ms,\
recall_at_k,recall_samples,mean_hops,\
search_useful_vector_b,search_wasted_vector_b,search_edgelist_b,search_padding_b,\
insert_useful_vector_b,insert_wasted_vector_b,insert_edgelist_b,insert_padding_b,\
cache_hit_rate,pages_written_per_insert,ent_update_share";

impl MetricsRow {
    fn csv(&self, with_recall: bool) -> String {
        let f = |x: f64| format!("{x:.6}");
        let mut cols = vec![
            self.interval.to_string(),
            format!("{:.3}", self.t_end_s),
            self.searches.to_string(),
            self.inserts.to_string(),
            f(self.search_qps),
            f(self.insert_per_s),
            f(self.search_p50_ms),
            f(self.search_p90_ms),
            f(self.search_p99_ms),
            f(self.insert_p50_ms),
            f(self.insert_p90_ms),
            f(self.insert_p99_ms),
        ];
        if with_recall {
            cols.push(self.recall.map_or(String::new(), f));
            cols.push(self.recall_samples.to_string());
        }
        cols.push(f(self.mean_hops));
        cols.extend(self.search_bytes.iter().chain(&self.insert_bytes).map(|&b| f(b)));
        cols.push(f(self.cache_hit_rate));
        cols.push(f(self.pages_written_per_insert));
        cols.push(f(self.ent_update_share));
        cols.join(",")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<MetricsRow>,
    /// Whether recall was computed (an oracle was supplied).
    pub has_recall: bool,
    /// Searches whose recall could not be determined from the oracle depth.
    pub recall_unknown: u64,
}

impl Report {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header = if self.has_recall {
            CSV_HEADER.to_string()
        } else {
            CSV_HEADER.replace("recall_at_k,recall_samples,", "")
        };
        writeln!(w, "{header}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv(self.has_recall))?;
        }
        Ok(())
    }

    /// Mean and maximum of the headline columns over all intervals.
    pub fn summary(&self) -> String {
        let stat = |name: &str, xs: Vec<f64>| -> String {
            if xs.is_empty() {
                return format!("{name:<26} n/a\n");
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let max = xs.iter().copied().fold(f64::MIN, f64::max);
            let min = xs.iter().copied().fold(f64::MAX, f64::min);
            format!("{name:<26} mean {mean:>12.4}  min {min:>12.4}  max {max:>12.4}\n")
        };
        let col = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Vec<f64> { self.rows.iter().filter_map(f).collect() };
        let searching = |r: &MetricsRow| r.searches > 0;
        let inserting = |r: &MetricsRow| r.inserts > 0;
        let mut s = String::new();
        s += &stat("search qps", col(&|r| searching(r).then_some(r.search_qps)));
        s += &stat("inserts/s", col(&|r| inserting(r).then_some(r.insert_per_s)));
        s += &stat("search p99 ms", col(&|r| searching(r).then_some(r.search_p99_ms)));
        s += &stat("insert p99 ms", col(&|r| inserting(r).then_some(r.insert_p99_ms)));
        if self.has_recall {
            s += &stat("recall", col(&|r| r.recall));
        }
        s += &stat("mean hops", col(&|r| searching(r).then_some(r.mean_hops)));
        s += &stat("cache hit rate", col(&|r| Some(r.cache_hit_rate)));
        s += &stat("pages written / insert", col(&|r| inserting(r).then_some(r.pages_written_per_insert)));
        s += &stat("ent update share", col(&|r| inserting(r).then_some(r.ent_update_share)));
        s += &format!("{} intervals, {} searches, {} inserts", self.rows.len(), self.rows.iter().map(|r| r.searches).sum::<u64>(), self.rows.iter().map(|r| r.inserts).sum::<u64>());
        s
    }

    /// Mean recall weighted by samples.
    pub fn overall_recall(&self) -> Option<f64> {
        let n: u64 = self.rows.iter().map(|r| r.recall_samples).sum();
        (n > 0).then(|| self.rows.iter().filter_map(|r| r.recall.map(|x| x * r.recall_samples as f64)).sum::<f64>() / n as f64)
    }
}

/// Pure function of the event log: rerunning it gives the same report.
pub fn aggregate(events: &[Event], binning: Binning, oracle: Option<&RecallOracle>) -> Report {
    let mut sorted: Vec<&Event> = events.iter().collect();
    sorted.sort_by_key(|e| (e.end_us(), e.start_us, e.kind == EventKind::Insert, e.item));
    let seq_of_row: HashMap<u64, (u32, u64)> =
        events.iter().filter(|e| e.kind == EventKind::Insert).map(|e| (e.item, (e.id, e.seq))).collect();

    let mut bins: Vec<Vec<&Event>> = Vec::new();
    match binning {
        Binning::Time(d) => {
            let w = d.as_micros().max(1) as u64;
            for e in sorted {
                let b = (e.end_us() / w) as usize;
                if bins.len() <= b {
                    bins.resize_with(b + 1, Vec::new);
                }
                bins[b].push(e);
            }
        }
        Binning::Ops(n) => bins = sorted.chunks(n.max(1)).map(<[&Event]>::to_vec).collect(),
    }

    let mut report = Report { has_recall: oracle.is_some(), ..Report::default() };
    for (i, bin) in bins.iter().enumerate() {
        let (span_start, span_end) = match binning {
            Binning::Time(d) => {
                let w = d.as_secs_f64();
                (i as f64 * w, (i + 1) as f64 * w)
            }
            Binning::Ops(_) => (
                bin.iter().map(|e| e.start_us).min().unwrap_or(0) as f64 / 1e6,
                bin.iter().map(|e| e.end_us()).max().unwrap_or(0) as f64 / 1e6,
            ),
        };
        let span = (span_end - span_start).max(1e-6);
        let s: Vec<&Event> = bin.iter().copied().filter(|e| e.kind == EventKind::Search).collect();
        let ins: Vec<&Event> = bin.iter().copied().filter(|e| e.kind == EventKind::Insert).collect();
        let mut row = MetricsRow { interval: i, t_end_s: span_end, searches: s.len() as u64, inserts: ins.len() as u64, ..Default::default() };
        row.search_qps = s.len() as f64 / span;
        row.insert_per_s = ins.len() as f64 / span;
        [row.search_p50_ms, row.search_p90_ms, row.search_p99_ms] = percentiles_ms(&s);
        [row.insert_p50_ms, row.insert_p90_ms, row.insert_p99_ms] = percentiles_ms(&ins);
        row.mean_hops = mean(s.iter().map(|e| e.hops as f64));
        row.search_bytes = mean_bytes(&s);
        row.insert_bytes = mean_bytes(&ins);
        let hits: u64 = bin.iter().map(|e| e.cache_hits).sum();
        let misses: u64 = bin.iter().map(|e| e.cache_misses).sum();
        row.cache_hit_rate = if hits + misses == 0 { 0.0 } else { hits as f64 / (hits + misses) as f64 };
        row.pages_written_per_insert = mean(ins.iter().map(|e| e.pages_written as f64));
        let lat: u64 = ins.iter().map(|e| e.latency_ns).sum();
        let ent: u64 = ins.iter().map(|e| e.ent_update_ns).sum();
        row.ent_update_share = if lat == 0 { 0.0 } else { ent as f64 / lat as f64 };
        if let Some(o) = oracle {
            let rs: Vec<f64> = s
                .iter()
                .filter_map(|e| {
                    let r = o.recall(e, &seq_of_row);
                    if r.is_none() {
                        report.recall_unknown += 1;
                    }
                    r
                })
                .collect();
            row.recall_samples = rs.len() as u64;
            row.recall = (!rs.is_empty()).then(|| mean(rs.into_iter()));
        }
        report.rows.push(row);
    }
    report
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (n, t) = xs.fold((0usize, 0.0), |(n, t), x| (n + 1, t + x));
    if n == 0 {
        0.0
    } else {
        t / n as f64
    }
}

fn mean_bytes(evs: &[&Event]) -> [f64; 4] {
    let mut total = ByteCounts::default();
    for e in evs {
        total += e.bytes();
    }
    let n = evs.len().max(1) as f64;
    [total.useful_vector, total.wasted_vector, total.edgelist, total.padding].map(|b| b as f64 / n)
}

fn percentiles_ms(evs: &[&Event]) -> [f64; 3] {
    let lat: Vec<usize> = evs.iter().map(|e| e.latency_ns as usize).collect();
    [50, 90, 99].map(|p| nearest_rank_percentile(&lat, p).map_or(0.0, |ns| ns as f64 / 1e6))
}
