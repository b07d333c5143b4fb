//! Offline invariant audit of a quiescent index: reads every page once and
//! checks the structures against each other.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::Ordering;

use pagegraph_core::VertexId;

use crate::index::Index;
use crate::storage::Store;
use crate::table::SlotLoc;

/// How many offending vertices a failed check lists.
const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub vertices: u64,
    pub edge_slots_scanned: u64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &'static str, problems: Vec<String>, total: usize) {
        let passed = total == 0;
        let detail = if passed {
            "ok".to_string()
        } else {
            format!("{total} problem(s): {}", problems.join("; "))
        };
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<4} {:<24} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail)?;
        }
        write!(f, "{} vertices, {} edge slots scanned", self.vertices, self.edge_slots_scanned)
    }
}

/// Collects up to `MAX_EXAMPLES` messages and counts the rest.
#[derive(Default)]
struct Problems {
    shown: Vec<String>,
    total: usize,
}

impl Problems {
    fn add(&mut self, msg: impl FnOnce() -> String) {
        if self.shown.len() < MAX_EXAMPLES {
            self.shown.push(msg());
        }
        self.total += 1;
    }
}

impl Index {
    /// Runs the audit. Inserts must be quiesced; I/O errors abort.
    pub fn verify(&self) -> crate::Result<VerifyReport> {
        let mut report = VerifyReport::default();
        let n = self.allocated();
        let r = self.params.max_degree;
        let mut degree = Problems::default();
        let mut dangling = Problems::default();
        let mut vectors = Problems::default();
        let mut live = 0u64;

        match &self.store {
            Store::Decoupled(s) => {
                let mut claims: HashMap<VertexId, Vec<SlotLoc>> = HashMap::new();
                let mut checksum = Problems::default();
                let mut lists: HashMap<(u64, u16), Vec<VertexId>> = HashMap::new();
                match s.scan_slots(|page, slot, v, list| {
                    report.edge_slots_scanned += 1;
                    claims.entry(v).or_default().push(SlotLoc { page, slot });
                    lists.insert((page, slot), list.to_vec());
                }) {
                    Ok(()) => {}
                    Err(crate::Error::CorruptPage { page, source }) => checksum.add(|| format!("page {page}: {source}")),
                    Err(e) => return Err(e),
                }
                report.push("edge page checksums", checksum.shown, checksum.total);

                let table = s.table();
                let mut torn = Problems::default();
                let mut recover = Problems::default();
                let written = s.records_written();
                for i in 0..n {
                    let v = VertexId(i);
                    let Some(loc) = table.edge(v) else { continue };
                    live += 1;
                    let mine = claims.get(&v).map(Vec::as_slice).unwrap_or(&[]);
                    if !mine.contains(&loc) {
                        torn.add(|| format!("{v:?} maps to {loc:?} which does not hold it"));
                        if mine.len() != 1 {
                            recover.add(|| format!("{v:?}: {} on-disk copies, none at the mapped slot", mine.len()));
                        } else {
                            recover.add(|| format!("{v:?}: single on-disk copy at {:?}, table says {loc:?}", mine[0]));
                        }
                        continue;
                    }
                    let list = &lists[&(loc.page, loc.slot)];
                    check_list(v, list, r, n, |u| table.is_live(u), &mut degree, &mut dangling);
                    match table.vector_record(v) {
                        Some(rec) if rec < written => {}
                        Some(rec) => vectors.add(|| format!("{v:?} vector record {rec} past the tail {written}")),
                        None => vectors.add(|| format!("{v:?} has no vector record")),
                    }
                }
                report.push("indirection consistency", torn.shown, torn.total);
                report.push("recoverability", recover.shown, recover.total);

                let mut ledger = Problems::default();
                if let Err(e) = s.ledger().audit(live) {
                    ledger.add(|| e);
                }
                report.push("page ledger", ledger.shown, ledger.total);
                let mut cache = Problems::default();
                if let Err(e) = s.cache().audit() {
                    cache.add(|| e);
                }
                report.push("navis cache", cache.shown, cache.total);

                // Read every vector back through the normal path.
                let ids: Vec<VertexId> = (0..n).map(VertexId).filter(|&v| table.is_live(v)).collect();
                for chunk in ids.chunks(1024) {
                    let mut ctx = self.store.new_ctx();
                    let got = self.store.read_vectors(chunk, &mut ctx)?;
                    for (v, x) in chunk.iter().zip(got) {
                        if x.len() != self.params.dim || x.iter().any(|f| !f.is_finite()) {
                            vectors.add(|| format!("{v:?} vector unreadable or non-finite"));
                        }
                    }
                }
            }
            Store::Packed(p) => {
                p.scan_records(n, |v, x, list| {
                    live += 1;
                    report.edge_slots_scanned += 1;
                    check_list(v, &list, r, n, |u| p.is_live(u), &mut degree, &mut dangling);
                    if x.len() != self.params.dim || x.iter().any(|f| !f.is_finite()) {
                        vectors.add(|| format!("{v:?} vector non-finite"));
                    }
                })?;
            }
        }
        report.push("degree bound", degree.shown, degree.total);
        report.push("edge targets live", dangling.shown, dangling.total);
        report.push("vector records", vectors.shown, vectors.total);

        let mut count = Problems::default();
        if live != self.len() {
            count.add(|| format!("{live} live on disk, counter says {}", self.len()));
        }
        report.push("live count", count.shown, count.total);

        let mut ent = Problems::default();
        if let Err(e) = self.entrance().audit(live as usize, |v| self.store.is_live(v)) {
            ent.add(|| e);
        }
        report.push("entrance graph", ent.shown, ent.total);

        let c = self.store.counters();
        let mut counters = Problems::default();
        let sums = c.checksum_failures.load(Ordering::Relaxed);
        let torn = c.torn_reads.load(Ordering::Relaxed);
        if sums != 0 || torn != 0 {
            counters.add(|| format!("{sums} checksum failures and {torn} torn reads seen at runtime"));
        }
        report.push("runtime read counters", counters.shown, counters.total);
        report.vertices = live;
        Ok(report)
    }
}

fn check_list(
    v: VertexId,
    list: &[VertexId],
    r: usize,
    n: u32,
    live: impl Fn(VertexId) -> bool,
    degree: &mut Problems,
    dangling: &mut Problems,
) {
    if list.len() > r {
        degree.add(|| format!("{v:?} has degree {} > {r}", list.len()));
    }
    for &u in list {
        if !u.is_valid() || u.0 >= n || !live(u) || u == v {
            dangling.add(|| format!("{v:?} -> {u:?}"));
        }
    }
}
