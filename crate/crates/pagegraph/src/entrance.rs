//! In-memory entrance graph: a small sampled proximity graph over PQ codes
//! that supplies entry points to every on-disk traversal.
//!
//! Readers never lock. Each member's adjacency is an immutable `Arc<Vec>`
//! swapped wholesale, and a new member's own list is installed before any
//! neighbor points at it. Writers serialize on one guard, and everything that
//! needs a distance is computed before the guard is taken; while it is held
//! the thread is flagged so any distance call is counted as a violation.

use std::cell::Cell;
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwapOption;
use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pagegraph_core::beam::{beam_search, GraphAccess};
use pagegraph_core::entrance::{choose_neighbors, reciprocal_list};
use pagegraph_core::pq::DistanceTable;
use pagegraph_core::prune::{alpha_prune, DEFAULT_ALPHA};
use pagegraph_core::{Candidate, VertexId};

use crate::error::{Error, Result};
use crate::quant::Quantizer;
use crate::table::Chunked;

/// [`reciprocal_list`] for member `p`, with SDC taken over the candidates'
/// decoded codes. Local labels follow id order, so tie-breaks are unchanged.
fn relink(p: VertexId, cur: &[VertexId], q: VertexId, cap: usize, alpha: f32, quant: &Quantizer) -> Option<Vec<VertexId>> {
    if cur.len() < cap || cur.contains(&q) {
        return reciprocal_list(cur, q, cap, alpha, |c| quant.sdc(p, c), |a, b| quant.sdc(a, b));
    }
    let mut ids: Vec<VertexId> = cur.iter().copied().chain([q]).collect();
    ids.sort_unstable();
    ids.dedup();
    let local = |v: VertexId| VertexId(ids.binary_search(&v).unwrap() as u32);
    let at_p = ids.len();
    let block = quant.decode_block(&[ids.as_slice(), &[p]].concat());
    let cur_local: Vec<VertexId> = cur.iter().map(|&v| local(v)).collect();
    let next = reciprocal_list(
        &cur_local,
        local(q),
        cap,
        alpha,
        |c| quant.sdc_decoded(&block, at_p, c.index()),
        |a, b| quant.sdc_decoded(&block, a.index(), b.index()),
    )?;
    Some(next.into_iter().map(|l| ids[l.index()]).collect())
}

thread_local! {
    static IN_GUARD: Cell<bool> = const { Cell::new(false) };
}

static GUARDED_DISTANCE_CALLS: AtomicU64 = AtomicU64::new(0);

/// Called by every PQ distance evaluation.
#[inline]
pub(crate) fn note_distance() {
    if IN_GUARD.with(Cell::get) {
        GUARDED_DISTANCE_CALLS.fetch_add(1, Ordering::Relaxed);
    }
}

/// Distance evaluations observed while an entrance-graph guard was held, by
/// any graph in this process.
pub fn guarded_distance_calls() -> u64 {
    GUARDED_DISTANCE_CALLS.load(Ordering::Relaxed)
}

struct GuardFlag;

impl GuardFlag {
    fn set() -> Self {
        IN_GUARD.with(|f| f.set(true));
        GuardFlag
    }
}

impl Drop for GuardFlag {
    fn drop(&mut self) {
        IN_GUARD.with(|f| f.set(false));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntranceParams {
    /// Target size as a fraction of the on-disk graph.
    pub ratio: f64,
    pub max_degree: usize,
    /// Pool size of the entrance search.
    pub pool: usize,
    /// Entry points handed to the on-disk traversal.
    pub entries: usize,
    pub alpha: f32,
}

impl Default for EntranceParams {
    fn default() -> Self {
        Self { ratio: 0.01, max_degree: 32, pool: 40, entries: 10, alpha: DEFAULT_ALPHA }
    }
}

impl EntranceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config("entrance ratio must lie in (0, 1)".into()));
        }
        if self.max_degree == 0 || self.pool == 0 || self.entries == 0 {
            return Err(Error::Config("entrance degree, pool and entry count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavisOutcome {
    Inserted,
    Skipped,
}

#[derive(Debug, Default)]
pub struct EntranceCounters {
    pub inserted: AtomicU64,
    pub skipped: AtomicU64,
    /// Updates redone because a neighbor's list changed between snapshot and
    /// lock.
    pub retries: AtomicU64,
}

pub struct EntranceGraph {
    params: EntranceParams,
    adj: Chunked<ArcSwapOption<Vec<VertexId>>>,
    /// Members in insertion order; the mutex is the writer guard.
    members: Mutex<Vec<VertexId>>,
    count: AtomicUsize,
    seed: AtomicU32,
    pub counters: EntranceCounters,
}

struct EntranceAccess<'a, F> {
    g: &'a EntranceGraph,
    dist: F,
}

impl<F: FnMut(VertexId) -> f32> GraphAccess for EntranceAccess<'_, F> {
    type Error = std::convert::Infallible;

    fn distance(&mut self, v: VertexId) -> Option<f32> {
        self.g.is_member(v).then(|| (self.dist)(v))
    }

    fn expand(&mut self, batch: &[VertexId], out: &mut Vec<Vec<VertexId>>) -> std::result::Result<(), Self::Error> {
        out.clear();
        for &v in batch {
            out.push(self.g.neighbors(v).map(|l| l.to_vec()).unwrap_or_default());
        }
        Ok(())
    }
}

impl EntranceGraph {
    pub fn new(params: EntranceParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            adj: Chunked::new(1),
            members: Mutex::new(Vec::new()),
            count: AtomicUsize::new(0),
            seed: AtomicU32::new(u32::MAX),
            counters: EntranceCounters::default(),
        })
    }

    pub fn params(&self) -> &EntranceParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.count.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry_seed(&self) -> Option<VertexId> {
        let s = self.seed.load(Ordering::Acquire);
        (s != u32::MAX).then_some(VertexId(s))
    }

    pub fn is_member(&self, v: VertexId) -> bool {
        self.adj.get(v.index()).is_some_and(|a| a[0].load().is_some())
    }

    pub fn neighbors(&self, v: VertexId) -> Option<Arc<Vec<VertexId>>> {
        self.adj.get(v.index()).and_then(|a| a[0].load_full())
    }

    pub fn members(&self) -> Vec<VertexId> {
        self.members.lock().clone()
    }

    fn install(&self, v: VertexId, list: Vec<VertexId>) {
        self.adj.slot(v.index())[0].store(Some(Arc::new(list)));
    }

    /// Samples `round(ratio * n)` (at least one) of `ids` and wires them by
    /// incremental insertion among themselves. The first sampled vertex is
    /// the entry seed.
    pub fn build(params: EntranceParams, ids: &[VertexId], seed: u64, quant: &Quantizer) -> Result<Self> {
        let g = Self::new(params)?;
        if ids.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let n = ids.len();
        let k = ((params.ratio * n as f64).round() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = rand::seq::index::sample(&mut rng, n, k);
        let mut members = g.members.lock();
        for i in sample.iter() {
            let v = ids[i];
            if members.is_empty() {
                g.install(v, Vec::new());
                g.seed.store(v.0, Ordering::Release);
            } else {
                let mut access = EntranceAccess { g: &g, dist: |u| quant.sdc(v, u) };
                let res = beam_search(&mut access, &[VertexId(g.seed.load(Ordering::Acquire))], params.pool, 1)
                    .unwrap_or_else(|e| match e {});
                let cands: Vec<(VertexId, f32)> = res.pool.entries().iter().map(|c| (c.id, c.dist)).collect();
                let list = alpha_prune(&cands, params.max_degree, params.alpha, |a, b| quant.sdc(a, b));
                g.install(v, list.clone());
                for p in list {
                    let cur = g.neighbors(p).expect("neighbors are members");
                    if let Some(l) =
                        reciprocal_list(&cur, v, params.max_degree, params.alpha, |c| quant.sdc(p, c), |a, b| quant.sdc(a, b))
                    {
                        g.install(p, l);
                    }
                }
            }
            members.push(v);
            g.count.fetch_add(1, Ordering::AcqRel);
        }
        drop(members);
        Ok(g)
    }

    /// Greedy search from the entry seed with PQ distances. Returns the
    /// closest `entries` members and the whole explored pool (ascending).
    pub fn select_entry_points(&self, quant: &Quantizer, t: &DistanceTable) -> (Vec<VertexId>, Vec<Candidate>) {
        let Some(seed) = self.entry_seed() else {
            return (Vec::new(), Vec::new());
        };
        let mut access = EntranceAccess { g: self, dist: |u| quant.adc(t, u) };
        let res = beam_search(&mut access, &[seed], self.params.pool, 1).unwrap_or_else(|e| match e {});
        let pool = res.pool.entries().to_vec();
        let entries = pool.iter().take(self.params.entries).map(|c| c.id).collect();
        (entries, pool)
    }

    /// Admits `q` if the graph is below its target size, reusing the pools
    /// the insertion already computed. `total` is the on-disk vertex count.
    pub fn navis_update(
        &self,
        q: VertexId,
        pos_pool: &[VertexId],
        ent_pool: &[VertexId],
        total: usize,
        quant: &Quantizer,
    ) -> NavisOutcome {
        let below = |count: usize| (count as f64) < self.params.ratio * total as f64;
        if !below(self.len()) {
            self.counters.skipped.fetch_add(1, Ordering::Relaxed);
            return NavisOutcome::Skipped;
        }
        let cap = self.params.max_degree;
        loop {
            let list = choose_neighbors(q, pos_pool, ent_pool, cap, |v| self.is_member(v));
            let mut planned = Vec::with_capacity(list.len());
            for &p in &list {
                let snap = self.neighbors(p);
                let cur: &[VertexId] = snap.as_deref().map_or(&[], |l| l.as_slice());
                let next = relink(p, cur, q, cap, self.params.alpha, quant);
                planned.push((p, snap, next));
            }

            let mut members = self.members.lock();
            let _flag = GuardFlag::set();
            if !below(members.len()) || self.is_member(q) {
                self.counters.skipped.fetch_add(1, Ordering::Relaxed);
                return NavisOutcome::Skipped;
            }
            let moved = planned.iter().any(|(p, snap, _)| {
                let now = self.neighbors(*p);
                match (&now, snap) {
                    (Some(a), Some(b)) => !Arc::ptr_eq(a, b),
                    (None, None) => false,
                    _ => true,
                }
            });
            if moved {
                drop(_flag);
                drop(members);
                self.counters.retries.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            self.install(q, list);
            for (p, _, next) in planned {
                if let Some(l) = next {
                    self.install(p, l);
                }
            }
            members.push(q);
            self.count.fetch_add(1, Ordering::AcqRel);
            if self.entry_seed().is_none() {
                self.seed.store(q.0, Ordering::Release);
            }
            self.counters.inserted.fetch_add(1, Ordering::Relaxed);
            return NavisOutcome::Inserted;
        }
    }

    /// Structural invariants: members live, targets are members, degree cap,
    /// and the size bound against `total` on-disk vertices.
    pub fn audit(&self, total: usize, live: impl Fn(VertexId) -> bool) -> std::result::Result<(), String> {
        let members = self.members.lock();
        if members.len() != self.len() {
            return Err(format!("member list holds {} ids, counter says {}", members.len(), self.len()));
        }
        let bound = self.params.ratio * total as f64 + 1.0;
        if members.len() as f64 > bound.max(1.0) {
            return Err(format!("{} members exceed the bound {bound:.1}", members.len()));
        }
        for &m in members.iter() {
            if !live(m) {
                return Err(format!("member {m:?} is not live on disk"));
            }
            let l = self.neighbors(m).ok_or_else(|| format!("member {m:?} has no list"))?;
            if l.len() > self.params.max_degree {
                return Err(format!("member {m:?} has degree {}", l.len()));
            }
            if let Some(t) = l.iter().find(|t| !self.is_member(**t)) {
                return Err(format!("member {m:?} points at non-member {t:?}"));
            }
        }
        Ok(())
    }

    /// `{count u32, R u32}` then per member `{id u32, degree u32, ids}`, in
    /// insertion order (the first is the entry seed).
    pub fn to_bytes(&self) -> Vec<u8> {
        let members = self.members.lock();
        let mut out = Vec::new();
        out.extend_from_slice(&(members.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.max_degree as u32).to_le_bytes());
        for &m in members.iter() {
            let l = self.neighbors(m).unwrap_or_default();
            out.extend_from_slice(&m.0.to_le_bytes());
            out.extend_from_slice(&(l.len() as u32).to_le_bytes());
            for t in l.iter() {
                out.extend_from_slice(&t.0.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(params: EntranceParams, bytes: &[u8]) -> std::result::Result<Self, String> {
        let g = Self::new(params).map_err(|e| e.to_string())?;
        let mut at = 0usize;
        let mut word = || -> std::result::Result<u32, String> {
            let b = bytes.get(at..at + 4).ok_or_else(|| format!("truncated at byte {at}"))?;
            at += 4;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
        };
        let count = word()?;
        let r = word()? as usize;
        if r != params.max_degree {
            return Err(format!("stored degree cap {r} differs from configured {}", params.max_degree));
        }
        let mut members = g.members.lock();
        for _ in 0..count {
            let id = VertexId(word()?);
            let deg = word()? as usize;
            if deg > r {
                return Err(format!("member {id:?} stores degree {deg} > {r}"));
            }
            let list = (0..deg).map(|_| word().map(VertexId)).collect::<std::result::Result<Vec<_>, _>>()?;
            g.install(id, list);
            if members.is_empty() {
                g.seed.store(id.0, Ordering::Release);
            }
            members.push(id);
        }
        g.count.store(members.len(), Ordering::Release);
        drop(members);
        Ok(g)
    }
}
