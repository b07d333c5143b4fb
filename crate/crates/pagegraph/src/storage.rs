//! On-disk layouts and their read and commit paths.
//!
//! The decoupled layout keeps edgelists in slotted pages of `edges.bin` and
//! full vectors in `vectors.bin`, tied together by the in-memory
//! [`Indirection`] table. Edgelists are never updated in place: a commit
//! gathers every edgelist it modifies into fresh pages, swaps the affected
//! table entries, and retires the old slots. Pages whose last live slot goes
//! away are reused only after every reader that might still hold their old
//! location has finished (epoch-based grace period).
//!
//! The packed layout stores `[vector][degree][edgelist]` records located by
//! vertex id and rewrites whole pages on update. It exists for A/B byte
//! accounting and is single-writer.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Deref;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_epoch as epoch;
use parking_lot::{Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use pagegraph_core::casr::VectorLoader;
use pagegraph_core::layout::{seal_page, verify_page, EdgeGeometry, PackedGeometry, VectorGeometry};
use pagegraph_core::VertexId;

use crate::cache::{CacheConfig, CacheHit, NavisCache};
use crate::error::{Error, Result};
use crate::io::{BatchTicket, Device, FileRole, IoQueue, IoRequest, PageBuf, PageId, PAGE_SIZE};
use crate::ledger::PageLedger;
use crate::rmw::RmwCache;
use crate::stats::{ByteCounts, CommitStats, TraversalStats};
use crate::table::{Chunked, Indirection, SlotLoc, TableRecord};

const LOCK_STRIPES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    Decoupled,
    Packed,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::Decoupled => "decoupled",
            LayoutKind::Packed => "packed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "decoupled" => Ok(LayoutKind::Decoupled),
            "packed" => Ok(LayoutKind::Packed),
            _ => Err(Error::Config(format!("unknown layout {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreConfig {
    pub layout: LayoutKind,
    pub dim: usize,
    pub max_degree: usize,
    pub slots_override: Option<usize>,
    /// Verify edge page checksums on every disk read.
    pub checked: bool,
    pub cache_pages: usize,
    pub rmw_pages: usize,
}

#[derive(Debug, Default)]
pub struct StoreCounters {
    pub checksum_failures: AtomicU64,
    pub torn_reads: AtomicU64,
    pub commits: AtomicU64,
}

/// A page held by one operation: either owned bytes or a pinned cache entry.
enum PageRef {
    Owned(Arc<PageBuf>),
    Cached(CacheHit),
}

impl Deref for PageRef {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        match self {
            PageRef::Owned(b) => b,
            PageRef::Cached(h) => h,
        }
    }
}

struct VecPage {
    buf: Arc<PageBuf>,
    /// Records below this index were fully written when the page was read.
    valid_below: u64,
}

/// Worker-local state for one search or insert: the IO queue, pages already
/// read, and the byte accounting.
pub struct ReadCtx {
    pub(crate) io: IoQueue,
    edge_memo: HashMap<u64, PageRef>,
    vec_memo: HashMap<u64, VecPage>,
    /// Records spanning several pages, concatenated; keyed by first page.
    vec_multi: HashMap<u64, (Vec<u8>, u64)>,
    /// Vector page groups read from storage → records requested from them.
    vec_reads: BTreeMap<u64, Vec<VertexId>>,
    /// Packed pages read from storage → (edge records, vector records).
    packed_reads: BTreeMap<u64, (Vec<VertexId>, Vec<VertexId>)>,
    pub stats: TraversalStats,
    _guard: epoch::Guard,
}

impl ReadCtx {
    pub fn new(device: Arc<dyn Device>) -> Self {
        Self {
            io: IoQueue::new(device),
            edge_memo: HashMap::new(),
            vec_memo: HashMap::new(),
            vec_multi: HashMap::new(),
            vec_reads: BTreeMap::new(),
            packed_reads: BTreeMap::new(),
            stats: TraversalStats::default(),
            _guard: epoch::pin(),
        }
    }
}

struct VectorTail {
    next_record: u64,
    page_no: u64,
    buf: PageBuf,
}

pub struct DecoupledStore {
    device: Arc<dyn Device>,
    edge: EdgeGeometry,
    vec: VectorGeometry,
    table: Indirection,
    ledger: Arc<Mutex<PageLedger>>,
    cache: NavisCache,
    rmw: RmwCache,
    tail: Mutex<VectorTail>,
    /// Records `< written` are on disk.
    written: AtomicU64,
    locks: Box<[Mutex<()>]>,
    checked: bool,
    exclusive: AtomicBool,
    counters: StoreCounters,
}

pub struct PackedStore {
    device: Arc<dyn Device>,
    geom: PackedGeometry,
    live: Chunked<AtomicBool>,
    /// One past the highest committed id.
    len: AtomicU32,
    /// Readers share, the single writer excludes; packed pages change in place.
    rw: RwLock<()>,
    counters: StoreCounters,
}

pub enum Store {
    Decoupled(DecoupledStore),
    Packed(PackedStore),
}

/// Locks held across a structural update.
pub enum UpdateLock<'a> {
    Stripes { guards: Vec<MutexGuard<'a, ()>>, stripes: Vec<usize> },
    Exclusive(RwLockWriteGuard<'a, ()>),
}

/// Shared access held by a reader of the packed layout.
pub enum ReadLock<'a> {
    None,
    Packed(RwLockReadGuard<'a, ()>),
}

impl Store {
    pub fn create(device: Arc<dyn Device>, cfg: &StoreConfig) -> Result<Self> {
        match cfg.layout {
            LayoutKind::Decoupled => {
                let edge = EdgeGeometry::new(cfg.max_degree, cfg.slots_override)?;
                Ok(Store::Decoupled(DecoupledStore {
                    device,
                    edge,
                    vec: VectorGeometry::new(cfg.dim),
                    table: Indirection::new(),
                    ledger: Arc::new(Mutex::new(PageLedger::new())),
                    cache: NavisCache::new(CacheConfig::new(cfg.cache_pages.max(2)))?,
                    rmw: RmwCache::new(cfg.rmw_pages),
                    tail: Mutex::new(VectorTail { next_record: 0, page_no: u64::MAX, buf: PageBuf::zeroed() }),
                    written: AtomicU64::new(0),
                    locks: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
                    checked: cfg.checked,
                    exclusive: AtomicBool::new(false),
                    counters: StoreCounters::default(),
                }))
            }
            LayoutKind::Packed => Ok(Store::Packed(PackedStore {
                device,
                geom: PackedGeometry::new(cfg.dim, cfg.max_degree),
                live: Chunked::new(1),
                len: AtomicU32::new(0),
                rw: RwLock::new(()),
                counters: StoreCounters::default(),
            })),
        }
    }

    pub fn kind(&self) -> LayoutKind {
        match self {
            Store::Decoupled(_) => LayoutKind::Decoupled,
            Store::Packed(_) => LayoutKind::Packed,
        }
    }

    pub fn device(&self) -> &Arc<dyn Device> {
        match self {
            Store::Decoupled(s) => &s.device,
            Store::Packed(s) => &s.device,
        }
    }

    pub fn counters(&self) -> &StoreCounters {
        match self {
            Store::Decoupled(s) => &s.counters,
            Store::Packed(s) => &s.counters,
        }
    }

    pub fn decoupled(&self) -> Option<&DecoupledStore> {
        match self {
            Store::Decoupled(s) => Some(s),
            Store::Packed(_) => None,
        }
    }

    pub fn packed(&self) -> Option<&PackedStore> {
        match self {
            Store::Packed(s) => Some(s),
            Store::Decoupled(_) => None,
        }
    }

    pub fn new_ctx(&self) -> ReadCtx {
        ReadCtx::new(Arc::clone(self.device()))
    }

    pub fn read_lock(&self) -> ReadLock<'_> {
        match self {
            Store::Decoupled(_) => ReadLock::None,
            Store::Packed(s) => ReadLock::Packed(s.rw.read()),
        }
    }

    /// Whether `v` is fully committed and may be traversed.
    #[inline]
    pub fn is_live(&self, v: VertexId) -> bool {
        match self {
            Store::Decoupled(s) => s.table.is_live(v),
            Store::Packed(s) => s.is_live(v),
        }
    }

    /// Freed pages become reusable immediately; only valid while no other
    /// thread reads the store (bulk build).
    pub fn set_exclusive(&self, on: bool) {
        if let Store::Decoupled(s) = self {
            s.exclusive.store(on, Ordering::Release);
        }
    }

    pub fn read_edgelists(&self, batch: &[VertexId], ctx: &mut ReadCtx, out: &mut Vec<Vec<VertexId>>) -> Result<()> {
        match self {
            Store::Decoupled(s) => s.read_edgelists(batch, ctx, out),
            Store::Packed(s) => s.read_edgelists(batch, ctx, out),
        }
    }

    pub fn read_edgelist(&self, v: VertexId, ctx: &mut ReadCtx) -> Result<Vec<VertexId>> {
        let mut out = Vec::with_capacity(1);
        self.read_edgelists(&[v], ctx, &mut out)?;
        Ok(out.pop().expect("one list per vertex"))
    }

    pub fn loader<'a>(&'a self, ctx: &'a mut ReadCtx) -> StoreLoader<'a> {
        StoreLoader { store: self, ctx }
    }

    /// Reads full vectors in request order (one submission for the group).
    pub fn read_vectors(&self, ids: &[VertexId], ctx: &mut ReadCtx) -> Result<Vec<Vec<f32>>> {
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut l = self.loader(ctx);
        let t = l.submit(ids)?;
        let mut out = Vec::with_capacity(ids.len());
        l.wait(t, &mut out)?;
        Ok(out.into_iter().map(|(_, v)| v).collect())
    }

    /// Splits the vector and packed page reads of `ctx` into useful and wasted
    /// bytes. A vector is useful when its id is in `useful`.
    pub fn classify_reads(&self, ctx: &mut ReadCtx, useful: &HashSet<VertexId>) {
        let mut b = ByteCounts::default();
        match self {
            Store::Decoupled(s) => {
                let stride = s.vec.stride as u64;
                let span = (PAGE_SIZE * s.vec.pages_per_record) as u64;
                for ids in ctx.vec_reads.values() {
                    let mut uniq: Vec<VertexId> = ids.clone();
                    uniq.sort_unstable();
                    uniq.dedup();
                    let u = uniq.iter().filter(|v| useful.contains(v)).count() as u64;
                    if u == 0 {
                        b.wasted_vector += span;
                    } else {
                        let w = uniq.len() as u64 - u;
                        b.useful_vector += u * stride;
                        b.wasted_vector += w * stride;
                        b.padding += span - (u + w) * stride;
                    }
                }
            }
            Store::Packed(s) => {
                let stride = (s.geom.dim * 4) as u64;
                let edges = (s.geom.record_size - s.geom.dim * 4) as u64;
                let span = (PAGE_SIZE * s.geom.pages_per_record) as u64;
                for (e, v) in ctx.packed_reads.values() {
                    let mut recs: Vec<VertexId> = e.iter().chain(v).copied().collect();
                    recs.sort_unstable();
                    recs.dedup();
                    let mut used = 0;
                    for r in &recs {
                        if e.contains(r) {
                            b.edgelist += edges;
                            used += edges;
                        }
                        if v.contains(r) {
                            if useful.contains(r) {
                                b.useful_vector += stride;
                            } else {
                                b.wasted_vector += stride;
                            }
                            used += stride;
                        }
                    }
                    b.padding += span - used;
                }
            }
        }
        ctx.vec_reads.clear();
        ctx.packed_reads.clear();
        ctx.stats.bytes += b;
    }

    /// Acquires the locks covering the current edge pages of `vs`.
    pub fn lock_for_update(&self, vs: &[VertexId]) -> Result<UpdateLock<'_>> {
        match self {
            Store::Decoupled(s) => s.lock_vertices(vs),
            Store::Packed(s) => Ok(UpdateLock::Exclusive(s.rw.write())),
        }
    }

    /// Writes `new_v` with its vector and edgelist, and replaces the
    /// edgelists in `updates`. Publishes `new_v` last.
    pub fn commit_insert(
        &self,
        lock: &UpdateLock<'_>,
        new_v: VertexId,
        vector: &[f32],
        new_edges: &[VertexId],
        updates: &[(VertexId, Vec<VertexId>)],
        io: &mut IoQueue,
    ) -> Result<CommitStats> {
        let r = match self {
            Store::Decoupled(s) => s.commit_insert(lock, new_v, vector, new_edges, updates, io),
            Store::Packed(s) => s.commit_insert(lock, new_v, vector, new_edges, updates, io),
        };
        if r.is_ok() {
            self.counters().commits.fetch_add(1, Ordering::Relaxed);
        }
        r
    }
}

/// Vector loader over a store, for the reranking loop.
pub struct StoreLoader<'a> {
    store: &'a Store,
    ctx: &'a mut ReadCtx,
}

pub struct VectorTicket {
    ids: Vec<VertexId>,
    /// Batch in flight and the page groups it covers: (first page, pages, watermark).
    io: Option<(BatchTicket, Vec<(u64, u64, u64)>)>,
}

impl VectorLoader for StoreLoader<'_> {
    type Ticket = VectorTicket;
    type Error = Error;

    fn submit(&mut self, ids: &[VertexId]) -> Result<VectorTicket> {
        match self.store {
            Store::Decoupled(s) => s.submit_vectors(ids, self.ctx),
            Store::Packed(s) => s.submit_vectors(ids, self.ctx),
        }
    }

    fn wait(&mut self, t: VectorTicket, out: &mut Vec<(VertexId, Vec<f32>)>) -> Result<()> {
        match self.store {
            Store::Decoupled(s) => s.wait_vectors(t, self.ctx, out),
            Store::Packed(s) => s.wait_vectors(t, self.ctx, out),
        }
    }
}

impl DecoupledStore {
    pub fn edge_geometry(&self) -> &EdgeGeometry {
        &self.edge
    }

    pub fn vector_geometry(&self) -> &VectorGeometry {
        &self.vec
    }

    pub fn table(&self) -> &Indirection {
        &self.table
    }

    pub fn cache(&self) -> &NavisCache {
        &self.cache
    }

    pub fn rmw(&self) -> &RmwCache {
        &self.rmw
    }

    pub fn ledger(&self) -> parking_lot::MutexGuard<'_, PageLedger> {
        self.ledger.lock()
    }

    pub fn records_written(&self) -> u64 {
        self.written.load(Ordering::Acquire)
    }

    fn stripe(page: u64) -> usize {
        (page % LOCK_STRIPES as u64) as usize
    }

    fn read_edgelists(&self, batch: &[VertexId], ctx: &mut ReadCtx, out: &mut Vec<Vec<VertexId>>) -> Result<()> {
        let mut locs = Vec::with_capacity(batch.len());
        for &v in batch {
            locs.push(self.table.edge(v).ok_or(Error::NotFound(v))?);
        }
        let mut misses: Vec<u64> = Vec::new();
        let mut resolved: HashSet<u64> = HashSet::new();
        for loc in &locs {
            if !resolved.insert(loc.page) {
                continue;
            }
            if ctx.edge_memo.contains_key(&loc.page) {
                ctx.stats.provenance.memo += 1;
            } else if let Some(b) = self.rmw.get(loc.page) {
                ctx.stats.provenance.rmw += 1;
                ctx.edge_memo.insert(loc.page, PageRef::Owned(b));
            } else if let Some(hit) = self.cache.lookup(loc.page) {
                ctx.stats.provenance.cache += 1;
                ctx.edge_memo.insert(loc.page, PageRef::Cached(hit));
            } else {
                misses.push(loc.page);
            }
        }
        if !misses.is_empty() {
            let ids: Vec<PageId> = misses.iter().map(|&p| PageId::edge(p)).collect();
            let bufs = ctx.io.read_pages(&ids)?;
            ctx.stats.io_submissions += 1;
            for (&p, b) in misses.iter().zip(bufs) {
                if self.checked {
                    if let Err(e) = verify_page(&b).and_then(|_| self.edge.check_header(&b)) {
                        self.counters.checksum_failures.fetch_add(1, Ordering::Relaxed);
                        return Err(Error::CorruptPage { page: p, source: e });
                    }
                }
                let requested = locs.iter().filter(|l| l.page == p).map(|l| l.slot).collect::<HashSet<_>>().len();
                let edge_bytes = (requested * self.edge.slot_size) as u64;
                ctx.stats.bytes.edgelist += edge_bytes;
                ctx.stats.bytes.padding += PAGE_SIZE as u64 - edge_bytes;
                ctx.stats.edge_pages_read += 1;
                ctx.stats.provenance.disk += 1;
                let b = Arc::new(b);
                self.cache.admit(p, Arc::clone(&b));
                ctx.edge_memo.insert(p, PageRef::Owned(b));
            }
        }
        out.clear();
        for (&v, loc) in batch.iter().zip(&locs) {
            let page = &ctx.edge_memo[&loc.page];
            let mut list = Vec::with_capacity(self.edge.max_degree);
            let found = self
                .edge
                .read_slot(page, loc.slot as usize, &mut list)
                .map_err(|e| Error::CorruptPage { page: loc.page, source: e })?;
            if found != v {
                self.counters.torn_reads.fetch_add(1, Ordering::Relaxed);
                return Err(Error::TornRead { page: loc.page, slot: loc.slot, expected: v, found });
            }
            out.push(list);
        }
        Ok(())
    }

    fn record_pages(&self, rec: u64) -> (u64, u64) {
        let (page, _) = self.vec.locate(rec);
        (page, self.vec.pages_per_record as u64)
    }

    fn submit_vectors(&self, ids: &[VertexId], ctx: &mut ReadCtx) -> Result<VectorTicket> {
        let mut groups: Vec<(u64, u64)> = Vec::new();
        for &v in ids {
            let rec = self.table.vector_record(v).ok_or(Error::NotFound(v))?;
            let (first, n) = self.record_pages(rec);
            let fresh = if n > 1 {
                ctx.vec_multi.get(&first).is_some_and(|m| m.1 > rec)
            } else {
                ctx.vec_memo.get(&first).is_some_and(|m| m.valid_below > rec)
            };
            if fresh {
                if let Some(r) = ctx.vec_reads.get_mut(&first) {
                    r.push(v);
                }
            } else {
                if !groups.iter().any(|g| g.0 == first) {
                    groups.push((first, n));
                }
                ctx.vec_reads.entry(first).or_default().push(v);
            }
        }
        ctx.stats.vectors_loaded += ids.len() as u64;
        if groups.is_empty() {
            return Ok(VectorTicket { ids: ids.to_vec(), io: None });
        }
        let valid_below = self.written.load(Ordering::Acquire);
        let reqs: Vec<IoRequest> = groups
            .iter()
            .flat_map(|&(first, n)| (first..first + n).map(|p| IoRequest::Read(PageId::vector(p))))
            .collect();
        ctx.stats.vector_pages_read += reqs.len() as u64;
        ctx.stats.io_submissions += 1;
        let t = ctx.io.submit(reqs)?;
        let groups = groups.into_iter().map(|(f, n)| (f, n, valid_below)).collect();
        Ok(VectorTicket { ids: ids.to_vec(), io: Some((t, groups)) })
    }

    fn wait_vectors(&self, t: VectorTicket, ctx: &mut ReadCtx, out: &mut Vec<(VertexId, Vec<f32>)>) -> Result<()> {
        if let Some((ticket, groups)) = t.io {
            let mut done = ctx.io.wait(ticket)?.into_iter();
            for (first, n, valid_below) in groups {
                let mut buf = if n == 1 { None } else { Some(Vec::with_capacity(n as usize * PAGE_SIZE)) };
                let mut single = None;
                for _ in 0..n {
                    let c = done.next().expect("one completion per request");
                    let b = c.result?.expect("read completion carries a buffer");
                    match buf.as_mut() {
                        Some(v) => v.extend_from_slice(&b),
                        None => single = Some(b),
                    }
                }
                let page = match (buf, single) {
                    (None, Some(b)) => b,
                    (Some(v), _) => {
                        ctx.vec_multi.insert(first, (v, valid_below));
                        continue;
                    }
                    _ => unreachable!(),
                };
                ctx.vec_memo.insert(first, VecPage { buf: Arc::new(page), valid_below });
            }
        }
        for &v in &t.ids {
            let rec = self.table.vector_record(v).ok_or(Error::NotFound(v))?;
            let (first, off) = self.vec.locate(rec);
            let vector = if self.vec.pages_per_record > 1 {
                let bytes = ctx.vec_multi.get(&first).expect("record pages were read");
                self.vec.decode(&bytes.0)
            } else {
                let m = ctx.vec_memo.get(&first).expect("record page was read");
                self.vec.decode(&m.buf[off..off + self.vec.stride])
            };
            out.push((v, vector));
        }
        Ok(())
    }

    fn lock_vertices(&self, vs: &[VertexId]) -> Result<UpdateLock<'_>> {
        loop {
            let mut pages: Vec<(VertexId, u64)> = Vec::with_capacity(vs.len());
            for &v in vs {
                let loc = self.table.edge(v).ok_or(Error::NotFound(v))?;
                pages.push((v, loc.page));
            }
            let mut stripes: Vec<usize> = pages.iter().map(|&(_, p)| Self::stripe(p)).collect();
            stripes.sort_unstable();
            stripes.dedup();
            let guards: Vec<MutexGuard<'_, ()>> = stripes.iter().map(|&s| self.locks[s].lock()).collect();
            let moved = pages.iter().any(|&(v, p)| self.table.edge(v).map(|l| l.page) != Some(p));
            if !moved {
                return Ok(UpdateLock::Stripes { guards, stripes });
            }
            drop(guards);
        }
    }

    fn append_vector(&self, v: VertexId, vector: &[f32], io: &mut IoQueue) -> Result<(u64, CommitStats)> {
        let mut st = CommitStats::default();
        let mut tail = self.tail.lock();
        let rec = tail.next_record;
        let (page, off) = self.vec.locate(rec);
        let mut writes = Vec::with_capacity(self.vec.pages_per_record);
        if self.vec.pages_per_record == 1 {
            if tail.page_no != page {
                tail.page_no = page;
                tail.buf = PageBuf::zeroed();
                if off != 0 && page < io.device().page_count(FileRole::Vector) {
                    // Reopened mid-page: pick up the records already there.
                    io.device().read_page(PageId::vector(page), &mut tail.buf)?;
                }
            }
            self.vec.encode(vector, &mut tail.buf[off..off + self.vec.stride]);
            writes.push((PageId::vector(page), Arc::new(tail.buf.clone())));
        } else {
            let mut bytes = vec![0u8; self.vec.pages_per_record * PAGE_SIZE];
            self.vec.encode(vector, &mut bytes);
            for (i, chunk) in bytes.chunks(PAGE_SIZE).enumerate() {
                writes.push((PageId::vector(page + i as u64), Arc::new(PageBuf::from_slice(chunk))));
            }
        }
        st.vector_pages_written = writes.len() as u64;
        st.bytes_written.vector = self.vec.stride as u64;
        st.bytes_written.padding = (writes.len() * PAGE_SIZE - self.vec.stride) as u64;
        io.write_pages(writes)?;
        tail.next_record = rec + 1;
        self.written.store(rec + 1, Ordering::Release);
        drop(tail);
        self.table.set_vector(v, rec);
        Ok((rec, st))
    }

    fn commit_insert(
        &self,
        lock: &UpdateLock<'_>,
        new_v: VertexId,
        vector: &[f32],
        new_edges: &[VertexId],
        updates: &[(VertexId, Vec<VertexId>)],
        io: &mut IoQueue,
    ) -> Result<CommitStats> {
        let UpdateLock::Stripes { stripes, .. } = lock else {
            return Err(Error::LockNotHeld(new_v));
        };
        let mut old: Vec<SlotLoc> = Vec::with_capacity(updates.len());
        for (u, _) in updates {
            let loc = self.table.edge(*u).ok_or(Error::NotFound(*u))?;
            if stripes.binary_search(&Self::stripe(loc.page)).is_err() {
                return Err(Error::LockNotHeld(*u));
            }
            old.push(loc);
        }
        if self.table.is_live(new_v) {
            return Err(Error::Config(format!("{new_v:?} is already live")));
        }

        let (_, mut st) = self.append_vector(new_v, vector, io)?;

        let lists: Vec<(VertexId, &[VertexId])> = std::iter::once((new_v, new_edges))
            .chain(updates.iter().map(|(u, l)| (*u, l.as_slice())))
            .collect();
        let spp = self.edge.slots_per_page;
        let n_pages = lists.len().div_ceil(spp);
        let dest = self.ledger.lock().allocate(n_pages);
        let mut placed: Vec<(VertexId, SlotLoc)> = Vec::with_capacity(lists.len());
        let mut writes = Vec::with_capacity(n_pages);
        for (chunk, &page) in lists.chunks(spp).zip(&dest) {
            let mut buf = PageBuf::zeroed();
            self.edge.init_page(&mut buf);
            for (slot, (v, l)) in chunk.iter().enumerate() {
                self.edge.write_slot(&mut buf, slot, *v, l);
                placed.push((*v, SlotLoc { page, slot: slot as u16 }));
            }
            seal_page(&mut buf);
            let buf = Arc::new(buf);
            self.rmw.stage(page, Arc::clone(&buf));
            writes.push((PageId::edge(page), buf));
        }
        let bufs: Vec<Arc<PageBuf>> = writes.iter().map(|(_, b)| Arc::clone(b)).collect();
        io.write_pages(writes)?;
        for (&page, buf) in dest.iter().zip(bufs) {
            self.rmw.complete(page);
            self.cache.refresh_in_place(page, buf);
        }
        st.edge_pages_written = n_pages as u64;
        let edge_bytes = (lists.len() * self.edge.slot_size) as u64;
        st.bytes_written.edgelist = edge_bytes;
        st.bytes_written.padding += (n_pages * PAGE_SIZE) as u64 - edge_bytes;

        {
            let mut ledger = self.ledger.lock();
            for (chunk, &page) in lists.chunks(spp).zip(&dest) {
                ledger.add_live(page, chunk.len() as u32);
            }
        }
        // Neighbors move first; the new vertex becomes reachable last.
        for &(v, loc) in placed.iter().skip(1) {
            self.table.publish_edge(v, loc);
        }
        self.table.publish_edge(new_v, placed[0].1);

        let mut emptied = Vec::new();
        {
            let mut ledger = self.ledger.lock();
            for loc in &old {
                if ledger.invalidate(loc.page) {
                    emptied.push(loc.page);
                }
            }
        }
        st.slots_invalidated = old.len() as u64;
        st.pages_freed = emptied.len() as u64;
        for &p in &emptied {
            self.cache.invalidate_hint(p);
            self.rmw.remove(p);
        }
        self.retire(emptied);
        self.rmw.trim();
        Ok(st)
    }

    fn retire(&self, pages: Vec<u64>) {
        if pages.is_empty() {
            return;
        }
        if self.exclusive.load(Ordering::Acquire) {
            let mut l = self.ledger.lock();
            for p in pages {
                l.release(p);
            }
            return;
        }
        let ledger = Arc::clone(&self.ledger);
        let guard = epoch::pin();
        guard.defer(move || {
            let mut l = ledger.lock();
            for p in pages {
                l.release(p);
            }
        });
        guard.flush();
    }

    /// Re-lays both files from scratch: edge pages in `pages` order, vector
    /// records in the same vertex order. Requires exclusive access.
    pub fn relayout(&self, pages: &[Vec<VertexId>], adj: &[Vec<VertexId>], vectors: &[Vec<f32>]) -> Result<()> {
        let dev = &self.device;
        let mut io = IoQueue::new(Arc::clone(dev));
        dev.truncate(FileRole::Edge)?;
        dev.truncate(FileRole::Vector)?;
        self.cache.clear();
        self.rmw.clear();
        let mut live = Vec::with_capacity(pages.len());
        let mut batch = Vec::new();
        for (pno, members) in pages.iter().enumerate() {
            assert!(members.len() <= self.edge.slots_per_page);
            let mut buf = PageBuf::zeroed();
            self.edge.init_page(&mut buf);
            for (slot, &v) in members.iter().enumerate() {
                self.edge.write_slot(&mut buf, slot, v, &adj[v.index()]);
            }
            seal_page(&mut buf);
            batch.push((PageId::edge(pno as u64), Arc::new(buf)));
            live.push(members.len() as u32);
            if batch.len() == 256 {
                io.write_pages(std::mem::take(&mut batch))?;
            }
        }
        io.write_pages(std::mem::take(&mut batch))?;
        for (pno, members) in pages.iter().enumerate() {
            for (slot, &v) in members.iter().enumerate() {
                self.table.publish_edge(v, SlotLoc { page: pno as u64, slot: slot as u16 });
            }
        }
        *self.ledger.lock() = PageLedger::from_live_counts(live);

        let order: Vec<VertexId> = pages.iter().flatten().copied().collect();
        let mut tail = self.tail.lock();
        let mut cur: Option<(u64, PageBuf)> = None;
        for (rec, &v) in order.iter().enumerate() {
            let rec = rec as u64;
            let (page, off) = self.vec.locate(rec);
            if self.vec.pages_per_record > 1 {
                let mut bytes = vec![0u8; self.vec.pages_per_record * PAGE_SIZE];
                self.vec.encode(&vectors[v.index()], &mut bytes);
                for (i, chunk) in bytes.chunks(PAGE_SIZE).enumerate() {
                    batch.push((PageId::vector(page + i as u64), Arc::new(PageBuf::from_slice(chunk))));
                }
            } else {
                if cur.as_ref().is_some_and(|c| c.0 != page) {
                    let (p, b) = cur.take().expect("checked");
                    batch.push((PageId::vector(p), Arc::new(b)));
                }
                let c = cur.get_or_insert_with(|| (page, PageBuf::zeroed()));
                self.vec.encode(&vectors[v.index()], &mut c.1[off..off + self.vec.stride]);
            }
            self.table.set_vector(v, rec);
            if batch.len() >= 256 {
                io.write_pages(std::mem::take(&mut batch))?;
            }
        }
        if let Some((p, b)) = cur.take() {
            tail.page_no = p;
            tail.buf = b.clone();
            batch.push((PageId::vector(p), Arc::new(b)));
        } else {
            tail.page_no = u64::MAX;
        }
        io.write_pages(batch)?;
        tail.next_record = order.len() as u64;
        self.written.store(order.len() as u64, Ordering::Release);
        Ok(())
    }

    /// Restores table, ledger and vector tail from a snapshot.
    pub fn restore(&self, records: &[TableRecord]) -> Result<()> {
        let mut live = vec![0u32; self.device.page_count(FileRole::Edge) as usize];
        let mut next = 0u64;
        for (i, r) in records.iter().enumerate() {
            self.table.set_record(VertexId(i as u32), *r);
            if let Some(l) = r.edge {
                let slot = live
                    .get_mut(l.page as usize)
                    .ok_or_else(|| Error::Config(format!("table points past the edge file (page {})", l.page)))?;
                *slot += 1;
            }
            if let Some(v) = r.vector_record {
                next = next.max(v + 1);
            }
        }
        *self.ledger.lock() = PageLedger::from_live_counts(live);
        let mut tail = self.tail.lock();
        tail.next_record = next;
        tail.page_no = u64::MAX;
        self.written.store(next, Ordering::Release);
        Ok(())
    }

    /// Reads every edge page once and returns `(page, slot, vertex, edges)`
    /// for every occupied slot.
    pub fn scan_slots(&self, mut visit: impl FnMut(u64, u16, VertexId, &[VertexId])) -> Result<()> {
        let pages = self.device.page_count(FileRole::Edge);
        let mut buf = PageBuf::zeroed();
        let mut list = Vec::new();
        for p in 0..pages {
            self.device.read_page(PageId::edge(p), &mut buf)?;
            if buf.iter().all(|&b| b == 0) {
                continue;
            }
            verify_page(&buf).map_err(|e| Error::CorruptPage { page: p, source: e })?;
            self.edge.check_header(&buf).map_err(|e| Error::CorruptPage { page: p, source: e })?;
            for s in 0..self.edge.slots_per_page {
                let v = self.edge.read_slot(&buf, s, &mut list).map_err(|e| Error::CorruptPage { page: p, source: e })?;
                if v.is_valid() {
                    visit(p, s as u16, v, &list);
                }
            }
        }
        Ok(())
    }

    /// Blocks until pages retired so far are reusable (test and flush helper).
    pub fn drain_reclamation(&self) {
        for _ in 0..256 {
            if self.ledger.lock().pending_pages().next().is_none() {
                return;
            }
            epoch::pin().flush();
        }
    }
}

impl PackedStore {
    pub fn geometry(&self) -> &PackedGeometry {
        &self.geom
    }

    pub fn is_live(&self, v: VertexId) -> bool {
        self.live.get(v.index()).is_some_and(|f| f[0].load(Ordering::Acquire))
    }

    /// One past the highest committed id.
    pub fn len(&self) -> u32 {
        self.len.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Marks `0..n` committed (after reopening a flushed index).
    pub fn restore(&self, n: u32) {
        for v in 0..n {
            self.live.slot(v as usize)[0].store(true, Ordering::Release);
        }
        self.len.fetch_max(n, Ordering::AcqRel);
    }

    fn ensure_pages(&self, v: VertexId, ctx: &mut ReadCtx, misses: &mut Vec<u64>) {
        let (first, _) = self.geom.locate(v);
        if !ctx.edge_memo.contains_key(&first) && !misses.contains(&first) {
            misses.push(first);
        }
    }

    fn fetch(&self, misses: &[u64], ctx: &mut ReadCtx) -> Result<()> {
        if misses.is_empty() {
            return Ok(());
        }
        let n = self.geom.pages_per_record as u64;
        let ids: Vec<PageId> = misses.iter().flat_map(|&f| (f..f + n).map(PageId::edge)).collect();
        let bufs = ctx.io.read_pages(&ids)?;
        ctx.stats.io_submissions += 1;
        ctx.stats.edge_pages_read += ids.len() as u64;
        ctx.stats.vector_pages_read += ids.len() as u64;
        ctx.stats.provenance.disk += misses.len() as u64;
        let mut it = bufs.into_iter();
        for &f in misses {
            if n == 1 {
                ctx.edge_memo.insert(f, PageRef::Owned(Arc::new(it.next().expect("page"))));
            } else {
                let mut bytes = Vec::with_capacity(n as usize * PAGE_SIZE);
                for _ in 0..n {
                    bytes.extend_from_slice(&it.next().expect("page"));
                }
                ctx.vec_multi.insert(f, (bytes, u64::MAX));
                ctx.edge_memo.insert(f, PageRef::Owned(Arc::new(PageBuf::zeroed())));
            }
            ctx.packed_reads.entry(f).or_default();
        }
        Ok(())
    }

    fn record<'c>(&self, v: VertexId, ctx: &'c ReadCtx) -> &'c [u8] {
        let (first, off) = self.geom.locate(v);
        if self.geom.pages_per_record > 1 {
            &ctx.vec_multi[&first].0[..self.geom.record_size]
        } else {
            &ctx.edge_memo[&first][off..off + self.geom.record_size]
        }
    }

    fn read_edgelists(&self, batch: &[VertexId], ctx: &mut ReadCtx, out: &mut Vec<Vec<VertexId>>) -> Result<()> {
        let mut misses = Vec::new();
        for &v in batch {
            if !self.is_live(v) {
                return Err(Error::NotFound(v));
            }
            let (first, _) = self.geom.locate(v);
            if ctx.edge_memo.contains_key(&first) {
                ctx.stats.provenance.memo += 1;
            }
            self.ensure_pages(v, ctx, &mut misses);
        }
        self.fetch(&misses, ctx)?;
        out.clear();
        for &v in batch {
            let mut l = Vec::new();
            self.geom.decode_edges(self.record(v, ctx), &mut l)?;
            let (first, _) = self.geom.locate(v);
            if let Some(r) = ctx.packed_reads.get_mut(&first) {
                r.0.push(v);
            }
            out.push(l);
        }
        Ok(())
    }

    fn submit_vectors(&self, ids: &[VertexId], ctx: &mut ReadCtx) -> Result<VectorTicket> {
        let mut misses = Vec::new();
        for &v in ids {
            if !self.is_live(v) {
                return Err(Error::NotFound(v));
            }
            self.ensure_pages(v, ctx, &mut misses);
        }
        ctx.stats.vectors_loaded += ids.len() as u64;
        self.fetch(&misses, ctx)?;
        Ok(VectorTicket { ids: ids.to_vec(), io: None })
    }

    fn wait_vectors(&self, t: VectorTicket, ctx: &mut ReadCtx, out: &mut Vec<(VertexId, Vec<f32>)>) -> Result<()> {
        for &v in &t.ids {
            let vec = self.geom.decode_vector(self.record(v, ctx));
            let (first, _) = self.geom.locate(v);
            if let Some(r) = ctx.packed_reads.get_mut(&first) {
                r.1.push(v);
            }
            out.push((v, vec));
        }
        Ok(())
    }

    fn commit_insert(
        &self,
        lock: &UpdateLock<'_>,
        new_v: VertexId,
        vector: &[f32],
        new_edges: &[VertexId],
        updates: &[(VertexId, Vec<VertexId>)],
        io: &mut IoQueue,
    ) -> Result<CommitStats> {
        if !matches!(lock, UpdateLock::Exclusive(_)) {
            return Err(Error::LockNotHeld(new_v));
        }
        let g = &self.geom;
        let span = g.pages_per_record as u64;
        let mut st = CommitStats::default();
        // Group touched records by their first page, new vertex first.
        let mut by_page: BTreeMap<u64, Vec<VertexId>> = BTreeMap::new();
        let mut order: Vec<u64> = Vec::new();
        for v in std::iter::once(new_v).chain(updates.iter().map(|u| u.0)) {
            let (first, _) = g.locate(v);
            if !by_page.contains_key(&first) {
                order.push(first);
            }
            by_page.entry(first).or_default().push(v);
        }
        let existing = io.device().page_count(FileRole::Edge);
        let mut writes = Vec::new();
        for first in order {
            let mut bytes = vec![0u8; span as usize * PAGE_SIZE];
            if first < existing {
                let ids: Vec<PageId> = (first..first + span).map(PageId::edge).collect();
                for (i, b) in io.read_pages(&ids)?.into_iter().enumerate() {
                    bytes[i * PAGE_SIZE..(i + 1) * PAGE_SIZE].copy_from_slice(&b);
                }
                st.pages_read += span;
            }
            for &v in &by_page[&first] {
                let (_, off) = g.locate(v);
                let rec = &mut bytes[off..off + g.record_size];
                if v == new_v {
                    g.encode(vector, new_edges, rec);
                } else {
                    let l = &updates.iter().find(|u| u.0 == v).expect("grouped from updates").1;
                    let old_vec = g.decode_vector(rec);
                    g.encode(&old_vec, l, rec);
                }
                st.bytes_written.vector += (g.dim * 4) as u64;
                st.bytes_written.edgelist += (g.record_size - g.dim * 4) as u64;
            }
            for (i, chunk) in bytes.chunks(PAGE_SIZE).enumerate() {
                writes.push((PageId::edge(first + i as u64), Arc::new(PageBuf::from_slice(chunk))));
            }
        }
        st.edge_pages_written = writes.len() as u64;
        st.bytes_written.padding =
            st.edge_pages_written * PAGE_SIZE as u64 - st.bytes_written.vector - st.bytes_written.edgelist;
        io.write_pages(writes)?;
        self.live.slot(new_v.index())[0].store(true, Ordering::Release);
        self.len.fetch_max(new_v.0 + 1, Ordering::AcqRel);
        Ok(st)
    }

    /// Reads every record of vertices `0..n`.
    pub fn scan_records(&self, n: u32, mut visit: impl FnMut(VertexId, Vec<f32>, Vec<VertexId>)) -> Result<()> {
        let mut ctx = ReadCtx::new(Arc::clone(&self.device));
        for v in 0..n {
            let v = VertexId(v);
            if !self.is_live(v) {
                continue;
            }
            let mut misses = Vec::new();
            self.ensure_pages(v, &mut ctx, &mut misses);
            self.fetch(&misses, &mut ctx)?;
            let rec = self.record(v, &ctx);
            let mut e = Vec::new();
            self.geom.decode_edges(rec, &mut e)?;
            visit(v, self.geom.decode_vector(rec), e);
            if ctx.edge_memo.len() > 64 {
                ctx.edge_memo.clear();
                ctx.vec_multi.clear();
            }
        }
        Ok(())
    }
}
