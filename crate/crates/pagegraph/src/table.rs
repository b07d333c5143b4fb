//! Growable per-vertex tables with lock-free reads.
//!
//! Storage is split into fixed chunks allocated on first touch, so a slot's
//! address never moves and readers need no lock to reach it.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use pagegraph_core::VertexId;

const CHUNK_BITS: u32 = 16;
const CHUNK: usize = 1 << CHUNK_BITS;
/// Upper bound on table size (`MAX_CHUNKS * CHUNK` slots).
const MAX_CHUNKS: usize = 1 << 12;

pub struct Chunked<T> {
    per_slot: usize,
    chunks: Box<[OnceLock<Box<[T]>>]>,
}

impl<T: Default> Chunked<T> {
    /// `per_slot` consecutive elements belong to each index.
    pub fn new(per_slot: usize) -> Self {
        assert!(per_slot > 0);
        Self { per_slot, chunks: (0..MAX_CHUNKS).map(|_| OnceLock::new()).collect() }
    }

    pub fn capacity() -> usize {
        CHUNK * MAX_CHUNKS
    }

    /// Elements of slot `i`, if its chunk exists.
    pub fn get(&self, i: usize) -> Option<&[T]> {
        let c = self.chunks.get(i >> CHUNK_BITS)?.get()?;
        let at = (i & (CHUNK - 1)) * self.per_slot;
        Some(&c[at..at + self.per_slot])
    }

    /// Elements of slot `i`, allocating its chunk. Panics past capacity.
    pub fn slot(&self, i: usize) -> &[T] {
        let c = self.chunks[i >> CHUNK_BITS]
            .get_or_init(|| (0..CHUNK * self.per_slot).map(|_| T::default()).collect());
        let at = (i & (CHUNK - 1)) * self.per_slot;
        &c[at..at + self.per_slot]
    }
}

pub const EMPTY: u64 = u64::MAX;

/// Where an edgelist slot lives: page number in the high 48 bits, slot index
/// in the low 16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotLoc {
    pub page: u64,
    pub slot: u16,
}

impl SlotLoc {
    pub fn pack(self) -> u64 {
        debug_assert!(self.page < 1 << 48);
        self.page << 16 | self.slot as u64
    }

    pub fn unpack(w: u64) -> Option<Self> {
        (w != EMPTY).then_some(SlotLoc { page: w >> 16, slot: w as u16 })
    }
}

struct Entry {
    edge: AtomicU64,
    vector: AtomicU64,
}

impl Default for Entry {
    fn default() -> Self {
        Self { edge: AtomicU64::new(EMPTY), vector: AtomicU64::new(EMPTY) }
    }
}

/// Authoritative vertex → location map. The edge word doubles as the
/// liveness flag: a vertex is visible once its edge word is published.
pub struct Indirection {
    entries: Chunked<Entry>,
}

impl Default for Indirection {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRecord {
    pub edge: Option<SlotLoc>,
    pub vector_record: Option<u64>,
}

impl Indirection {
    pub fn new() -> Self {
        Self { entries: Chunked::new(1) }
    }

    pub fn edge(&self, v: VertexId) -> Option<SlotLoc> {
        let e = self.entries.get(v.index())?;
        SlotLoc::unpack(e[0].edge.load(Ordering::Acquire))
    }

    pub fn is_live(&self, v: VertexId) -> bool {
        self.edge(v).is_some()
    }

    pub fn vector_record(&self, v: VertexId) -> Option<u64> {
        let e = self.entries.get(v.index())?;
        let w = e[0].vector.load(Ordering::Acquire);
        (w != EMPTY).then_some(w)
    }

    pub fn set_vector(&self, v: VertexId, record: u64) {
        self.entries.slot(v.index())[0].vector.store(record, Ordering::Release);
    }

    /// Publishes (or moves) `v`'s edgelist location.
    pub fn publish_edge(&self, v: VertexId, loc: SlotLoc) {
        self.entries.slot(v.index())[0].edge.store(loc.pack(), Ordering::Release);
    }

    pub fn record(&self, v: VertexId) -> TableRecord {
        TableRecord { edge: self.edge(v), vector_record: self.vector_record(v) }
    }

    pub fn set_record(&self, v: VertexId, r: TableRecord) {
        let e = &self.entries.slot(v.index())[0];
        e.vector.store(r.vector_record.unwrap_or(EMPTY), Ordering::Release);
        e.edge.store(r.edge.map_or(EMPTY, SlotLoc::pack), Ordering::Release);
    }
}
