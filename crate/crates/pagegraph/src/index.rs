//! The index handle: parameters, in-memory state, and the on-disk directory
//! format.
//!
//! An index directory holds `edges.bin` and `vectors.bin` (page files),
//! `meta` (indirection snapshot and calibration), `index.conf` (parameters as
//! `key=value` lines), `pq.bin` (codebook), `codes.bin` (m bytes per vertex in
//! id order) and `entrance.bin`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwap;

use pagegraph_core::pq::PqCodebook;
use pagegraph_core::prune::DEFAULT_ALPHA;
use pagegraph_core::VertexId;

use crate::entrance::{EntranceGraph, EntranceParams};
use crate::error::{Error, Result};
use crate::io::{Device, FileDevice, FileRole, IoMode};
use crate::quant::Quantizer;
use crate::storage::{LayoutKind, Store, StoreConfig};
use crate::table::{Chunked, SlotLoc, TableRecord, EMPTY};

const META_MAGIC: &[u8; 4] = b"NVIX";
const META_VERSION: u32 = 1;
const CALIBRATION_MAGIC: &[u8; 4] = b"NVCL";

/// How the candidate pool is reranked with full vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerankMode {
    /// Grouped, pipelined loading with the convergence stop.
    Casr,
    /// Every candidate in one group.
    Full,
}

impl RerankMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "casr" => Ok(RerankMode::Casr),
            "full" => Ok(RerankMode::Full),
            _ => Err(Error::Config(format!("unknown rerank mode {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RerankMode::Casr => "casr",
            RerankMode::Full => "full",
        }
    }
}

/// Which traversal a group size belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerankPath {
    Search,
    Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexParams {
    pub dim: usize,
    pub max_degree: usize,
    pub layout: LayoutKind,
    /// Pins edge slots per page (tests); derived from the degree otherwise.
    pub slots_per_page: Option<usize>,
    pub pq_m: usize,
    /// Lossless codebook built from the data (small corpora only).
    pub pq_identity: bool,
    pub train_sample: usize,
    pub l_search: usize,
    pub l_pos: usize,
    pub top_k: usize,
    pub beam_width: usize,
    pub alpha: f32,
    pub entrance: EntranceParams,
    pub cache_pages: usize,
    pub rmw_pages: usize,
    pub checked: bool,
    pub rerank: RerankMode,
    pub self_prune: bool,
    pub entrance_updates: bool,
    pub seed: u64,
}

impl IndexParams {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            max_degree: 32,
            layout: LayoutKind::Decoupled,
            slots_per_page: None,
            pq_m: 8,
            pq_identity: false,
            train_sample: 25_000,
            l_search: 40,
            l_pos: 100,
            top_k: 10,
            beam_width: 4,
            alpha: DEFAULT_ALPHA,
            entrance: EntranceParams::default(),
            cache_pages: 4096,
            rmw_pages: 256,
            checked: true,
            rerank: RerankMode::Casr,
            self_prune: true,
            entrance_updates: true,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.max_degree == 0 {
            return bad("max degree must be positive");
        }
        if self.pq_m == 0 || self.dim % self.pq_m != 0 {
            return bad("pq subspaces must divide dim");
        }
        if self.top_k == 0 || self.l_search < self.top_k || self.l_pos < self.top_k {
            return bad("pool sizes must be at least top-k >= 1");
        }
        if self.beam_width == 0 {
            return bad("beam width must be positive");
        }
        if self.alpha < 1.0 {
            return bad("alpha must be at least 1");
        }
        self.entrance.validate()
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
        }
        fn flag(k: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("{k}: expected a boolean, got {v:?}"))),
            }
        }
        match key {
            "dim" => self.dim = num(key, value)?,
            "max_degree" => self.max_degree = num(key, value)?,
            "layout" => self.layout = LayoutKind::parse(value)?,
            "slots_per_page" => {
                self.slots_per_page = if value == "auto" { None } else { Some(num(key, value)?) };
            }
            "pq_m" => self.pq_m = num(key, value)?,
            "pq_identity" => self.pq_identity = flag(key, value)?,
            "train_sample" => self.train_sample = num(key, value)?,
            "l_search" => self.l_search = num(key, value)?,
            "l_pos" => self.l_pos = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "beam_width" => self.beam_width = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "entrance_ratio" => self.entrance.ratio = num(key, value)?,
            "entrance_degree" => self.entrance.max_degree = num(key, value)?,
            "entrance_pool" => self.entrance.pool = num(key, value)?,
            "entrance_entries" => self.entrance.entries = num(key, value)?,
            "cache_pages" => self.cache_pages = num(key, value)?,
            "rmw_pages" => self.rmw_pages = num(key, value)?,
            "checked" => self.checked = flag(key, value)?,
            "rerank" => self.rerank = RerankMode::parse(value)?,
            "self_prune" => self.self_prune = flag(key, value)?,
            "entrance_updates" => self.entrance_updates = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    pub fn to_conf(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("dim", self.dim.to_string());
        kv("max_degree", self.max_degree.to_string());
        kv("layout", self.layout.name().into());
        kv("slots_per_page", self.slots_per_page.map_or("auto".into(), |s| s.to_string()));
        kv("pq_m", self.pq_m.to_string());
        kv("pq_identity", self.pq_identity.to_string());
        kv("train_sample", self.train_sample.to_string());
        kv("l_search", self.l_search.to_string());
        kv("l_pos", self.l_pos.to_string());
        kv("top_k", self.top_k.to_string());
        kv("beam_width", self.beam_width.to_string());
        kv("alpha", self.alpha.to_string());
        kv("entrance_ratio", self.entrance.ratio.to_string());
        kv("entrance_degree", self.entrance.max_degree.to_string());
        kv("entrance_pool", self.entrance.pool.to_string());
        kv("entrance_entries", self.entrance.entries.to_string());
        kv("cache_pages", self.cache_pages.to_string());
        kv("rmw_pages", self.rmw_pages.to_string());
        kv("checked", self.checked.to_string());
        kv("rerank", self.rerank.name().into());
        kv("self_prune", self.self_prune.to_string());
        kv("entrance_updates", self.entrance_updates.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// Parses `key=value` lines onto `self`. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_conf(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            layout: self.layout,
            dim: self.dim,
            max_degree: self.max_degree,
            slots_override: self.slots_per_page,
            checked: self.checked,
            cache_pages: self.cache_pages,
            rmw_pages: self.rmw_pages,
        }
    }
}

pub struct Index {
    pub(crate) params: IndexParams,
    pub(crate) store: Store,
    pub(crate) quant: Quantizer,
    pub(crate) entrance: ArcSwap<EntranceGraph>,
    pub(crate) next_id: AtomicU32,
    pub(crate) live: AtomicU64,
    pub(crate) medoid: AtomicU32,
    pub(crate) s_search: AtomicUsize,
    pub(crate) s_pos: AtomicUsize,
    pub(crate) commit_seq: AtomicU64,
    /// Commit sequence number per vertex (0 = committed before the run).
    pub(crate) seq_of: Chunked<AtomicU64>,
    dir: Option<PathBuf>,
}

impl Index {
    /// An empty index over `device`. `dir`, when given, is where `flush`
    /// writes the metadata files.
    pub fn create(params: IndexParams, book: PqCodebook, device: Arc<dyn Device>, dir: Option<PathBuf>) -> Result<Self> {
        params.validate()?;
        if book.dim() != params.dim || book.m() != params.pq_m {
            return Err(Error::Config("codebook shape does not match the parameters".into()));
        }
        let store = Store::create(device, &params.store_config())?;
        let entrance = EntranceGraph::new(params.entrance)?;
        Ok(Self {
            quant: Quantizer::new(book)?,
            store,
            entrance: ArcSwap::from_pointee(entrance),
            next_id: AtomicU32::new(0),
            live: AtomicU64::new(0),
            medoid: AtomicU32::new(u32::MAX),
            s_search: AtomicUsize::new(0),
            s_pos: AtomicUsize::new(0),
            commit_seq: AtomicU64::new(0),
            seq_of: Chunked::new(1),
            dir,
            params,
        })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quant
    }

    pub fn entrance(&self) -> Arc<EntranceGraph> {
        self.entrance.load_full()
    }

    pub fn set_entrance(&self, g: EntranceGraph) {
        self.entrance.store(Arc::new(g));
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Ids handed out so far (committed or in flight).
    pub fn allocated(&self) -> u32 {
        self.next_id.load(Ordering::Acquire)
    }

    /// Committed vertices.
    pub fn len(&self) -> u64 {
        self.live.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn medoid(&self) -> Option<VertexId> {
        let m = self.medoid.load(Ordering::Acquire);
        (m != u32::MAX).then_some(VertexId(m))
    }

    pub fn is_live(&self, v: VertexId) -> bool {
        self.store.is_live(v)
    }

    /// Group size for a path; `top_k` until calibrated.
    pub fn group_size(&self, path: RerankPath) -> usize {
        let s = match path {
            RerankPath::Search => self.s_search.load(Ordering::Relaxed),
            RerankPath::Pos => self.s_pos.load(Ordering::Relaxed),
        };
        if s == 0 {
            self.params.top_k
        } else {
            s
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.s_search.load(Ordering::Relaxed) != 0 && self.s_pos.load(Ordering::Relaxed) != 0
    }

    pub fn set_group_size(&self, path: RerankPath, s: usize) {
        match path {
            RerankPath::Search => self.s_search.store(s, Ordering::Relaxed),
            RerankPath::Pos => self.s_pos.store(s, Ordering::Relaxed),
        }
    }

    /// Commit sequence of the most recent insert.
    pub fn commit_seq(&self) -> u64 {
        self.commit_seq.load(Ordering::Acquire)
    }

    /// Commit sequence at which `v` became visible (0 for vertices committed
    /// before this process started inserting).
    pub fn seq_of(&self, v: VertexId) -> u64 {
        self.seq_of.get(v.index()).map_or(0, |s| s[0].load(Ordering::Acquire))
    }

    pub(crate) fn allocate_id(&self) -> Result<VertexId> {
        let id = self.next_id.fetch_add(1, Ordering::AcqRel);
        if id as usize >= Chunked::<AtomicU64>::capacity() || id == u32::MAX {
            return Err(Error::Capacity(id as usize));
        }
        Ok(VertexId(id))
    }

    /// Writes the metadata files next to the page files. Callers quiesce
    /// inserts first; searches may continue.
    pub fn flush(&self) -> Result<()> {
        let Some(dir) = self.dir.clone() else {
            return Ok(());
        };
        let dev = self.store.device();
        dev.flush(FileRole::Edge)?;
        dev.flush(FileRole::Vector)?;
        let n = self.allocated() as usize;
        write_atomic(&dir.join("index.conf"), self.params.to_conf().as_bytes())?;
        write_atomic(&dir.join("meta"), &self.meta_bytes(n))?;
        write_atomic(&dir.join("pq.bin"), &self.quant.codebook().to_bytes())?;
        write_atomic(&dir.join("codes.bin"), &self.quant.codes().to_bytes(n))?;
        write_atomic(&dir.join("entrance.bin"), &self.entrance().to_bytes())?;
        Ok(())
    }

    fn meta_bytes(&self, n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + n * 16 + 12);
        out.extend_from_slice(META_MAGIC);
        out.extend_from_slice(&META_VERSION.to_le_bytes());
        out.push(match self.params.layout {
            LayoutKind::Decoupled => 0,
            LayoutKind::Packed => 1,
        });
        out.extend_from_slice(&[0; 3]);
        out.extend_from_slice(&(self.params.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.max_degree as u32).to_le_bytes());
        let spp = self.store.decoupled().map_or(0, |s| s.edge_geometry().slots_per_page);
        out.extend_from_slice(&(spp as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.pq_m as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.medoid.load(Ordering::Acquire).to_le_bytes());
        for i in 0..n {
            let v = VertexId(i as u32);
            let (e, r) = match &self.store {
                Store::Decoupled(s) => {
                    let r = s.table().record(v);
                    (r.edge.map_or(EMPTY, SlotLoc::pack), r.vector_record.unwrap_or(EMPTY))
                }
                Store::Packed(s) => {
                    let w = if s.is_live(v) { i as u64 } else { EMPTY };
                    (w, w)
                }
            };
            out.extend_from_slice(&e.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(CALIBRATION_MAGIC);
        out.extend_from_slice(&(self.s_search.load(Ordering::Relaxed) as u32).to_le_bytes());
        out.extend_from_slice(&(self.s_pos.load(Ordering::Relaxed) as u32).to_le_bytes());
        out
    }

    /// Opens a flushed index directory. `overrides` are `key=value` settings
    /// applied over `index.conf` (runtime knobs such as cache size).
    pub fn open(dir: &Path, mode: IoMode, overrides: &[(String, String)]) -> Result<Self> {
        let read = |name: &str| fs::read(dir.join(name)).map_err(|source| Error::File { path: dir.join(name), source });
        let mut params = IndexParams::new(1);
        let conf = String::from_utf8(read("index.conf")?)
            .map_err(|_| Error::Config("index.conf is not UTF-8".into()))?;
        params.apply_conf(&conf)?;
        let stored = params.clone();
        for (k, v) in overrides {
            params.set(k, v)?;
        }
        if (params.dim, params.max_degree, params.layout, params.slots_per_page, params.pq_m)
            != (stored.dim, stored.max_degree, stored.layout, stored.slots_per_page, stored.pq_m)
        {
            return Err(Error::Config("dim, degree, layout, slots and pq_m are fixed at build time".into()));
        }
        let book = PqCodebook::from_bytes(&read("pq.bin")?)?;
        let device: Arc<dyn Device> = Arc::new(FileDevice::open(dir, mode)?);
        let index = Self::create(params, book, device, Some(dir.to_path_buf()))?;

        let meta_path = dir.join("meta");
        let meta = read("meta")?;
        let fmt = |offset: usize, msg: &str| Error::Format { path: meta_path.clone(), offset: offset as u64, msg: msg.into() };
        let word32 = |at: usize| -> Result<u32> {
            meta.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().expect("4"))).ok_or_else(|| fmt(at, "truncated"))
        };
        let word64 = |at: usize| -> Result<u64> {
            meta.get(at..at + 8).map(|b| u64::from_le_bytes(b.try_into().expect("8"))).ok_or_else(|| fmt(at, "truncated"))
        };
        if meta.get(..4) != Some(META_MAGIC.as_slice()) {
            return Err(fmt(0, "bad magic"));
        }
        if word32(4)? != META_VERSION {
            return Err(fmt(4, "unsupported version"));
        }
        let layout = match meta.get(8) {
            Some(0) => LayoutKind::Decoupled,
            Some(1) => LayoutKind::Packed,
            _ => return Err(fmt(8, "unknown layout")),
        };
        if layout != index.params.layout
            || word32(12)? as usize != index.params.dim
            || word32(16)? as usize != index.params.max_degree
            || word32(24)? as usize != index.params.pq_m
        {
            return Err(fmt(8, "meta disagrees with index.conf"));
        }
        if let Some(s) = index.store.decoupled() {
            if word32(20)? as usize != s.edge_geometry().slots_per_page {
                return Err(fmt(20, "slots per page disagree with index.conf"));
            }
        }
        let n = word64(28)? as usize;
        let medoid = word32(36)?;
        let mut records = Vec::with_capacity(n);
        let mut at = 40;
        for _ in 0..n {
            let e = word64(at)?;
            let r = word64(at + 8)?;
            records.push(TableRecord { edge: SlotLoc::unpack(e), vector_record: (r != EMPTY).then_some(r) });
            at += 16;
        }
        if meta.get(at..at + 4) == Some(CALIBRATION_MAGIC.as_slice()) {
            index.s_search.store(word32(at + 4)? as usize, Ordering::Relaxed);
            index.s_pos.store(word32(at + 8)? as usize, Ordering::Relaxed);
        }
        let live = records.iter().filter(|r| r.edge.is_some()).count() as u64;
        match &index.store {
            Store::Decoupled(s) => s.restore(&records)?,
            Store::Packed(s) => s.restore(n as u32),
        }
        index.next_id.store(n as u32, Ordering::Release);
        index.live.store(live, Ordering::Release);
        index.medoid.store(medoid, Ordering::Release);

        let codes = read("codes.bin")?;
        if codes.len() != n * index.params.pq_m {
            return Err(Error::Format { path: dir.join("codes.bin"), offset: codes.len() as u64, msg: "code count differs from meta".into() });
        }
        index.quant.codes().load(&codes);
        let ent = EntranceGraph::from_bytes(index.params.entrance, &read("entrance.bin")?)
            .map_err(|msg| Error::Format { path: dir.join("entrance.bin"), offset: 0, msg })?;
        index.set_entrance(ent);
        Ok(index)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|source| Error::File { path: tmp.clone(), source })?;
    fs::rename(&tmp, path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}
