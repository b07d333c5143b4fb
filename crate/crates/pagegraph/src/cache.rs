//! Edgelist page cache: a large frozen region plus a small LRU admission
//! window.
//!
//! Pages enter the window on a disk miss. A second hit while still in the
//! window promotes the page into the frozen region, evicting a random
//! unpinned frozen page when it is full (bounded probing; the promotion is
//! abandoned if every probe lands on a pinned page). Frozen entries carry no
//! recency metadata, so a hit there touches nothing but the pin count.
//! Buffers are replaced copy-on-write, and hits hold their own `Arc` to the
//! bytes they saw.

use std::collections::BTreeMap;
use std::ops::Deref;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwap;
use dashmap::DashMap;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::PageBuf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheConfig {
    pub capacity_pages: usize,
    pub window_fraction: f64,
    pub max_probes: usize,
    pub seed: u64,
}

impl CacheConfig {
    pub fn new(capacity_pages: usize) -> Self {
        Self { capacity_pages, window_fraction: 0.1, max_probes: 8, seed: 0x5eed }
    }

    pub fn window_slots(&self) -> usize {
        ((self.window_fraction * self.capacity_pages as f64).round() as usize).max(1)
    }

    pub fn frozen_slots(&self) -> usize {
        self.capacity_pages - self.window_slots()
    }

    fn validate(&self) -> Result<()> {
        if self.capacity_pages < 2 {
            return Err(Error::Config("cache capacity must be at least 2 pages".into()));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction < 1.0) {
            return Err(Error::Config("window fraction must lie in (0, 1)".into()));
        }
        if self.max_probes == 0 {
            return Err(Error::Config("max probes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Window,
    Frozen,
}

const WINDOW: u8 = 0;
const FROZEN: u8 = 1;

struct Entry {
    page: u64,
    buf: ArcSwap<PageBuf>,
    region: AtomicU8,
    hits: AtomicU8,
    pins: AtomicU32,
    condemned: AtomicBool,
    tick: AtomicU64,
    frozen_idx: AtomicUsize,
}

impl Entry {
    fn pinned(&self) -> bool {
        self.pins.load(Ordering::Acquire) > 0
    }
}

struct Regions {
    /// Recency tick → page; the smallest tick is the LRU tail.
    window: BTreeMap<u64, u64>,
    frozen: Vec<Arc<Entry>>,
    next_tick: u64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Default)]
pub struct CacheCounters {
    pub hits: AtomicU64,
    pub misses: AtomicU64,
    pub promotions: AtomicU64,
    pub abandoned: AtomicU64,
    pub hint_invalidations: AtomicU64,
    pub condemned: AtomicU64,
    pub admissions: AtomicU64,
    pub rejected_admissions: AtomicU64,
    pub window_evictions: AtomicU64,
    pub frozen_evictions: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub promotions: u64,
    pub abandoned: u64,
    pub hint_invalidations: u64,
    pub condemned: u64,
    pub admissions: u64,
    pub rejected_admissions: u64,
    pub window_evictions: u64,
    pub frozen_evictions: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// A pinned view of a cached page. The pin is released on drop.
pub struct CacheHit {
    entry: Arc<Entry>,
    buf: Arc<PageBuf>,
}

impl CacheHit {
    pub fn buffer(&self) -> &Arc<PageBuf> {
        &self.buf
    }
}

impl Deref for CacheHit {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.buf
    }
}

impl Drop for CacheHit {
    fn drop(&mut self) {
        self.entry.pins.fetch_sub(1, Ordering::AcqRel);
    }
}

pub struct NavisCache {
    cfg: CacheConfig,
    map: DashMap<u64, Arc<Entry>>,
    regions: Mutex<Regions>,
    counters: CacheCounters,
}

impl NavisCache {
    pub fn new(cfg: CacheConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            map: DashMap::with_capacity(cfg.capacity_pages),
            regions: Mutex::new(Regions {
                window: BTreeMap::new(),
                frozen: Vec::with_capacity(cfg.frozen_slots()),
                next_tick: 0,
                rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            }),
            counters: CacheCounters::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn region_of(&self, page: u64) -> Option<Region> {
        self.map.get(&page).map(|e| match e.region.load(Ordering::Acquire) {
            FROZEN => Region::Frozen,
            _ => Region::Window,
        })
    }

    pub fn frozen_len(&self) -> usize {
        self.regions.lock().frozen.len()
    }

    pub fn window_len(&self) -> usize {
        self.regions.lock().window.len()
    }

    pub fn lookup(&self, page: u64) -> Option<CacheHit> {
        let Some(entry) = self.map.get(&page).map(|e| Arc::clone(&e)) else {
            self.counters.misses.fetch_add(1, Ordering::Relaxed);
            return None;
        };
        entry.pins.fetch_add(1, Ordering::AcqRel);
        if entry.condemned.load(Ordering::Acquire) {
            entry.pins.fetch_sub(1, Ordering::AcqRel);
            self.counters.misses.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        let buf = entry.buf.load_full();
        self.counters.hits.fetch_add(1, Ordering::Relaxed);
        if entry.region.load(Ordering::Acquire) == WINDOW {
            self.window_hit(&entry);
        }
        Some(CacheHit { entry, buf })
    }

    fn window_hit(&self, entry: &Arc<Entry>) {
        let mut r = self.regions.lock();
        if entry.condemned.load(Ordering::Acquire) || entry.region.load(Ordering::Acquire) != WINDOW {
            return;
        }
        let old = entry.tick.load(Ordering::Relaxed);
        r.window.remove(&old);
        let t = r.next_tick;
        r.next_tick += 1;
        entry.tick.store(t, Ordering::Relaxed);
        r.window.insert(t, entry.page);
        let hits = entry.hits.load(Ordering::Relaxed).saturating_add(1).min(2);
        entry.hits.store(hits, Ordering::Relaxed);
        if hits >= 2 {
            self.promote(&mut r, entry);
        }
    }

    fn promote(&self, r: &mut Regions, entry: &Arc<Entry>) {
        if r.frozen.len() >= self.cfg.frozen_slots() {
            if self.cfg.frozen_slots() == 0 || self.evict_frozen(r).is_none() {
                self.counters.abandoned.fetch_add(1, Ordering::Relaxed);
                return;
            }
        }
        r.window.remove(&entry.tick.load(Ordering::Relaxed));
        entry.region.store(FROZEN, Ordering::Release);
        entry.frozen_idx.store(r.frozen.len(), Ordering::Relaxed);
        r.frozen.push(Arc::clone(entry));
        self.counters.promotions.fetch_add(1, Ordering::Relaxed);
    }

    /// Probes up to `max_probes` random frozen entries and evicts the first
    /// unpinned one. Returns the victim page and the number of probes made.
    fn evict_frozen(&self, r: &mut Regions) -> Option<(u64, usize)> {
        if r.frozen.is_empty() {
            return None;
        }
        for probe in 1..=self.cfg.max_probes {
            let i = r.rng.gen_range(0..r.frozen.len());
            if r.frozen[i].pinned() {
                continue;
            }
            let victim = r.frozen.swap_remove(i);
            if let Some(moved) = r.frozen.get(i) {
                moved.frozen_idx.store(i, Ordering::Relaxed);
            }
            self.map.remove(&victim.page);
            self.counters.frozen_evictions.fetch_add(1, Ordering::Relaxed);
            return Some((victim.page, probe));
        }
        None
    }

    /// Random-probe eviction from the frozen region on demand.
    pub fn evict_frozen_random(&self) -> Option<(u64, usize)> {
        let mut r = self.regions.lock();
        self.evict_frozen(&mut r)
    }

    /// Inserts a freshly read page into the window. Returns whether it was
    /// admitted; a page already cached is left alone.
    pub fn admit(&self, page: u64, buf: Arc<PageBuf>) -> bool {
        if self.map.contains_key(&page) {
            return false;
        }
        let mut r = self.regions.lock();
        if self.map.contains_key(&page) {
            return false;
        }
        if r.window.len() >= self.cfg.window_slots() {
            let victim = r
                .window
                .iter()
                .map(|(&t, &p)| (t, p))
                .find(|(_, p)| self.map.get(p).is_some_and(|e| !e.pinned()));
            match victim {
                Some((t, p)) => {
                    r.window.remove(&t);
                    self.map.remove(&p);
                    self.counters.window_evictions.fetch_add(1, Ordering::Relaxed);
                }
                None => {
                    self.counters.rejected_admissions.fetch_add(1, Ordering::Relaxed);
                    return false;
                }
            }
        }
        let t = r.next_tick;
        r.next_tick += 1;
        let entry = Arc::new(Entry {
            page,
            buf: ArcSwap::new(buf),
            region: AtomicU8::new(WINDOW),
            hits: AtomicU8::new(1),
            pins: AtomicU32::new(0),
            condemned: AtomicBool::new(false),
            tick: AtomicU64::new(t),
            frozen_idx: AtomicUsize::new(usize::MAX),
        });
        r.window.insert(t, page);
        self.map.insert(page, entry);
        self.counters.admissions.fetch_add(1, Ordering::Relaxed);
        true
    }

    /// Drops `page` from the cache. A pinned entry is condemned: later lookups
    /// miss, and its buffer is released when the last pin goes away.
    pub fn invalidate_hint(&self, page: u64) {
        let mut r = self.regions.lock();
        let Some((_, e)) = self.map.remove(&page) else {
            return;
        };
        e.condemned.store(true, Ordering::Release);
        if e.region.load(Ordering::Acquire) == FROZEN {
            let i = e.frozen_idx.load(Ordering::Relaxed);
            r.frozen.swap_remove(i);
            if let Some(moved) = r.frozen.get(i) {
                moved.frozen_idx.store(i, Ordering::Relaxed);
            }
        } else {
            r.window.remove(&e.tick.load(Ordering::Relaxed));
        }
        self.counters.hint_invalidations.fetch_add(1, Ordering::Relaxed);
        if e.pinned() {
            self.counters.condemned.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Condemns every entry (used when the edge file is rewritten wholesale).
    pub fn clear(&self) {
        let mut r = self.regions.lock();
        for e in self.map.iter() {
            e.condemned.store(true, Ordering::Release);
        }
        self.map.clear();
        r.window.clear();
        r.frozen.clear();
    }

    /// Swaps in new bytes for a cached page, keeping its region and hit state.
    pub fn refresh_in_place(&self, page: u64, buf: Arc<PageBuf>) {
        if let Some(e) = self.map.get(&page) {
            e.buf.store(buf);
        }
    }

    pub fn stats(&self) -> CacheStats {
        let c = &self.counters;
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CacheStats {
            hits: l(&c.hits),
            misses: l(&c.misses),
            promotions: l(&c.promotions),
            abandoned: l(&c.abandoned),
            hint_invalidations: l(&c.hint_invalidations),
            condemned: l(&c.condemned),
            admissions: l(&c.admissions),
            rejected_admissions: l(&c.rejected_admissions),
            window_evictions: l(&c.window_evictions),
            frozen_evictions: l(&c.frozen_evictions),
        }
    }

    /// Structural audit: capacity bound, region bookkeeping, and that every
    /// frozen entry reached two window hits before promotion.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let r = self.regions.lock();
        if r.window.len() + r.frozen.len() > self.cfg.capacity_pages {
            return Err(format!("{} window + {} frozen exceeds capacity", r.window.len(), r.frozen.len()));
        }
        if r.window.len() > self.cfg.window_slots() || r.frozen.len() > self.cfg.frozen_slots() {
            return Err("region over its slot budget".into());
        }
        if r.window.len() + r.frozen.len() != self.map.len() {
            return Err(format!("map holds {} entries, regions {}", self.map.len(), r.window.len() + r.frozen.len()));
        }
        for (i, e) in r.frozen.iter().enumerate() {
            if e.hits.load(Ordering::Relaxed) < 2 {
                return Err(format!("frozen page {} promoted without a second hit", e.page));
            }
            if e.frozen_idx.load(Ordering::Relaxed) != i {
                return Err(format!("frozen page {} has a stale index", e.page));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(b: u8) -> Arc<PageBuf> {
        let mut p = PageBuf::zeroed();
        p.fill(b);
        Arc::new(p)
    }

    fn cache(cap: usize) -> NavisCache {
        NavisCache::new(CacheConfig::new(cap)).unwrap()
    }

    #[test]
    fn region_sizes() {
        assert_eq!(CacheConfig::new(100).window_slots(), 10);
        assert_eq!(CacheConfig::new(2).window_slots(), 1);
        assert_eq!(CacheConfig::new(14).window_slots(), 1);
        assert_eq!(CacheConfig::new(15).window_slots(), 2);
        assert!(NavisCache::new(CacheConfig::new(1)).is_err());
    }

    #[test]
    fn second_hit_promotes() {
        let c = cache(20);
        assert!(c.lookup(1).is_none());
        c.admit(1, buf(1));
        assert_eq!(c.region_of(1), Some(Region::Window));
        drop(c.lookup(1).unwrap());
        assert_eq!(c.region_of(1), Some(Region::Frozen));
        assert!(!c.admit(1, buf(9)));
        assert_eq!(c.lookup(1).unwrap()[0], 1);
        c.audit().unwrap();
    }

    #[test]
    fn single_access_never_promotes() {
        // capacity 20 -> window of 2.
        let c = cache(20);
        c.admit(1, buf(1));
        c.admit(2, buf(2));
        c.admit(3, buf(3));
        assert!(c.lookup(1).is_none());
        assert_eq!(c.frozen_len(), 0);
    }

    #[test]
    fn window_eviction_skips_pinned_tail() {
        let c = cache(20);
        c.admit(1, buf(1));
        c.admit(2, buf(2));
        drop(c.lookup(2)); // promotes 2, window = {1}
        assert_eq!(c.region_of(2), Some(Region::Frozen));
        c.admit(3, buf(3)); // window {1, 3}
        let m = c.map.get(&1).map(|e| Arc::clone(&e)).unwrap();
        m.pins.fetch_add(1, Ordering::AcqRel); // pin the LRU tail without a hit
        c.admit(4, buf(4));
        assert_eq!(c.region_of(1), Some(Region::Window));
        assert_eq!(c.region_of(3), None);
        m.pins.fetch_sub(1, Ordering::AcqRel);
        c.audit().unwrap();
    }

    #[test]
    fn frozen_probe_trace() {
        // 10 frozen slots, 1 window slot.
        let c = cache(11);
        for p in 0..10 {
            c.admit(p, buf(p as u8));
            drop(c.lookup(p));
        }
        assert_eq!(c.frozen_len(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(c.cfg.seed);
        let order: Vec<u64> = {
            let r = c.regions.lock();
            (0..4).map(|_| r.frozen[rng.gen_range(0..r.frozen.len())].page).collect()
        };
        // Pin every page hit by the first three probes, as long as the fourth
        // lands on a different page.
        if !order[..3].contains(&order[3]) {
            let pins: Vec<_> = order[..3].iter().map(|&p| c.lookup(p).unwrap()).collect();
            assert_eq!(c.evict_frozen_random(), Some((order[3], 4)));
            drop(pins);
        }
    }

    #[test]
    fn all_pinned_abandons_promotion() {
        let c = cache(11);
        for p in 0..10 {
            c.admit(p, buf(0));
            drop(c.lookup(p));
        }
        let pins: Vec<_> = (0..10).map(|p| c.lookup(p).unwrap()).collect();
        c.admit(100, buf(0));
        drop(c.lookup(100));
        assert_eq!(c.region_of(100), Some(Region::Window));
        assert_eq!(c.stats().abandoned, 1);
        drop(pins);
        assert_eq!(c.evict_frozen_random().map(|v| v.1), Some(1));
        c.audit().unwrap();
    }

    #[test]
    fn hints() {
        let c = cache(20);
        c.invalidate_hint(5);
        assert_eq!(c.stats().hint_invalidations, 0);
        c.admit(5, buf(5));
        c.invalidate_hint(5);
        assert!(c.lookup(5).is_none());

        c.admit(6, buf(6));
        let held = c.lookup(6).unwrap();
        c.invalidate_hint(6);
        assert!(c.lookup(6).is_none());
        assert_eq!(held[0], 6);
        assert_eq!(c.stats().condemned, 1);
        drop(held);
        c.audit().unwrap();
    }

    #[test]
    fn refresh_is_copy_on_write() {
        let c = cache(20);
        c.admit(1, buf(1));
        drop(c.lookup(1));
        let old = c.lookup(1).unwrap();
        c.refresh_in_place(1, buf(2));
        c.refresh_in_place(77, buf(2));
        assert_eq!(old[0], 1);
        assert_eq!(c.lookup(1).unwrap()[0], 2);
        assert_eq!(c.region_of(1), Some(Region::Frozen));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn scan_leaves_frozen_alone() {
        let c = cache(50);
        for p in 0..20 {
            c.admit(p, buf(0));
            drop(c.lookup(p));
        }
        let frozen = c.frozen_len();
        for p in 1000..20_000 {
            if c.lookup(p).is_none() {
                c.admit(p, buf(0));
            }
        }
        assert_eq!(c.frozen_len(), frozen);
        assert_eq!(c.stats().frozen_evictions, 0);
        for p in 0..20 {
            assert_eq!(c.region_of(p), Some(Region::Frozen));
        }
    }
}
