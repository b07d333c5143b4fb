//! Page-access trace replay through the navis cache and minimal reference
//! policies (LRU, LFU, CLOCK), for hit-rate comparisons at fixed capacity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::{CacheConfig, CacheStats, NavisCache};
use crate::error::{Error, Result};
use crate::io::PageBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Navis,
    Lru,
    Lfu,
    Clock,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Navis, PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Clock];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "navis" => Ok(PolicyKind::Navis),
            "lru" => Ok(PolicyKind::Lru),
            "lfu" => Ok(PolicyKind::Lfu),
            "clock" => Ok(PolicyKind::Clock),
            _ => Err(Error::Config(format!("unknown cache policy {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Navis => "navis",
            PolicyKind::Lru => "lru",
            PolicyKind::Lfu => "lfu",
            PolicyKind::Clock => "clock",
        }
    }
}

pub trait Policy {
    /// Records one access; returns whether it hit.
    fn access(&mut self, page: u64) -> bool;
}

pub struct Lru {
    cap: usize,
    tick: u64,
    at: HashMap<u64, u64>,
    order: BTreeMap<u64, u64>,
}

impl Lru {
    pub fn new(cap: usize) -> Self {
        Self { cap, tick: 0, at: HashMap::new(), order: BTreeMap::new() }
    }
}

impl Policy for Lru {
    fn access(&mut self, page: u64) -> bool {
        self.tick += 1;
        let hit = match self.at.insert(page, self.tick) {
            Some(old) => {
                self.order.remove(&old);
                true
            }
            None => false,
        };
        self.order.insert(self.tick, page);
        if self.at.len() > self.cap {
            let (_, victim) = self.order.pop_first().expect("non-empty");
            self.at.remove(&victim);
        }
        hit
    }
}

/// Evicts the least frequently used page, oldest first among equals.
pub struct Lfu {
    cap: usize,
    tick: u64,
    meta: HashMap<u64, (u64, u64)>,
    order: BTreeSet<(u64, u64, u64)>,
}

impl Lfu {
    pub fn new(cap: usize) -> Self {
        Self { cap, tick: 0, meta: HashMap::new(), order: BTreeSet::new() }
    }
}

impl Policy for Lfu {
    fn access(&mut self, page: u64) -> bool {
        self.tick += 1;
        if let Some(&(f, t)) = self.meta.get(&page) {
            self.order.remove(&(f, t, page));
            self.meta.insert(page, (f + 1, self.tick));
            self.order.insert((f + 1, self.tick, page));
            return true;
        }
        if self.meta.len() >= self.cap {
            let (_, _, victim) = self.order.pop_first().expect("non-empty");
            self.meta.remove(&victim);
        }
        self.meta.insert(page, (1, self.tick));
        self.order.insert((1, self.tick, page));
        false
    }
}

/// FIFO with a second chance.
pub struct Clock {
    cap: usize,
    frames: Vec<(u64, bool)>,
    index: HashMap<u64, usize>,
    hand: usize,
}

impl Clock {
    pub fn new(cap: usize) -> Self {
        Self { cap, frames: Vec::with_capacity(cap), index: HashMap::new(), hand: 0 }
    }
}

impl Policy for Clock {
    fn access(&mut self, page: u64) -> bool {
        if let Some(&i) = self.index.get(&page) {
            self.frames[i].1 = true;
            return true;
        }
        if self.frames.len() < self.cap {
            self.index.insert(page, self.frames.len());
            self.frames.push((page, false));
            return false;
        }
        loop {
            let f = &mut self.frames[self.hand];
            if f.1 {
                f.1 = false;
                self.hand = (self.hand + 1) % self.cap;
                continue;
            }
            self.index.remove(&f.0);
            *f = (page, false);
            self.index.insert(page, self.hand);
            self.hand = (self.hand + 1) % self.cap;
            return false;
        }
    }
}

/// The engine's cache driven by a trace: a miss admits the page.
pub struct NavisReplay {
    cache: NavisCache,
    buf: Arc<PageBuf>,
}

impl NavisReplay {
    pub fn new(cap: usize) -> Result<Self> {
        Ok(Self { cache: NavisCache::new(CacheConfig::new(cap))?, buf: Arc::new(PageBuf::zeroed()) })
    }

    pub fn cache(&self) -> &NavisCache {
        &self.cache
    }
}

impl Policy for NavisReplay {
    fn access(&mut self, page: u64) -> bool {
        if self.cache.lookup(page).is_some() {
            return true;
        }
        self.cache.admit(page, Arc::clone(&self.buf));
        false
    }
}

pub fn make_policy(kind: PolicyKind, cap: usize) -> Result<Box<dyn Policy>> {
    if cap == 0 {
        return Err(Error::Config("cache capacity must be positive".into()));
    }
    Ok(match kind {
        PolicyKind::Navis => Box::new(NavisReplay::new(cap)?),
        PolicyKind::Lru => Box::new(Lru::new(cap)),
        PolicyKind::Lfu => Box::new(Lfu::new(cap)),
        PolicyKind::Clock => Box::new(Clock::new(cap)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    pub accesses: u64,
    pub hits: u64,
}

impl ReplayReport {
    pub fn hit_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.hits as f64 / self.accesses as f64
        }
    }
}

pub fn replay(policy: &mut dyn Policy, trace: &[u64]) -> ReplayReport {
    let hits = trace.iter().filter(|&&p| policy.access(p)).count() as u64;
    ReplayReport { accesses: trace.len() as u64, hits }
}

/// Replays through the navis cache and also returns its counters.
pub fn replay_navis(cap: usize, trace: &[u64]) -> Result<(ReplayReport, CacheStats)> {
    let mut n = NavisReplay::new(cap)?;
    let r = replay(&mut n, trace);
    Ok((r, n.cache.stats()))
}

/// `len` accesses over `pages` pages: a fraction `hot_prob` goes uniformly to
/// the first `hot_pages`, the rest uniformly to the others.
pub fn skewed_trace(pages: u64, hot_pages: u64, hot_prob: f64, len: usize, seed: u64) -> Vec<u64> {
    assert!(hot_pages > 0 && hot_pages < pages);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            if rng.gen_bool(hot_prob) {
                rng.gen_range(0..hot_pages)
            } else {
                rng.gen_range(hot_pages..pages)
            }
        })
        .collect()
}

/// `rounds` sequential passes over pages `start..start + pages`.
pub fn scan_trace(start: u64, pages: u64, rounds: usize) -> Vec<u64> {
    (0..rounds).flat_map(|_| start..start + pages).collect()
}

/// Plain-text trace: one page number per line; blank lines and `#` comments
/// are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<u64>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| l.parse().map_err(|_| Error::Config(format!("trace line {}: not a page number: {l:?}", i + 1))))
        .collect()
}
