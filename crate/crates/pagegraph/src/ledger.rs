//! Edge-page occupancy: live slots per page, reusable pages, and the append
//! frontier.

use std::collections::BTreeSet;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct PageLedger {
    live: Vec<u32>,
    /// Fully invalidated pages whose grace period has passed.
    free: BTreeSet<u64>,
    /// Fully invalidated pages still visible to in-flight readers.
    pending: BTreeSet<u64>,
    frontier: u64,
}

impl PageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds occupancy from per-page live counts; pages with no live slot
    /// below the frontier are immediately reusable.
    pub fn from_live_counts(live: Vec<u32>) -> Self {
        let frontier = live.len() as u64;
        let free = live.iter().enumerate().filter(|(_, &c)| c == 0).map(|(p, _)| p as u64).collect();
        Self { live, free, pending: BTreeSet::new(), frontier }
    }

    pub fn frontier(&self) -> u64 {
        self.frontier
    }

    pub fn live(&self, page: u64) -> u32 {
        self.live.get(page as usize).copied().unwrap_or(0)
    }

    pub fn free_pages(&self) -> impl Iterator<Item = u64> + '_ {
        self.free.iter().copied()
    }

    pub fn pending_pages(&self) -> impl Iterator<Item = u64> + '_ {
        self.pending.iter().copied()
    }

    pub fn total_live(&self) -> u64 {
        self.live.iter().map(|&c| c as u64).sum()
    }

    /// Destination pages for `n` fresh pages: reusable pages first (lowest
    /// first), then the frontier.
    pub fn allocate(&mut self, n: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            match self.free.pop_first() {
                Some(p) => out.push(p),
                None => {
                    out.push(self.frontier);
                    self.frontier += 1;
                    self.live.push(0);
                }
            }
        }
        out
    }

    pub fn add_live(&mut self, page: u64, slots: u32) {
        self.live[page as usize] += slots;
    }

    /// Drops one live slot; returns true when the page became empty.
    pub fn invalidate(&mut self, page: u64) -> bool {
        let c = &mut self.live[page as usize];
        assert!(*c > 0, "invalidating a slot on page {page} with no live slots");
        *c -= 1;
        if *c == 0 {
            self.pending.insert(page);
            true
        } else {
            false
        }
    }

    /// Makes a pending page reusable once no reader can still reach it.
    pub fn release(&mut self, page: u64) {
        if self.pending.remove(&page) && self.live(page) == 0 {
            self.free.insert(page);
        }
    }

    /// Conservation checks against the live vertex count.
    pub fn audit(&self, live_vertices: u64) -> Result<(), String> {
        if self.total_live() != live_vertices {
            return Err(format!("ledger counts {} live slots for {} live vertices", self.total_live(), live_vertices));
        }
        for p in self.free.iter().chain(&self.pending) {
            if self.live(*p) != 0 {
                return Err(format!("page {p} is reusable but has {} live slots", self.live(*p)));
            }
            if *p >= self.frontier {
                return Err(format!("reusable page {p} lies at or past the frontier"));
            }
        }
        for (p, &c) in self.live.iter().enumerate() {
            let p = p as u64;
            if c == 0 && !self.free.contains(&p) && !self.pending.contains(&p) {
                return Err(format!("empty page {p} is neither free nor awaiting release"));
            }
        }
        Ok(())
    }
}
