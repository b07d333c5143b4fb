//! Read-modify-write page cache: the only place a dirty page ever lives.
//!
//! A commit stages each page it is about to write here (dirty, pinned), then
//! marks it clean once the device write completes. Clean pages stay readable
//! until they age out or are invalidated.

use std::collections::VecDeque;
use std::sync::Arc;

use dashmap::DashMap;
use parking_lot::Mutex;

use crate::io::PageBuf;

#[derive(Debug)]
struct RmwEntry {
    buf: Arc<PageBuf>,
    dirty: bool,
    pins: u32,
}

pub struct RmwCache {
    capacity: usize,
    map: DashMap<u64, RmwEntry>,
    order: Mutex<VecDeque<u64>>,
}

impl RmwCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, map: DashMap::new(), order: Mutex::new(VecDeque::new()) }
    }

    /// Clean bytes of `page`, if staged here.
    pub fn get(&self, page: u64) -> Option<Arc<PageBuf>> {
        self.map.get(&page).filter(|e| !e.dirty).map(|e| Arc::clone(&e.buf))
    }

    /// Stages a page about to be written: dirty and pinned.
    pub fn stage(&self, page: u64, buf: Arc<PageBuf>) {
        let fresh = self.map.insert(page, RmwEntry { buf, dirty: true, pins: 1 }).is_none();
        if fresh {
            self.order.lock().push_back(page);
        }
    }

    /// Marks a staged page written and unpins it.
    pub fn complete(&self, page: u64) {
        if let Some(mut e) = self.map.get_mut(&page) {
            e.dirty = false;
            e.pins = e.pins.saturating_sub(1);
        }
    }

    pub fn remove(&self, page: u64) {
        self.map.remove(&page);
    }

    /// Evicts clean, unpinned pages oldest-first down to capacity.
    pub fn trim(&self) {
        let mut order = self.order.lock();
        let mut kept = VecDeque::new();
        while self.map.len() > self.capacity {
            let Some(p) = order.pop_front() else { break };
            let evictable = self.map.get(&p).map(|e| !e.dirty && e.pins == 0);
            match evictable {
                Some(true) => {
                    self.map.remove(&p);
                }
                Some(false) => kept.push_back(p),
                None => {}
            }
        }
        while let Some(p) = kept.pop_back() {
            order.push_front(p);
        }
        order.retain(|p| self.map.contains_key(p));
    }

    pub fn clear(&self) {
        let mut order = self.order.lock();
        self.map.clear();
        order.clear();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn dirty_pages(&self) -> usize {
        self.map.iter().filter(|e| e.dirty).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirty_pages_are_invisible_and_pinned() {
        let c = RmwCache::new(1);
        c.stage(4, Arc::new(PageBuf::zeroed()));
        c.stage(5, Arc::new(PageBuf::zeroed()));
        assert!(c.get(4).is_none());
        c.trim();
        assert_eq!(c.len(), 2);
        assert_eq!(c.dirty_pages(), 2);
        c.complete(4);
        assert!(c.get(4).is_some());
        c.trim();
        assert_eq!(c.len(), 1);
        assert!(c.get(4).is_none());
        c.complete(5);
        c.trim();
        assert!(c.get(5).is_some());
    }
}
