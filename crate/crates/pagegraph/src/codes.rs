//! In-memory PQ code store, written once per vertex and read lock-free.

use std::sync::atomic::{AtomicU64, Ordering};

use pagegraph_core::VertexId;

use crate::table::Chunked;

pub struct CodeStore {
    m: usize,
    words: usize,
    table: Chunked<AtomicU64>,
}

impl CodeStore {
    pub fn new(m: usize) -> Self {
        let words = m.div_ceil(8);
        Self { m, words, table: Chunked::new(words) }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn set(&self, v: VertexId, code: &[u8]) {
        assert_eq!(code.len(), self.m);
        let slot = self.table.slot(v.index());
        for (w, chunk) in slot.iter().zip(code.chunks(8)) {
            let mut b = [0u8; 8];
            b[..chunk.len()].copy_from_slice(chunk);
            w.store(u64::from_le_bytes(b), Ordering::Release);
        }
    }

    /// Copies `v`'s code into `out` (length `m`). Unset codes read as zeros.
    pub fn get_into(&self, v: VertexId, out: &mut [u8]) {
        match self.table.get(v.index()) {
            Some(slot) => {
                for (w, chunk) in slot.iter().zip(out.chunks_mut(8)) {
                    let b = w.load(Ordering::Acquire).to_le_bytes();
                    chunk.copy_from_slice(&b[..chunk.len()]);
                }
            }
            None => out.fill(0),
        }
    }

    pub fn get(&self, v: VertexId) -> Vec<u8> {
        let mut out = vec![0; self.m];
        self.get_into(v, &mut out);
        out
    }

    /// Id-ordered dump of the first `n` codes.
    pub fn to_bytes(&self, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n * self.m];
        for (i, c) in out.chunks_mut(self.m).enumerate() {
            self.get_into(VertexId(i as u32), c);
        }
        out
    }

    pub fn load(&self, bytes: &[u8]) {
        for (i, c) in bytes.chunks_exact(self.m).enumerate() {
            self.set(VertexId(i as u32), c);
        }
    }

    pub fn words(&self) -> usize {
        self.words
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_roundtrip_for_odd_m() {
        let s = CodeStore::new(11);
        let code: Vec<u8> = (0..11).map(|i| i * 20 + 3).collect();
        s.set(VertexId(70_000), &code);
        assert_eq!(s.get(VertexId(70_000)), code);
        assert_eq!(s.get(VertexId(1)), vec![0; 11]);
        assert_eq!(s.get(VertexId(9_000_000)), vec![0; 11]);
        let bytes = s.to_bytes(2);
        let t = CodeStore::new(11);
        t.load(&bytes);
        assert_eq!(t.to_bytes(2), bytes);
    }
}
