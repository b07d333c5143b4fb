//! Byte layouts of the on-disk files.
//!
//! Edge pages hold fixed-size slots, one edgelist each:
//!
//! ```text
//! page:  slot_count u16 | slot_size u16 | reserved u32 | crc32 u32 | slots...
//! slot:  vertex_id u32 | degree u16 | pad u16 | R x u32 neighbors
//! ```
//!
//! The checksum covers the first 8 header bytes and everything after the
//! checksum field. Vector records are raw little-endian `f32`s at stride
//! `dim * 4`, packed so no record straddles a page boundary. Packed records
//! (the co-resident baseline) are `[vector][degree u32][R neighbors]`.

use alloc::vec::Vec;

use crate::model::VertexId;
use crate::{Error, Result};

pub const PAGE_SIZE: usize = 4096;
pub const EDGE_HEADER: usize = 12;
const CRC_OFFSET: usize = 8;

#[inline]
fn get_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

#[inline]
fn get_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

#[inline]
fn put_u16(b: &mut [u8], at: usize, v: u16) {
    b[at..at + 2].copy_from_slice(&v.to_le_bytes());
}

#[inline]
fn put_u32(b: &mut [u8], at: usize, v: u32) {
    b[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

/// Slot geometry of the edge file for a given maximum degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeGeometry {
    pub max_degree: usize,
    pub slot_size: usize,
    pub slots_per_page: usize,
}

impl EdgeGeometry {
    /// `slots_override` lowers the per-page capacity (test fixtures pin it to
    /// reproduce exact write counts); it never raises it.
    pub fn new(max_degree: usize, slots_override: Option<usize>) -> Result<Self> {
        let slot_size = 8 + 4 * max_degree;
        if max_degree == 0 || max_degree > u16::MAX as usize {
            return Err(Error::InvalidParams("max degree out of range"));
        }
        let fit = (PAGE_SIZE - EDGE_HEADER) / slot_size;
        if fit == 0 {
            return Err(Error::InvalidParams("edgelist slot does not fit in a page"));
        }
        let slots_per_page = match slots_override {
            Some(0) => return Err(Error::InvalidParams("slots per page override must be positive")),
            Some(o) => o.min(fit),
            None => fit,
        };
        Ok(Self { max_degree, slot_size, slots_per_page })
    }

    #[inline]
    pub fn slot_offset(&self, slot: usize) -> usize {
        EDGE_HEADER + slot * self.slot_size
    }

    /// Formats an empty page: header written, every slot vacant.
    pub fn init_page(&self, page: &mut [u8]) {
        assert_eq!(page.len(), PAGE_SIZE);
        page.fill(0);
        put_u16(page, 0, self.slots_per_page as u16);
        put_u16(page, 2, self.slot_size as u16);
        for s in 0..self.slots_per_page {
            put_u32(page, self.slot_offset(s), VertexId::INVALID.0);
        }
    }

    pub fn write_slot(&self, page: &mut [u8], slot: usize, v: VertexId, neighbors: &[VertexId]) {
        assert!(slot < self.slots_per_page, "slot {slot} out of range");
        assert!(neighbors.len() <= self.max_degree, "degree {} exceeds R", neighbors.len());
        let at = self.slot_offset(slot);
        let s = &mut page[at..at + self.slot_size];
        s.fill(0);
        put_u32(s, 0, v.0);
        put_u16(s, 4, neighbors.len() as u16);
        for (i, n) in neighbors.iter().enumerate() {
            put_u32(s, 8 + 4 * i, n.0);
        }
        for i in neighbors.len()..self.max_degree {
            put_u32(s, 8 + 4 * i, VertexId::INVALID.0);
        }
    }

    pub fn slot_vertex(&self, page: &[u8], slot: usize) -> VertexId {
        VertexId(get_u32(page, self.slot_offset(slot)))
    }

    /// Decodes a slot's edgelist into `out`. Rejects degrees above R.
    pub fn read_slot(&self, page: &[u8], slot: usize, out: &mut Vec<VertexId>) -> Result<VertexId> {
        if slot >= self.slots_per_page {
            return Err(Error::Corrupt("slot index beyond page capacity"));
        }
        let at = self.slot_offset(slot);
        let v = VertexId(get_u32(page, at));
        let degree = get_u16(page, at + 4) as usize;
        if degree > self.max_degree {
            return Err(Error::Corrupt("slot degree exceeds R"));
        }
        out.clear();
        out.extend((0..degree).map(|i| VertexId(get_u32(page, at + 8 + 4 * i))));
        Ok(v)
    }

    /// Checks the header against this geometry.
    pub fn check_header(&self, page: &[u8]) -> Result<()> {
        if get_u16(page, 0) as usize != self.slots_per_page || get_u16(page, 2) as usize != self.slot_size {
            return Err(Error::Corrupt("edge page header does not match geometry"));
        }
        Ok(())
    }
}

pub fn page_checksum(page: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&page[..CRC_OFFSET]);
    h.update(&page[EDGE_HEADER..PAGE_SIZE]);
    h.finalize()
}

/// Stores the checksum; call after the last slot write.
pub fn seal_page(page: &mut [u8]) {
    let c = page_checksum(page);
    put_u32(page, CRC_OFFSET, c);
}

pub fn verify_page(page: &[u8]) -> Result<()> {
    let stored = get_u32(page, CRC_OFFSET);
    let computed = page_checksum(page);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok(())
}

/// Placement of full-precision vector records in the vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorGeometry {
    pub dim: usize,
    pub stride: usize,
    /// Records per page (1 when a record spans several pages).
    pub per_page: usize,
    /// Pages covered by one record.
    pub pages_per_record: usize,
}

impl VectorGeometry {
    pub fn new(dim: usize) -> Self {
        let stride = dim * 4;
        if stride <= PAGE_SIZE {
            Self { dim, stride, per_page: PAGE_SIZE / stride, pages_per_record: 1 }
        } else {
            Self { dim, stride, per_page: 1, pages_per_record: stride.div_ceil(PAGE_SIZE) }
        }
    }

    /// First page and byte offset within it.
    pub fn locate(&self, record: u64) -> (u64, usize) {
        if self.pages_per_record > 1 {
            (record * self.pages_per_record as u64, 0)
        } else {
            (record / self.per_page as u64, (record % self.per_page as u64) as usize * self.stride)
        }
    }

    pub fn pages_for(&self, records: u64) -> u64 {
        if self.pages_per_record > 1 {
            records * self.pages_per_record as u64
        } else {
            records.div_ceil(self.per_page as u64)
        }
    }

    pub fn encode(&self, v: &[f32], out: &mut [u8]) {
        for (i, x) in v.iter().enumerate() {
            out[4 * i..4 * i + 4].copy_from_slice(&x.to_le_bytes());
        }
    }

    pub fn decode(&self, bytes: &[u8]) -> Vec<f32> {
        bytes[..self.stride]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

/// Co-resident `[vector][degree][edgelist]` records located by vertex id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackedGeometry {
    pub dim: usize,
    pub max_degree: usize,
    pub record_size: usize,
    pub per_page: usize,
    pub pages_per_record: usize,
}

impl PackedGeometry {
    pub fn new(dim: usize, max_degree: usize) -> Self {
        let record_size = dim * 4 + 4 + 4 * max_degree;
        if record_size <= PAGE_SIZE {
            Self { dim, max_degree, record_size, per_page: PAGE_SIZE / record_size, pages_per_record: 1 }
        } else {
            Self { dim, max_degree, record_size, per_page: 1, pages_per_record: record_size.div_ceil(PAGE_SIZE) }
        }
    }

    pub fn locate(&self, v: VertexId) -> (u64, usize) {
        let r = v.0 as u64;
        if self.pages_per_record > 1 {
            (r * self.pages_per_record as u64, 0)
        } else {
            (r / self.per_page as u64, (r % self.per_page as u64) as usize * self.record_size)
        }
    }

    /// Pages holding records for vertices `0..n`.
    pub fn pages_for(&self, n: u64) -> u64 {
        if self.pages_per_record > 1 {
            n * self.pages_per_record as u64
        } else {
            n.div_ceil(self.per_page as u64)
        }
    }

    pub fn encode(&self, vector: &[f32], neighbors: &[VertexId], out: &mut [u8]) {
        assert!(neighbors.len() <= self.max_degree);
        let rec = &mut out[..self.record_size];
        for (i, x) in vector.iter().enumerate() {
            rec[4 * i..4 * i + 4].copy_from_slice(&x.to_le_bytes());
        }
        let base = self.dim * 4;
        put_u32(rec, base, neighbors.len() as u32);
        for i in 0..self.max_degree {
            let id = neighbors.get(i).copied().unwrap_or(VertexId::INVALID);
            put_u32(rec, base + 4 + 4 * i, id.0);
        }
    }

    pub fn decode_vector(&self, rec: &[u8]) -> Vec<f32> {
        rec[..self.dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    pub fn decode_edges(&self, rec: &[u8], out: &mut Vec<VertexId>) -> Result<()> {
        let base = self.dim * 4;
        let degree = get_u32(rec, base) as usize;
        if degree > self.max_degree {
            return Err(Error::Corrupt("packed record degree exceeds R"));
        }
        out.clear();
        out.extend((0..degree).map(|i| VertexId(get_u32(rec, base + 4 + 4 * i))));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn slot_geometry() {
        let g = EdgeGeometry::new(32, None).unwrap();
        assert_eq!(g.slot_size, 136);
        assert_eq!(g.slots_per_page, (4096 - 12) / 136);
        assert_eq!(EdgeGeometry::new(3, Some(4)).unwrap().slots_per_page, 4);
        assert_eq!(EdgeGeometry::new(96, Some(1000)).unwrap().slots_per_page, 10);
        assert!(EdgeGeometry::new(1100, None).is_err());
        assert!(EdgeGeometry::new(8, Some(0)).is_err());
    }

    #[test]
    fn slot_roundtrip_and_checksum() {
        let g = EdgeGeometry::new(4, None).unwrap();
        let mut page = vec![0u8; PAGE_SIZE];
        g.init_page(&mut page);
        g.write_slot(&mut page, 2, VertexId(9), &[VertexId(1), VertexId(2), VertexId(3)]);
        seal_page(&mut page);
        verify_page(&page).unwrap();
        g.check_header(&page).unwrap();
        let mut out = Vec::new();
        assert_eq!(g.read_slot(&page, 2, &mut out).unwrap(), VertexId(9));
        assert_eq!(out, vec![VertexId(1), VertexId(2), VertexId(3)]);
        assert_eq!(g.read_slot(&page, 0, &mut out).unwrap(), VertexId::INVALID);
        assert!(out.is_empty());

        page[100] ^= 1;
        assert!(matches!(verify_page(&page), Err(Error::ChecksumMismatch { .. })));
        page[100] ^= 1;
        page[1] ^= 1;
        assert!(verify_page(&page).is_err());
    }

    #[test]
    fn vector_geometry() {
        let g = VectorGeometry::new(64);
        assert_eq!((g.stride, g.per_page, g.pages_per_record), (256, 16, 1));
        assert_eq!(g.locate(17), (1, 256));
        assert_eq!(g.pages_for(17), 2);
        let big = VectorGeometry::new(2048);
        assert_eq!((big.per_page, big.pages_per_record), (1, 2));
        assert_eq!(big.locate(3), (6, 0));
        let odd = VectorGeometry::new(100);
        assert_eq!(odd.per_page, 10);
        assert_eq!(odd.locate(11), (1, 400));
    }

    #[test]
    fn packed_one_record_per_page_past_half() {
        let g = PackedGeometry::new(1000, 3);
        assert_eq!(g.record_size, 4016);
        assert_eq!(g.per_page, 1);
        let small = PackedGeometry::new(8, 4);
        assert_eq!(small.record_size, 52);
        assert_eq!(small.locate(VertexId(80)), (1, 52 * 2));
        let mut rec = vec![0u8; small.record_size];
        let v: Vec<f32> = (0..8).map(|i| i as f32 * 0.5).collect();
        small.encode(&v, &[VertexId(3), VertexId(1)], &mut rec);
        assert_eq!(small.decode_vector(&rec), v);
        let mut e = Vec::new();
        small.decode_edges(&rec, &mut e).unwrap();
        assert_eq!(e, vec![VertexId(3), VertexId(1)]);
    }

    proptest! {
        #[test]
        fn records_never_straddle_pages(dim in 1usize..3000, rec in 0u64..10_000) {
            let g = VectorGeometry::new(dim);
            let (page, off) = g.locate(rec);
            prop_assert!(off + g.stride <= PAGE_SIZE * g.pages_per_record);
            prop_assert!(page < g.pages_for(rec + 1));
        }

        #[test]
        fn any_slot_roundtrips(r in 1usize..64, seed in any::<u32>(), deg_frac in 0.0f64..=1.0) {
            let g = EdgeGeometry::new(r, None).unwrap();
            let deg = ((r as f64) * deg_frac) as usize;
            let nbrs: Vec<VertexId> = (0..deg as u32).map(|i| VertexId(seed.wrapping_add(i) % 1_000_000)).collect();
            let mut page = vec![0u8; PAGE_SIZE];
            g.init_page(&mut page);
            let slot = seed as usize % g.slots_per_page;
            g.write_slot(&mut page, slot, VertexId(seed % 1_000_000), &nbrs);
            seal_page(&mut page);
            prop_assert!(verify_page(&page).is_ok());
            let mut out = Vec::new();
            prop_assert_eq!(g.read_slot(&page, slot, &mut out).unwrap(), VertexId(seed % 1_000_000));
            prop_assert_eq!(out, nbrs);
        }
    }
}
