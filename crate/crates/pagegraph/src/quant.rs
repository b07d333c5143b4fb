//! PQ codebook plus the per-vertex code store, with the two distance forms
//! the engine needs: query-to-code (ADC) and code-to-code (SDC).

use pagegraph_core::pq::{DistanceTable, PqCodebook, SymmetricTable};
use pagegraph_core::VertexId;

use crate::codes::CodeStore;
use crate::error::Result;

/// Largest supported subspace count; codes are copied through a stack buffer.
pub const MAX_M: usize = 256;

pub struct Quantizer {
    book: PqCodebook,
    sdc: SymmetricTable,
    codes: CodeStore,
}

impl Quantizer {
    pub fn new(book: PqCodebook) -> Result<Self> {
        if book.m() > MAX_M {
            return Err(crate::Error::Config(format!("at most {MAX_M} PQ subspaces are supported")));
        }
        let sdc = book.symmetric_table();
        let codes = CodeStore::new(book.m());
        Ok(Self { book, sdc, codes })
    }

    pub fn codebook(&self) -> &PqCodebook {
        &self.book
    }

    pub fn codes(&self) -> &CodeStore {
        &self.codes
    }

    pub fn m(&self) -> usize {
        self.book.m()
    }

    /// Encodes `v` and publishes the code for `id`.
    pub fn assign(&self, id: VertexId, v: &[f32]) -> Result<()> {
        let mut buf = [0u8; MAX_M];
        let code = &mut buf[..self.m()];
        self.book.encode_into(v, code)?;
        self.codes.set(id, code);
        Ok(())
    }

    pub fn table(&self, q: &[f32]) -> Result<DistanceTable> {
        Ok(self.book.distance_table(q)?)
    }

    #[inline]
    pub fn adc(&self, t: &DistanceTable, v: VertexId) -> f32 {
        crate::entrance::note_distance();
        let mut buf = [0u8; MAX_M];
        let code = &mut buf[..self.m()];
        self.codes.get_into(v, code);
        t.distance(code)
    }

    #[inline]
    pub fn sdc(&self, a: VertexId, b: VertexId) -> f32 {
        crate::entrance::note_distance();
        let mut ba = [0u8; MAX_M];
        let mut bb = [0u8; MAX_M];
        let m = self.m();
        self.codes.get_into(a, &mut ba[..m]);
        self.codes.get_into(b, &mut bb[..m]);
        self.sdc.distance(&ba[..m], &bb[..m])
    }

    /// Reconstructions of `ids` from their codes, back to back.
    pub fn decode_block(&self, ids: &[VertexId]) -> Vec<f32> {
        let (m, sub) = (self.m(), self.book.sub_dim());
        let mut code = [0u8; MAX_M];
        let mut out = Vec::with_capacity(ids.len() * self.book.dim());
        for &v in ids {
            self.codes.get_into(v, &mut code[..m]);
            for (s, &c) in code[..m].iter().enumerate() {
                out.extend_from_slice(&self.book.centroid(s, c as usize)[..sub]);
            }
        }
        out
    }

    /// SDC between the `i`th and `j`th rows of a [`decode_block`](Self::decode_block)
    /// result. Same value as [`sdc`](Self::sdc) up to summation order, without
    /// touching the symmetric table.
    #[inline]
    pub fn sdc_decoded(&self, block: &[f32], i: usize, j: usize) -> f32 {
        crate::entrance::note_distance();
        let d = self.book.dim();
        lane_l2(&block[i * d..(i + 1) * d], &block[j * d..(j + 1) * d])
    }
}

/// Squared L2 with eight independent accumulators so it vectorizes.
#[inline]
fn lane_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    acc.iter().sum::<f32>() + tail
}
