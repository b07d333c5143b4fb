//! Per-operation IO accounting.

use std::ops::AddAssign;

/// Bytes read from storage, split by what they turned out to be.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteCounts {
    pub useful_vector: u64,
    pub wasted_vector: u64,
    pub edgelist: u64,
    pub padding: u64,
}

impl ByteCounts {
    pub fn total(&self) -> u64 {
        self.useful_vector + self.wasted_vector + self.edgelist + self.padding
    }

    pub fn vector(&self) -> u64 {
        self.useful_vector + self.wasted_vector
    }
}

impl AddAssign for ByteCounts {
    fn add_assign(&mut self, o: Self) {
        self.useful_vector += o.useful_vector;
        self.wasted_vector += o.wasted_vector;
        self.edgelist += o.edgelist;
        self.padding += o.padding;
    }
}

/// Where each requested edge page came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Provenance {
    /// Already read earlier in the same operation.
    pub memo: u64,
    pub rmw: u64,
    pub cache: u64,
    pub disk: u64,
}

impl AddAssign for Provenance {
    fn add_assign(&mut self, o: Self) {
        self.memo += o.memo;
        self.rmw += o.rmw;
        self.cache += o.cache;
        self.disk += o.disk;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub hops: u64,
    pub expanded: u64,
    pub edge_pages_read: u64,
    /// Vector pages read from storage, including in the packed layout where
    /// they coincide with edge pages.
    pub vector_pages_read: u64,
    pub bytes: ByteCounts,
    pub provenance: Provenance,
    pub vectors_loaded: u64,
    pub vectors_consumed: u64,
    pub groups: u64,
    pub io_submissions: u64,
}

impl AddAssign for TraversalStats {
    fn add_assign(&mut self, o: Self) {
        self.hops += o.hops;
        self.expanded += o.expanded;
        self.edge_pages_read += o.edge_pages_read;
        self.vector_pages_read += o.vector_pages_read;
        self.bytes += o.bytes;
        self.provenance += o.provenance;
        self.vectors_loaded += o.vectors_loaded;
        self.vectors_consumed += o.vectors_consumed;
        self.groups += o.groups;
        self.io_submissions += o.io_submissions;
    }
}

/// Bytes written by one commit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteBytes {
    pub vector: u64,
    pub edgelist: u64,
    pub padding: u64,
}

impl WriteBytes {
    pub fn total(&self) -> u64 {
        self.vector + self.edgelist + self.padding
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommitStats {
    pub edge_pages_written: u64,
    pub vector_pages_written: u64,
    /// Page reads the commit itself needed (packed read-modify-write).
    pub pages_read: u64,
    pub slots_invalidated: u64,
    pub pages_freed: u64,
    pub bytes_written: WriteBytes,
}

impl CommitStats {
    pub fn pages_written(&self) -> u64 {
        self.edge_pages_written + self.vector_pages_written
    }
}
