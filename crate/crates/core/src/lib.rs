//! Algorithmic core of an SSD-resident proximity-graph vector index.
//!
//! Everything in this crate is pure computation over caller-provided buffers:
//! candidate pools, product quantization, α-pruning, the beam traversal and
//! the convergence-aware reranking loop (both generic over their data source),
//! page codecs for the edgelist, vector and packed files, and the greedy
//! locality placement. IO, caching, and concurrency live in the `pagegraph`
//! crate.

#![no_std]

extern crate alloc;

pub mod beam;
pub mod casr;
pub mod entrance;
mod error;
pub mod layout;
pub mod model;
pub mod placement;
pub mod pq;
pub mod prune;

pub use error::{Error, Result};
pub use model::{l2_distance, Candidate, CandidatePool, GraphParams, SearchParams, VertexId};
