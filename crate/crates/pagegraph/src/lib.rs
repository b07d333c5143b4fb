//! SSD-resident proximity-graph vector index with decoupled storage.

pub mod cache;
pub mod codes;
pub mod config;
pub mod dataset;
pub mod entrance;
pub mod error;
pub mod io;
pub mod index;
pub mod insert;
pub mod ledger;
pub mod quant;
pub mod rmw;
pub mod search;
pub mod stats;
pub mod storage;
pub mod table;
pub mod trace;
pub mod verify;
pub mod workload;

pub use error::{Error, Result};
pub use pagegraph_core::VertexId;
pub use index::{Index, IndexParams, RerankMode, RerankPath};
pub use insert::{InsertOptions, InsertOutcome, InsertStats};
pub use search::{SearchOptions, SearchOutcome};
pub use storage::LayoutKind;
