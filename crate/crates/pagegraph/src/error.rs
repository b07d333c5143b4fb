use std::io;
use std::path::PathBuf;

use pagegraph_core::VertexId;

use crate::io::PageId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] pagegraph_core::Error),
    #[error("io error on {page:?}: {source}")]
    PageIo { page: PageId, source: io::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("empty io batch")]
    EmptyBatch,
    #[error("batch ticket {0} was already waited on")]
    DoubleWait(u64),
    #[error("unknown batch ticket {0}")]
    UnknownTicket(u64),
    #[error("page {page:?} is beyond the end of the file ({pages} pages)")]
    PageOutOfRange { page: PageId, pages: u64 },
    #[error("vertex {0:?} is not live")]
    NotFound(VertexId),
    #[error("torn read: slot {slot} of edge page {page} holds {found:?}, expected {expected:?}")]
    TornRead { page: u64, slot: u16, expected: VertexId, found: VertexId },
    #[error("corrupt edge page {page}: {source}")]
    CorruptPage { page: u64, source: pagegraph_core::Error },
    #[error("{path}: malformed at byte {offset}: {msg}")]
    Format { path: PathBuf, offset: u64, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("index capacity exhausted ({0} vertices)")]
    Capacity(usize),
    #[error("update of {0:?} without holding its page lock")]
    LockNotHeld(VertexId),
    #[error("index is empty")]
    EmptyIndex,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
