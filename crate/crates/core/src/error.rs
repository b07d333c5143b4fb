use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch { expected: usize, found: usize },
    NonFinite,
    InvalidParams(&'static str),
    SampleTooSmall { needed: usize, found: usize },
    /// A subspace holds more distinct sub-vectors than a codebook table can store.
    Unrepresentable { subspace: usize, distinct: usize },
    Corrupt(&'static str),
    ChecksumMismatch { stored: u32, computed: u32 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite => f.write_str("vector contains a non-finite value"),
            Error::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
            Error::SampleTooSmall { needed, found } => {
                write!(f, "training sample too small: need {needed}, got {found}")
            }
            Error::Unrepresentable { subspace, distinct } => write!(
                f,
                "subspace {subspace} has {distinct} distinct sub-vectors, more than a codebook can hold"
            ),
            Error::Corrupt(what) => write!(f, "corrupt data: {what}"),
            Error::ChecksumMismatch { stored, computed } => {
                write!(f, "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")
            }
        }
    }
}

impl core::error::Error for Error {}
