use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dims {0:?}: every dimension must be at least 1")]
    InvalidDims([usize; 4]),

    #[error("data length {actual} does not match dims {dims:?} (expected {expected})")]
    LengthMismatch {
        dims: [usize; 4],
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value {value} at index (b={}, c={}, y={}, x={})", index[0], index[1], index[2], index[3])]
    NonFinite { index: [usize; 4], value: f32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("imaginary residue {imag_max:e} exceeds 1e-4 of real magnitude {real_max:e}; spectrum is not conjugate-symmetric")]
    ImaginaryResidue { imag_max: f64, real_max: f64 },

    #[error("bad magic: expected \"FMAP\"")]
    BadMagic,

    #[error("unsupported FMAP version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported FMAP dtype {0}")]
    UnsupportedDtype(u32),

    #[error("truncated FMAP: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("FMAP has {0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("FMAP dims {0:?} overflow the addressable element count")]
    DimOverflow([u64; 4]),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("malformed wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("objective failed: {0}")]
    Objective(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDims(_) => "invalid-dims",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::NonFinite { .. } => "non-finite",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::ImaginaryResidue { .. } => "imaginary-residue",
            Error::BadMagic => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::UnsupportedDtype(_) => "unsupported-dtype",
            Error::Truncated { .. } => "truncated",
            Error::TrailingBytes(_) => "trailing-bytes",
            Error::DimOverflow(_) => "dim-overflow",
            Error::InvalidParam(_) => "invalid-param",
            Error::InvalidConfig(_) => "invalid-config",
            Error::UnsupportedAudio(_) => "unsupported-audio",
            Error::Wav(_) => "wav",
            Error::Png(_) => "png",
            Error::Numerical(_) => "numerical",
            Error::Objective(_) => "objective",
            Error::Search(_) => "search",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
