use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for {len} B-scans")]
    Index { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("column {column} has no pixels of class {class}")]
    MissingLayer { column: usize, class: u8 },
    #[error("no column with a usable retina run; surfaces cannot be extracted")]
    SurfaceExtraction,
    #[error("degenerate surface pair at column {column} (ILM not above BM)")]
    DegenerateSurface { column: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
}
