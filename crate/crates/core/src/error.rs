use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("code {code} out of range for domain of size {size}")]
    Domain { code: u64, size: u64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("all probability mass fell on non-existent combinations")]
    DegenerateDist,

    #[error("unconditioned join is empty")]
    ZeroJoin,

    #[error("training diverged: {0}")]
    Train(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unsupported format version {found_major}.{found_minor} (reader supports {supported_major}.x)")]
    Version { found_major: u16, found_minor: u16, supported_major: u16 },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 data, 4 integrity, 5 resource.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Integrity(_) | Error::Version { .. } => 4,
            Error::Resource(_) => 5,
            _ => 3,
        }
    }
}
