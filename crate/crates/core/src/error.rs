use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed FLR1 data at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated FLR1 data: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("CRS mismatch: EPSG:{left} vs EPSG:{right}")]
    CrsMismatch { left: u32, right: u32 },

    #[error("EPSG:{0} is not a metric CRS; reproject before computing areas")]
    NonMetricCrs(u32),

    #[error("EPSG:{0} has no built-in geographic conversion")]
    UnsupportedCrs(u32),

    #[error("raster grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("missing auxiliary plane: {0}")]
    MissingPlane(&'static str),

    #[error("network spec line {line}: {message}")]
    NetSpec { line: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("weight count mismatch: expected {expected} float32 values, found {found}")]
    WeightCount { expected: usize, found: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("undefined rate: {0}")]
    UndefinedRate(&'static str),

    #[error("unknown land-cover class code {0}")]
    UnknownClass(u8),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
