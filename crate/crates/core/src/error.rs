use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series must have at least 2 time points, got {0}")]
    TooShort(usize),

    #[error("series must have at least 2 entities, got {0}")]
    TooFewEntities(usize),

    #[error("slice {t} has shape {rows}x{cols}, expected {n}x{n}")]
    Dimension {
        t: usize,
        rows: usize,
        cols: usize,
        n: usize,
    },

    #[error("{what} has {found} labels, expected {expected}")]
    LabelCount {
        what: &'static str,
        found: usize,
        expected: usize,
    },

    #[error("non-finite value at (t={t}, i={i}, j={j})")]
    NonFinite { t: usize, i: usize, j: usize },

    #[error("lag {h} out of range 1..={max}")]
    LagOutOfRange { h: usize, max: usize },

    #[error("entity index ({i}, {j}) out of range for n={n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },

    #[error("rank {r} out of range 1..={max}")]
    RankOutOfRange { r: usize, max: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} relative to scale {scale:e})")]
    NotSymmetric { asymmetry: f64, scale: f64 },

    #[error("eigenvalue spectrum is identically zero")]
    ZeroSpectrum,

    #[error("input matrix is rank deficient (rank {rank} < {expected} columns)")]
    RankDeficient { rank: usize, expected: usize },

    #[error("column counts differ: {left} vs {right}")]
    ColumnMismatch { left: usize, right: usize },

    #[error("loading matrix does not satisfy its {mode} claim (deviation {deviation:e})")]
    LoadingMode { mode: &'static str, deviation: f64 },

    #[error("column {column} sums to {sum:e}, too close to zero to normalize")]
    ZeroColumnSum { column: usize, sum: f64 },

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("duplicate record for (period={period}, importer={importer}, exporter={exporter})")]
    Duplicate {
        period: String,
        importer: String,
        exporter: String,
    },

    #[error("incomplete panel: {count} missing records, first: {}", format_missing(.missing))]
    IncompletePanel {
        count: usize,
        missing: Vec<(String, String, String)>,
    },

    #[error("nonpositive value {value} at (t={t}, i={i}, j={j})")]
    NonPositive {
        t: usize,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("unknown entity {0:?}")]
    UnknownEntity(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_missing(missing: &[(String, String, String)]) -> String {
    missing
        .iter()
        .take(5)
        .map(|(p, a, b)| format!("({p}, {a}, {b})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
