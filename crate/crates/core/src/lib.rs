//! Latent dynamic network estimation for time series of square relational
//! matrices.
//!
//! A series `X_1, ..., X_T` of `n x n` matrices is modelled as
//! `X_t = A F_t A' + E_t` (one loading for both sides) or
//! `X_t = A1 F_t A2' + E_t` (separate row and column loadings). Loadings are
//! estimated from the leading eigenvectors of aggregates of lagged
//! auto-cross-covariances; see [`covariance`] and [`estimator`].

pub mod covariance;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod postprocess;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{
    EstimationResult, FactorSeries, LoadingMatrix, LoadingMode, ModelKind, NetworkSeries,
    SimulationConfig,
};
