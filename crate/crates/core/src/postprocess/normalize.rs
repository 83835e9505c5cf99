use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorSeries, LoadingMatrix, LoadingMode};

/// Column sums with magnitude at or below this cannot be normalized.
pub const MIN_COLUMN_SUM: f64 = 1e-8;

/// Scales each column to sum to one. Returns the new loading and the
/// original column sums `d`, so that `A = A' diag(d)`.
pub fn normalize_columns(loading: &LoadingMatrix) -> Result<(LoadingMatrix, DVector<f64>)> {
    let a = loading.values();
    let sums = DVector::from_iterator(a.ncols(), a.column_iter().map(|c| c.sum()));
    if let Some((column, &sum)) = sums
        .iter()
        .enumerate()
        .find(|(_, s)| s.abs() <= MIN_COLUMN_SUM || !s.is_finite())
    {
        return Err(Error::ZeroColumnSum { column, sum });
    }
    let mut scaled = a.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(sums.iter()) {
        col /= *s;
    }
    Ok((LoadingMatrix::new(scaled, LoadingMode::ColumnSumOne)?, sums))
}

/// Column-sum-one loading with `F_t -> D F_t D`, leaving `A F_t A'` unchanged.
pub fn normalize_symmetric(
    loading: &LoadingMatrix,
    factors: &FactorSeries,
) -> Result<(LoadingMatrix, FactorSeries)> {
    let (a, d) = normalize_columns(loading)?;
    let scaled = scale_factors(factors, &d, &d)?;
    Ok((a, scaled))
}

/// Both loadings normalized with `F_t -> D1 F_t D2`.
pub fn normalize_asymmetric(
    row: &LoadingMatrix,
    col: &LoadingMatrix,
    factors: &FactorSeries,
) -> Result<(LoadingMatrix, LoadingMatrix, FactorSeries)> {
    let (a1, d1) = normalize_columns(row)?;
    let (a2, d2) = normalize_columns(col)?;
    let scaled = scale_factors(factors, &d1, &d2)?;
    Ok((a1, a2, scaled))
}

fn scale_factors(factors: &FactorSeries, left: &DVector<f64>, right: &DVector<f64>) -> Result<FactorSeries> {
    if factors.r_row() != left.len() || factors.r_col() != right.len() {
        return Err(Error::InvalidArgument(format!(
            "factor shape {}x{} does not match loadings with {} and {} columns",
            factors.r_row(),
            factors.r_col(),
            left.len(),
            right.len()
        )));
    }
    let slices = factors
        .slices()
        .iter()
        .map(|f| DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| left[i] * f[(i, j)] * right[j]))
        .collect();
    FactorSeries::new(slices)
}

/// Outcome of zeroing negative loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub loading: LoadingMatrix,
    pub clipped_count: usize,
    /// Sum of the magnitudes of the removed entries.
    pub clipped_mass: f64,
    /// Columns with no positive entry left.
    pub zero_columns: Vec<usize>,
}

/// Entrywise `max(a, 0)`. The result is tagged raw since column sums change.
pub fn clip_negatives(loading: &LoadingMatrix) -> ClipReport {
    let mut clipped_count = 0;
    let mut clipped_mass = 0.0;
    let values = loading.values().map(|v| {
        if v < 0.0 {
            clipped_count += 1;
            clipped_mass -= v;
            0.0
        } else {
            v
        }
    });
    let zero_columns = values
        .column_iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|&v| v == 0.0))
        .map(|(k, _)| k)
        .collect();
    ClipReport {
        loading: LoadingMatrix::raw(values).expect("clipping keeps shape and finiteness"),
        clipped_count,
        clipped_mass,
        zero_columns,
    }
}
