use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::orthonormal_basis;

/// Distance between the column spaces of `a` and `b`:
/// `sqrt(1 - tr(P_a P_b) / r)`, which is `||P_a - P_b||_F / sqrt(2 r)`.
///
/// Zero for equal spaces, one for orthogonal ones.
pub fn space_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::ColumnMismatch {
            left: a.ncols(),
            right: b.ncols(),
        });
    }
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidArgument(format!(
            "row counts differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let r = a.ncols() as f64;
    // The projector difference avoids the cancellation in 1 - tr(P_a P_b) / r.
    let diff = &qa * qa.transpose() - &qb * qb.transpose();
    Ok((diff.norm() / (2.0 * r).sqrt()).min(1.0))
}
