use crate::error::{Error, Result};
use crate::estimator::{fit, ModelSpec};
use crate::model::NetworkSeries;

/// Default stopping tolerance, relative to the largest observed magnitude.
pub const IMPUTE_TOLERANCE: f64 = 1e-6;
pub const IMPUTE_MAX_ITER: usize = 50;

#[derive(Debug, Clone)]
pub struct Imputation {
    /// Series with the diagonal filled in and no longer masked.
    pub series: NetworkSeries,
    /// Number of fits performed to produce `series`.
    pub iterations: usize,
    pub converged: bool,
    /// Largest diagonal change in the step that produced `series`.
    pub change: f64,
}

/// Fills a missing diagonal from the model itself: start from zero, then
/// alternately fit and replace the diagonal with the fitted diagonal until the largest change falls below `tol` times the largest
/// observed magnitude. Off-diagonal entries are never touched.
///
/// The fitted value includes the temporal mean projected onto the loading
/// spaces, so the level of the diagonal is estimated along with its
/// fluctuations.
///
/// Without convergence the iterate with the smallest change is returned and
/// `converged` is false.
pub fn impute_diagonal(
    series: &NetworkSeries,
    spec: ModelSpec,
    h0: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Imputation> {
    if !series.diag_missing() {
        return Err(Error::InvalidArgument("series has no missing diagonal to impute".into()));
    }
    if max_iter == 0 || tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need max_iter >= 1 and tol >= 0, got {max_iter} and {tol}"
        )));
    }
    let n = series.n();
    let mut slices: Vec<_> = (0..series.len()).map(|t| series.filled_slice(t)).collect();
    let scale = slices
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = tol * if scale > 0.0 { scale } else { 1.0 };

    let mut best: Option<Imputation> = None;
    for iteration in 1..=max_iter {
        let current = series.with_slices(slices.clone())?.with_diag_missing(false)?;
        let res = fit(&current, spec, h0)?;
        let (a1, a2) = (res.loadings_row.values(), res.loadings_col.values());
        let level = a1 * (a1.transpose() * &res.means * a2) * a2.transpose();
        let mut change = 0.0f64;
        for (t, s) in slices.iter_mut().enumerate() {
            let fitted = res.fitted(t);
            for i in 0..n {
                let v = fitted[(i, i)] + level[(i, i)];
                change = change.max((v - s[(i, i)]).abs());
                s[(i, i)] = v;
            }
        }
        let converged = change < threshold;
        if converged || best.as_ref().is_none_or(|b| change < b.change) {
            best = Some(Imputation {
                series: series.with_slices(slices.clone())?.with_diag_missing(false)?,
                iterations: iteration,
                converged,
                change,
            });
        }
        if converged {
            break;
        }
    }
    Ok(best.expect("at least one iteration runs"))
}
