use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::impute::{impute_diagonal, IMPUTE_MAX_ITER, IMPUTE_TOLERANCE};
use super::is_year_month;
use crate::error::{Error, Result};
use crate::estimator::{fit, ModelSpec};
use crate::model::{EstimationResult, FactorSeries, LoadingMatrix, LoadingMode, ModelKind, NetworkSeries};
use crate::postprocess::{align_windows, clip_negatives, normalize_asymmetric, normalize_symmetric, varimax, AlignmentPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSpec {
    pub window: usize,
    pub step: usize,
}

impl Default for RollingSpec {
    fn default() -> Self {
        Self { window: 60, step: 12 }
    }
}

impl RollingSpec {
    pub fn validate(&self, t_len: usize) -> Result<()> {
        if self.step == 0 || self.window == 0 || self.window > t_len {
            return Err(Error::InvalidArgument(format!(
                "window {} with step {} does not fit a series of length {t_len}",
                self.window, self.step
            )));
        }
        Ok(())
    }

    /// `floor((T - window) / step) + 1`.
    pub fn count(&self, t_len: usize) -> Result<usize> {
        self.validate(t_len)?;
        Ok((t_len - self.window) / self.step + 1)
    }

    pub fn starts(&self, t_len: usize) -> Result<Vec<usize>> {
        Ok((0..self.count(t_len)?).map(|k| k * self.step).collect())
    }
}

/// How a missing diagonal is handled in each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagPolicy {
    /// Read missing entries as zero.
    #[default]
    Zero,
    /// Fill them iteratively from the model before the final fit.
    Impute,
}

#[derive(Debug, Clone)]
pub struct RollingWindow {
    /// Label of period `ceil(window / 2)` of the window; the year alone for
    /// `YYYY-MM` labels.
    pub label: String,
    pub start: usize,
    pub result: EstimationResult,
    /// `(iterations, converged)` when the diagonal was imputed.
    pub imputation: Option<(usize, bool)>,
}

pub fn window_label(series: &NetworkSeries, start: usize, window: usize) -> String {
    let label = &series.time_labels()[start + window.div_ceil(2) - 1];
    if is_year_month(label) {
        label[..4].to_string()
    } else {
        label.clone()
    }
}

/// Fits the model independently on each window, in parallel, returned in
/// time order.
pub fn rolling_fit(
    series: &NetworkSeries,
    spec: RollingSpec,
    model: ModelSpec,
    h0: usize,
    diag: DiagPolicy,
) -> Result<Vec<RollingWindow>> {
    spec.starts(series.len())?
        .into_par_iter()
        .map(|start| {
            let w = series.window(start, spec.window)?;
            let (w, imputation) = match diag {
                DiagPolicy::Impute if w.diag_missing() => {
                    let imp = impute_diagonal(&w, model, h0, IMPUTE_TOLERANCE, IMPUTE_MAX_ITER)?;
                    (imp.series, Some((imp.iterations, imp.converged)))
                }
                _ => (w, None),
            };
            Ok(RollingWindow {
                label: window_label(series, start, spec.window),
                start,
                result: fit(&w, model, h0)?,
                imputation,
            })
        })
        .collect()
}

/// Loadings and mean factor of one window prepared for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedWindow {
    pub label: String,
    /// Nonnegative, columns summing to one (or all zero).
    pub loadings_row: LoadingMatrix,
    pub loadings_col: LoadingMatrix,
    /// Time average of the uncentered factors `A_row' X_t A_col`, carried
    /// through the same rotation, scaling and permutation as the loadings.
    pub factor_level: DMatrix<f64>,
    pub clipped_count: usize,
    pub clipped_mass: f64,
}

/// Varimax, column-sum-one scaling with factor compensation, then negative
/// clipping followed by rescaling so each column again sums to one.
pub fn present(label: &str, result: &EstimationResult) -> Result<PresentedWindow> {
    let level = result.loadings_row.values().transpose() * &result.means * result.loadings_col.values();
    let (row, r1) = varimax(&result.loadings_row)?;
    let (col, r2) = match result.model {
        ModelKind::Symmetric => (row.clone(), r1.clone()),
        ModelKind::Asymmetric => varimax(&result.loadings_col)?,
    };
    let level = FactorSeries::new(vec![r1.transpose() * level * &r2])?;
    let (row, col, level) = match result.model {
        ModelKind::Symmetric => {
            let (a, f) = normalize_symmetric(&row, &level)?;
            (a.clone(), a, f)
        }
        ModelKind::Asymmetric => normalize_asymmetric(&row, &col, &level)?,
    };
    let row_clip = clip_negatives(&row);
    let col_clip = clip_negatives(&col);
    let (clipped_count, clipped_mass) = match result.model {
        ModelKind::Symmetric => (row_clip.clipped_count, row_clip.clipped_mass),
        ModelKind::Asymmetric => (
            row_clip.clipped_count + col_clip.clipped_count,
            row_clip.clipped_mass + col_clip.clipped_mass,
        ),
    };
    Ok(PresentedWindow {
        label: label.to_string(),
        loadings_row: rescale(row_clip.loading)?,
        loadings_col: rescale(col_clip.loading)?,
        factor_level: level.into_slices().remove(0),
        clipped_count,
        clipped_mass,
    })
}

fn rescale(loading: LoadingMatrix) -> Result<LoadingMatrix> {
    let mut a = loading.into_values();
    let mut all_positive = true;
    for mut c in a.column_iter_mut() {
        let s = c.sum();
        if s > 0.0 {
            c /= s;
        } else {
            all_positive = false;
        }
    }
    let mode = if all_positive {
        LoadingMode::ColumnSumOne
    } else {
        LoadingMode::Raw
    };
    LoadingMatrix::new(a, mode)
}

/// Presents every window and aligns columns across windows on the given
/// anchor entities (row loadings and column loadings separately).
pub fn present_windows(windows: &[RollingWindow], anchors: &[usize]) -> Result<Vec<PresentedWindow>> {
    let presented = windows
        .par_iter()
        .map(|w| present(&w.label, &w.result))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = presented.iter().map(|p| p.loadings_row.clone()).collect();
    let cols: Vec<_> = presented.iter().map(|p| p.loadings_col.clone()).collect();
    let row_plans = align_windows(&rows, anchors)?;
    let col_plans = align_windows(&cols, anchors)?;
    presented
        .into_iter()
        .zip(row_plans.iter().zip(&col_plans))
        .map(|(p, (rp, cp))| apply_plans(p, rp, cp))
        .collect()
}

fn apply_plans(p: PresentedWindow, row: &AlignmentPlan, col: &AlignmentPlan) -> Result<PresentedWindow> {
    let level = row.apply_factors(&FactorSeries::new(vec![p.factor_level])?, col)?;
    Ok(PresentedWindow {
        loadings_row: row.apply(&p.loadings_row)?,
        loadings_col: col.apply(&p.loadings_col)?,
        factor_level: level.into_slices().remove(0),
        ..p
    })
}
