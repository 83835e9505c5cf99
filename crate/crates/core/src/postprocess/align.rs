use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorSeries, LoadingMatrix};

/// Column permutation for one window: slot `k` takes source column
/// `permutation[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPlan {
    pub permutation: Vec<usize>,
    /// `(slot, entity)` pairs used to fix the leading slots.
    pub anchors: Vec<(usize, usize)>,
}

impl AlignmentPlan {
    pub fn identity(r: usize) -> Self {
        Self {
            permutation: (0..r).collect(),
            anchors: Vec::new(),
        }
    }

    pub fn apply(&self, loading: &LoadingMatrix) -> Result<LoadingMatrix> {
        let a = loading.values();
        let cols: Vec<_> = self.permutation.iter().map(|&c| a.column(c)).collect();
        LoadingMatrix::new(DMatrix::from_columns(&cols), loading.mode())
    }

    /// Reorders factor rows by `self` and factor columns by `col_plan`.
    pub fn apply_factors(&self, factors: &FactorSeries, col_plan: &AlignmentPlan) -> Result<FactorSeries> {
        let rows = &self.permutation;
        let cols = &col_plan.permutation;
        let slices = factors
            .slices()
            .iter()
            .map(|f| DMatrix::from_fn(rows.len(), cols.len(), |k, l| f[(rows[k], cols[l])]))
            .collect();
        FactorSeries::new(slices)
    }
}

/// Greedy anchor alignment across windows.
///
/// For each window, slot `k` receives the not-yet-assigned column with the
/// largest loading on `anchors[k]` (lowest column index on ties); remaining
/// columns fill the trailing slots in their original order.
pub fn align_windows(loadings: &[LoadingMatrix], anchors: &[usize]) -> Result<Vec<AlignmentPlan>> {
    let Some(first) = loadings.first() else {
        return Ok(Vec::new());
    };
    let (n, r) = (first.n(), first.r());
    if anchors.len() > r {
        return Err(Error::InvalidArgument(format!(
            "{} anchors for only {r} columns",
            anchors.len()
        )));
    }
    for (k, &e) in anchors.iter().enumerate() {
        if e >= n {
            return Err(Error::IndexOutOfRange { i: e, j: 0, n });
        }
        if anchors[..k].contains(&e) {
            return Err(Error::InvalidArgument(format!("anchor entity {e} repeated")));
        }
    }
    loadings
        .iter()
        .map(|l| {
            if l.n() != n || l.r() != r {
                return Err(Error::InvalidArgument(format!(
                    "loading shape {}x{} differs from {n}x{r}",
                    l.n(),
                    l.r()
                )));
            }
            let a = l.values();
            let mut used = vec![false; r];
            let mut permutation = Vec::with_capacity(r);
            let mut plan_anchors = Vec::with_capacity(anchors.len());
            for (slot, &entity) in anchors.iter().enumerate() {
                let mut best: Option<usize> = None;
                for c in (0..r).filter(|&c| !used[c]) {
                    if best.is_none_or(|b| a[(entity, c)] > a[(entity, b)]) {
                        best = Some(c);
                    }
                }
                let c = best.expect("fewer anchors than columns");
                used[c] = true;
                permutation.push(c);
                plan_anchors.push((slot, entity));
            }
            permutation.extend((0..r).filter(|&c| !used[c]));
            Ok(AlignmentPlan {
                permutation,
                anchors: plan_anchors,
            })
        })
        .collect()
}
