//! Domain types shared by every stage of the pipeline.
//!
//! All types validate on construction and are immutable afterwards, so they
//! can be shared freely across threads.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking loading-matrix normalization claims.
pub const MODE_TOLERANCE: f64 = 1e-10;

/// A time-ordered sequence of `T` square `n x n` relational matrices.
///
/// Entry `(i, j)` of slice `t` is the directed relation from row entity `i`
/// to column entity `j` (for trade data: what `i` imports from `j`). When
/// `diag_missing` is set the diagonal is undefined; numerical routines read
/// masked diagonal entries as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSeries {
    slices: Vec<DMatrix<f64>>,
    entity_labels: Vec<String>,
    time_labels: Vec<String>,
    diag_missing: bool,
}

/// Checks the structural invariants of a slice sequence and returns the first
/// violation found.
pub fn validate(slices: &[DMatrix<f64>], diag_missing: bool) -> Result<()> {
    if slices.len() < 2 {
        return Err(Error::TooShort(slices.len()));
    }
    let n = slices[0].nrows();
    for (t, s) in slices.iter().enumerate() {
        if s.nrows() != n || s.ncols() != n {
            return Err(Error::Dimension {
                t,
                rows: s.nrows(),
                cols: s.ncols(),
                n,
            });
        }
    }
    if n < 2 {
        return Err(Error::TooFewEntities(n));
    }
    for (t, s) in slices.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                if diag_missing && i == j {
                    continue;
                }
                if !s[(i, j)].is_finite() {
                    return Err(Error::NonFinite { t, i, j });
                }
            }
        }
    }
    Ok(())
}

impl NetworkSeries {
    pub fn new(
        slices: Vec<DMatrix<f64>>,
        entity_labels: Vec<String>,
        time_labels: Vec<String>,
        diag_missing: bool,
    ) -> Result<Self> {
        validate(&slices, diag_missing)?;
        let n = slices[0].nrows();
        if entity_labels.len() != n {
            return Err(Error::LabelCount {
                what: "entity_labels",
                found: entity_labels.len(),
                expected: n,
            });
        }
        if time_labels.len() != slices.len() {
            return Err(Error::LabelCount {
                what: "time_labels",
                found: time_labels.len(),
                expected: slices.len(),
            });
        }
        Ok(Self {
            slices,
            entity_labels,
            time_labels,
            diag_missing,
        })
    }

    /// Builds a series with generated labels (`e1..en`, `1..T`) and a present
    /// diagonal.
    pub fn from_slices(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = slices.first().map_or(0, |s| s.nrows());
        let t = slices.len();
        Self::new(
            slices,
            (1..=n).map(|i| format!("e{i}")).collect(),
            (1..=t).map(|i| i.to_string()).collect(),
            false,
        )
    }

    /// Same labels and mask, new values.
    pub fn with_slices(&self, slices: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(
            slices,
            self.entity_labels.clone(),
            self.time_labels.clone(),
            self.diag_missing,
        )
    }

    pub fn with_diag_missing(mut self, diag_missing: bool) -> Result<Self> {
        if !diag_missing {
            validate(&self.slices, false)?;
        }
        self.diag_missing = diag_missing;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.slices[0].nrows()
    }

    /// Number of time points `T`.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn slice(&self, t: usize) -> &DMatrix<f64> {
        &self.slices[t]
    }

    pub fn into_slices(self) -> Vec<DMatrix<f64>> {
        self.slices
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entity_labels
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    pub fn diag_missing(&self) -> bool {
        self.diag_missing
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.diag_missing && i == j
    }

    /// Entry value with masked diagonal entries read as zero.
    pub fn value(&self, t: usize, i: usize, j: usize) -> f64 {
        if self.is_masked(i, j) {
            0.0
        } else {
            self.slices[t][(i, j)]
        }
    }

    /// Slice `t` with masked diagonal entries replaced by zero.
    pub fn filled_slice(&self, t: usize) -> DMatrix<f64> {
        let mut s = self.slices[t].clone();
        if self.diag_missing {
            s.fill_diagonal(0.0);
        }
        s
    }

    /// Each slice transposed; labels and mask unchanged.
    pub fn transpose(&self) -> Self {
        Self {
            slices: self.slices.iter().map(|s| s.transpose()).collect(),
            entity_labels: self.entity_labels.clone(),
            time_labels: self.time_labels.clone(),
            diag_missing: self.diag_missing,
        }
    }

    /// Contiguous sub-series `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {}) exceeds series length {}",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.slices[start..start + len].to_vec(),
            self.entity_labels.clone(),
            self.time_labels[start..start + len].to_vec(),
            self.diag_missing,
        )
    }

    pub fn entity_index(&self, label: &str) -> Result<usize> {
        self.entity_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownEntity(label.to_string()))
    }
}

/// Normalization claimed by a [`LoadingMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadingMode {
    /// Columns orthonormal: `A'A = I`.
    Orthonormal,
    /// Every column sums to one.
    ColumnSumOne,
    Raw,
}

impl LoadingMode {
    pub fn name(self) -> &'static str {
        match self {
            LoadingMode::Orthonormal => "orthonormal",
            LoadingMode::ColumnSumOne => "column-sum-one",
            LoadingMode::Raw => "raw",
        }
    }
}

/// An `n x r` loading matrix (`r < n`) together with its normalization mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingMatrix {
    values: DMatrix<f64>,
    mode: LoadingMode,
}

impl LoadingMatrix {
    pub fn new(values: DMatrix<f64>, mode: LoadingMode) -> Result<Self> {
        let (n, r) = values.shape();
        if r == 0 || r >= n {
            return Err(Error::RankOutOfRange {
                r,
                max: n.saturating_sub(1),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "loading matrix has non-finite entries".into(),
            ));
        }
        let deviation = mode_deviation(&values, mode);
        if deviation > MODE_TOLERANCE {
            return Err(Error::LoadingMode {
                mode: mode.name(),
                deviation,
            });
        }
        Ok(Self { values, mode })
    }

    pub fn raw(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, LoadingMode::Raw)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn mode(&self) -> LoadingMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn r(&self) -> usize {
        self.values.ncols()
    }

    /// Largest violation of the mode claim, recomputed from the values.
    pub fn mode_deviation(&self) -> f64 {
        mode_deviation(&self.values, self.mode)
    }
}

fn mode_deviation(values: &DMatrix<f64>, mode: LoadingMode) -> f64 {
    match mode {
        LoadingMode::Raw => 0.0,
        LoadingMode::Orthonormal => {
            let gram = values.transpose() * values;
            let r = gram.nrows();
            (gram - DMatrix::<f64>::identity(r, r)).amax()
        }
        LoadingMode::ColumnSumOne => values
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max),
    }
}

/// Latent network series: `T` matrices of shape `r_row x r_col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    slices: Vec<DMatrix<f64>>,
}

impl FactorSeries {
    pub fn new(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::TooShort(0));
        };
        let shape = first.shape();
        for (t, s) in slices.iter().enumerate() {
            if s.shape() != shape {
                return Err(Error::InvalidArgument(format!(
                    "factor slice {t} has shape {:?}, expected {shape:?}",
                    s.shape()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "factor slice {t} has non-finite entries"
                )));
            }
        }
        Ok(Self { slices })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn r_row(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn r_col(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<DMatrix<f64>> {
        self.slices
    }

    /// Time average of the factor matrices.
    pub fn mean(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.r_row(), self.r_col());
        for s in &self.slices {
            acc += s;
        }
        acc / self.slices.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `X_t = A F_t A' + E_t`
    Symmetric,
    /// `X_t = A1 F_t A2' + E_t`
    Asymmetric,
}

/// Output of a factor-model fit.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub model: ModelKind,
    pub loadings_row: LoadingMatrix,
    /// Same matrix as `loadings_row` for the symmetric model.
    pub loadings_col: LoadingMatrix,
    /// Descending, clamped eigenvalues of the matrix the row loading came
    /// from (`M` for the symmetric model, `M_col` for the asymmetric one).
    pub eigenvalues: Vec<f64>,
    /// Spectrum of `M_row` for the asymmetric model.
    pub col_eigenvalues: Option<Vec<f64>>,
    pub factors: FactorSeries,
    /// `X_t - fitted_t` on the centered input.
    pub residuals: NetworkSeries,
    /// Temporal means removed before fitting.
    pub means: DMatrix<f64>,
    pub h0: usize,
    /// `(r_row, r_col)`; equal for the symmetric model.
    pub rank: (usize, usize),
    /// Set when the requested rank exceeds the number of nonzero eigenvalues.
    pub rank_exceeds_spectrum: bool,
}

impl EstimationResult {
    /// `A_row Z_t A_col'` for time `t` (centered scale).
    pub fn fitted(&self, t: usize) -> DMatrix<f64> {
        self.loadings_row.values()
            * &self.factors.slices()[t]
            * self.loadings_col.values().transpose()
    }

    /// Centered input reconstructed as fitted plus residual.
    pub fn centered_input(&self, t: usize) -> DMatrix<f64> {
        self.fitted(t) + self.residuals.filled_slice(t)
    }
}

/// Data-generating process for the simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub t_len: usize,
    pub r: usize,
    /// Factor strength; loadings are drawn from `U(-n^(-delta/2), n^(-delta/2))`.
    pub delta: f64,
    /// AR(1) coefficients for `vec(F_t)`, column-major, length `r^2`.
    pub phi_diag: Vec<f64>,
    /// Off-diagonal value of both noise covariance factors.
    pub noise_offdiag: f64,
    pub burn_in: usize,
    pub seed: u64,
    /// Multiplier on the noise term; zero gives the exact model.
    pub noise_scale: f64,
}

/// AR(1) coefficients of the 3x3 latent network used in the simulation study.
pub const DEFAULT_PHI: [f64; 9] = [0.86, 0.93, 0.81, 0.73, 0.62, 0.61, 0.53, 0.75, 0.78];

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 20,
            t_len: 400,
            r: 3,
            delta: 0.0,
            phi_diag: DEFAULT_PHI.to_vec(),
            noise_offdiag: 0.2,
            burn_in: 200,
            seed: 0,
            noise_scale: 1.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be >= 2, got {}", self.n)));
        }
        if self.t_len < 2 {
            return Err(Error::Config(format!("T must be >= 2, got {}", self.t_len)));
        }
        if self.r == 0 || self.r >= self.n {
            return Err(Error::Config(format!(
                "r must satisfy 1 <= r < n, got r={} n={}",
                self.r, self.n
            )));
        }
        if self.phi_diag.len() != self.r * self.r {
            return Err(Error::Config(format!(
                "phi_diag has {} entries, expected r^2 = {}",
                self.phi_diag.len(),
                self.r * self.r
            )));
        }
        if let Some(p) = self.phi_diag.iter().find(|p| !(p.abs() < 1.0)) {
            return Err(Error::Config(format!(
                "AR coefficient {p} is not stationary (|phi| < 1 required)"
            )));
        }
        if !(self.noise_offdiag > -1.0 && self.noise_offdiag < 1.0) {
            return Err(Error::Config(format!(
                "noise correlation {} outside (-1, 1)",
                self.noise_offdiag
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slices(t: usize, n: usize, m: usize) -> Vec<DMatrix<f64>> {
        (0..t)
            .map(|k| DMatrix::from_fn(n, m, |i, j| (k * 31 + i * 7 + j) as f64 * 0.1))
            .collect()
    }

    #[test]
    fn well_formed_series_validates() {
        assert!(validate(&slices(3, 4, 4), false).is_ok());
        let s = NetworkSeries::from_slices(slices(3, 4, 4)).unwrap();
        assert_eq!((s.n(), s.len()), (4, 3));
    }

    #[test]
    fn shape_violation_is_reported() {
        let mut s = slices(3, 4, 4);
        s[1] = DMatrix::zeros(4, 5);
        match validate(&s, false) {
            Err(Error::Dimension { t, rows, cols, n }) => {
                assert_eq!((t, rows, cols, n), (1, 4, 5, 4))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_entry_names_its_location() {
        let mut s = slices(3, 4, 4);
        s[2][(1, 3)] = f64::NAN;
        match validate(&s, false) {
            Err(Error::NonFinite { t, i, j }) => assert_eq!((t, i, j), (2, 1, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn masked_diagonal_may_be_undefined() {
        let mut s = slices(3, 4, 4);
        s[0][(2, 2)] = f64::NAN;
        assert!(validate(&s, false).is_err());
        assert!(validate(&s, true).is_ok());
        s[0][(2, 1)] = f64::INFINITY;
        assert!(matches!(
            validate(&s, true),
            Err(Error::NonFinite { t: 0, i: 2, j: 1 })
        ));
    }

    #[test]
    fn too_short_and_too_small() {
        assert!(matches!(validate(&slices(1, 3, 3), false), Err(Error::TooShort(1))));
        assert!(matches!(
            validate(&slices(3, 1, 1), false),
            Err(Error::TooFewEntities(1))
        ));
    }

    #[test]
    fn label_counts_are_checked() {
        let err = NetworkSeries::new(slices(3, 2, 2), vec!["a".into()], vec![], false);
        assert!(matches!(err, Err(Error::LabelCount { .. })));
    }

    #[test]
    fn loading_mode_claims_are_checked() {
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(LoadingMatrix::new(q.clone(), LoadingMode::Orthonormal).is_ok());
        assert!(LoadingMatrix::new(q * 2.0, LoadingMode::Orthonormal).is_err());

        let a = DMatrix::from_row_slice(3, 2, &[0.5, 0.2, 0.25, 0.3, 0.25, 0.5]);
        let l = LoadingMatrix::new(a.clone(), LoadingMode::ColumnSumOne).unwrap();
        assert!(l.mode_deviation() < 1e-12);
        assert!(LoadingMatrix::new(a * 3.0, LoadingMode::ColumnSumOne).is_err());
    }

    #[test]
    fn loading_rank_must_be_below_n() {
        assert!(LoadingMatrix::raw(DMatrix::zeros(3, 3)).is_err());
        assert!(LoadingMatrix::raw(DMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn default_simulation_config_is_valid() {
        let cfg = SimulationConfig::default();
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.phi_diag[4] = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.noise_offdiag = 1.0;
        assert!(bad.validate().is_err());
    }
}
