//! Eigenanalysis of `M`, rank selection, and factor/residual extraction.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_m_pair, center, temporal_means, MMatrix};
use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::model::{EstimationResult, FactorSeries, LoadingMatrix, LoadingMode, ModelKind, NetworkSeries};

/// Relative threshold below which eigenvalues of `M` are reported as zero.
pub const PSD_CLAMP: f64 = 1e-12;

/// Relative asymmetry tolerated by [`eigen_sym`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenpairs sorted by descending eigenvalue. Each eigenvector is signed so
/// its largest-magnitude entry (lowest index on ties) is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Zeroes eigenvalues below `PSD_CLAMP * lambda_1` (including negative
    /// rounding noise).
    pub fn clamp_psd(mut self) -> Self {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        for v in &mut self.eigenvalues {
            if *v < PSD_CLAMP * top {
                *v = 0.0;
            }
        }
        self
    }

    /// First `r` eigenvectors as an `n x r` matrix.
    pub fn leading(&self, r: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, r).into_owned()
    }

    /// Count of strictly positive eigenvalues.
    pub fn numerical_rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&v| v > 0.0).count()
    }
}

pub fn eigen_sym(m: &DMatrix<f64>) -> Result<EigenSystem> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigen_sym needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    let scale = max_abs(m);
    let asymmetry = max_abs(&(m - m.transpose()));
    if asymmetry > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric { asymmetry, scale });
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidArgument("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for k in 1..n {
            if v[k].abs() > v[pivot].abs() {
                pivot = k;
            }
        }
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(dst, &v);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

impl MMatrix {
    /// Clamped eigensystem of this aggregate.
    pub fn eigen(&self) -> Result<EigenSystem> {
        Ok(eigen_sym(&self.values)?.clamp_psd())
    }
}

/// Default upper bound for the rank search: `floor(n / 2)`, at least 1.
pub fn default_r_max(n: usize) -> usize {
    (n / 2).max(1)
}

/// Eigenvalue-ratio rank estimate `argmin_{1<=j<=r_max} lambda_{j+1} / lambda_j`.
///
/// Ratios with a zero denominator never win, and the search stops at the last
/// eigenvalue above `PSD_CLAMP * lambda_1`. Ties go to the smallest `j`.
pub fn select_rank(eigenvalues: &[f64], r_max: usize) -> Result<usize> {
    if r_max == 0 || eigenvalues.len() <= r_max {
        return Err(Error::InvalidArgument(format!(
            "select_rank needs 1 <= r_max < {} (got r_max={r_max})",
            eigenvalues.len()
        )));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) || eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "eigenvalues must be finite and sorted in descending order".into(),
        ));
    }
    let top = eigenvalues[0];
    if top <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let positive = eigenvalues.iter().filter(|&&v| v > PSD_CLAMP * top).count();
    let limit = r_max.min(positive);
    let mut best = 1;
    let mut best_ratio = f64::INFINITY;
    for j in 1..=limit {
        let den = eigenvalues[j - 1];
        let ratio = if den > 0.0 {
            eigenvalues[j].max(0.0) / den
        } else {
            f64::INFINITY
        };
        if ratio < best_ratio {
            best_ratio = ratio;
            best = j;
        }
    }
    Ok(best)
}

/// Which factor model to fit, with its latent dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Symmetric { r: usize },
    Asymmetric { r_row: usize, r_col: usize },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Symmetric { .. } => ModelKind::Symmetric,
            ModelSpec::Asymmetric { .. } => ModelKind::Asymmetric,
        }
    }
}

pub fn fit(series: &NetworkSeries, spec: ModelSpec, h0: usize) -> Result<EstimationResult> {
    match spec {
        ModelSpec::Symmetric { r } => fit_symmetric(series, r, h0),
        ModelSpec::Asymmetric { r_row, r_col } => fit_asymmetric(series, r_row, r_col, h0),
    }
}

fn check_rank(r: usize, n: usize) -> Result<()> {
    if r == 0 || r >= n {
        return Err(Error::RankOutOfRange { r, max: n - 1 });
    }
    Ok(())
}

/// Fits `X_t = Q Z_t Q' + E_t` with `Q` the leading eigenvectors of the
/// combined `M`.
pub fn fit_symmetric(series: &NetworkSeries, r: usize, h0: usize) -> Result<EstimationResult> {
    check_rank(r, series.n())?;
    let means = temporal_means(series);
    let centered = center(series);
    let (m_col, m_row) = build_m_pair(&centered, h0)?;
    let eig = MMatrix::combine(&m_col, &m_row)?.eigen()?;
    let q = LoadingMatrix::new(eig.leading(r), LoadingMode::Orthonormal)?;
    let (factors, residuals) = project(&centered, q.values(), q.values())?;
    Ok(EstimationResult {
        model: ModelKind::Symmetric,
        rank_exceeds_spectrum: r > eig.numerical_rank(),
        loadings_col: q.clone(),
        loadings_row: q,
        eigenvalues: eig.eigenvalues,
        col_eigenvalues: None,
        factors,
        residuals,
        means,
        h0,
        rank: (r, r),
    })
}

/// Fits `X_t = A1 Z_t A2' + E_t`; the column vectors of `X_t` live in the span
/// of `A1`, so `A1` comes from `M_col` and `A2` from `M_row`.
pub fn fit_asymmetric(
    series: &NetworkSeries,
    r_row: usize,
    r_col: usize,
    h0: usize,
) -> Result<EstimationResult> {
    check_rank(r_row, series.n())?;
    check_rank(r_col, series.n())?;
    let means = temporal_means(series);
    let centered = center(series);
    let (m_col, m_row) = build_m_pair(&centered, h0)?;
    let eig_left = m_col.eigen()?;
    let eig_right = m_row.eigen()?;
    let a1 = LoadingMatrix::new(eig_left.leading(r_row), LoadingMode::Orthonormal)?;
    let a2 = LoadingMatrix::new(eig_right.leading(r_col), LoadingMode::Orthonormal)?;
    let (factors, residuals) = project(&centered, a1.values(), a2.values())?;
    Ok(EstimationResult {
        model: ModelKind::Asymmetric,
        rank_exceeds_spectrum: r_row > eig_left.numerical_rank()
            || r_col > eig_right.numerical_rank(),
        loadings_row: a1,
        loadings_col: a2,
        eigenvalues: eig_left.eigenvalues,
        col_eigenvalues: Some(eig_right.eigenvalues),
        factors,
        residuals,
        means,
        h0,
        rank: (r_row, r_col),
    })
}

/// `Z_t = L' X_t R` and `E_t = X_t - L Z_t R'`.
fn project(
    centered: &NetworkSeries,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
) -> Result<(FactorSeries, NetworkSeries)> {
    let lt = left.transpose();
    let rt = right.transpose();
    let mut factors = Vec::with_capacity(centered.len());
    let mut residuals = Vec::with_capacity(centered.len());
    for x in centered.slices() {
        let z = &lt * x * right;
        let fitted = left * &z * &rt;
        residuals.push(x - fitted);
        factors.push(z);
    }
    Ok((FactorSeries::new(factors)?, centered.with_slices(residuals)?))
}

/// Per-time residual sizes and the share of variance carried by the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub residual_norms: Vec<f64>,
    pub fitted_norms: Vec<f64>,
    /// `sum ||fitted||^2 / sum ||X||^2` on the centered input, in `[0, 1]`.
    pub variance_share: f64,
}

pub fn residual_diagnostics(result: &EstimationResult) -> ResidualDiagnostics {
    let mut residual_norms = Vec::with_capacity(result.factors.len());
    let mut fitted_norms = Vec::with_capacity(result.factors.len());
    let (mut fit_ss, mut total_ss) = (0.0, 0.0);
    for t in 0..result.factors.len() {
        let fitted = result.fitted(t);
        let resid = result.residuals.filled_slice(t);
        let x = &fitted + &resid;
        fit_ss += fitted.norm_squared();
        total_ss += x.norm_squared();
        residual_norms.push(resid.norm());
        fitted_norms.push(fitted.norm());
    }
    let variance_share = if total_ss > 0.0 {
        (fit_ss / total_ss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    ResidualDiagnostics {
        residual_norms,
        fitted_norms,
        variance_share,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn identity_eigensystem() {
        let e = eigen_sym(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        let v = e.eigenvectors.abs();
        // signed permutation of I
        for col in v.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12 && (col.amax() - 1.0).abs() < 1e-12);
        }
        assert!(e.eigenvectors.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn diagonal_eigensystem_is_sorted() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 2.0, 9.0]));
        let e = eigen_sym(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![9.0, 5.0, 2.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!((e.eigenvectors - expected).amax() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstruction() {
        for seed in 0..10 {
            let m = random_symmetric(6, seed);
            let e = eigen_sym(&m).unwrap();
            let v = &e.eigenvectors;
            let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.eigenvalues.clone()));
            let recon = v * lam * v.transpose();
            assert!((recon - &m).norm() <= 1e-9 * m.norm());
            assert!((v.transpose() * v - DMatrix::identity(6, 6)).amax() < 1e-9);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            for col in v.column_iter() {
                let pivot = col.iamax();
                assert!(col[pivot] > 0.0);
            }
        }
    }

    #[test]
    fn non_symmetric_input_is_rejected() {
        let mut m = random_symmetric(4, 1);
        m[(0, 3)] += 1e-3;
        assert!(matches!(eigen_sym(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn clamping_zeroes_tiny_and_negative() {
        let e = EigenSystem {
            eigenvalues: vec![1.0, 1e-13, -1e-14],
            eigenvectors: DMatrix::identity(3, 3),
        }
        .clamp_psd();
        assert_eq!(e.eigenvalues, vec![1.0, 0.0, 0.0]);
        assert_eq!(e.numerical_rank(), 1);
    }

    #[test]
    fn rank_forced_by_gap() {
        assert_eq!(select_rank(&[9.0, 3.0, 3e-6, 2e-6, 1e-6], 2).unwrap(), 2);
    }

    #[test]
    fn rank_hand_evaluated() {
        // ratios 0.5, 0.5, 0.02
        assert_eq!(select_rank(&[100.0, 50.0, 25.0, 0.5, 0.4, 0.3], 3).unwrap(), 3);
    }

    #[test]
    fn rank_tie_goes_to_smallest_index() {
        assert_eq!(select_rank(&[4.0, 2.0, 1.0], 2).unwrap(), 1);
    }

    #[test]
    fn rank_with_trailing_zeros() {
        // exact rank-3 spectrum: the ratio at j=3 is zero and j>3 never wins
        assert_eq!(select_rank(&[5.0, 4.0, 3.0, 0.0, 0.0, 0.0], 5).unwrap(), 3);
        assert_eq!(select_rank(&[5.0, 0.0, 0.0], 2).unwrap(), 1);
        assert!(matches!(select_rank(&[0.0, 0.0, 0.0], 2), Err(Error::ZeroSpectrum)));
    }

    #[test]
    fn rank_argument_checks() {
        assert!(select_rank(&[3.0, 2.0], 2).is_err());
        assert!(select_rank(&[3.0, 2.0, 1.0], 0).is_err());
        assert!(select_rank(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn default_r_max_is_half_n() {
        assert_eq!(default_r_max(20), 10);
        assert_eq!(default_r_max(23), 11);
        assert_eq!(default_r_max(3), 1);
    }

    fn ar_series(q_left: &DMatrix<f64>, q_right: &DMatrix<f64>, t: usize, seed: u64) -> NetworkSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r1, r2) = (q_left.ncols(), q_right.ncols());
        let mut z = DMatrix::<f64>::zeros(r1, r2);
        let slices = (0..t)
            .map(|_| {
                z = z.map(|v| 0.8 * v + rng.random_range(-1.0..1.0));
                q_left * &z * q_right.transpose()
            })
            .collect();
        NetworkSeries::from_slices(slices).unwrap()
    }

    fn random_orthonormal(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        crate::linalg::orthonormal_basis(&a).unwrap()
    }

    #[test]
    fn noiseless_symmetric_fit_is_exact() {
        let q = random_orthonormal(8, 2, 3);
        let s = ar_series(&q, &q, 60, 4);
        let res = fit_symmetric(&s, 2, 1).unwrap();
        let d = crate::postprocess::space_distance(res.loadings_row.values(), &q).unwrap();
        assert!(d <= 1e-6, "distance {d}");
        let centered = center(&s);
        for t in 0..s.len() {
            let x = centered.slice(t);
            assert!(res.residuals.slice(t).norm() <= 1e-8 * x.norm().max(1e-300));
            assert!((res.centered_input(t) - x).amax() <= 1e-12 * x.amax().max(1.0));
        }
        assert!(!res.rank_exceeds_spectrum);
        let diag = residual_diagnostics(&res);
        assert!((diag.variance_share - 1.0).abs() < 1e-8);
    }

    #[test]
    fn residuals_are_orthogonal_to_loading_space() {
        let q = random_orthonormal(7, 2, 5);
        let mut s = ar_series(&q, &q, 40, 6).into_slices();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for x in &mut s {
            *x += DMatrix::from_fn(7, 7, |_, _| rng.random_range(-0.3..0.3));
        }
        let res = fit_symmetric(&NetworkSeries::from_slices(s).unwrap(), 2, 2).unwrap();
        let qh = res.loadings_row.values();
        for e in res.residuals.slices() {
            assert!((qh.transpose() * e * qh).amax() < 1e-10);
        }
        let share = residual_diagnostics(&res).variance_share;
        assert!(share > 0.0 && share < 1.0);
    }

    #[test]
    fn noiseless_asymmetric_fit_is_exact() {
        let q1 = random_orthonormal(9, 2, 10);
        let q2 = random_orthonormal(9, 3, 11);
        let s = ar_series(&q1, &q2, 80, 12);
        let res = fit_asymmetric(&s, 2, 3, 1).unwrap();
        let d1 = crate::postprocess::space_distance(res.loadings_row.values(), &q1).unwrap();
        let d2 = crate::postprocess::space_distance(res.loadings_col.values(), &q2).unwrap();
        assert!(d1 <= 1e-6 && d2 <= 1e-6, "{d1} {d2}");
        assert_eq!(res.factors.r_row(), 2);
        assert_eq!(res.factors.r_col(), 3);
        assert!(res.col_eigenvalues.is_some());
    }

    #[test]
    fn symmetric_data_gives_matching_asymmetric_spaces() {
        let q = random_orthonormal(8, 3, 20);
        let s = ar_series(&q, &q, 70, 21);
        let res = fit_asymmetric(&s, 3, 3, 1).unwrap();
        let d = crate::postprocess::space_distance(res.loadings_row.values(), res.loadings_col.values()).unwrap();
        assert!(d <= 1e-6);
    }

    #[test]
    fn scaling_data_leaves_loadings_unchanged() {
        let q = random_orthonormal(6, 2, 30);
        let mut s = ar_series(&q, &q, 50, 31).into_slices();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for x in &mut s {
            *x += DMatrix::from_fn(6, 6, |_, _| rng.random_range(-0.5..0.5));
        }
        let base = NetworkSeries::from_slices(s.clone()).unwrap();
        let scaled = NetworkSeries::from_slices(s.into_iter().map(|x| x * 3.5).collect()).unwrap();
        let a = fit_symmetric(&base, 2, 1).unwrap();
        let b = fit_symmetric(&scaled, 2, 1).unwrap();
        assert!((a.loadings_row.values() - b.loadings_row.values()).amax() < 1e-9);
    }

    #[test]
    fn over_large_rank_is_flagged_not_rejected() {
        let q = random_orthonormal(6, 1, 40);
        let s = ar_series(&q, &q, 30, 41);
        let res = fit_symmetric(&s, 3, 1).unwrap();
        assert!(res.rank_exceeds_spectrum);
        assert!(fit_symmetric(&s, 0, 1).is_err());
        assert!(fit_symmetric(&s, 6, 1).is_err());
    }
}
