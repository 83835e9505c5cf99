//! Lagged auto-cross-covariances and their aggregate `M` matrices.
//!
//! For a centered series and lag `h`, the column covariance between columns
//! `i` and `j` is
//!
//! ```text
//! Omega_col(h; i, j) = 1/(T-h) * sum_{t < T-h} X_t[:, i] X_{t+h}[:, j]'
//! ```
//!
//! and the row covariance uses rows `X_t[i, :]`, `X_{t+h}[j, :]` instead.
//! `M_col = sum_{h=1..h0} sum_{i,j} Omega_col Omega_col'`, `M_row` likewise,
//! and the combined matrix is their sum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, symmetrize, Strided};
use crate::model::NetworkSeries;

/// Which vectors of each slice are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Col,
    Row,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MKind {
    Col,
    Row,
    Combined,
}

/// Lag-`h` covariance between vectors `i` and `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCov {
    pub values: DMatrix<f64>,
    pub orientation: Orientation,
    pub h: usize,
    pub i: usize,
    pub j: usize,
}

/// Symmetric positive semi-definite aggregate of lagged covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    pub values: DMatrix<f64>,
    pub kind: MKind,
    pub h0: usize,
}

/// Removes the temporal mean of every entry. Masked diagonal entries are set
/// to zero and stay masked.
pub fn center(series: &NetworkSeries) -> NetworkSeries {
    let n = series.n();
    let means = temporal_means(series);
    let slices = series
        .slices()
        .iter()
        .map(|s| {
            DMatrix::from_fn(n, n, |i, j| {
                if series.is_masked(i, j) {
                    0.0
                } else {
                    s[(i, j)] - means[(i, j)]
                }
            })
        })
        .collect();
    series
        .with_slices(slices)
        .expect("centering preserves shape and finiteness")
}

/// Per-entry temporal mean; masked diagonal entries read as zero.
pub fn temporal_means(series: &NetworkSeries) -> DMatrix<f64> {
    let n = series.n();
    let mut sum = DMatrix::zeros(n, n);
    for s in series.slices() {
        sum += s;
    }
    let mut means = sum / series.len() as f64;
    if series.diag_missing() {
        means.fill_diagonal(0.0);
    }
    means
}

fn check_lag(series: &NetworkSeries, h: usize) -> Result<()> {
    let max = series.len().saturating_sub(2);
    if h == 0 || h > max {
        return Err(Error::LagOutOfRange { h, max });
    }
    Ok(())
}

/// Lag-`h` covariance between the `i`-th and `j`-th vectors (0-based).
pub fn omega(
    series: &NetworkSeries,
    h: usize,
    i: usize,
    j: usize,
    orientation: Orientation,
) -> Result<LagCov> {
    check_lag(series, h)?;
    let n = series.n();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    let m = series.len() - h;
    let mut values = DMatrix::zeros(n, n);
    for t in 0..m {
        for b in 0..n {
            let y = match orientation {
                Orientation::Col => series.value(t + h, b, j),
                Orientation::Row => series.value(t + h, j, b),
            };
            for a in 0..n {
                let x = match orientation {
                    Orientation::Col => series.value(t, a, i),
                    Orientation::Row => series.value(t, i, a),
                };
                values[(a, b)] += x * y;
            }
        }
    }
    values /= m as f64;
    Ok(LagCov {
        values,
        orientation,
        h,
        i,
        j,
    })
}

pub fn omega_col(series: &NetworkSeries, h: usize, i: usize, j: usize) -> Result<LagCov> {
    omega(series, h, i, j, Orientation::Col)
}

pub fn omega_row(series: &NetworkSeries, h: usize, i: usize, j: usize) -> Result<LagCov> {
    omega(series, h, i, j, Orientation::Row)
}

/// Reference construction: every `Omega(h; i, j)` is formed explicitly and
/// its outer product accumulated, `h` outermost, then `i`, then `j`.
pub fn build_m(series: &NetworkSeries, h0: usize, kind: MKind) -> Result<MMatrix> {
    check_lag(series, h0)?;
    let values = match kind {
        MKind::Col => reference_sum(series, h0, Orientation::Col)?,
        MKind::Row => reference_sum(series, h0, Orientation::Row)?,
        MKind::Combined => {
            reference_sum(series, h0, Orientation::Col)?
                + reference_sum(series, h0, Orientation::Row)?
        }
    };
    Ok(MMatrix { values, kind, h0 })
}

fn reference_sum(series: &NetworkSeries, h0: usize, orientation: Orientation) -> Result<DMatrix<f64>> {
    let n = series.n();
    let mut acc = DMatrix::zeros(n, n);
    for h in 1..=h0 {
        for i in 0..n {
            for j in 0..n {
                let om = omega(series, h, i, j, orientation)?.values;
                for b in 0..n {
                    for a in 0..n {
                        let mut s = 0.0;
                        for c in 0..n {
                            s += om[(a, c)] * om[(b, c)];
                        }
                        acc[(a, b)] += s;
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Product-based construction, equal to [`build_m`] up to rounding.
///
/// With `W` the `n^2 x T` matrix whose columns are `vec(X_t)`, the lag-`h`
/// cross moment `S(h) = W_a W_b' / (T-h)` has the `Omega(h; i, j)` as its
/// `n x n` blocks, so `M(h) = sum_i B_i B_i'` over its row blocks `B_i`. Each
/// row block is formed by one matrix product and discarded after use.
pub fn build_m_fast(series: &NetworkSeries, h0: usize, kind: MKind) -> Result<MMatrix> {
    check_lag(series, h0)?;
    let values = match kind {
        MKind::Col => fast_sum(series, h0, Orientation::Col),
        MKind::Row => fast_sum(series, h0, Orientation::Row),
        MKind::Combined => {
            fast_sum(series, h0, Orientation::Col) + fast_sum(series, h0, Orientation::Row)
        }
    };
    Ok(MMatrix { values, kind, h0 })
}

/// Both one-sided matrices from a single call: `(M_col, M_row)`.
pub fn build_m_pair(series: &NetworkSeries, h0: usize) -> Result<(MMatrix, MMatrix)> {
    check_lag(series, h0)?;
    Ok((
        MMatrix {
            values: fast_sum(series, h0, Orientation::Col),
            kind: MKind::Col,
            h0,
        },
        MMatrix {
            values: fast_sum(series, h0, Orientation::Row),
            kind: MKind::Row,
            h0,
        },
    ))
}

impl MMatrix {
    /// `M_col + M_row`, entrywise.
    pub fn combine(col: &MMatrix, row: &MMatrix) -> Result<MMatrix> {
        if col.kind != MKind::Col || row.kind != MKind::Row || col.h0 != row.h0 {
            return Err(Error::InvalidArgument(
                "combine expects a col and a row matrix with the same h0".into(),
            ));
        }
        Ok(MMatrix {
            values: &col.values + &row.values,
            kind: MKind::Combined,
            h0: col.h0,
        })
    }
}

/// Stacks `vec(X_t)` (or `vec(X_t')` for rows) as the columns of a flat
/// column-major `n^2 x T` buffer.
fn stacked(series: &NetworkSeries, orientation: Orientation) -> Vec<f64> {
    let n = series.n();
    let nn = n * n;
    let mut w = vec![0.0; nn * series.len()];
    for (t, s) in series.slices().iter().enumerate() {
        let col = &mut w[t * nn..(t + 1) * nn];
        match orientation {
            Orientation::Col => col.copy_from_slice(s.as_slice()),
            Orientation::Row => {
                for i in 0..n {
                    for a in 0..n {
                        col[a + i * n] = s[(i, a)];
                    }
                }
            }
        }
        if series.diag_missing() {
            for d in 0..n {
                col[d + d * n] = 0.0;
            }
        }
    }
    w
}

fn fast_sum(series: &NetworkSeries, h0: usize, orientation: Orientation) -> DMatrix<f64> {
    let n = series.n();
    let nn = n * n;
    let t_len = series.len();
    let w = stacked(series, orientation);
    let mut block = vec![0.0; n * nn];
    let mut acc = vec![0.0; n * n];
    for h in 1..=h0 {
        let m = t_len - h;
        for i in 0..n {
            // B_i = Y_i W_b' / (T-h), Y_i = rows [i n, (i+1) n) of W_a.
            gemm(
                n,
                m,
                nn,
                1.0 / m as f64,
                &w,
                Strided {
                    offset: i * n,
                    rs: 1,
                    cs: nn,
                },
                &w,
                Strided {
                    offset: h * nn,
                    rs: nn,
                    cs: 1,
                },
                0.0,
                &mut block,
                Strided {
                    offset: 0,
                    rs: 1,
                    cs: n,
                },
            );
            // acc += B_i B_i'
            gemm(
                n,
                nn,
                n,
                1.0,
                &block,
                Strided {
                    offset: 0,
                    rs: 1,
                    cs: n,
                },
                &block,
                Strided {
                    offset: 0,
                    rs: n,
                    cs: 1,
                },
                1.0,
                &mut acc,
                Strided {
                    offset: 0,
                    rs: 1,
                    cs: n,
                },
            );
        }
    }
    let mut out = DMatrix::from_vec(n, n, acc);
    symmetrize(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_series(n: usize, t: usize, seed: u64) -> NetworkSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slices = (0..t)
            .map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        NetworkSeries::from_slices(slices).unwrap()
    }

    fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn centering_removes_constants() {
        let c = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let s = NetworkSeries::from_slices(vec![c.clone(); 4]).unwrap();
        let centered = center(&s);
        assert!(centered.slices().iter().all(|x| x.amax() == 0.0));
    }

    #[test]
    fn two_point_centering() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let b = DMatrix::from_element(2, 2, 3.0);
        let c = center(&NetworkSeries::from_slices(vec![a, b]).unwrap());
        assert_eq!(c.slice(0)[(0, 1)], -1.0);
        assert_eq!(c.slice(1)[(0, 1)], 1.0);
    }

    #[test]
    fn centering_is_idempotent() {
        let once = center(&random_series(4, 9, 3));
        let twice = center(&once);
        for (a, b) in once.slices().iter().zip(twice.slices()) {
            assert!((a - b).amax() <= 1e-15);
        }
        let means = temporal_means(&once);
        assert!(means.amax() < 1e-12);
    }

    #[test]
    fn centering_keeps_mask() {
        let s = random_series(3, 5, 1).with_diag_missing(true).unwrap();
        let c = center(&s);
        assert!(c.diag_missing());
        assert!(c.slices().iter().all(|x| x.diagonal().amax() == 0.0));
    }

    #[test]
    fn omega_on_zero_series_is_zero() {
        let s = NetworkSeries::from_slices(vec![DMatrix::zeros(3, 3); 5]).unwrap();
        assert_eq!(omega_col(&s, 1, 0, 2).unwrap().values.amax(), 0.0);
        assert_eq!(omega_row(&s, 2, 1, 1).unwrap().values.amax(), 0.0);
    }

    #[test]
    fn omega_hand_enumerated() {
        // n=2, T=3, h=1: Omega_col(1; 0, 1) = (x_{0,:0} x_{1,:1}' + x_{1,:0} x_{2,:1}') / 2
        let x0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x1 = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 1.0]);
        let x2 = DMatrix::from_row_slice(2, 2, &[-2.0, 3.0, 1.0, 0.0]);
        let s = NetworkSeries::from_slices(vec![x0, x1, x2]).unwrap();
        // column 0 of x0 = (1,3), column 1 of x1 = (-1,1)
        // column 0 of x1 = (0.5,2), column 1 of x2 = (3,0)
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[
                (1.0 * -1.0 + 0.5 * 3.0) / 2.0,
                (1.0 * 1.0 + 0.5 * 0.0) / 2.0,
                (3.0 * -1.0 + 2.0 * 3.0) / 2.0,
                (3.0 * 1.0 + 2.0 * 0.0) / 2.0,
            ],
        );
        let got = omega_col(&s, 1, 0, 1).unwrap().values;
        assert!((got - expected).amax() < 1e-15);
    }

    #[test]
    fn omega_row_matches_loop_oracle() {
        let s = random_series(3, 6, 11);
        for h in 1..=4 {
            for i in 0..3 {
                for j in 0..3 {
                    let got = omega_row(&s, h, i, j).unwrap().values;
                    let mut want = DMatrix::zeros(3, 3);
                    for t in 0..(6 - h) {
                        let x = s.slice(t).row(i).transpose();
                        let y = s.slice(t + h).row(j);
                        want += x * y;
                    }
                    want /= (6 - h) as f64;
                    assert!((got - want).amax() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn alternating_zero_columns_give_zero() {
        // column 0 is zero in every other slice, so every lag-1 product vanishes
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s = NetworkSeries::from_slices(vec![a.clone(), b.clone(), a, b]).unwrap();
        assert_eq!(omega_col(&s, 1, 0, 0).unwrap().values.amax(), 0.0);
    }

    #[test]
    fn symmetric_slices_make_row_equal_col() {
        let s = random_series(4, 7, 5);
        let sym = s
            .with_slices(s.slices().iter().map(|x| x + x.transpose()).collect())
            .unwrap();
        for (i, j) in [(0, 0), (1, 3), (2, 1)] {
            let c = omega_col(&sym, 2, i, j).unwrap().values;
            let r = omega_row(&sym, 2, i, j).unwrap().values;
            assert!((c - r).amax() < 1e-14);
        }
    }

    #[test]
    fn lag_and_index_ranges() {
        let s = random_series(3, 5, 2);
        assert!(matches!(omega_col(&s, 0, 0, 0), Err(Error::LagOutOfRange { .. })));
        assert!(matches!(omega_col(&s, 4, 0, 0), Err(Error::LagOutOfRange { h: 4, max: 3 })));
        assert!(omega_col(&s, 3, 0, 0).is_ok());
        assert!(matches!(omega_col(&s, 1, 3, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(build_m(&s, 4, MKind::Col).is_err());
        assert!(build_m_fast(&s, 0, MKind::Row).is_err());
    }

    #[test]
    fn zero_series_gives_zero_m() {
        let s = NetworkSeries::from_slices(vec![DMatrix::zeros(3, 3); 6]).unwrap();
        for kind in [MKind::Col, MKind::Row, MKind::Combined] {
            assert_eq!(build_m(&s, 2, kind).unwrap().values.amax(), 0.0);
            assert_eq!(build_m_fast(&s, 2, kind).unwrap().values.amax(), 0.0);
        }
    }

    #[test]
    fn fast_matches_reference_n4() {
        let s = center(&random_series(4, 12, 42));
        for kind in [MKind::Col, MKind::Row, MKind::Combined] {
            let r = build_m(&s, 2, kind).unwrap().values;
            let f = build_m_fast(&s, 2, kind).unwrap().values;
            assert!(rel_frobenius(&f, &r) <= 1e-10);
        }
    }

    #[test]
    fn combined_is_col_plus_row_exactly() {
        let s = center(&random_series(5, 10, 7));
        let col = build_m(&s, 2, MKind::Col).unwrap().values;
        let row = build_m(&s, 2, MKind::Row).unwrap().values;
        let both = build_m(&s, 2, MKind::Combined).unwrap().values;
        assert_eq!(both, &col + &row);
        let (fc, fr) = build_m_pair(&s, 2).unwrap();
        let fb = build_m_fast(&s, 2, MKind::Combined).unwrap().values;
        assert_eq!(fb, &fc.values + &fr.values);
        assert_eq!(MMatrix::combine(&fc, &fr).unwrap().values, fb);
    }

    #[test]
    fn transpose_duality() {
        let s = center(&random_series(4, 9, 9));
        let row = build_m(&s, 2, MKind::Row).unwrap().values;
        let col_t = build_m(&s.transpose(), 2, MKind::Col).unwrap().values;
        assert!(rel_frobenius(&col_t, &row) < 1e-13);
    }

    #[test]
    fn masked_diagonal_reads_as_zero() {
        let mut slices = random_series(3, 6, 4).into_slices();
        let zeroed: Vec<_> = slices
            .iter()
            .map(|s| {
                let mut z = s.clone();
                z.fill_diagonal(0.0);
                z
            })
            .collect();
        for s in &mut slices {
            s.fill_diagonal(f64::NAN);
        }
        let masked = NetworkSeries::from_slices(zeroed.clone())
            .unwrap()
            .with_slices(slices)
            .unwrap_err();
        assert!(matches!(masked, Error::NonFinite { .. }));

        let base = NetworkSeries::from_slices(zeroed).unwrap();
        let mut nan_slices = base.slices().to_vec();
        for s in &mut nan_slices {
            s.fill_diagonal(f64::NAN);
        }
        let masked = NetworkSeries::new(
            nan_slices,
            base.entity_labels().to_vec(),
            base.time_labels().to_vec(),
            true,
        )
        .unwrap();
        let a = build_m_fast(&masked, 1, MKind::Combined).unwrap().values;
        let b = build_m_fast(&base, 1, MKind::Combined).unwrap().values;
        let c = build_m(&masked, 1, MKind::Combined).unwrap().values;
        assert_eq!(a, b);
        assert!(rel_frobenius(&c, &b) < 1e-12);
    }
}
