//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Strided view descriptor: element `(r, c)` lives at `offset + r * rs + c * cs`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Strided {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl Strided {
    fn last(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs
    }
}

/// `c = alpha * a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`, all
/// described by strides into flat buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    av: Strided,
    b: &[f64],
    bv: Strided,
    beta: f64,
    c: &mut [f64],
    cv: Strided,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k > 0, "gemm with empty inner dimension");
    assert!(av.last(m, k) < a.len(), "gemm: a out of bounds");
    assert!(bv.last(k, n) < b.len(), "gemm: b out of bounds");
    assert!(cv.last(m, n) < c.len(), "gemm: c out of bounds");
    // SAFETY: the asserts above bound every element the kernel touches, and
    // `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `(m + m') / 2`.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Orthonormal basis of the column space via Householder QR. Fails when the
/// columns are numerically dependent.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = a.shape();
    if r == 0 || r > n {
        return Err(Error::RankDeficient {
            rank: r.min(n),
            expected: r,
        });
    }
    let qr = a.clone().qr();
    let rmat = qr.r();
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let rank = (0..r).filter(|&k| rmat[(k, k)].abs() > tol).count();
    if rank < r || scale == 0.0 {
        return Err(Error::RankDeficient { rank, expected: r });
    }
    Ok(qr.q().columns(0, r).into_owned())
}

/// Projector `Q Q'` onto the column space of `a`.
pub fn projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = orthonormal_basis(a)?;
    Ok(&q * q.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_gemm_matches_nalgebra() {
        let a = DMatrix::from_fn(7, 9, |i, j| (i as f64 - 2.0 * j as f64).sin());
        let b = DMatrix::from_fn(9, 8, |i, j| (i * j) as f64 * 0.01 + 1.0);
        let mut c = vec![0.0; 7 * 8];
        let col = |rows: usize| Strided {
            offset: 0,
            rs: 1,
            cs: rows,
        };
        gemm(7, 9, 8, 1.0, a.as_slice(), col(7), b.as_slice(), col(9), 0.0, &mut c, col(7));
        let expected = &a * &b;
        let got = DMatrix::from_vec(7, 8, c);
        assert!((got - expected).amax() < 1e-12);
    }

    #[test]
    fn transposed_operand_through_strides() {
        let a = DMatrix::from_fn(6, 10, |i, j| (i + 2 * j) as f64);
        let mut c = vec![0.0; 36];
        let av = Strided {
            offset: 0,
            rs: 1,
            cs: 6,
        };
        let at = Strided {
            offset: 0,
            rs: 6,
            cs: 1,
        };
        gemm(6, 10, 6, 1.0, a.as_slice(), av, a.as_slice(), at, 0.0, &mut c, av);
        let expected = &a * a.transpose();
        assert!((DMatrix::from_vec(6, 6, c) - expected).amax() < 1e-9);
    }

    #[test]
    fn rank_deficient_basis_is_rejected() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            orthonormal_basis(&a),
            Err(Error::RankDeficient { rank: 1, expected: 2 })
        ));
    }
}
