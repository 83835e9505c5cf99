use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{LoadingMatrix, LoadingMode};

/// Stop once a full sweep improves the criterion by less than this.
pub const VARIMAX_TOLERANCE: f64 = 1e-10;
pub const VARIMAX_MAX_SWEEPS: usize = 100;

/// Sum over columns of the variance of the squared loadings.
pub fn varimax_criterion(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows() as f64;
    a.column_iter()
        .map(|c| {
            let (s2, s4) = c.iter().fold((0.0, 0.0), |(s2, s4), v| {
                let sq = v * v;
                (s2 + sq, s4 + sq * sq)
            });
            s4 / n - (s2 / n) * (s2 / n)
        })
        .sum()
}

/// Orthogonal Varimax rotation by sweeps of pairwise planar rotations.
///
/// Returns the rotated loading `A R` and the orthonormal rotation `R`.
/// Orthonormal inputs stay orthonormal; any other mode comes back as raw.
pub fn varimax(loading: &LoadingMatrix) -> Result<(LoadingMatrix, DMatrix<f64>)> {
    let r = loading.r();
    let mut a = loading.values().clone();
    let mut rot = DMatrix::<f64>::identity(r, r);
    if r > 1 {
        let mut current = varimax_criterion(&a);
        for _ in 0..VARIMAX_MAX_SWEEPS {
            for p in 0..r - 1 {
                for q in p + 1..r {
                    let phi = pair_angle(&a, p, q);
                    if phi.abs() > 1e-15 {
                        rotate_pair(&mut a, p, q, phi);
                        rotate_pair(&mut rot, p, q, phi);
                    }
                }
            }
            let next = varimax_criterion(&a);
            let gain = next - current;
            current = next;
            if gain < VARIMAX_TOLERANCE {
                break;
            }
        }
    }
    let mode = match loading.mode() {
        LoadingMode::Orthonormal => LoadingMode::Orthonormal,
        _ => LoadingMode::Raw,
    };
    Ok((LoadingMatrix::new(a, mode)?, rot))
}

/// Angle maximizing the criterion restricted to columns `p`, `q`.
fn pair_angle(a: &DMatrix<f64>, p: usize, q: usize) -> f64 {
    let n = a.nrows() as f64;
    let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.nrows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        let u = x * x - y * y;
        let v = 2.0 * x * y;
        sa += u;
        sb += v;
        sc += u * u - v * v;
        sd += 2.0 * u * v;
    }
    let num = sd - 2.0 * sa * sb / n;
    let den = sc - (sa * sa - sb * sb) / n;
    0.25 * num.atan2(den)
}

/// Columns `(p, q)` become `(c x + s y, -s x + c y)`.
fn rotate_pair(m: &mut DMatrix<f64>, p: usize, q: usize, phi: f64) {
    let (s, c) = phi.sin_cos();
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x + s * y;
        m[(i, q)] = -s * x + c * y;
    }
}
