use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::LoadingMatrix;

/// Entries more than this below their row maximum are zeroed.
pub const DOMINANCE_GAP: f64 = 0.5;

/// Sparse, row-stochastic version of a loading used for entity-dimension
/// edges in network plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedLoading {
    /// Rows sum to one, or are all zero for dropped entities.
    pub values: DMatrix<f64>,
    pub dropped: Vec<bool>,
    /// Largest number of changing passes needed by any row.
    pub iterations: usize,
}

/// Simplifies one row: round `10 a` half away from zero, then alternate
/// between zeroing non-dominating entries and re-weighting to sum one until
/// nothing changes. Returns the row, the number of changing passes, and
/// whether the row ended up all zero.
pub fn simplify_row(row: &[f64]) -> (Vec<f64>, usize, bool) {
    let mut v: Vec<f64> = row.iter().map(|x| (10.0 * x).round()).collect();
    let mut iterations = 0;
    // Every changing pass after the first zeroes an entry, so len + 1 bounds it.
    for _ in 0..=row.len() + 1 {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= 0.0 {
            v.iter_mut().for_each(|x| *x = 0.0);
            return (v, iterations, true);
        }
        let mut next: Vec<f64> = v
            .iter()
            .map(|&x| if max - x > DOMINANCE_GAP { 0.0 } else { x })
            .collect();
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= sum);
        let changed = next
            .iter()
            .zip(&v)
            .any(|(a, b)| (*a == 0.0) != (*b == 0.0) || (a - b).abs() > 1e-12);
        if !changed {
            return (v, iterations, false);
        }
        v = next;
        iterations += 1;
    }
    unreachable!("simplification failed to reach a fixed point")
}

pub fn simplify_loadings(loading: &LoadingMatrix) -> SimplifiedLoading {
    let a = loading.values();
    let (n, r) = a.shape();
    let mut values = DMatrix::zeros(n, r);
    let mut dropped = vec![false; n];
    let mut iterations = 0;
    for i in 0..n {
        let row: Vec<f64> = a.row(i).iter().copied().collect();
        let (out, it, zero) = simplify_row(&row);
        for (k, v) in out.into_iter().enumerate() {
            values[(i, k)] = v;
        }
        dropped[i] = zero;
        iterations = iterations.max(it);
    }
    SimplifiedLoading {
        values,
        dropped,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_dominant_entry() {
        let (v, _, dropped) = simplify_row(&[0.8, 0.1, 0.1]);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        assert!(!dropped);
    }

    #[test]
    fn tied_entries_share() {
        let (v, _, _) = simplify_row(&[0.5, 0.5, 0.0]);
        assert_eq!(v, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        // 10 * 0.25 = 2.5 -> 3 ties with 0.3 -> 3
        let (v, _, _) = simplify_row(&[0.25, 0.3, 0.1]);
        assert_eq!(v, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn zero_row_is_dropped() {
        let (v, _, dropped) = simplify_row(&[0.0, 0.01, 0.04]);
        assert_eq!(v, vec![0.0; 3]);
        assert!(dropped);
        let l = LoadingMatrix::raw(DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.6, 0.4, 0.3, 0.3])).unwrap();
        let s = simplify_loadings(&l);
        assert_eq!(s.dropped, vec![true, false, false]);
        assert_eq!(s.values.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert_eq!(s.values.row(2).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn fixed_point_within_r_iterations(row in prop::collection::vec(0.0f64..1.0, 1..8)) {
            let (v, it, dropped) = simplify_row(&row);
            prop_assert!(it <= row.len());
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            let sum: f64 = v.iter().sum();
            if dropped {
                prop_assert_eq!(sum, 0.0);
            } else {
                prop_assert!((sum - 1.0).abs() < 1e-10);
                // applying the pass again changes nothing
                let max = v.iter().copied().fold(0.0, f64::max);
                prop_assert!(v.iter().all(|&x| x == 0.0 || max - x <= DOMINANCE_GAP));
            }
        }
    }
}
