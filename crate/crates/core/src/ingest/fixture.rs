use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::monthly_labels;
use crate::error::{Error, Result};
use crate::model::NetworkSeries;

/// Entity names used by the synthetic trade fixture, in sorted order.
pub const COUNTRIES: [&str; 23] = [
    "Australia",
    "Canada",
    "China Mainland",
    "Denmark",
    "Finland",
    "France",
    "Germany",
    "Hong Kong",
    "Indonesia",
    "Ireland",
    "Italy",
    "Japan",
    "Korea",
    "Malaysia",
    "Mexico",
    "Netherlands",
    "New Zealand",
    "Singapore",
    "Spain",
    "Sweden",
    "Thailand",
    "United Kingdom",
    "United States",
];

/// Positive monthly trade-like panel starting 1981-01 with a missing
/// diagonal: `X_t = (A F_t A') * exp(noise)` entrywise, where each entity
/// loads mainly on one of `r` dimensions and `F_t` follows a log-AR(1)
/// around a fixed level with a mild upward trend.
pub fn trade_fixture(n: usize, t_len: usize, r: usize, seed: u64) -> Result<NetworkSeries> {
    if n > COUNTRIES.len() || n < 2 || r == 0 || r >= n {
        return Err(Error::InvalidArgument(format!(
            "fixture needs 2 <= n <= {} and 1 <= r < n, got n = {n}, r = {r}",
            COUNTRIES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let a = DMatrix::from_fn(n, r, |i, k| {
        if i % r == k {
            rng.random_range(0.6..1.0)
        } else {
            rng.random_range(0.0..0.2)
        }
    });
    let size: Vec<f64> = (0..n).map(|_| (0.5 * normal(&mut rng)).exp()).collect();
    let a = DMatrix::from_fn(n, r, |i, k| a[(i, k)] * size[i]);
    let level = DMatrix::from_fn(r, r, |k, l| if k == l { 10.0 } else { 3.0 });
    let mut g = DMatrix::<f64>::zeros(r, r);
    let mut slices = Vec::with_capacity(t_len);
    for t in 0..t_len {
        g = g.map(|v| 0.9 * v + 0.1 * normal(&mut rng));
        let trend = (0.002 * t as f64).exp();
        let f = DMatrix::from_fn(r, r, |k, l| level[(k, l)] * g[(k, l)].exp() * trend);
        let mut x = &a * f * a.transpose();
        for j in 0..n {
            for i in 0..n {
                x[(i, j)] = if i == j { 0.0 } else { x[(i, j)] * (0.05 * normal(&mut rng)).exp() };
            }
        }
        slices.push(x);
    }
    NetworkSeries::new(
        slices,
        COUNTRIES[..n].iter().map(|s| s.to_string()).collect(),
        monthly_labels(1981, 1, t_len),
        true,
    )
}
