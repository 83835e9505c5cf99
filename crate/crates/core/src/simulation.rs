//! Data-generating process and Monte Carlo harness for the simulation study.
//!
//! Data follow `X_t = A F_t A' + E_t` with
//! - `A` entries i.i.d. `U(-n^(-delta/2), n^(-delta/2))`,
//! - `vec(F_t) = Phi vec(F_{t-1}) + eps_t`, `Phi` diagonal, `eps_t ~ N(0, I)`,
//! - `E_t = L1 W_t L2'` with `W_t` standard normal and `L L'` the
//!   equicorrelation matrix with unit diagonal, so `Cov(vec E_t) = G2 (x) G1`.
//!
//! Every replication draws from ChaCha8 substreams keyed by `(seed, rep)`, one
//! stream each for the loading, the factors and the noise, so results do not
//! depend on thread count and components can be regenerated independently.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{build_m_pair, center, MMatrix};
use crate::error::{Error, Result};
use crate::estimator::{default_r_max, select_rank};
use crate::ingest::monthly_labels;
use crate::model::{FactorSeries, LoadingMatrix, NetworkSeries, SimulationConfig};
use crate::postprocess::space_distance;

const STREAMS_PER_REP: u64 = 4;

#[derive(Debug, Clone, Copy)]
enum Component {
    Loading = 0,
    Factors = 1,
    Noise = 2,
}

fn stream(seed: u64, rep: u64, part: Component) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep * STREAMS_PER_REP + part as u64);
    rng
}

/// Raw random components of one replication.
#[derive(Debug, Clone)]
pub struct Draws {
    pub loading: DMatrix<f64>,
    pub factors: Vec<DMatrix<f64>>,
    /// Empty when `noise_scale` is zero.
    pub noise: Vec<DMatrix<f64>>,
}

/// A generated series together with the truth it came from.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub series: NetworkSeries,
    pub loading: LoadingMatrix,
    pub factors: FactorSeries,
}

/// Equicorrelation matrix: ones on the diagonal, `rho` elsewhere.
pub fn equicorrelation(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
}

pub fn draw_loading(config: &SimulationConfig, rep: u64) -> DMatrix<f64> {
    let mut rng = stream(config.seed, rep, Component::Loading);
    let bound = (config.n as f64).powf(-config.delta / 2.0);
    DMatrix::from_fn(config.n, config.r, |_, _| rng.random_range(-bound..bound))
}

pub fn draw_factors(config: &SimulationConfig, rep: u64) -> Vec<DMatrix<f64>> {
    let mut rng = stream(config.seed, rep, Component::Factors);
    let r = config.r;
    let mut state = vec![0.0; r * r];
    let step = |rng: &mut ChaCha8Rng, state: &mut [f64]| {
        for (x, phi) in state.iter_mut().zip(&config.phi_diag) {
            let e: f64 = rng.sample(StandardNormal);
            *x = phi * *x + e;
        }
    };
    for _ in 0..config.burn_in {
        step(&mut rng, &mut state);
    }
    (0..config.t_len)
        .map(|_| {
            step(&mut rng, &mut state);
            DMatrix::from_column_slice(r, r, &state)
        })
        .collect()
}

pub fn draw_noise(config: &SimulationConfig, rep: u64) -> Result<Vec<DMatrix<f64>>> {
    if config.noise_scale == 0.0 {
        return Ok(Vec::new());
    }
    let n = config.n;
    let chol = Cholesky::new(equicorrelation(n, config.noise_offdiag)).ok_or_else(|| {
        Error::Config(format!(
            "noise covariance with off-diagonal {} is not positive definite",
            config.noise_offdiag
        ))
    })?;
    let l = chol.l() * config.noise_scale;
    let lt = chol.l().transpose();
    let mut rng = stream(config.seed, rep, Component::Noise);
    Ok((0..config.t_len)
        .map(|_| {
            let w = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &l * w * &lt
        })
        .collect())
}

pub fn draw(config: &SimulationConfig, rep: u64) -> Result<Draws> {
    config.validate()?;
    Ok(Draws {
        loading: draw_loading(config, rep),
        factors: draw_factors(config, rep),
        noise: draw_noise(config, rep)?,
    })
}

/// `X_t = A F_t A' + E_t`; an empty noise list means `E_t = 0`.
pub fn assemble(loading: &DMatrix<f64>, factors: &[DMatrix<f64>], noise: &[DMatrix<f64>]) -> Result<NetworkSeries> {
    if !noise.is_empty() && noise.len() != factors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} noise slices for {} factor slices",
            noise.len(),
            factors.len()
        )));
    }
    let at = loading.transpose();
    let slices: Vec<_> = factors
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut x = loading * f * &at;
            if let Some(e) = noise.get(t) {
                x += e;
            }
            x
        })
        .collect();
    let n = loading.nrows();
    NetworkSeries::new(
        slices,
        entity_labels(n),
        monthly_labels(1981, 1, factors.len()),
        false,
    )
}

/// `E01, E02, ...`, zero-padded to a common width.
pub fn entity_labels(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("E{i:0width$}")).collect()
}

pub fn generate(config: &SimulationConfig) -> Result<SimulatedData> {
    generate_rep(config, 0)
}

pub fn generate_rep(config: &SimulationConfig, rep: u64) -> Result<SimulatedData> {
    let d = draw(config, rep)?;
    let series = assemble(&d.loading, &d.factors, &d.noise)?;
    Ok(SimulatedData {
        series,
        loading: LoadingMatrix::raw(d.loading)?,
        factors: FactorSeries::new(d.factors)?,
    })
}

/// Loading estimators compared in the study, by source matrix.
pub const ESTIMATORS: [&str; 3] = ["R", "C", "RnC"];

/// One cell of the simulation grid; `T = round(t_mult * n^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub delta: f64,
    pub n: usize,
    pub t_mult: f64,
}

impl Cell {
    pub fn t_len(&self) -> usize {
        (self.t_mult * (self.n * self.n) as f64).round() as usize
    }

    /// Seed for this cell, mixed from the run seed and the cell coordinates
    /// so a cell gives the same draws whichever grid it appears in.
    pub fn seed(&self, base: u64) -> u64 {
        let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
        for v in [self.delta.to_bits(), self.n as u64, self.t_len() as u64] {
            h = splitmix64(h ^ v);
        }
        h
    }

    pub fn config(&self, base: &SimulationConfig, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n: self.n,
            t_len: self.t_len(),
            delta: self.delta,
            seed: self.seed(seed),
            ..base.clone()
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The full simulation grid: `delta in {0, 0.5}`, `n in {20, 40, 60}`,
/// `T / n^2 in {0.5, 1, 1.5, 2}`.
pub fn design_grid() -> Vec<Cell> {
    let mut grid = Vec::new();
    for delta in [0.0, 0.5] {
        for n in [20, 40, 60] {
            for t_mult in [0.5, 1.0, 1.5, 2.0] {
                grid.push(Cell { delta, n, t_mult });
            }
        }
    }
    grid
}

/// Per-replication results, indexed like [`ESTIMATORS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub distance: [f64; 3],
    pub rank: [usize; 3],
}

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub base: SimulationConfig,
    pub h0: usize,
    /// Defaults to `floor(n / 2)` per cell.
    pub r_max: Option<usize>,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            base: SimulationConfig::default(),
            h0: 1,
            r_max: None,
            seed: 1,
        }
    }
}

pub fn run_rep(cell: &Cell, rep: u64, settings: &RunSettings) -> Result<RepOutcome> {
    let config = cell.config(&settings.base, settings.seed);
    let data = generate_rep(&config, rep)?;
    let centered = center(&data.series);
    let (m_col, m_row) = build_m_pair(&centered, settings.h0)?;
    let m = MMatrix::combine(&m_col, &m_row)?;
    let r = config.r;
    let r_max = settings.r_max.unwrap_or_else(|| default_r_max(config.n));
    let mut distance = [0.0; 3];
    let mut rank = [0; 3];
    for (k, mat) in [&m_row, &m_col, &m].into_iter().enumerate() {
        let eig = mat.eigen()?;
        distance[k] = space_distance(&eig.leading(r), data.loading.values())?;
        rank[k] = select_rank(&eig.eigenvalues, r_max)?;
    }
    Ok(RepOutcome { distance, rank })
}

/// Runs replications `0..reps` of one cell, in parallel, returned in rep order.
pub fn run_cell(cell: &Cell, reps: usize, settings: &RunSettings) -> Result<Vec<RepOutcome>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(cell, rep, settings))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub delta: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub reps: usize,
    /// Mean space distance for `[R, C, RnC]`.
    pub mean_distance: [f64; 3],
    /// Sample standard deviation (denominator `reps - 1`).
    pub sd_distance: [f64; 3],
    /// Fraction of reps whose selected rank equals the true rank.
    pub rank_frequency: [f64; 3],
}

pub fn summarize(cell: &Cell, true_rank: usize, outcomes: &[RepOutcome]) -> CellSummary {
    let reps = outcomes.len();
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    let mut freq = [0.0; 3];
    for k in 0..3 {
        let m = outcomes.iter().map(|o| o.distance[k]).sum::<f64>() / reps as f64;
        mean[k] = m;
        if reps > 1 {
            let ss: f64 = outcomes.iter().map(|o| (o.distance[k] - m).powi(2)).sum();
            sd[k] = (ss / (reps - 1) as f64).sqrt();
        }
        freq[k] = outcomes.iter().filter(|o| o.rank[k] == true_rank).count() as f64 / reps as f64;
    }
    CellSummary {
        delta: cell.delta,
        n: cell.n,
        t_len: cell.t_len(),
        reps,
        mean_distance: mean,
        sd_distance: sd,
        rank_frequency: freq,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    /// Loading-space accuracy.
    Table1,
    /// Rank-recovery frequencies.
    Table2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub kind: ReportKind,
    pub h0: usize,
    pub r_max: Option<usize>,
    pub reps: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
}

fn run_grid(grid: &[Cell], reps: usize, settings: &RunSettings, kind: ReportKind) -> Result<MonteCarloReport> {
    let cells = grid
        .iter()
        .map(|cell| Ok(summarize(cell, settings.base.r, &run_cell(cell, reps, settings)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloReport {
        kind,
        h0: settings.h0,
        r_max: settings.r_max,
        reps,
        seed: settings.seed,
        cells,
    })
}

/// Mean and standard deviation of the space distance per cell.
pub fn run_table1(grid: &[Cell], reps: usize, settings: &RunSettings) -> Result<MonteCarloReport> {
    if reps < 2 {
        return Err(Error::InvalidArgument("table1 needs at least 2 reps".into()));
    }
    run_grid(grid, reps, settings, ReportKind::Table1)
}

/// Rank-recovery frequency per cell.
pub fn run_table2(grid: &[Cell], reps: usize, settings: &RunSettings) -> Result<MonteCarloReport> {
    if reps < 1 {
        return Err(Error::InvalidArgument("table2 needs at least 1 rep".into()));
    }
    run_grid(grid, reps, settings, ReportKind::Table2)
}

impl MonteCarloReport {
    /// CSV with columns `delta,n,T,metric,estimator,value`. Run metadata is
    /// carried as `h0` and `reps` rows with estimator `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,n,T,metric,estimator,value\n");
        for c in &self.cells {
            let mut row = |metric: &str, est: &str, value: String| {
                out.push_str(&format!("{},{},{},{metric},{est},{value}\n", c.delta, c.n, c.t_len));
            };
            row("h0", "all", self.h0.to_string());
            row("reps", "all", c.reps.to_string());
            for (k, est) in ESTIMATORS.iter().enumerate() {
                match self.kind {
                    ReportKind::Table1 => {
                        row("mean_distance", est, format!("{:.6}", c.mean_distance[k]));
                        row("sd_distance", est, format!("{:.6}", c.sd_distance[k]));
                    }
                    ReportKind::Table2 => {
                        row("rank_frequency", est, format!("{:.6}", c.rank_frequency[k]));
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
