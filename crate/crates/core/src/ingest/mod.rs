//! Long-format panel I/O, transforms, rolling-window fits and plot exports.
//!
//! Rows of each slice are importers and columns exporters: entry `(i, j)` at
//! period `t` is what entity `i` imports from entity `j`.

mod export;
mod fixture;
mod impute;
mod rolling;

pub use export::{heatmaps, GraphEdge, GraphNode, Heatmap, LoadingSide, NetworkGraph, NodeKind};
pub use fixture::{trade_fixture, COUNTRIES};
pub use impute::{impute_diagonal, Imputation, IMPUTE_MAX_ITER, IMPUTE_TOLERANCE};
pub use rolling::{present, present_windows, rolling_fit, DiagPolicy, PresentedWindow, RollingSpec, RollingWindow};

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkSeries;

pub const CSV_HEADER: [&str; 4] = ["period", "importer", "exporter", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub period: String,
    pub importer: String,
    pub exporter: String,
    pub value: f64,
}

/// `count` consecutive `YYYY-MM` labels starting at the given month.
pub fn monthly_labels(year: i32, month: u32, count: usize) -> Vec<String> {
    let start = year * 12 + month as i32 - 1;
    (0..count as i32)
        .map(|k| {
            let m = start + k;
            format!("{:04}-{:02}", m.div_euclid(12), m.rem_euclid(12) + 1)
        })
        .collect()
}

/// True for labels of the form `YYYY-MM` with `MM` in `01..=12`.
pub fn is_year_month(label: &str) -> bool {
    let b = label.as_bytes();
    b.len() == 7
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..].iter().all(u8::is_ascii_digit)
        && matches!(label[5..].parse::<u32>(), Ok(1..=12))
}

pub fn parse_long_csv(path: impl AsRef<Path>) -> Result<NetworkSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_long_csv_from(std::io::BufReader::new(file))
}

/// Parses a complete long-format panel.
///
/// If no record has `importer == exporter` the diagonal is marked missing;
/// otherwise every diagonal cell must be present like any other pair.
pub fn parse_long_csv_from<R: Read>(reader: R) -> Result<NetworkSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Malformed {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for row in rdr.deserialize::<LongRecord>() {
        let rec = row.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let mut line = 1u64;
    let mut periods = BTreeSet::new();
    let mut entities = BTreeSet::new();
    let mut has_diag = false;
    for rec in &records {
        line += 1;
        if !is_year_month(&rec.period) {
            return Err(Error::Malformed {
                line,
                message: format!("period `{}` is not YYYY-MM", rec.period),
            });
        }
        if rec.importer.is_empty() || rec.exporter.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty entity label".into(),
            });
        }
        if !rec.value.is_finite() {
            return Err(Error::Malformed {
                line,
                message: format!("value {} is not finite", rec.value),
            });
        }
        has_diag |= rec.importer == rec.exporter;
        periods.insert(rec.period.as_str());
        entities.insert(rec.importer.as_str());
        entities.insert(rec.exporter.as_str());
    }
    let periods: Vec<String> = periods.into_iter().map(String::from).collect();
    let entities: Vec<String> = entities.into_iter().map(String::from).collect();
    let (t_len, n) = (periods.len(), entities.len());
    let p_idx: HashMap<&str, usize> = periods.iter().enumerate().map(|(k, p)| (p.as_str(), k)).collect();
    let e_idx: HashMap<&str, usize> = entities.iter().enumerate().map(|(k, e)| (e.as_str(), k)).collect();

    let mut slices = vec![DMatrix::zeros(n, n); t_len];
    let mut seen = vec![false; t_len * n * n];
    for rec in &records {
        let (t, i, j) = (p_idx[rec.period.as_str()], e_idx[rec.importer.as_str()], e_idx[rec.exporter.as_str()]);
        let cell = &mut seen[(t * n + i) * n + j];
        if *cell {
            return Err(Error::Duplicate {
                period: rec.period.clone(),
                importer: rec.importer.clone(),
                exporter: rec.exporter.clone(),
            });
        }
        *cell = true;
        slices[t][(i, j)] = rec.value;
    }
    let mut missing = Vec::new();
    for t in 0..t_len {
        for i in 0..n {
            for j in 0..n {
                if (i != j || has_diag) && !seen[(t * n + i) * n + j] {
                    missing.push((periods[t].clone(), entities[i].clone(), entities[j].clone()));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePanel {
            count: missing.len(),
            missing,
        });
    }
    NetworkSeries::new(slices, entities, periods, !has_diag)
}

/// Writes one record per period and ordered pair, skipping a masked diagonal.
/// Values use the shortest representation that parses back exactly.
pub fn write_long_csv_to<W: Write>(series: &NetworkSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    let labels = series.entity_labels();
    for (t, period) in series.time_labels().iter().enumerate() {
        for (i, imp) in labels.iter().enumerate() {
            for (j, exp) in labels.iter().enumerate() {
                if series.is_masked(i, j) {
                    continue;
                }
                let value = series.slice(t)[(i, j)].to_string();
                w.write_record([period.as_str(), imp, exp, &value])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_long_csv(series: &NetworkSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_long_csv_to(series, std::io::BufWriter::new(file))
}

/// Period-over-period log growth, `log x_{t+1} - log x_t`, labelled by the
/// later period. A masked diagonal stays masked.
pub fn log_diff(series: &NetworkSeries) -> Result<NetworkSeries> {
    let n = series.n();
    if series.len() < 3 {
        return Err(Error::TooShort(series.len().saturating_sub(1)));
    }
    let mut logs = Vec::with_capacity(series.len());
    for (t, x) in series.slices().iter().enumerate() {
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if series.is_masked(i, j) {
                    continue;
                }
                let v = x[(i, j)];
                if v <= 0.0 {
                    return Err(Error::NonPositive { t, i, j, value: v });
                }
                l[(i, j)] = v.ln();
            }
        }
        logs.push(l);
    }
    let diffs = logs.windows(2).map(|w| &w[1] - &w[0]).collect();
    NetworkSeries::new(
        diffs,
        series.entity_labels().to_vec(),
        series.time_labels()[1..].to_vec(),
        series.diag_missing(),
    )
}
