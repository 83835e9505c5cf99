use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use netfactor::covariance::{build_m_pair, center, MMatrix};
use netfactor::estimator::{default_r_max, fit, select_rank, ModelSpec};
use netfactor::ingest::{
    heatmaps, impute_diagonal, log_diff, parse_long_csv, present, present_windows, rolling_fit, write_long_csv_to,
    DiagPolicy, Heatmap, LoadingSide, NetworkGraph, RollingSpec, IMPUTE_MAX_ITER, IMPUTE_TOLERANCE,
};
use netfactor::postprocess::{cluster_entities, simplify_loadings};
use netfactor::simulation::{generate, design_grid, run_table1, run_table2, Cell, RunSettings};
use netfactor::{EstimationResult, NetworkSeries, SimulationConfig};

#[derive(Parser)]
#[command(name = "netfactor", version, about = "Latent dynamic network estimation for matrix time series")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat `key = value` file of default flag values; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a series from the simulation design and write it as long CSV.
    Simulate(SimulateArgs),
    /// Monte Carlo accuracy of the loading-space estimators.
    Table1(TableArgs),
    /// Monte Carlo rank-recovery frequencies.
    Table2(TableArgs),
    /// Fit the factor model to a long CSV panel.
    Estimate(FitArgs),
    /// Estimate the number of factors by the eigenvalue-ratio rule.
    Rank(RankArgs),
    /// Fit the model on rolling windows.
    Rolling(RollingArgs),
    /// Aligned, normalized loadings across rolling windows.
    ExportHeatmap(HeatmapArgs),
    /// Latent network graph from the mean factor matrix.
    ExportGraph(GraphArgs),
    /// Complete-linkage clustering of entities by their loadings.
    Cluster(ClusterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Sym,
    Asym,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum Diag {
    Zero,
    Impute,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Row,
    Col,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "sym")]
    model: Model,
    /// Number of factors (row side for the asymmetric model).
    #[arg(long, default_value_t = 3)]
    r: usize,
    /// Column-side factors for the asymmetric model; defaults to `--r`.
    #[arg(long)]
    r_col: Option<usize>,
    /// Number of lags in the covariance aggregate.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=5))]
    h0: u64,
}

impl ModelArgs {
    fn spec(&self) -> ModelSpec {
        match self.model {
            Model::Sym => ModelSpec::Symmetric { r: self.r },
            Model::Asym => ModelSpec::Asymmetric {
                r_row: self.r,
                r_col: self.r_col.unwrap_or(self.r),
            },
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Long CSV with header `period,importer,exporter,value`.
    #[arg(long)]
    input: PathBuf,
    /// Handling of a missing diagonal.
    #[arg(long, value_enum, default_value = "zero")]
    diag: Diag,
    /// Analyse period-over-period log growth instead of levels.
    #[arg(long)]
    log_diff: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long = "t", default_value_t = 400)]
    t_len: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=5))]
    h0: u64,
    /// Upper bound for rank selection; `n / 2` when absent.
    #[arg(long)]
    rmax: Option<usize>,
    /// Restrict the grid to these entity counts (comma separated).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Restrict the grid to these values of `T / n^2`.
    #[arg(long, value_delimiter = ',')]
    t_mult: Vec<f64>,
    /// Restrict the grid to these factor strengths.
    #[arg(long, value_delimiter = ',')]
    delta: Vec<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "sym")]
    model: Model,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=5))]
    h0: u64,
    #[arg(long)]
    rmax: Option<usize>,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 60)]
    window: usize,
    #[arg(long, default_value_t = 12)]
    step: usize,
    /// Entities whose largest loading fixes the leading factor slots.
    #[arg(long, value_delimiter = ',')]
    anchors: Vec<String>,
}

#[derive(Args)]
struct RollingArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    windows: WindowArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    windows: WindowArgs,
    #[arg(long, value_enum, default_value = "row")]
    side: Side,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "dot")]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of groups.
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl From<netfactor::Error> for CliError {
    fn from(e: netfactor::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Turns `key = value` lines into `--key value` arguments. Blank lines and
/// lines starting with `#` are skipped; `key = true` becomes a bare flag.
fn config_args(path: &Path) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), k + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

/// Places config-file arguments directly after the subcommand so that
/// explicit flags, which come later, override them.
fn expand_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut config = None;
    let mut sub = None;
    let mut k = 1;
    while k < argv.len() {
        let s = argv[k].to_string_lossy();
        if s == "--config" {
            config = argv.get(k + 1).map(PathBuf::from);
            k += 2;
            continue;
        }
        if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if sub.is_none() && !s.starts_with('-') {
            sub = Some(k);
        }
        k += 1;
    }
    let (Some(path), Some(sub)) = (config, sub) else {
        return Ok(argv);
    };
    let mut out = argv[..=sub].to_vec();
    out.extend(config_args(&path)?);
    out.extend_from_slice(&argv[sub + 1..]);
    Ok(out)
}

fn write_output(out: &OutputArgs, text: &str) -> CliResult {
    match &out.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("cannot write to standard output: {e}"))),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn load(input: &InputArgs) -> CliResult<NetworkSeries> {
    let series = parse_long_csv(&input.input)?;
    Ok(if input.log_diff { log_diff(&series)? } else { series })
}

/// Fits the whole series, imputing a missing diagonal first when asked.
fn fit_series(series: &NetworkSeries, diag: Diag, spec: ModelSpec, h0: usize) -> CliResult<EstimationResult> {
    let series = match diag {
        Diag::Impute if series.diag_missing() => {
            let imp = impute_diagonal(series, spec, h0, IMPUTE_TOLERANCE, IMPUTE_MAX_ITER)?;
            if !imp.converged {
                eprintln!(
                    "warning: diagonal imputation stopped after {} iterations without converging (last change {:.3e})",
                    imp.iterations, imp.change
                );
            }
            imp.series
        }
        _ => series.clone(),
    };
    Ok(fit(&series, spec, h0)?)
}

fn diag_policy(d: Diag) -> DiagPolicy {
    match d {
        Diag::Zero => DiagPolicy::Zero,
        Diag::Impute => DiagPolicy::Impute,
    }
}

fn anchor_indices(series: &NetworkSeries, names: &[String]) -> CliResult<Vec<usize>> {
    names.iter().map(|a| Ok(series.entity_index(a)?)).collect()
}

fn require_format(f: Format, allowed: &[Format], what: &str) -> CliResult {
    if allowed.contains(&f) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} does not support this --format")))
    }
}

fn loadings_csv(labels: &[String], sides: &[(&str, &DMatrix<f64>)]) -> String {
    let mut out = String::from("side,entity,factor,value\n");
    for (side, a) in sides {
        for (i, e) in labels.iter().enumerate() {
            for k in 0..a.ncols() {
                out.push_str(&format!("{side},{e},{},{}\n", k + 1, a[(i, k)]));
            }
        }
    }
    out
}

fn result_json(series: &NetworkSeries, res: &EstimationResult) -> Value {
    json!({
        "model": res.model,
        "h0": res.h0,
        "rank": [res.rank.0, res.rank.1],
        "rank_exceeds_spectrum": res.rank_exceeds_spectrum,
        "entities": series.entity_labels(),
        "eigenvalues": res.eigenvalues,
        "col_eigenvalues": res.col_eigenvalues,
        "loadings_row": rows(res.loadings_row.values()),
        "loadings_col": rows(res.loadings_col.values()),
        "factor_mean": rows(&res.factors.mean()),
    })
}

fn run_simulate(a: SimulateArgs) -> CliResult {
    let phi_diag = if a.r == 3 {
        SimulationConfig::default().phi_diag
    } else {
        return Err(CliError::Usage("simulate supports the r = 3 design only".into()));
    };
    let cfg = SimulationConfig {
        n: a.n,
        t_len: a.t_len,
        r: a.r,
        delta: a.delta,
        phi_diag,
        noise_scale: a.noise_scale,
        seed: a.seed,
        ..SimulationConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = generate(&cfg)?;
    let mut buf = Vec::new();
    write_long_csv_to(&data.series, &mut buf)?;
    write_output(&a.out, &String::from_utf8(buf).expect("csv output is UTF-8"))
}

fn run_table(a: TableArgs, table2: bool) -> CliResult {
    require_format(a.format, &[Format::Csv, Format::Json], "table")?;
    let grid: Vec<Cell> = design_grid()
        .into_iter()
        .filter(|c| a.n.is_empty() || a.n.contains(&c.n))
        .filter(|c| a.t_mult.is_empty() || a.t_mult.contains(&c.t_mult))
        .filter(|c| a.delta.is_empty() || a.delta.contains(&c.delta))
        .collect();
    if grid.is_empty() {
        return Err(CliError::Usage("no grid cell matches --n / --t-mult / --delta".into()));
    }
    let settings = RunSettings {
        h0: a.h0 as usize,
        r_max: a.rmax,
        seed: a.seed,
        ..RunSettings::default()
    };
    let report = if table2 {
        run_table2(&grid, a.reps, &settings)
    } else {
        run_table1(&grid, a.reps, &settings)
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let text = match a.format {
        Format::Json => report.to_json()? + "\n",
        _ => report.to_csv(),
    };
    write_output(&a.out, &text)
}

fn run_estimate(a: FitArgs) -> CliResult {
    require_format(a.format, &[Format::Csv, Format::Json], "estimate")?;
    let series = load(&a.input)?;
    let res = fit_series(&series, a.input.diag, a.model.spec(), a.model.h0 as usize)?;
    let text = match a.format {
        Format::Csv => loadings_csv(
            series.entity_labels(),
            &[("row", res.loadings_row.values()), ("col", res.loadings_col.values())],
        ),
        _ => serde_json::to_string_pretty(&result_json(&series, &res)).expect("json values serialize") + "\n",
    };
    write_output(&a.out, &text)
}

fn run_rank(a: RankArgs) -> CliResult {
    let series = load(&a.input)?;
    let h0 = a.h0 as usize;
    let r_max = a.rmax.unwrap_or_else(|| default_r_max(series.n()));
    let (m_col, m_row) = build_m_pair(&center(&series), h0)?;
    let line = match a.model {
        Model::Sym => {
            let m = MMatrix::combine(&m_col, &m_row)?;
            select_rank(&m.eigen()?.eigenvalues, r_max)?.to_string()
        }
        Model::Asym => {
            let r_row = select_rank(&m_col.eigen()?.eigenvalues, r_max)?;
            let r_col = select_rank(&m_row.eigen()?.eigenvalues, r_max)?;
            format!("{r_row} {r_col}")
        }
    };
    println!("{line}");
    Ok(())
}

fn rolling_windows(
    input: &InputArgs,
    model: &ModelArgs,
    w: &WindowArgs,
) -> CliResult<(NetworkSeries, Vec<netfactor::ingest::RollingWindow>)> {
    let series = load(input)?;
    let spec = RollingSpec {
        window: w.window,
        step: w.step,
    };
    spec.validate(series.len()).map_err(|e| CliError::Usage(e.to_string()))?;
    let fits = rolling_fit(&series, spec, model.spec(), model.h0 as usize, diag_policy(input.diag))?;
    for f in &fits {
        if let Some((it, false)) = f.imputation {
            eprintln!("warning: window {} diagonal imputation did not converge in {it} iterations", f.label);
        }
    }
    Ok((series, fits))
}

fn run_rolling(a: RollingArgs) -> CliResult {
    require_format(a.format, &[Format::Csv, Format::Json], "rolling")?;
    let (series, fits) = rolling_windows(&a.input, &a.model, &a.windows)?;
    let anchors = anchor_indices(&series, &a.windows.anchors)?;
    let presented = present_windows(&fits, &anchors)?;
    let text = match a.format {
        Format::Csv => {
            let mut out = String::from("window,side,entity,factor,value\n");
            for p in &presented {
                let body = loadings_csv(
                    series.entity_labels(),
                    &[("row", p.loadings_row.values()), ("col", p.loadings_col.values())],
                );
                for line in body.lines().skip(1) {
                    out.push_str(&format!("{},{line}\n", p.label));
                }
            }
            out
        }
        _ => {
            let windows: Vec<Value> = fits
                .iter()
                .zip(&presented)
                .map(|(f, p)| {
                    json!({
                        "label": f.label,
                        "start": series.time_labels()[f.start],
                        "eigenvalues": f.result.eigenvalues,
                        "imputation": f.imputation.map(|(it, ok)| json!({"iterations": it, "converged": ok})),
                        "loadings_row": rows(p.loadings_row.values()),
                        "loadings_col": rows(p.loadings_col.values()),
                        "factor_level": rows(&p.factor_level),
                        "clipped_count": p.clipped_count,
                    })
                })
                .collect();
            let doc = json!({
                "entities": series.entity_labels(),
                "window": a.windows.window,
                "step": a.windows.step,
                "h0": a.model.h0,
                "windows": windows,
            });
            serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
        }
    };
    write_output(&a.out, &text)
}

fn run_heatmap(a: HeatmapArgs) -> CliResult {
    require_format(a.format, &[Format::Csv, Format::Json], "export-heatmap")?;
    let (series, fits) = rolling_windows(&a.input, &a.model, &a.windows)?;
    let anchors = anchor_indices(&series, &a.windows.anchors)?;
    let presented = present_windows(&fits, &anchors)?;
    let side = match a.side {
        Side::Row => LoadingSide::Row,
        Side::Col => LoadingSide::Col,
    };
    let maps = heatmaps(&presented, series.entity_labels(), side)?;
    let text = match a.format {
        Format::Csv => Heatmap::to_csv(&maps),
        _ => Heatmap::to_json(&maps)? + "\n",
    };
    write_output(&a.out, &text)
}

fn run_graph(a: GraphArgs) -> CliResult {
    require_format(a.format, &[Format::Dot, Format::Json], "export-graph")?;
    let series = load(&a.input)?;
    let res = fit_series(&series, a.input.diag, a.model.spec(), a.model.h0 as usize)?;
    let label = series.time_labels().last().cloned().unwrap_or_default();
    let p = present(&label, &res)?;
    let row = simplify_loadings(&p.loadings_row);
    let col = simplify_loadings(&p.loadings_col);
    let graph = NetworkGraph::build(&p, res.model, series.entity_labels(), &row, Some(&col))?;
    let text = match a.format {
        Format::Dot => graph.to_dot(),
        _ => graph.to_json()? + "\n",
    };
    write_output(&a.out, &text)
}

fn run_cluster(a: ClusterArgs) -> CliResult {
    require_format(a.format, &[Format::Csv, Format::Json], "cluster")?;
    let series = load(&a.input)?;
    let res = fit_series(&series, a.input.diag, a.model.spec(), a.model.h0 as usize)?;
    let p = present("all", &res)?;
    let c = cluster_entities(p.loadings_row.values(), series.entity_labels(), a.k)?;
    let text = match a.format {
        Format::Csv => {
            let mut out = String::from("entity,group\n");
            for (e, g) in series.entity_labels().iter().zip(&c.groups) {
                out.push_str(&format!("{e},{}\n", g + 1));
            }
            out
        }
        _ => serde_json::to_string_pretty(&c).expect("json values serialize") + "\n",
    };
    write_output(&a.out, &text)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Table1(a) => run_table(a, false),
        Command::Table2(a) => run_table(a, true),
        Command::Estimate(a) => run_estimate(a),
        Command::Rank(a) => run_rank(a),
        Command::Rolling(a) => run_rolling(a),
        Command::ExportHeatmap(a) => run_heatmap(a),
        Command::ExportGraph(a) => run_graph(a),
        Command::Cluster(a) => run_cluster(a),
    }
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(CliError::Usage(m) | CliError::Data(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
