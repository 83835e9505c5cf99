use netfactor::estimator::{fit, select_rank, ModelSpec};
use netfactor::ingest::{
    impute_diagonal, parse_long_csv, trade_fixture, write_long_csv, IMPUTE_MAX_ITER, IMPUTE_TOLERANCE,
};
use netfactor::postprocess::space_distance;
use netfactor::simulation::{generate, SimulatedData};
use netfactor::SimulationConfig;

fn simulated(n: usize, t_len: usize, seed: u64) -> SimulatedData {
    let config = SimulationConfig { n, t_len, seed, ..SimulationConfig::default() };
    generate(&config).unwrap()
}

#[test]
fn long_csv_survives_a_file_round_trip() {
    let series = trade_fixture(5, 30, 2, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    write_long_csv(&series, &path).unwrap();
    assert_eq!(parse_long_csv(&path).unwrap(), series);
}

#[test]
fn simulated_panel_recovers_loading_space() {
    let data = simulated(20, 400, 5);
    let res = fit(&data.series, ModelSpec::Symmetric { r: 3 }, 1).unwrap();
    let d = space_distance(res.loadings_row.values(), data.loading.values()).unwrap();
    assert!(d < 0.05, "distance {d}");
    assert_eq!(select_rank(&res.eigenvalues, 10).unwrap(), 3);
}

#[test]
fn asymmetric_fit_spans_the_same_space_on_symmetric_data() {
    let data = simulated(20, 400, 6);
    let res = fit(&data.series, ModelSpec::Asymmetric { r_row: 3, r_col: 3 }, 1).unwrap();
    let truth = data.loading.values();
    assert!(space_distance(res.loadings_row.values(), truth).unwrap() < 0.05);
    assert!(space_distance(res.loadings_col.values(), truth).unwrap() < 0.05);
}

#[test]
fn imputed_simulation_matches_full_diagonal_fit() {
    let data = simulated(20, 400, 8);
    let masked = data.series.clone().with_diag_missing(true).unwrap();
    let spec = ModelSpec::Symmetric { r: 3 };
    let imp = impute_diagonal(&masked, spec, 1, IMPUTE_TOLERANCE, IMPUTE_MAX_ITER).unwrap();
    let res = fit(&imp.series, spec, 1).unwrap();
    let d = space_distance(res.loadings_row.values(), data.loading.values()).unwrap();
    assert!(d < 0.08, "distance {d}");
}
