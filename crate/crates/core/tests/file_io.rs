//! File-backed round trips for configs and renewable traces.

use std::fs;

use gridcomp_core::config::Config;
use gridcomp_core::error::Error;
use gridcomp_core::scenario::{load_renewable_csv, run_timeline, write_renewable_csv, SyntheticRenewables};

const TOY: &str = r#"{
  "cluster": { "n_bs": 2, "n_ant": 1, "n_mt": 1, "pa_efficiency": 1.0,
               "p_max": [100, 100], "p_circuit": [0, 0] },
  "energy": { "harvest": [0.2, 1.0], "price_buy": [1, 1], "price_sell": [0.1, 0.1] },
  "qos": { "sinr_min": [1.0], "noise_power": [1.0] },
  "channels": { "explicit": [[[1.0, 0.0], [0.5, 0.0]]] },
  "simulation": { "blocks": 4 }
}"#;

#[test]
fn renewable_trace_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("harvest.csv");
    let series = SyntheticRenewables::for_circuit_power(&[500.0, 500.0, 500.0], 24, 3)
        .generate()
        .unwrap();
    write_renewable_csv(&series, fs::File::create(&path).unwrap()).unwrap();
    let back = load_renewable_csv(&path, Some(3)).unwrap();
    assert_eq!(back, series);
}

#[test]
fn trace_errors_name_the_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "block,bs_id,energy\n0,0,1.0\n0,1,-2.0\n").unwrap();
    match load_renewable_csv(&path, Some(2)) {
        Err(Error::Parse { path: p, line, .. }) => {
            assert_eq!(line, 3);
            assert!(p.ends_with("bad.csv"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn config_file_drives_a_timeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.json");
    fs::write(&path, TOY).unwrap();
    let config = Config::from_path(&path).unwrap();
    let template = config.instance().unwrap();
    let series = config.synthetic_renewables(1).generate().unwrap();
    let report = run_timeline(&template, &series, &config.timeline_options()).unwrap();
    assert_eq!(report.blocks.len(), 4);
    assert_eq!(report.summary().len(), 4);
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, TOY.replace("\"n_mt\": 1", "\"n_mt\": one")).unwrap();
    match Config::from_path(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}
