use std::fs;

use mec_core::config::SystemConfig;
use mec_core::harness::{
    load_metrics_json, metrics_file_name, run_experiment, run_seed, sweep, Algorithm, ExperimentSpec, Metric,
    OutputFormat, SweepAxis, SweepParameter, CSV_HEADER,
};

fn spec(alg: Algorithm, epochs: u64, dir: &std::path::Path) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(SystemConfig::six_bs(0), alg, epochs, vec![1, 2]);
    s.output_dir = Some(dir.to_path_buf());
    s
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    for alg in [Algorithm::Darling, Algorithm::DeepSarl, Algorithm::Greedy] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&spec(alg, 500, a.path())).unwrap();
        run_experiment(&spec(alg, 500, b.path())).unwrap();
        for seed in [1, 2] {
            let name = metrics_file_name(alg, seed, None, OutputFormat::Csv);
            let (x, y) = (fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
            assert_eq!(x, y, "{name}");
            let text = String::from_utf8(x).unwrap();
            assert_eq!(text.lines().next(), Some(CSV_HEADER));
            assert_eq!(text.lines().count(), 501);
        }
    }
}

#[test]
fn json_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(Algorithm::Server, 300, dir.path());
    s.format = OutputFormat::Json;
    let series = run_experiment(&s).unwrap();
    for one in &series {
        let back = load_metrics_json(dir.path().join(metrics_file_name(Algorithm::Server, one.seed, None, OutputFormat::Json))).unwrap();
        assert_eq!(&back, one);
    }
}

#[test]
fn mobile_execution_never_pays() {
    let mut cfg = SystemConfig::six_bs(0);
    cfg.task_arrival_prob = 0.6;
    cfg.energy_arrival_rate = 1.6;
    let s = run_seed(&cfg, Algorithm::Mobile, 5_000, 4).unwrap();
    assert!(s.values(Metric::Payment).iter().all(|&p| p == 0.0));
    let server = run_seed(&cfg, Algorithm::Server, 5_000, 4).unwrap();
    assert!(server.values(Metric::Payment).iter().any(|&p| p > 0.0));
}

#[test]
fn config_errors_surface_before_running() {
    let mut cfg = SystemConfig::six_bs(0);
    cfg.task_arrival_prob = 1.5;
    assert!(run_seed(&cfg, Algorithm::Mobile, 10, 1).is_err());
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(Algorithm::Mobile, 10, dir.path());
    s.seeds.clear();
    assert!(run_experiment(&s).is_err());
    let mut s = spec(Algorithm::Mobile, 10, dir.path());
    s.sweep = Some(SweepAxis {
        parameter: SweepParameter::TaskArrival,
        values: vec![0.5, 1.2],
    });
    assert!(sweep(&s, &[Algorithm::Mobile]).is_err());
}

#[test]
fn sweep_rows_cover_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(Algorithm::Mobile, 400, dir.path());
    s.tail_window = 100;
    s.sweep = Some(SweepAxis {
        parameter: SweepParameter::EnergyArrival,
        values: vec![0.4, 1.6],
    });
    let rows = sweep(&s, &[Algorithm::Mobile, Algorithm::Greedy]).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.epochs == 400 && r.grid_value.is_some()));
    assert!(dir.path().join(metrics_file_name(Algorithm::Greedy, 2, Some(1.6), OutputFormat::Csv)).exists());
}
