use std::fs;
use std::io::BufReader;

use gfrk::diagnostics::TimeSeries;
use gfrk::harness::{
    parse_config, run_max_stable_dt, run_refinement, run_single, simulate, snapshot_name,
    Initial, RunConfig, SchemeKind,
};
use gfrk::integrators::Forcing;
use gfrk::models::ModelKind;
use gfrk::spectral::read_snapshot;
use gfrk::Error;

fn small(model: ModelKind, scheme: SchemeKind) -> RunConfig {
    let mut cfg = RunConfig::new(model, 16, 0.05, 0.5);
    cfg.scheme = scheme;
    cfg.initial = Initial::Random {
        amplitude: 0.1,
        seed: 7,
    };
    cfg
}

#[test]
fn runs_are_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for scheme in [SchemeKind::Leqrk, SchemeKind::LeqrkPc, SchemeKind::Cs2] {
        let mut texts = Vec::new();
        for run in 0..2 {
            let mut cfg = small(ModelKind::CahnHilliard, scheme);
            let path = dir.path().join(format!("{}_{run}.csv", scheme.name()));
            cfg.series_path = Some(path.clone());
            run_single(&cfg).unwrap();
            texts.push(fs::read(&path).unwrap());
        }
        assert_eq!(texts[0], texts[1], "{}", scheme.name());
    }
}

#[test]
fn series_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ModelKind::Mbe, SchemeKind::LeqrkPc);
    let path = dir.path().join("series.csv");
    cfg.series_path = Some(path.clone());
    let series = run_single(&cfg).unwrap();
    assert_eq!(series.len(), cfg.steps() + 1);
    let back = TimeSeries::read_csv(BufReader::new(fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, series);
}

#[test]
fn snapshots_are_written_at_requested_times() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ModelKind::CahnHilliard, SchemeKind::LeqrkPc);
    cfg.snapshot_times = vec![0.25, 0.5];
    cfg.snapshot_dir = Some(dir.path().to_path_buf());
    let out = simulate(&cfg, true).unwrap();
    let (phi, t) =
        read_snapshot(fs::File::open(dir.path().join(snapshot_name(0.5))).unwrap()).unwrap();
    assert_eq!(t, 0.5);
    assert_eq!(phi.data(), out.phi.data());
    assert!(dir.path().join(snapshot_name(0.25)).exists());
}

#[test]
fn printed_config_parses_back_identically() {
    let text = "model = mbe\nnx = 32\ndt = 0.01\nt_end = 0.1\nepsilon_sq = 0.1\ninitial = sine_combo\n";
    let cfg = parse_config(text).unwrap();
    let echoed = cfg.to_text();
    assert_eq!(parse_config(&echoed).unwrap(), cfg);
    assert_eq!(parse_config(&echoed).unwrap().to_text(), echoed);
}

#[test]
fn reference_compared_with_itself_has_zero_deviation() {
    let cfg = small(ModelKind::CahnHilliard, SchemeKind::LeqrkPc);
    let table = run_max_stable_dt(&cfg, &[0.1, 0.05], 0.05, 0.05).unwrap();
    let own = table.rows.iter().find(|r| r.dt == 0.05).unwrap();
    assert_eq!(own.deviation, 0.0);
    assert!(own.correct);
    assert_eq!(table.largest_correct().map(|d| d >= 0.05), Some(true));
}

#[test]
fn reference_must_be_finest() {
    let cfg = small(ModelKind::CahnHilliard, SchemeKind::LeqrkPc);
    assert!(matches!(
        run_max_stable_dt(&cfg, &[0.1, 0.05], 0.1, 0.05),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn refinement_requires_the_manufactured_solution() {
    let mut cfg = RunConfig::new(ModelKind::CahnHilliard, 16, 0.1, 0.2);
    assert!(run_refinement(&cfg, &[0.1, 0.05, 0.025]).is_err());
    cfg.forcing = Forcing::Mms;
    assert!(run_refinement(&cfg, &[0.1, 0.05]).is_err());
    assert!(run_refinement(&cfg, &[0.05, 0.1, 0.025]).is_err());
    let r = run_refinement(&cfg, &[0.1, 0.05, 0.025]).unwrap();
    assert!(r.l2_errors.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn convex_splitting_run_decreases_energy() {
    for model in [ModelKind::CahnHilliard, ModelKind::Mbe] {
        let cfg = small(model, SchemeKind::Cs2);
        let out = simulate(&cfg, false).unwrap();
        assert!(out.series.max_relative_energy_increase() <= 1e-10, "{model}");
    }
}
