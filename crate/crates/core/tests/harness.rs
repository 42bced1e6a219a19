use std::fs;
use std::path::Path;

use policysim_core::dgp::{reference_panel, REFERENCE_SEED};
use policysim_core::harness::{
    read_raw_csv, recompute_metrics, run_replicate, run_study, sha256_file, HarnessError, MANIFEST_FILE, RAW_FILE,
};
use policysim_core::panel::save_panel_csv;
use policysim_core::{EstimatorId, MetricsTable, RunManifest, Scenario, SimulationConfig};

fn config(dir: &Path) -> SimulationConfig {
    let data = dir.join("panel.csv");
    save_panel_csv(&reference_panel(REFERENCE_SEED), &data).unwrap();
    SimulationConfig {
        bootstrap_reps: 20,
        output_dir: dir.join("out"),
        ..SimulationConfig::new(data, 2718)
    }
}

#[test]
fn replicate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path());
    let data = reference_panel(REFERENCE_SEED);
    let a = run_replicate(&c, &data, Scenario::Temporary, 25, 3).unwrap();
    let b = run_replicate(&c, &data, Scenario::Temporary, 25, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.results.len(), 7);
    assert_eq!(a.adoption_years.iter().flatten().count(), 25);
    let other = run_replicate(&c, &data, Scenario::Temporary, 25, 4).unwrap();
    assert_ne!(a.adoption_years, other.adoption_years);
}

#[test]
fn null_truth_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let c = SimulationConfig {
        estimators: vec![EstimatorId::DidEs],
        ..config(dir.path())
    };
    let r = run_replicate(&c, &reference_panel(REFERENCE_SEED), Scenario::Null, 5, 0).unwrap();
    assert!(r.truth.observation_effects.iter().all(|e| *e == 0.0));
    assert!((1..=5).all(|k| r.truth.at_event_time(k) == Some(0.0)));
}

#[test]
fn injected_failure_leaves_others_intact() {
    let dir = tempfile::tempdir().unwrap();
    let base = config(dir.path());
    let data = reference_panel(REFERENCE_SEED);
    let faulty = SimulationConfig {
        inject_failure: vec![EstimatorId::ArDb],
        ..base.clone()
    };
    let clean = run_replicate(&base, &data, Scenario::RampUp, 25, 0).unwrap();
    let broken = run_replicate(&faulty, &data, Scenario::RampUp, 25, 0).unwrap();
    for (a, b) in clean.results.iter().zip(&broken.results) {
        if b.estimator == EstimatorId::ArDb {
            assert!(!b.converged && b.effects.is_empty());
            assert_eq!(b.diagnostics, vec!["injected failure".to_string()]);
        } else {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn study_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = SimulationConfig {
        scenarios: vec![Scenario::RampDown, Scenario::Null],
        n_treated: vec![5, 25],
        replicates: 3,
        estimators: vec![EstimatorId::DidEs, EstimatorId::DidHt, EstimatorId::DidImp],
        inject_failure: vec![EstimatorId::DidHt],
        ..config(dir.path())
    };
    let data = reference_panel(REFERENCE_SEED);
    let out = run_study(&c, &data).unwrap();
    let dir = &c.output_dir;

    assert_eq!(out.metrics.len(), 2);
    for (n, table) in &out.metrics {
        // Two scenarios x three estimators x five event times.
        assert_eq!(table.rows.len(), 30);
        let on_disk = MetricsTable::load_csv(dir.join(format!("metrics_t{n}.csv"))).unwrap();
        assert_eq!(on_disk.rows.len(), 30);
        assert!(table
            .rows
            .iter()
            .filter(|r| r.estimator == EstimatorId::DidHt)
            .all(|r| r.n_effective == 0 && r.abs_bias.is_none()));
    }

    let manifest = RunManifest::load(dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.config, c);
    assert_eq!(manifest.checksums.len(), 3);
    for (name, sum) in &manifest.checksums {
        assert_eq!(&sha256_file(dir.join(name)).unwrap(), sum);
    }
    assert_eq!(manifest.data_sha256, sha256_file(&c.data).unwrap());
    assert!((manifest.outcome_sd - data.outcome_sd()).abs() < 1e-15);
    for f in &manifest.failures {
        let expected = if f.estimator == EstimatorId::DidHt { 3 } else { 0 };
        assert_eq!(f.failures, expected, "{f:?}");
        assert!(f.failures <= c.replicates);
    }

    let raw = read_raw_csv(fs::File::open(dir.join(RAW_FILE)).unwrap()).unwrap();
    assert_eq!(raw.iter().filter(|r| r.record.event_time >= 1).count(), 2 * 2 * 3 * 3 * 5);

    let before = fs::read(dir.join("metrics_t25.csv")).unwrap();
    fs::remove_file(dir.join("metrics_t25.csv")).unwrap();
    recompute_metrics(&dir.join(RAW_FILE)).unwrap();
    assert_eq!(fs::read(dir.join("metrics_t25.csv")).unwrap(), before);
}

#[test]
fn study_rejects_bad_setup_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path());
    let data = reference_panel(REFERENCE_SEED);
    let blocked = dir.path().join("blocker");
    fs::write(&blocked, "").unwrap();
    let bad_dir = SimulationConfig {
        output_dir: blocked.join("x"),
        ..c.clone()
    };
    assert!(matches!(run_study(&bad_dir, &data), Err(HarnessError::Output { .. })));
    let too_many = SimulationConfig {
        n_treated: vec![50],
        ..c
    };
    assert!(matches!(run_study(&too_many, &data), Err(HarnessError::Config(_))));
}
