mod common;

use std::path::Path;

use semrom::pipeline::{
    cmd_offline, cmd_online, cmd_report, OnlineTarget, RunConfig, BIFURCATION_HEADER, DECAY_HEADER, ERROR_HEADER, MDEIM_HEADER,
    TIMING_HEADER,
};
use semrom::store::{ArtifactStore, StageStatus};
use semrom::Error;

fn built(dir: &Path) -> RunConfig {
    let cfg = common::toy_config(dir, (2, 2), 4);
    cmd_offline(&cfg).unwrap();
    cfg
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn offline_run_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::toy_config(dir.path(), (2, 2), 4);
    let first = cmd_offline(&cfg).unwrap();
    assert_eq!(first.computed, vec!["snapshots", "basis", "mdeim", "rom"]);
    assert_eq!(first.snapshots, 4);
    assert!(first.n >= 1 && first.n <= 4);
    assert_eq!(first.q.len(), 7);
    let second = cmd_offline(&cfg).unwrap();
    assert!(second.computed.is_empty());
    assert_eq!(second.n, first.n);
    assert_eq!(second.q, first.q);
}

#[test]
fn single_point_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    built(dir.path());
    let s = cmd_online(dir.path(), OnlineTarget::Point(0.18, 0.1), None, None).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert!(s.rows[0].v_obs.is_finite());
    let text = std::fs::read_to_string(dir.path().join("reports/bifurcation.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn grid_run_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    built(dir.path());
    let s = cmd_online(dir.path(), OnlineTarget::Grid(3, 4), None, None).unwrap();
    assert_eq!(s.rows.len(), 12);
    assert_eq!(s.errors.len(), 4);
    let reports = dir.path().join("reports");
    let csv = std::fs::read_to_string(reports.join("bifurcation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    let svg = std::fs::read_to_string(reports.join("bifurcation.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert_eq!(first_line(&reports.join("bifurcation.csv")), BIFURCATION_HEADER);
    assert_eq!(first_line(&reports.join("errors.csv")), ERROR_HEADER);
    assert_eq!(first_line(&reports.join("decay.csv")), DECAY_HEADER);
    assert_eq!(first_line(&reports.join("mdeim.csv")), MDEIM_HEADER);
    assert_eq!(first_line(&reports.join("timing.csv")), TIMING_HEADER);
    assert!(reports.join("decay.svg").exists());
}

#[test]
fn truncated_basis_writes_tagged_files() {
    let dir = tempfile::tempdir().unwrap();
    built(dir.path());
    let s = cmd_online(dir.path(), OnlineTarget::Training, Some(1), None).unwrap();
    assert_eq!(s.n, 1);
    assert!(dir.path().join("reports/bifurcation_N1.csv").exists());
    assert!(dir.path().join("reports/errors_N1.csv").exists());
    assert!(!dir.path().join("reports/errors.csv").exists());
    let err = cmd_online(dir.path(), OnlineTarget::Training, Some(99), None).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn report_counts_match_online_run() {
    let dir = tempfile::tempdir().unwrap();
    built(dir.path());
    let s = cmd_online(dir.path(), OnlineTarget::Training, None, None).unwrap();
    let r = cmd_report(dir.path()).unwrap();
    assert_eq!(r.n, s.n);
    assert_eq!(r.points, s.errors.len());
    assert_eq!(r.below_001, s.below_001);
    assert_eq!(r.below_01, s.below_01);
    assert_eq!(r.q.len(), 7);
    assert!(r.to_string().contains("N = "));
}

#[test]
fn changed_configuration_is_refused_with_a_diff() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = built(dir.path());
    cfg.pod_energy = 0.999;
    let err = cmd_offline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Provenance(_)));
    assert!(err.to_string().contains("pod_energy"), "{err}");
    let err = cmd_online(dir.path(), OnlineTarget::Training, None, Some(&cfg)).unwrap_err();
    assert!(err.to_string().contains("pod_energy"), "{err}");
}

#[test]
fn output_location_is_not_part_of_the_hash() {
    let a = common::toy_config(Path::new("/tmp/a"), (2, 2), 4);
    let b = common::toy_config(Path::new("/tmp/b"), (2, 2), 4);
    assert_eq!(a.hash(), b.hash());
}

#[test]
fn empty_store_points_to_offline() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_report(dir.path()).unwrap_err();
    assert!(err.to_string().contains("cmd_offline"), "{err}");
    let err = cmd_online(dir.path(), OnlineTarget::Training, None, None).unwrap_err();
    assert!(err.to_string().contains("offline"), "{err}");
}

#[test]
fn missing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    built(dir.path());
    let store = ArtifactStore::new(dir.path());
    let mut meta = store.read_meta().unwrap().unwrap();
    meta.stages.remove("mdeim");
    store.write_meta(&meta).unwrap();
    let err = cmd_online(dir.path(), OnlineTarget::Training, None, None).unwrap_err();
    assert!(err.to_string().contains("`mdeim`"), "{err}");

    meta.stages.insert("mdeim".into(), StageStatus::Failed { message: "boom".into() });
    store.write_meta(&meta).unwrap();
    let err = cmd_online(dir.path(), OnlineTarget::Training, None, None).unwrap_err();
    assert!(err.to_string().contains("boom"), "{err}");
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::toy_config(dir.path(), (3, 2), 4);
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let back = RunConfig::from_file(&path).unwrap();
    assert_eq!(back.hash(), cfg.hash());
    std::fs::write(&path, r#"{"grid": [0, 3]}"#).unwrap();
    assert!(RunConfig::from_file(&path).is_err());
}
