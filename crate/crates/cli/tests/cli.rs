use std::fs;
use std::path::{Path, PathBuf};

use mhcloc_cli::stages::{check_geodata, Artifacts};
use mhcloc_cli::{run_args, Failure, PipelineConfig};

const SMALL: &str = r#"
[paths]
towers = "data/towers.csv"
calls = "data/calls.csv"
boundary = "data/boundary.geojson"
partitions = ["data/partitions.geojson"]
current_facilities = "data/current_facilities.csv"
cache_dir = "out/cache"
output_dir = "out"

[cluster]
total_k = 30

[solver]
m = 5

[synth]
tower_count = 200
near_duplicates = 6
missing_coordinates = 2
foreign_towers = 2
current_facilities = 5
population = [
  { lat = 41.05, lon = 28.8, stddev_deg = 0.04, persons = 900 },
  { lat = 41.10, lon = 29.2, stddev_deg = 0.04, persons = 500 },
]
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.toml");
    fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

fn run(cfg: &Path, args: &[&str]) -> Result<String, Failure> {
    let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    argv.push("--config".into());
    argv.push(cfg.display().to_string());
    let mut out = Vec::new();
    run_args(argv, &mut out).map(|()| String::from_utf8(out).unwrap())
}

#[test]
fn synth_then_all_produces_every_artifact() {
    let (dir, cfg) = setup();
    run(&cfg, &["synth"]).unwrap();
    let text = run(&cfg, &["all"]).unwrap();
    assert!(text.contains("Scenario"), "{text}");
    for label in ["Current", "Distance-optimized", "Duration-optimized"] {
        assert!(text.contains(label));
    }

    let config = PipelineConfig::load(&cfg, &[]).unwrap();
    let art = Artifacts::new(&config);
    for (path, _) in art.geodata() {
        assert!(path.is_file(), "{} missing", path.display());
    }
    assert!(check_geodata(&art).is_empty(), "{:?}", check_geodata(&art));
    let report = fs::read_to_string(art.report_csv()).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(dir.path().join("data/ground_truth.csv").is_file());
    let ingest = fs::read_to_string(art.ingest_report()).unwrap();
    assert!(ingest.contains("issues: 0"), "{ingest}");
}

#[test]
fn stages_demand_their_predecessors() {
    let (_dir, cfg) = setup();
    let err = run(&cfg, &["solve"]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("run `cluster` first"), "{err}");

    let err = run(&cfg, &["residence"]).unwrap_err();
    assert!(err.to_string().contains("run `ingest` first"), "{err}");

    run(&cfg, &["synth"]).unwrap();
    run(&cfg, &["ingest"]).unwrap();
    run(&cfg, &["residence"]).unwrap();
    run(&cfg, &["cluster"]).unwrap();
    let err = run(&cfg, &["solve"]).unwrap_err();
    assert!(err.to_string().contains("run `costs` first"), "{err}");
    let err = run(&cfg, &["evaluate"]).unwrap_err();
    assert!(err.to_string().contains("run `costs` first"), "{err}");
    run(&cfg, &["costs"]).unwrap();
    let err = run(&cfg, &["evaluate"]).unwrap_err();
    assert!(err.to_string().contains("run `solve` first"), "{err}");
}

#[test]
fn missing_inputs_are_listed_together() {
    let (_dir, cfg) = setup();
    let err = run(&cfg, &["ingest"]).unwrap_err();
    let Failure::Config(issues) = &err else {
        panic!("{err}");
    };
    assert_eq!(issues.len(), 4, "{issues:?}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn invalid_config_reports_every_issue() {
    let (_dir, cfg) = setup();
    let err = run(&cfg, &["all", "--m", "0", "--set", "cluster.n_init=0", "--set", "residence.night_end=\"23:00:00\""]).unwrap_err();
    let Failure::Config(issues) = &err else {
        panic!("{err}");
    };
    assert_eq!(issues.len(), 3, "{issues:?}");
}

#[test]
fn flags_override_config() {
    let (dir, cfg) = setup();
    run(&cfg, &["synth"]).unwrap();
    let other = dir.path().join("elsewhere");
    let text = run(&cfg, &["all", "--m", "3", "--output-dir", other.to_str().unwrap()]).unwrap();
    assert!(text.contains("m = 3"), "{text}");
    assert!(other.join("report.txt").is_file());
    assert!(!dir.path().join("out/report.txt").exists());
}

#[test]
fn cost_cache_is_reused_and_refreshable() {
    let (_dir, cfg) = setup();
    run(&cfg, &["synth"]).unwrap();
    let first = run(&cfg, &["all"]).unwrap();
    assert!(first.contains("from provider"));
    let second = run(&cfg, &["costs"]).unwrap();
    assert!(second.contains("from cache"), "{second}");
    let third = run(&cfg, &["costs", "--refresh-costs"]).unwrap();
    assert!(third.contains("from provider"));
    // A different departure time invalidates the cache.
    let fourth = run(&cfg, &["costs", "--set", "costs.departure=\"2017-03-06T11:00:00\""]).unwrap();
    assert!(fourth.contains("from provider"));
}

#[test]
fn http_provider_without_key_fails_cleanly() {
    let (_dir, cfg) = setup();
    run(&cfg, &["synth"]).unwrap();
    run(&cfg, &["ingest"]).unwrap();
    run(&cfg, &["residence"]).unwrap();
    run(&cfg, &["cluster"]).unwrap();
    let err = run(&cfg, &["costs", "--provider", "http", "--set", "costs.http.token_env=MHCLOC_TEST_UNSET_KEY"]).unwrap_err();
    assert!(err.to_string().contains("MHCLOC_TEST_UNSET_KEY"), "{err}");
}

#[test]
fn binary_exit_status_reflects_failure_category() {
    let (_dir, cfg) = setup();
    let bin = env!("CARGO_BIN_EXE_mhcloc");
    let status = std::process::Command::new(bin).args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(status.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&status.stderr).contains("run `cluster` first"));
    let status = std::process::Command::new(bin).args(["ingest", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = std::process::Command::new(bin).args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}
