use std::collections::BTreeMap;
use std::path::Path;

use mhcloc::ingest::{clean_towers, parse_calls, parse_towers, site_index, IngestConfig, ParseMode, StudyArea, TowerId};
use mhcloc::residence::{night_filter, residence_distribution, ResidenceConfig};
use mhcloc::synth::{generate, DatasetPaths, ScenarioSpec};

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

struct Run {
    truth: BTreeMap<String, TowerId>,
    table: mhcloc::residence::ResidenceTable,
    report_entries: usize,
    merged: usize,
}

fn run(spec: &ScenarioSpec, dir: &Path) -> Run {
    let data = generate(spec).unwrap();
    let paths: DatasetPaths = data.write_to(dir).unwrap();
    let cfg = IngestConfig::default();
    let area = StudyArea::load(&paths.boundary, std::slice::from_ref(&paths.partitions)).unwrap();
    let (raw, tower_report) = parse_towers(&paths.towers, ParseMode::Strict).unwrap();
    let cleaned = clean_towers(&raw, &cfg, &area).unwrap();
    let ingest = parse_calls(&paths.calls, &cleaned.towers, &cfg).unwrap();
    let index = site_index(&cleaned.towers);
    let truth = data.ground_truth.iter().map(|(c, s)| (c.clone(), index[s].clone())).collect();
    let night = night_filter(&ingest.calls, &ResidenceConfig::default());
    Run {
        truth,
        table: residence_distribution(&night).unwrap(),
        report_entries: tower_report.len() + ingest.report.len(),
        merged: raw.len() - cleaned.towers.len(),
    }
}

#[test]
fn default_scenario_ingests_cleanly_and_recovers_homes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec {
        noise: 0.0,
        ..Default::default()
    };
    let r = run(&spec, dir.path());
    assert_eq!(r.report_entries, 0);
    assert!(r.merged >= spec.near_duplicates + spec.missing_coordinates + spec.foreign_towers);
    let mut recovered = 0;
    for (caller, dist) in &r.table.subscribers {
        let home = &r.truth[caller];
        if dist.len() == 1 && dist.get(home) == Some(&1.0) {
            recovered += 1;
        }
    }
    assert_eq!(recovered, r.table.subscribers.len());
    assert!(r.table.subscribers.len() as f64 > 0.99 * spec.persons() as f64);
}

#[test]
fn noisy_scenario_correlates_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec {
        noise: 0.3,
        ..Default::default()
    };
    let r = run(&spec, dir.path());
    let mut truth_counts: BTreeMap<&TowerId, f64> = BTreeMap::new();
    for t in r.truth.values() {
        *truth_counts.entry(t).or_default() += 1.0;
    }
    let towers: Vec<&TowerId> = truth_counts.keys().copied().chain(r.table.expected_residents.keys()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let x: Vec<f64> = towers.iter().map(|t| truth_counts.get(t).copied().unwrap_or(0.0)).collect();
    let y: Vec<f64> = towers.iter().map(|t| r.table.expected_residents.get(*t).copied().unwrap_or(0.0)).collect();
    let corr = pearson(&x, &y);
    eprintln!("pearson r = {corr}");
    assert!(corr >= 0.95, "r = {corr}");
}
