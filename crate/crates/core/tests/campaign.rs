use std::fs;
use std::path::Path;

use dcop_coord::bench::{run_campaign, CampaignOptions, CampaignOutcome, CampaignSpec, InstanceStatus, SeedRange};
use dcop_coord::metrics::read_records;
use dcop_coord::PolicyConfig;

fn small_spec(out: &Path) -> CampaignSpec {
    CampaignSpec {
        ns: vec![6, 8],
        n_sols: vec![2, 3],
        seeds: SeedRange { start: 0, end: 3 },
        runs: 4,
        max_iterations: 20_000,
        ..CampaignSpec::desk_scale(out)
    }
}

fn complete(spec: &CampaignSpec, options: &CampaignOptions) -> dcop_coord::bench::Manifest {
    match run_campaign(spec, options).unwrap() {
        CampaignOutcome::Complete(m) => m,
        CampaignOutcome::Interrupted { .. } => panic!("campaign did not complete"),
    }
}

#[test]
fn interrupted_campaign_resumes_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let straight = small_spec(&dir.path().join("straight"));
    let manifest = complete(&straight, &CampaignOptions { workers: Some(2), ..Default::default() });
    assert_eq!(manifest.instances.len(), 12);
    assert_eq!(manifest.total_runs, 12 * 4 * 4);

    let resumed = small_spec(&dir.path().join("resumed"));
    let first = run_campaign(
        &resumed,
        &CampaignOptions {
            workers: Some(1),
            stop_after_chunks: Some(7),
        },
    )
    .unwrap();
    assert!(matches!(first, CampaignOutcome::Interrupted { chunks_done: 7 }));
    assert!(!resumed.out_dir.join("records.csv").exists());
    let second = run_campaign(
        &resumed,
        &CampaignOptions {
            workers: Some(1),
            stop_after_chunks: Some(10),
        },
    )
    .unwrap();
    assert!(matches!(second, CampaignOutcome::Interrupted { chunks_done: 17 }));
    let resumed_manifest = complete(&resumed, &CampaignOptions { workers: Some(3), ..Default::default() });

    for file in ["records.csv", "report.csv", "report.json"] {
        let a = fs::read(straight.out_dir.join(file)).unwrap();
        let b = fs::read(resumed.out_dir.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs after resume");
    }
    assert_eq!(manifest.instances, resumed_manifest.instances);

    let records = read_records(fs::File::open(straight.out_dir.join("records.csv")).unwrap()).unwrap();
    let mut keys: Vec<_> = records
        .iter()
        .map(|r| (r.strategy.clone(), r.n, r.n_sol, r.instance_seed, r.run_index))
        .collect();
    let before = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), before, "duplicate records");
}

#[test]
fn rerunning_a_finished_campaign_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    complete(&spec, &CampaignOptions::default());
    let records = dir.path().join("records.csv");
    let stamp = fs::metadata(&records).unwrap().modified().unwrap();
    let bytes = fs::read(&records).unwrap();
    complete(&spec, &CampaignOptions::default());
    assert_eq!(fs::metadata(&records).unwrap().modified().unwrap(), stamp);
    assert_eq!(fs::read(&records).unwrap(), bytes);
}

#[test]
fn different_spec_in_same_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    complete(&spec, &CampaignOptions::default());
    let mut other = spec.clone();
    other.runs = 5;
    assert!(run_campaign(&other, &CampaignOptions::default()).is_err());
}

#[test]
fn oracle_limit_marks_instances_unranked() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CampaignSpec {
        solution_limit: 2,
        n_sols: vec![3],
        ns: vec![6],
        strategies: vec![PolicyConfig::KAll],
        ..small_spec(dir.path())
    };
    let manifest = complete(&spec, &CampaignOptions::default());
    assert!(manifest.instances.iter().all(|e| e.status == InstanceStatus::Unranked));
    let records = read_records(fs::File::open(dir.path().join("records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 3 * 4);
    assert!(records.iter().all(|r| r.rank.is_none() && r.regret_pct.is_none()));
    assert!(records.iter().any(|r| r.converged));
}

#[test]
fn generation_failures_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    // n_d = 1 leaves a single complete assignment, so two distinct plants
    // cannot exist; n_sol = 1 still works.
    let spec = CampaignSpec {
        ns: vec![4],
        n_sols: vec![1, 2],
        n_d: 1,
        seeds: SeedRange { start: 0, end: 2 },
        strategies: vec![PolicyConfig::k1()],
        runs: 2,
        ..small_spec(dir.path())
    };
    let manifest = complete(&spec, &CampaignOptions::default());
    let failed: Vec<_> = manifest
        .instances
        .iter()
        .filter(|e| e.status == InstanceStatus::Failed)
        .collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|e| e.error.as_deref().unwrap().contains("distinct")));
    assert!(failed.iter().all(|e| e.run_files.is_empty()));
    assert_eq!(manifest.total_runs, 2 * 2);
    let manifest_json = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest_json.contains("\"failed\""));
}
