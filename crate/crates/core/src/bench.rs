//! Experiment campaigns: generate instances, enumerate their solutions, run
//! every strategy on every instance and aggregate the results.
//!
//! All intermediate products are flat files under the output directory and
//! are keyed by parameters, so an interrupted campaign resumes where it
//! stopped:
//!
//! ```text
//! out/
//!   spec.json                       campaign spec, checked on resume
//!   instances/inst_n10_s3_seed0.json
//!   solutions/inst_n10_s3_seed0.json    (or .unranked.json)
//!   runs/inst_n10_s3_seed0__kall.csv    one file per (instance, strategy)
//!   records.csv  report.csv  report.json  manifest.json
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinate::{run_coordination, PolicyConfig, DEFAULT_MAX_ITERATIONS};
use crate::enumerate::{enumerate_solutions, RankMode, SolutionSet, DEFAULT_SOLUTION_LIMIT};
use crate::error::{Error, Result};
use crate::generator::{generate_instance, GenerationParams, DEFAULT_N_D, DEFAULT_P_INT};
use crate::metrics::{self, AggregateOptions, RunRecord};
use crate::problem::ProblemInstance;
use crate::rng::derive_run_seed;

pub const WORKERS_ENV: &str = "DCOP_COORD_WORKERS";

/// Half-open seed range, written `a..b` (or `a..=b` for an inclusive end).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromStr for SeedRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("bad seed range {s:?}, expected a..b or a..=b"));
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
        if let Some((a, b)) = s.split_once("..=") {
            Ok(SeedRange {
                start: parse(a)?,
                end: parse(b)? + 1,
            })
        } else if let Some((a, b)) = s.split_once("..") {
            Ok(SeedRange {
                start: parse(a)?,
                end: parse(b)?,
            })
        } else {
            let v = parse(s)?;
            Ok(SeedRange { start: v, end: v + 1 })
        }
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl Serialize for SeedRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SeedRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_p_int() -> f64 {
    DEFAULT_P_INT
}
fn default_n_d() -> usize {
    DEFAULT_N_D
}
fn default_max_iterations() -> u64 {
    DEFAULT_MAX_ITERATIONS
}
fn default_limit() -> usize {
    DEFAULT_SOLUTION_LIMIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub ns: Vec<usize>,
    pub n_sols: Vec<usize>,
    pub seeds: SeedRange,
    #[serde(default = "default_p_int")]
    pub p_int: f64,
    #[serde(default = "default_n_d")]
    pub n_d: usize,
    pub strategies: Vec<PolicyConfig>,
    pub runs: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    #[serde(default = "default_limit")]
    pub solution_limit: usize,
    #[serde(default)]
    pub rank_mode: RankMode,
    pub out_dir: PathBuf,
}

impl CampaignSpec {
    /// The four strategies compared in the experiments: k1, kall, kada, dsa.
    pub fn standard_strategies() -> Vec<PolicyConfig> {
        vec![
            PolicyConfig::k1(),
            PolicyConfig::KAll,
            PolicyConfig::adaptive(),
            PolicyConfig::dsa(),
        ]
    }

    /// n in {10, 20, 50, 100}, n_sol in {3, 5, 10}, seeds 0..100, 100 runs.
    pub fn full_scale(out_dir: impl Into<PathBuf>) -> Self {
        CampaignSpec {
            ns: vec![10, 20, 50, 100],
            n_sols: vec![3, 5, 10],
            seeds: SeedRange { start: 0, end: 100 },
            p_int: DEFAULT_P_INT,
            n_d: DEFAULT_N_D,
            strategies: Self::standard_strategies(),
            runs: 100,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            solution_limit: DEFAULT_SOLUTION_LIMIT,
            rank_mode: RankMode::Dense,
            out_dir: out_dir.into(),
        }
    }

    /// n in {10, 20}, n_sol in {3, 5}, seeds 0..20, 20 runs.
    pub fn desk_scale(out_dir: impl Into<PathBuf>) -> Self {
        CampaignSpec {
            ns: vec![10, 20],
            n_sols: vec![3, 5],
            seeds: SeedRange { start: 0, end: 20 },
            runs: 20,
            ..Self::full_scale(out_dir)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.n_sols.is_empty() || self.seeds.is_empty() || self.strategies.is_empty() {
            return Err(Error::InvalidParams("campaign grid has an empty axis".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParams("runs must be at least 1".into()));
        }
        let mut names: Vec<String> = self.strategies.iter().map(PolicyConfig::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.strategies.len() {
            return Err(Error::InvalidParams("duplicate strategies in campaign".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        for p in self.grid() {
            p.validate()?;
        }
        Ok(())
    }

    /// Generation parameters of every grid point, in n, n_sol, seed order.
    pub fn grid(&self) -> Vec<GenerationParams> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &n_sol in &self.n_sols {
                for seed in self.seeds.iter() {
                    out.push(GenerationParams {
                        n,
                        p_int: self.p_int,
                        n_d: self.n_d,
                        n_sol,
                        seed,
                    });
                }
            }
        }
        out
    }

    pub fn instance_count(&self) -> usize {
        self.ns.len() * self.n_sols.len() * self.seeds.len()
    }

    pub fn total_runs(&self) -> u64 {
        self.instance_count() as u64 * self.strategies.len() as u64 * self.runs
    }
}

#[derive(Clone, Debug, Default)]
pub struct CampaignOptions {
    /// Worker threads; `None` uses the `DCOP_COORD_WORKERS` variable or all
    /// cores.
    pub workers: Option<usize>,
    /// Stop after this many (instance, strategy) chunks have been run.
    /// Simulates an interruption.
    pub stop_after_chunks: Option<usize>,
}

/// Worker count: the environment variable wins over the requested value.
pub fn effective_workers(requested: Option<usize>) -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .or(requested.filter(|&w| w > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Ranked,
    /// Enumeration hit the solution limit; runs are recorded without ranks.
    Unranked,
    /// Generation failed; no runs.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub params: GenerationParams,
    pub status: InstanceStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solutions_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_count: Option<usize>,
    pub run_files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CampaignSpec,
    pub instances: Vec<InstanceEntry>,
    pub total_runs: usize,
    pub records: String,
    pub report_csv: String,
    pub report_json: String,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum CampaignOutcome {
    Complete(Manifest),
    /// Stopped early by `stop_after_chunks`; rerun to finish.
    Interrupted { chunks_done: usize },
}

const SPEC_FILE: &str = "spec.json";
const MANIFEST_FILE: &str = "manifest.json";
const RECORDS_FILE: &str = "records.csv";
const REPORT_CSV: &str = "report.csv";
const REPORT_JSON: &str = "report.json";

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

struct Prepared {
    params: GenerationParams,
    stem: String,
    instance: Option<ProblemInstance>,
    solutions: Option<SolutionSet>,
    entry: InstanceEntry,
}

fn prepare_instance(spec: &CampaignSpec, params: GenerationParams) -> Result<Prepared> {
    let name = params.file_name();
    let stem = name.trim_end_matches(".json").to_string();
    let inst_rel = format!("instances/{name}");
    let inst_path = spec.out_dir.join(&inst_rel);
    let mut entry = InstanceEntry {
        params: params.clone(),
        status: InstanceStatus::Ranked,
        error: None,
        instance_file: None,
        solutions_file: None,
        solution_count: None,
        run_files: Vec::new(),
    };

    let instance = if inst_path.exists() {
        ProblemInstance::load(&inst_path)?
    } else {
        match generate_instance(&params) {
            Ok(instance) => {
                write_atomic(&inst_path, instance.to_json().as_bytes())?;
                instance
            }
            Err(e @ Error::DistinctSolutionExhaustion { .. }) => {
                entry.status = InstanceStatus::Failed;
                entry.error = Some(e.to_string());
                return Ok(Prepared {
                    params,
                    stem,
                    instance: None,
                    solutions: None,
                    entry,
                });
            }
            Err(e) => return Err(e),
        }
    };
    entry.instance_file = Some(inst_rel);

    let sol_rel = format!("solutions/{stem}.json");
    let unranked_rel = format!("solutions/{stem}.unranked.json");
    let sol_path = spec.out_dir.join(&sol_rel);
    let unranked_path = spec.out_dir.join(&unranked_rel);
    let solutions = if sol_path.exists() {
        Some(SolutionSet::load(&sol_path)?)
    } else if unranked_path.exists() {
        None
    } else {
        match enumerate_solutions(&instance, Some(spec.solution_limit)) {
            Ok(set) => {
                write_atomic(&sol_path, set.to_json().as_bytes())?;
                Some(set)
            }
            Err(e @ Error::LimitExceeded { .. }) => {
                let marker = serde_json::json!({ "error": e.to_string() });
                write_atomic(&unranked_path, marker.to_string().as_bytes())?;
                None
            }
            Err(e) => return Err(e),
        }
    };
    match &solutions {
        Some(set) => {
            entry.solutions_file = Some(sol_rel);
            entry.solution_count = Some(set.len());
        }
        None => {
            entry.status = InstanceStatus::Unranked;
            entry.error = Some(format!("more than {} solutions exist", spec.solution_limit));
            entry.solutions_file = Some(unranked_rel);
        }
    }
    Ok(Prepared {
        params,
        stem,
        instance: Some(instance),
        solutions,
        entry,
    })
}

fn run_chunk(
    spec: &CampaignSpec,
    prepared: &Prepared,
    policy: &PolicyConfig,
) -> Result<Vec<RunRecord>> {
    let instance = prepared.instance.as_ref().expect("chunk on a generated instance");
    let name = policy.name();
    (0..spec.runs)
        .map(|run_index| {
            let run_seed = derive_run_seed(prepared.params.seed, run_index);
            let mut result = run_coordination(instance, policy, run_seed, spec.max_iterations, None)?;
            if let Some(set) = &prepared.solutions {
                result.rank_against(set, spec.rank_mode)?;
            }
            Ok(RunRecord::from_result(
                &name,
                prepared.params.n,
                prepared.params.n_sol,
                prepared.params.seed,
                run_index,
                &result,
            ))
        })
        .collect()
}

/// Runs (or resumes) a campaign.
pub fn run_campaign(spec: &CampaignSpec, options: &CampaignOptions) -> Result<CampaignOutcome> {
    spec.validate()?;
    let out = &spec.out_dir;
    for sub in ["instances", "solutions", "runs"] {
        create_dir(&out.join(sub))?;
    }
    let spec_path = out.join(SPEC_FILE);
    let spec_json = serde_json::to_string_pretty(spec)?;
    if spec_path.exists() {
        let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let previous: CampaignSpec = serde_json::from_str(&text)?;
        if &previous != spec {
            return Err(Error::InvalidParams(format!(
                "{} holds a different campaign",
                out.display()
            )));
        }
        let manifest_path = out.join(MANIFEST_FILE);
        if manifest_path.exists() && out.join(RECORDS_FILE).exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            return Ok(CampaignOutcome::Complete(serde_json::from_str(&text)?));
        }
    } else {
        write_atomic(&spec_path, spec_json.as_bytes())?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_workers(options.workers))
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;

    pool.install(|| -> Result<CampaignOutcome> {
        let mut prepared: Vec<Prepared> = spec
            .grid()
            .into_par_iter()
            .map(|params| prepare_instance(spec, params))
            .collect::<Result<_>>()?;

        let tasks: Vec<(usize, usize)> = prepared
            .iter()
            .enumerate()
            .filter(|(_, p)| p.instance.is_some())
            .flat_map(|(i, _)| (0..spec.strategies.len()).map(move |s| (i, s)))
            .collect();

        let started = AtomicUsize::new(0);
        let budget = options.stop_after_chunks.unwrap_or(usize::MAX);
        let outcomes: Vec<Option<Vec<RunRecord>>> = tasks
            .par_iter()
            .map(|&(i, s)| -> Result<Option<Vec<RunRecord>>> {
                let p = &prepared[i];
                let policy = &spec.strategies[s];
                let path = out.join(chunk_rel(&p.stem, policy));
                if path.exists() {
                    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                    return Ok(Some(metrics::read_records(file)?));
                }
                if started.fetch_add(1, Ordering::SeqCst) >= budget {
                    return Ok(None);
                }
                let records = run_chunk(spec, p, policy)?;
                let mut buf = Vec::new();
                metrics::write_records(&mut buf, &records)?;
                write_atomic(&path, &buf)?;
                Ok(Some(records))
            })
            .collect::<Result<_>>()?;

        if outcomes.iter().any(Option::is_none) {
            let chunks_done = outcomes.iter().filter(|o| o.is_some()).count();
            return Ok(CampaignOutcome::Interrupted { chunks_done });
        }

        let mut records: Vec<RunRecord> = Vec::with_capacity(spec.total_runs() as usize);
        for (&(i, s), chunk) in tasks.iter().zip(outcomes) {
            let rel = chunk_rel(&prepared[i].stem, &spec.strategies[s]);
            prepared[i].entry.run_files.push(rel);
            records.extend(chunk.expect("all chunks present"));
        }
        metrics::sort_records(&mut records);

        let mut buf = Vec::new();
        metrics::write_records(&mut buf, &records)?;
        write_atomic(&out.join(RECORDS_FILE), &buf)?;

        let reports = metrics::aggregate(
            &records,
            &AggregateOptions {
                max_iterations: spec.max_iterations,
                ..Default::default()
            },
        );
        let mut buf = Vec::new();
        metrics::write_report_csv(&mut buf, &reports)?;
        write_atomic(&out.join(REPORT_CSV), &buf)?;
        write_atomic(&out.join(REPORT_JSON), metrics::report_json(&reports).as_bytes())?;

        let manifest = Manifest {
            spec: spec.clone(),
            instances: prepared.into_iter().map(|p| p.entry).collect(),
            total_runs: records.len(),
            records: RECORDS_FILE.into(),
            report_csv: REPORT_CSV.into(),
            report_json: REPORT_JSON.into(),
        };
        write_atomic(
            &out.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )?;
        Ok(CampaignOutcome::Complete(manifest))
    })
}

fn chunk_rel(stem: &str, policy: &PolicyConfig) -> String {
    format!("runs/{stem}__{}.csv", policy.name())
}
