use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcop_coord::bench::{run_campaign, CampaignOptions, CampaignOutcome, CampaignSpec, SeedRange};
use dcop_coord::coordinate::{
    run_coordination, PolicyConfig, DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS, DEFAULT_T_START,
    DEFAULT_WINDOW,
};
use dcop_coord::enumerate::{enumerate_solutions, RankMode, SolutionSet, DEFAULT_SOLUTION_LIMIT};
use dcop_coord::generator::{generate_instance, GenerationParams, DEFAULT_N_D, DEFAULT_P_INT};
use dcop_coord::metrics::{self, AggregateOptions, RunRecord, TopRateMode};
use dcop_coord::rng::derive_run_seed;
use dcop_coord::{Error, ProblemInstance, Result};

#[derive(Parser)]
#[command(name = "dcop-coord", version, about = "Decentralised path coordination: generate, solve, simulate, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instances with planted solutions.
    Gen(GenArgs),
    /// Enumerate every solution of an instance.
    Solve(SolveArgs),
    /// Simulate a coordination strategy on an instance.
    Run(RunArgs),
    /// Aggregate a records CSV into report tables.
    Report(ReportArgs),
    /// Run a full generate / solve / simulate / report campaign.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_P_INT)]
    p_int: f64,
    #[arg(long, default_value_t = DEFAULT_N_D)]
    n_d: usize,
    #[arg(long)]
    n_sol: usize,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed range, `a..b` or `a..=b`.
    #[arg(long)]
    seeds: Option<SeedRange>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SOLUTION_LIMIT)]
    limit: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    K1,
    Kall,
    Kada,
    Dsa,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RankModeArg {
    Dense,
    Ordinal,
}

impl From<RankModeArg> for RankMode {
    fn from(m: RankModeArg) -> Self {
        match m {
            RankModeArg::Dense => RankMode::Dense,
            RankModeArg::Ordinal => RankMode::Ordinal,
        }
    }
}

#[derive(Args, Clone)]
struct PolicyArgs {
    /// Neighbour sample size for the fixed-k strategy.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_T_START)]
    t_start: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: u64,
}

impl PolicyArgs {
    fn policy(&self, strategy: StrategyArg) -> PolicyConfig {
        match strategy {
            StrategyArg::K1 => PolicyConfig::KFixed { k: self.k },
            StrategyArg::Kall => PolicyConfig::KAll,
            StrategyArg::Kada => PolicyConfig::KAdaptive {
                t_start: self.t_start,
                window: self.window,
            },
            StrategyArg::Dsa => PolicyConfig::Dsa {
                alpha: self.alpha,
                epsilon: self.epsilon,
            },
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iters: u64,
    /// Base seed for run seeds; defaults to the instance's generation seed.
    #[arg(long)]
    run_seed_base: Option<u64>,
    /// Solutions file from `solve`, used for rank and regret.
    #[arg(long)]
    solutions: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dense")]
    rank_mode: RankModeArg,
    /// Records CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Writes `<prefix>.csv` and `<prefix>.json`.
    #[arg(long)]
    out_prefix: PathBuf,
    /// Average the top-3 rate per instance instead of over all runs.
    #[arg(long)]
    per_instance: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iters: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Campaign spec JSON; replaces the grid flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20])]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5])]
    n_sols: Vec<usize>,
    #[arg(long, default_value = "0..20")]
    seeds: SeedRange,
    #[arg(long, default_value_t = DEFAULT_P_INT)]
    p_int: f64,
    #[arg(long, default_value_t = DEFAULT_N_D)]
    n_d: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::K1, StrategyArg::Kall, StrategyArg::Kada, StrategyArg::Dsa])]
    strategies: Vec<StrategyArg>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 20)]
    runs: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iters: u64,
    #[arg(long, default_value_t = DEFAULT_SOLUTION_LIMIT)]
    limit: usize,
    #[arg(long, value_enum, default_value = "dense")]
    rank_mode: RankModeArg,
    #[arg(long, default_value = "campaign")]
    out_dir: PathBuf,
    /// Worker threads (overridden by DCOP_COORD_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let seeds = match (args.seed, args.seeds) {
        (Some(s), None) => SeedRange { start: s, end: s + 1 },
        (None, Some(r)) => r,
        (None, None) => SeedRange { start: 0, end: 1 },
        (Some(_), Some(_)) => unreachable!("clap rejects --seed with --seeds"),
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    for seed in seeds.iter() {
        let params = GenerationParams {
            n: args.n,
            p_int: args.p_int,
            n_d: args.n_d,
            n_sol: args.n_sol,
            seed,
        };
        let instance = generate_instance(&params)?;
        let path = args.out_dir.join(params.file_name());
        write_output(Some(&path), instance.to_json().as_bytes())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let instance = ProblemInstance::load(&args.instance)?;
    let set = enumerate_solutions(&instance, Some(args.limit))?;
    write_output(args.out.as_deref(), set.to_json().as_bytes())?;
    eprintln!(
        "{} solutions, optimal value {}",
        set.len(),
        set.optimal_value().map_or("-".to_string(), |v| v.to_string())
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let instance = ProblemInstance::load(&args.instance)?;
    let solutions = args.solutions.as_deref().map(SolutionSet::load).transpose()?;
    let policy = args.policy.policy(args.strategy);
    policy.validate()?;
    let (n_sol, meta_seed) = instance.meta().map_or((0, 0), |m| (m.n_sol, m.seed));
    let base = args.run_seed_base.unwrap_or(meta_seed);
    let name = policy.name();
    let mut records = Vec::with_capacity(args.runs as usize);
    for run_index in 0..args.runs {
        let run_seed = derive_run_seed(base, run_index);
        let mut result = run_coordination(&instance, &policy, run_seed, args.max_iters, None)?;
        if let Some(set) = &solutions {
            result.rank_against(set, args.rank_mode.into())?;
        }
        records.push(RunRecord::from_result(
            &name,
            instance.agent_count(),
            n_sol,
            base,
            run_index,
            &result,
        ));
    }
    let mut buf = Vec::new();
    metrics::write_records(&mut buf, &records)?;
    write_output(args.out.as_deref(), &buf)?;
    let converged = records.iter().filter(|r| r.converged).count();
    eprintln!("{name}: {converged}/{} runs converged", records.len());
    Ok(())
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn report(args: ReportArgs) -> Result<()> {
    let file = fs::File::open(&args.input).map_err(|e| Error::Io {
        path: args.input.clone(),
        source: e,
    })?;
    let records = metrics::read_records(file)?;
    let options = AggregateOptions {
        top_rate: if args.per_instance {
            TopRateMode::PerInstance
        } else {
            TopRateMode::Pooled
        },
        max_iterations: args.max_iters,
    };
    let reports = metrics::aggregate(&records, &options);
    let mut buf = Vec::new();
    metrics::write_report_csv(&mut buf, &reports)?;
    write_output(Some(&with_extension(&args.out_prefix, ".csv")), &buf)?;
    write_output(
        Some(&with_extension(&args.out_prefix, ".json")),
        metrics::report_json(&reports).as_bytes(),
    )?;
    eprintln!("{} groups from {} records", reports.len(), records.len());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)?
        }
        None => CampaignSpec {
            ns: args.ns.clone(),
            n_sols: args.n_sols.clone(),
            seeds: args.seeds,
            p_int: args.p_int,
            n_d: args.n_d,
            strategies: args.strategies.iter().map(|&s| args.policy.policy(s)).collect(),
            runs: args.runs,
            max_iterations: args.max_iters,
            solution_limit: args.limit,
            rank_mode: args.rank_mode.into(),
            out_dir: args.out_dir.clone(),
        },
    };
    let options = CampaignOptions {
        workers: args.workers,
        stop_after_chunks: None,
    };
    match run_campaign(&spec, &options)? {
        CampaignOutcome::Complete(manifest) => {
            eprintln!(
                "{} instances, {} runs -> {}",
                manifest.instances.len(),
                manifest.total_runs,
                spec.out_dir.join(&manifest.records).display()
            );
        }
        CampaignOutcome::Interrupted { chunks_done } => {
            eprintln!("interrupted after {chunks_done} chunks; rerun to resume");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
