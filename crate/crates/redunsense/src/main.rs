//! Command-line front end: component-set generation, microstate counting,
//! single-realization analysis, Monte Carlo sweeps, and result comparison.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. All output is
//! deterministic given the flags; randomness flows only from explicit seeds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use redunsense::components::{self, MismatchModel};
use redunsense::error::Error;
use redunsense::experiments::{ExperimentConfig, ReportFormat, ResultTable};
use redunsense::metrics::{self, MetricMode};
use redunsense::microstates;
use redunsense::selection::{SelectionStrategy, DEFAULT_SWAP_BUDGET};

#[derive(Parser)]
#[command(name = "redunsense", version, about = "Redundant sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a component-set file for one of the built-in architectures.
    Gen(GenArgs),
    /// Count the microstates of a code, or export the full capacity profile.
    Count(CountArgs),
    /// Realize one mismatch world and export its transfer-function metrics.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo sweep from a JSON config.
    Sweep(SweepArgs),
    /// Merge sweep results and print improvement ratios.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchFlag {
    Cos,
    Crs,
    Res,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    arch: ArchFlag,
    /// Resolution N in bits.
    #[arg(long)]
    bits: u32,
    /// Replica count (CRS only).
    #[arg(long)]
    replicas: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    set: PathBuf,
    /// Count a single code and print it.
    #[arg(long, conflicts_with = "all")]
    code: Option<u64>,
    /// Export the full `code,count` capacity profile.
    #[arg(long, requires = "out")]
    all: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyFlag {
    BruteForce,
    Mitm,
    SplitDp,
    GreedySwap,
    ReplicaBest,
    Canonical,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeFlag {
    GainNormalized,
    Raw,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    strategy: StrategyFlag,
    #[arg(long, default_value_t = DEFAULT_SWAP_BUDGET)]
    swap_budget: u32,
    #[arg(long, value_enum, default_value = "gain-normalized")]
    mode: ModeFlag,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// One or more results.json files from `sweep`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_)
                | Error::SchemaViolation { .. }
                | Error::StrategyMismatch { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Count(args) => cmd_count(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let set = match args.arch {
        ArchFlag::Cos => {
            if args.replicas.is_some() {
                return Err(Error::InvalidArgument(
                    "--replicas only applies to --arch crs".into(),
                ));
            }
            components::gen_binary(args.bits)?
        }
        ArchFlag::Res => {
            if args.replicas.is_some() {
                return Err(Error::InvalidArgument(
                    "--replicas only applies to --arch crs".into(),
                ));
            }
            components::gen_dual_binary(args.bits)?
        }
        ArchFlag::Crs => {
            let r = args.replicas.ok_or_else(|| {
                Error::InvalidArgument("--arch crs requires --replicas".into())
            })?;
            components::gen_replicated(args.bits, r)?
        }
    };
    set.save(&args.out)?;
    println!("{} unit components", set.full_scale());
    Ok(())
}

fn cmd_count(args: CountArgs) -> Result<(), Error> {
    let set = components::load_custom(&args.set)?;
    match (args.code, args.all) {
        (Some(code), false) => {
            let count = microstates::count_microstates(&set, code)?;
            println!("{count}");
            Ok(())
        }
        (None, true) => {
            let profile = microstates::capacity_profile(&set)?;
            let out = args.out.expect("clap enforces --out with --all");
            profile.write_csv(&out)?;
            println!("{} codes", profile.counts.len());
            Ok(())
        }
        _ => Err(Error::InvalidArgument(
            "pass exactly one of --code or --all".into(),
        )),
    }
}

fn to_strategy(flag: StrategyFlag, swap_budget: u32) -> SelectionStrategy {
    match flag {
        StrategyFlag::BruteForce => SelectionStrategy::BruteForce,
        StrategyFlag::Mitm => SelectionStrategy::Mitm,
        StrategyFlag::SplitDp => SelectionStrategy::SplitDp,
        StrategyFlag::GreedySwap => SelectionStrategy::GreedySwap { swap_budget },
        StrategyFlag::ReplicaBest => SelectionStrategy::ReplicaBest,
        StrategyFlag::Canonical => SelectionStrategy::Canonical,
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let set = components::load_custom(&args.set)?;
    let strategy = to_strategy(args.strategy, args.swap_budget);
    // validate before any realization or file output so usage errors never
    // leave partial files behind
    strategy.check_admissible(&set)?;
    let model = MismatchModel::new(args.sigma)?;
    let mode = match args.mode {
        ModeFlag::GainNormalized => MetricMode::GainNormalized,
        ModeFlag::Raw => MetricMode::Raw,
    };
    let realized = components::realize(&set, &model, args.seed)?;
    let tf = metrics::transfer_function(&realized, strategy)?;
    let report = metrics::summary(&tf, mode);
    metrics::write_csv(&tf, &report, &args.out)?;
    println!("max_inl {}", report.max_inl);
    Ok(())
}

fn init_threads() {
    if let Ok(v) = std::env::var("REDUNSENSE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let config = ExperimentConfig::load(&args.config)?;
    init_threads();
    let table = redunsense::experiments::run_sweep(&config)?;
    table.write(ReportFormat::Csv, &args.out_dir)?;
    table.write(ReportFormat::Json, &args.out_dir)?;
    println!("{} rows, {} reseeds", table.rows.len(), table.reseeds);
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let mut tables = Vec::with_capacity(args.results.len());
    for path in &args.results {
        tables.push(ResultTable::read_json(path)?);
    }
    let merged = redunsense::experiments::merge(tables);
    for agg in &merged.aggregates {
        let ratio = agg
            .improvement_ratio
            .map_or_else(|| "-".to_string(), |r| r.to_string());
        println!(
            "{} {} {} {} {}",
            agg.arch, agg.strategy, agg.n, agg.sigma, ratio
        );
    }
    Ok(())
}
