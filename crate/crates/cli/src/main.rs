use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rankmoe::emm::fit;
use rankmoe::io::{
    build_design, mosaic, mosaic_csv, parse_ballots, parse_config, parse_covariates,
    parse_long_ballots, write_ballots, write_config, write_covariates, BallotTable, Design,
    FitReport, RunConfig, SelectionReport, StvReport,
};
use rankmoe::selection::backward_eliminate;
use rankmoe::stv::{count_election, CountOptions, TieBreak};
use rankmoe::synth::{generate, GeneratorSpec, Truth};

/// Mixture-of-experts models for ranked ballots, and STV counts.
#[derive(Parser)]
#[command(name = "rankmoe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a K-component model and write its report.
    Fit(FitArgs),
    /// Backward elimination over covariates and a range of K.
    Select(SelectArgs),
    /// Generate a synthetic dataset from a spec file.
    Simulate(SimulateArgs),
    /// Count a single-seat STV election.
    Stv(StvArgs),
    /// Turn a fit report into plot-ready mosaic segments.
    Mosaic(MosaicArgs),
    /// Convert a long (voter, rank, candidate) ballot file to wide format.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Wide ballot file: id, pref1..prefN.
    #[arg(long)]
    ballots: PathBuf,
    /// Covariate file: id, one column per covariate.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Fix every dampening parameter at 1.
    #[arg(long)]
    plackett_luce: bool,
    /// Use covariates on their original scale.
    #[arg(long)]
    no_standardize: bool,
    /// Write here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of components.
    #[arg(long, short)]
    k: usize,
    #[arg(long)]
    no_standard_errors: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long)]
    k_max: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator spec, JSON or TOML (by extension).
    #[arg(long)]
    spec: PathBuf,
    /// Directory for ballots.csv, covariates.csv, config.toml and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    EarliestRound,
    Error,
}

#[derive(Args)]
struct StvArgs {
    #[arg(long)]
    ballots: PathBuf,
    /// Ballots are in long format.
    #[arg(long)]
    long: bool,
    /// Candidate list (TOML config with `candidates`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exclude one candidate per count.
    #[arg(long)]
    no_batch: bool,
    #[arg(long, value_enum, default_value = "earliest-round")]
    tie_break: TieArg,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MosaicArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => parse_config(&read(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// Config file, then flags on top.
fn resolve(args: &DataArgs) -> Result<(RunConfig, Design)> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.fit.seed = s;
    }
    if let Some(s) = args.starts {
        cfg.fit.n_random_starts = s;
    }
    if let Some(m) = args.max_iters {
        cfg.fit.max_emm_iters = m;
    }
    if args.plackett_luce {
        cfg.fit.fix_plackett_luce = true;
    }
    if args.no_standardize {
        cfg.standardize = false;
    }
    cfg.validate()?;
    let ballots = parse_ballots(&read(&args.ballots)?, cfg.candidates.as_deref())
        .with_context(|| format!("in {}", args.ballots.display()))?;
    let covs = match &args.covariates {
        Some(p) => Some(parse_covariates(&read(p)?).with_context(|| format!("in {}", p.display()))?),
        None => None,
    };
    let design = build_design(&ballots, covs.as_ref(), &cfg.categorical, cfg.standardize)
        .with_context(|| args.covariates.as_ref().map_or(String::new(), |p| format!("in {}", p.display())))?;
    Ok((cfg, design))
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let (mut cfg, design) = resolve(&args.data)?;
    if args.no_standard_errors {
        cfg.fit.compute_standard_errors = false;
    }
    let result = fit(&design.dataset, args.k, &cfg.fit)?;
    let report = FitReport::new(&design.dataset, &result, &cfg.fit, design.standardizer.as_ref());
    emit(args.data.output.as_deref(), &report.to_json()?)
}

fn run_select(args: &SelectArgs) -> Result<()> {
    let (mut cfg, design) = resolve(&args.data)?;
    if args.k_min < 1 || args.k_max < args.k_min {
        bail!("need 1 <= k-min <= k-max");
    }
    cfg.fit.compute_standard_errors = false;
    let ks: Vec<usize> = (args.k_min..=args.k_max).collect();
    let scores = backward_eliminate(&design.dataset, &design.groups, &ks, &cfg.fit)?;
    let report = SelectionReport::new(&scores, &ks, cfg.fit.seed);
    let text = match args.format {
        Format::Json => report.to_json()?,
        Format::Table => report.to_table(),
    };
    emit(args.data.output.as_deref(), &text)
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let text = read(&args.spec)?;
    let is_toml = args.spec.extension().is_some_and(|e| e == "toml");
    let mut spec = if is_toml {
        GeneratorSpec::from_toml(&text)
    } else {
        GeneratorSpec::from_json(&text)
    }
    .with_context(|| format!("in {}", args.spec.display()))?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let data = generate(&spec)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let ballots = BallotTable {
        ids: data.table.ids.clone(),
        candidates: data.dataset.candidate_names().to_vec(),
        ballots: data.dataset.ballots().to_vec(),
    };
    let cfg = RunConfig {
        candidates: Some(ballots.candidates.clone()),
        standardize: false,
        categorical: data.categorical.clone(),
        ..RunConfig::default()
    };
    let dir = &args.out_dir;
    emit(Some(&dir.join("ballots.csv")), &write_ballots(&ballots)?)?;
    emit(Some(&dir.join("covariates.csv")), &write_covariates(&data.table)?)?;
    emit(Some(&dir.join("config.toml")), &write_config(&cfg)?)?;
    emit(Some(&dir.join("truth.json")), &Truth::new(&spec, &data).to_json()?)
}

fn run_stv(args: &StvArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let text = read(&args.ballots)?;
    let table = if args.long {
        parse_long_ballots(&text, cfg.candidates.as_deref())
    } else {
        parse_ballots(&text, cfg.candidates.as_deref())
    }
    .with_context(|| format!("in {}", args.ballots.display()))?;
    let options = CountOptions {
        batch_elimination: !args.no_batch,
        tie_break: match args.tie_break {
            TieArg::EarliestRound => TieBreak::EarliestRound,
            TieArg::Error => TieBreak::Error,
        },
    };
    let result = count_election(&table.ballots, table.candidates.len(), 1, &options)?;
    let report = StvReport::new(&result, &table.candidates);
    let text = match args.format {
        Format::Json => report.to_json()?,
        Format::Table => report.to_table(),
    };
    emit(args.output.as_deref(), &text)
}

fn run_mosaic(args: &MosaicArgs) -> Result<()> {
    let report = FitReport::from_json(&read(&args.report)?)
        .with_context(|| format!("in {}", args.report.display()))?;
    emit(args.output.as_deref(), &mosaic_csv(&mosaic(&report))?)
}

fn run_convert(args: &ConvertArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let table = parse_long_ballots(&read(&args.input)?, cfg.candidates.as_deref())
        .with_context(|| format!("in {}", args.input.display()))?;
    emit(args.output.as_deref(), &write_ballots(&table)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Select(a) => run_select(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Stv(a) => run_stv(a),
        Command::Mosaic(a) => run_mosaic(a),
        Command::Convert(a) => run_convert(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
