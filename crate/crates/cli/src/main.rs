//! `rrs`: simulate, correlate, fit and report resonance-fluorescence
//! experiments from a single TOML configuration.

mod config;
mod error;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::{exit, CliError, Stage};
use output::{Format, Outputs};
use pipeline::Run;

/// Environment variable naming the default output root.
const OUT_DIR_ENV: &str = "RRS_OUT_DIR";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other failure (file system)
  2  configuration error
  3  data error (missing, foreign or malformed inputs; failed normalisation)
  4  fit failure

Output directory: --out if given, else `output_dir` from the config, else
$RRS_OUT_DIR/<config name>, else ./rrs-out/<config name>.";

#[derive(Debug, Parser)]
#[command(name = "rrs", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate time tags or visibility data.
    Simulate(RunArgs),
    /// Histogram tag pairs and normalise to the Poisson level.
    Correlate(RunArgs),
    /// Fit the models to the histograms or visibility data.
    Fit(RunArgs),
    /// Write plot panels and summary tables.
    Report(RunArgs),
    /// Run simulate, correlate, fit and report in order.
    Pipeline(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of report panels and tables.
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

fn output_dir(args: &RunArgs, config: &RunConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(dir) = &config.output_dir {
        return dir.clone();
    }
    let name = args
        .config
        .file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    let root = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("rrs-out"), PathBuf::from);
    root.join(name)
}

fn prepare(args: &RunArgs) -> Result<Run, CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    config.validate()?;
    let seed = config.seed()?;
    let root = output_dir(args, &config);
    let hash = config.hash();
    log::info!("config {} (hash {})", args.config.display(), &hash[..12]);
    Ok(Run {
        out: Outputs::new(root, hash, args.format),
        config,
        seed,
    })
}

fn run(stages: &[Stage], args: &RunArgs) -> Result<PathBuf, CliError> {
    let run = prepare(args)?;
    run.write_config(stages[0])?;
    for &stage in stages {
        run.execute(stage)?;
    }
    Ok(run.out.root().to_path_buf())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();

    let (stages, args): (&[Stage], _) = match &cli.command {
        Command::Simulate(a) => (&[Stage::Simulate], a),
        Command::Correlate(a) => (&[Stage::Correlate], a),
        Command::Fit(a) => (&[Stage::Fit], a),
        Command::Report(a) => (&[Stage::Report], a),
        Command::Pipeline(a) => (&[Stage::Simulate, Stage::Correlate, Stage::Fit, Stage::Report], a),
    };
    match run(stages, args) {
        Ok(root) => {
            println!("{}", display(&root));
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
