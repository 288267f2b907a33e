//! Experiment harness CLI. Exit code 0 when every emitted check passes,
//! 1 when any fails, 2 on configuration errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use paracount::config::HarnessConfig;
use paracount::grid;

#[derive(Parser)]
#[command(
    name = "paracount",
    version,
    about = "Grid experiments for lattice-point counts under and near dilated parabolas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Floor-sum error terms against the theorem envelope, with the full
    /// inequality chain per cell
    ErrorGrid(RunArgs),
    /// Near-curve counts, their 2*delta*b errors, and the discrepancy chain
    NearGrid(RunArgs),
    /// Scan integer a with b = a, ranking |E(a,a)|/sqrt(a)
    Extremal(RunArgs),
    /// Verbose dump of every intermediate quantity for the first grid cell
    ProveChain(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::ErrorGrid(a)
            | Command::NearGrid(a)
            | Command::Extremal(a)
            | Command::ProveChain(a) => a,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (flat key = value lines)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads for cell evaluation (default: all available)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Overrides the seed from the config file
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, String> {
    let args = cli.command.args();
    let text = fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let cfg = HarnessConfig::parse(&text, args.seed).map_err(|e| e.to_string())?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| e.to_string())?;

    let (output, all_pass) = pool.install(|| -> Result<(String, bool), String> {
        match &cli.command {
            Command::ErrorGrid(_) => {
                let report = grid::run_error_grid(&cfg.spec).map_err(|e| e.to_string())?;
                Ok((render(&report, args.format), report.all_pass()))
            }
            Command::NearGrid(_) => {
                let report = grid::run_near_grid(&cfg.spec).map_err(|e| e.to_string())?;
                Ok((render(&report, args.format), report.all_pass()))
            }
            Command::Extremal(_) => {
                let report = grid::extremal_search(cfg.a_min, cfg.a_max, &cfg.spec)
                    .map_err(|e| e.to_string())?;
                Ok((render(&report, args.format), report.all_pass()))
            }
            Command::ProveChain(_) => {
                let chain = grid::prove_chain(&cfg.spec).map_err(|e| e.to_string())?;
                let rows = chain.to_rows();
                let output = match args.format {
                    Format::Csv => rows.to_csv(),
                    Format::Json => serde_json::to_string_pretty(&chain)
                        .expect("chain serialization cannot fail"),
                };
                Ok((output, rows.all_pass()))
            }
        }
    })?;

    match &args.out {
        Some(path) => fs::write(path, output)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{output}"),
    }
    Ok(all_pass)
}

fn render(report: &paracount::report::RunReport, format: Format) -> String {
    match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    }
}
