//! Command-line front end: individual and coalition optimization, game-table
//! construction, cost allocation and structural audits.
//!
//! Exit codes: 0 success, 1 validation error, 2 infeasible problem or
//! unstable result, 3 internal/solver failure.

use clap::{Parser, Subcommand, ValueEnum};
use coopgrid::game::GameError;
use coopgrid::io::{self, PlotData, Report, ReportFormat};
use coopgrid::lp::LpError;
use coopgrid::pipeline::{
    self, AllocateOptions, AuditRandomOptions, MethodChoice, PipelineError, PipelineRun,
};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Bad flag combinations; maps to the validation exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

macro_rules! usage {
    ($($arg:tt)*) => {
        return Err(UsageError(format!($($arg)*)).into())
    };
}

#[derive(Parser)]
#[command(
    name = "coopgrid",
    about = "Joint battery scheduling and stable cost allocation for microgrid coalitions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Shapley,
    FairLp,
}

impl From<Method> for MethodChoice {
    fn from(m: Method) -> Self {
        match m {
            Method::Auto => MethodChoice::Auto,
            Method::Shapley => MethodChoice::Shapley,
            Method::FairLp => MethodChoice::FairLp,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize every microgrid on its own and report per-user costs.
    Individual {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Optimize the grand coalition jointly; optionally emit plot data.
    Coalition {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for plot-data CSV files.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Solve every nonempty coalition and write the cost table.
    GameTable {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Allocate the grand-coalition cost (Shapley when stable, else fair LP).
    Allocate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Pre-computed cost table; skips all scheduling solves.
        #[arg(long)]
        game_table: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Skip the Shapley computation for more users than this.
        #[arg(long, default_value_t = 12)]
        skip_shapley_above: usize,
        /// Directory for plot-data CSV files (requires --scenario).
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Check sub-additivity and submodularity of the coalition game.
    Audit {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Audit this many random scenarios instead of a file.
        #[arg(long)]
        random: Option<usize>,
        /// Seed for the random-instance mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Brute-force oracle resolution for random-instance cross-checks.
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            if err.use_stderr() {
                eprintln!("{err}");
                return ExitCode::from(EXIT_VALIDATION);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_VALIDATION;
    }
    if let Some(pipeline_err) = err.downcast_ref::<PipelineError>() {
        return match pipeline_err {
            PipelineError::InfeasibleUser { .. } | PipelineError::InfeasibleGrand => {
                EXIT_INFEASIBLE
            }
            PipelineError::Model(_) | PipelineError::Io(_) => EXIT_VALIDATION,
            PipelineError::Game(game_err) => match game_err {
                GameError::InfeasibleCoalition { .. } | GameError::EmptyCore => EXIT_INFEASIBLE,
                GameError::TooManyUsers { .. }
                | GameError::MissingCoalition { .. }
                | GameError::InvalidTable(_) => EXIT_VALIDATION,
                GameError::UnboundedCoalition { .. } | GameError::Lp(_) => EXIT_INTERNAL,
            },
            PipelineError::Lp(lp_err) => match lp_err {
                LpError::IterationLimit { .. } | LpError::NoSolution(_) => EXIT_INTERNAL,
                _ => EXIT_VALIDATION,
            },
        };
    }
    if err.downcast_ref::<io::IoError>().is_some() {
        return EXIT_VALIDATION;
    }
    EXIT_INTERNAL
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let verbose = cli.verbose > 0;
    match &cli.command {
        Command::Individual { scenario } => {
            let scenario = io::load_scenario(scenario)?;
            let run = pipeline::cmd_individual(&scenario)?;
            write_output(cli, &run.report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Coalition {
            scenario,
            plot_data,
        } => {
            let scenario = io::load_scenario(scenario)?;
            let run = pipeline::cmd_coalition(&scenario)?;
            if let Some(dir) = plot_data {
                emit_plots(&scenario, &run, dir)?;
                if verbose {
                    eprintln!("plot data written to {}", dir.display());
                }
            }
            write_output(cli, &run.report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GameTable { scenario } => {
            let scenario = io::load_scenario(scenario)?;
            let run = pipeline::cmd_game_table(&scenario)?;
            let (ids, table) = run.table.as_ref().expect("game-table run carries the table");
            match (&cli.out, cli.format) {
                // The JSON artifact is the table file consumable by
                // `allocate --game-table`.
                (Some(path), Format::Json) => io::save_game_table(ids, table, path)?,
                (Some(path), Format::Text) => {
                    io::write_report(&run.report, path, ReportFormat::Text)?
                }
                (None, Format::Json) => print!("{}", io::render_game_table(ids, table)),
                (None, Format::Text) => print!("{}", run.report.render(ReportFormat::Text)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Allocate {
            scenario,
            game_table,
            method,
            skip_shapley_above,
            plot_data,
        } => {
            let options = AllocateOptions {
                method: (*method).into(),
                skip_shapley_above: *skip_shapley_above,
                with_schedules: plot_data.is_some(),
            };
            let (run, scenario) = match (scenario, game_table) {
                (Some(_), Some(_)) => {
                    usage!("give either --scenario or --game-table, not both")
                }
                (None, None) => usage!("allocate needs --scenario or --game-table"),
                (Some(path), None) => {
                    let scenario = io::load_scenario(path)?;
                    let run = pipeline::cmd_allocate(&scenario, &options)?;
                    (run, Some(scenario))
                }
                (None, Some(path)) => {
                    if plot_data.is_some() {
                        usage!("--plot-data requires --scenario");
                    }
                    let (ids, table) = io::load_game_table(path)?;
                    (pipeline::cmd_allocate_from_table(&ids, &table, &options)?, None)
                }
            };
            if let (Some(dir), Some(scenario)) = (plot_data, &scenario) {
                emit_plots(scenario, &run, dir)?;
                if verbose {
                    eprintln!("plot data written to {}", dir.display());
                }
            }
            write_output(cli, &run.report)?;
            let stable = run
                .report
                .allocation
                .as_ref()
                .map(|a| a.in_core)
                .unwrap_or(false);
            if stable {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("allocation violates the core constraints (unstable)");
                Ok(ExitCode::from(EXIT_INFEASIBLE))
            }
        }
        Command::Audit {
            scenario,
            random,
            seed,
            steps,
        } => {
            let run = match (scenario, random) {
                (Some(_), Some(_)) => usage!("give either --scenario or --random, not both"),
                (None, None) => usage!("audit needs --scenario or --random"),
                (Some(path), None) => {
                    let scenario = io::load_scenario(path)?;
                    pipeline::cmd_audit(&scenario)?
                }
                (None, Some(count)) => pipeline::cmd_audit_random(&AuditRandomOptions {
                    seed: *seed,
                    count: *count,
                    steps: *steps,
                    ..AuditRandomOptions::default()
                })?,
            };
            write_output(cli, &run.report)?;
            let audit = run.report.audit.as_ref().expect("audit run carries audit");
            if !audit.subadditivity_clean() {
                eprintln!("sub-additivity violated: the coalition solver is buggy");
                return Ok(ExitCode::from(EXIT_INTERNAL));
            }
            if !audit.oracle_clean() {
                eprintln!("oracle disagreement: LP vs brute force exceeded tolerance");
                return Ok(ExitCode::from(EXIT_INTERNAL));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_output(cli: &Cli, report: &Report) -> anyhow::Result<()> {
    match &cli.out {
        Some(path) => io::write_report(report, path, cli.format.into())?,
        None => print!("{}", report.render(cli.format.into())),
    }
    Ok(())
}

fn emit_plots(
    scenario: &coopgrid::Scenario,
    run: &PipelineRun,
    dir: &PathBuf,
) -> anyhow::Result<()> {
    let individual = run
        .individual_schedules
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("plot data needs individual schedules"))?;
    let coalition = run
        .coalition_schedule
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("plot data needs the coalition schedule"))?;
    io::emit_plot_data(
        &PlotData {
            scenario,
            individual,
            coalition,
            cost_bars: run.cost_bars.as_deref(),
        },
        dir,
    )?;
    Ok(())
}
