//! `bats`: command-line front end for BATS inner-code analysis.

mod args;
mod commands;
mod error;
mod output;
mod scenario;

use clap::Parser;

use args::{Cli, Command, Format};
use commands::ReproduceArgs;
use error::CliError;
use output::{default_format, emit, Report};
use scenario::Scenario;

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let report: Report = match &cli.command {
        Command::Analyze { scenario, approx } => commands::analyze(&Scenario::resolve(scenario)?, *approx)?,
        Command::Optimize { scenario, mode, table, hops } => {
            commands::optimize(&Scenario::resolve(scenario)?, *mode, table.as_deref(), *hops)?
        }
        Command::Bound { scenario } => commands::bound(&Scenario::resolve(scenario)?)?,
        Command::Table(cmd) => commands::table(cmd, cli.jobs)?,
        Command::Simulate { scenario } => commands::simulate(&Scenario::resolve(scenario)?)?,
        Command::Reproduce { target, trials, seed, batch_sizes, hops, q, table_q } => {
            commands::reproduce(&ReproduceArgs {
                target: *target,
                trials: *trials,
                seed: *seed,
                batch_sizes,
                hops,
                q: *q,
                table_q: *table_q,
                jobs: cli.jobs,
            })?
        }
    };
    let out = cli.out.as_deref();
    let format = match (&cli.command, cli.format) {
        (_, Some(f)) => f,
        // reproduction targets are datasets
        (Command::Reproduce { .. }, None) => Format::Csv,
        (_, None) => default_format(out),
    };
    emit(&report.render(format)?, out)
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(&cli) {
        eprintln!("bats: {e}");
        std::process::exit(e.exit_code());
    }
}
