//! `wmf-lab`: ingest rating files, split users, train and evaluate the
//! weighted factorization models, sweep hyperparameters and emit reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wmf_lab_core::eval::Role;
use wmf_lab_core::experiment::{InputFormat, ReportFormat};
use wmf_lab_core::train::ModelKind;

#[derive(Parser, Debug)]
#[command(
    name = "wmf-lab",
    version,
    about = "Weighted matrix factorization experiments for implicit feedback"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every verb; each overrides the matching config entry.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML config with [data] [split] [model] [sweep] [solver] [run] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_kind)]
    pub model: Option<ModelKind>,
    #[arg(long, global = true, value_name = "D")]
    pub rank: Option<usize>,
    /// Comma-separated alpha grid.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_list)]
    pub alpha: Option<Grid>,
    /// Comma-separated lambda grid.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_list)]
    pub lambda: Option<Grid>,
    #[arg(long, global = true, env = "WMF_LAB_THREADS", value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
    #[arg(long, global = true, value_name = "N")]
    pub max_users: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub max_items: Option<usize>,
    /// Rating file (overrides [data] path).
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_input_format)]
    pub input_format: Option<InputFormat>,
    /// Split manifest to reuse (overrides [split] manifest).
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and binarize a rating file; writes interactions.txt and id maps.
    Ingest,
    /// Draw the held-out user split; writes split.manifest.
    Split,
    /// Train one model at the first alpha and lambda of the grid; writes model.bin.
    Train,
    /// Evaluate a saved model on held-out users.
    Eval {
        /// Model file written by `train`.
        #[arg(long = "model-file", value_name = "PATH")]
        model_file: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_role)]
        role: Role,
    },
    /// Grid search with boundary expansion; writes report, cells.jsonl and sweep.json.
    Sweep {
        /// Sweep weighted (alpha > 1) and unweighted (alpha = 1) grids separately.
        #[arg(long)]
        paired: bool,
        /// Disable grid expansion.
        #[arg(long)]
        no_expand: bool,
    },
    /// Run the small-instance oracle suite.
    Verify {
        /// Comma-separated groups: operators, closed-forms, stationarity, metrics, pcg.
        #[arg(long, value_name = "LIST")]
        filter: Option<String>,
        /// Random instances per check.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Re-emit a report from a saved sweep.json.
    Report {
        /// sweep.json written by `sweep` (default: `<out>/sweep.json`).
        #[arg(long = "from", value_name = "PATH")]
        from: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: wmf_lab_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: wmf_lab_core::Error| e.to_string())
}

fn parse_input_format(s: &str) -> Result<InputFormat, String> {
    s.parse().map_err(|e: wmf_lab_core::Error| e.to_string())
}

fn parse_role(s: &str) -> Result<Role, String> {
    match s {
        "val" => Ok(Role::Val),
        "test" => Ok(Role::Test),
        other => Err(format!("role must be val or test, got {other:?}")),
    }
}

/// A comma-separated list of grid values.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_list(s: &str) -> Result<Grid, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Grid)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest => commands::ingest(&cli.common),
        Command::Split => commands::split(&cli.common),
        Command::Train => commands::train(&cli.common),
        Command::Eval { model_file, role } => commands::eval(&cli.common, &model_file, role),
        Command::Sweep { paired, no_expand } => commands::sweep(&cli.common, paired, no_expand),
        Command::Verify { filter, instances } => {
            commands::verify(&cli.common, filter.as_deref(), instances)
        }
        Command::Report { from } => commands::report(&cli.common, from.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "wmf-lab", "--alpha", "1,2.5", "sweep", "--lambda", "0.1", "--paired",
        ])
        .unwrap();
        assert_eq!(cli.common.alpha, Some(Grid(vec![1.0, 2.5])));
        assert_eq!(cli.common.lambda, Some(Grid(vec![0.1])));
        assert!(matches!(
            cli.command,
            Command::Sweep {
                paired: true,
                no_expand: false
            }
        ));
        assert!(Cli::try_parse_from(["wmf-lab", "--model", "svd", "train"]).is_err());
    }
}
