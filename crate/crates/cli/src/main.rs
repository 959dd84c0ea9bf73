use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boundarylab_cli::commands::exit_code_for;
use boundarylab_cli::config::ExperimentConfig;
use boundarylab_cli::{dispatch, resolve_out_dir, write_outputs};

/// Exact-arithmetic experiments on random walks over rational triangular
/// matrices: drifts, local cells, boundary extraction, gauges and entropy.
#[derive(Parser)]
#[command(name = "boundarylab", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and BOUNDARYLAB_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the timestamp so outputs are byte-identical across runs.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact drift profile and first-moment breakdown of the measure.
    Drift(RunArgs),
    /// Predicted local cell at each place.
    Cell(RunArgs),
    /// Trajectory statistics: atom frequencies and empirical drifts.
    Walk(RunArgs),
    /// Boundary-point extraction with certified convergence reports.
    Boundary(RunArgs),
    /// Exhaustive gauge-ball cardinalities against the growth ceiling.
    GaugeGrowth(RunArgs),
    /// Normalized height statistic of the diagonal approximants.
    Qni(RunArgs),
    /// Normalized adelic length of the walk against its boundary shadow.
    Estimgauge(RunArgs),
    /// Exact convolution powers, entropies, and the finite-entropy check.
    Entropy(RunArgs),
    /// Exact identity suites: determinant identity, product formula,
    /// factorization, and the cell-selection oracle.
    CheckIdentities(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Drift(_) => "drift",
            Command::Cell(_) => "cell",
            Command::Walk(_) => "walk",
            Command::Boundary(_) => "boundary",
            Command::GaugeGrowth(_) => "gauge-growth",
            Command::Qni(_) => "qni",
            Command::Estimgauge(_) => "estimgauge",
            Command::Entropy(_) => "entropy",
            Command::CheckIdentities(_) => "check-identities",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Drift(a)
            | Command::Cell(a)
            | Command::Walk(a)
            | Command::Boundary(a)
            | Command::GaugeGrowth(a)
            | Command::Qni(a)
            | Command::Estimgauge(a)
            | Command::Entropy(a)
            | Command::CheckIdentities(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help and version requests are not errors
            use clap::error::ErrorKind;
            let kind = err.kind();
            let _ = err.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    let name = cli.command.name();
    let args = cli.command.args();

    let config = match ExperimentConfig::load(&args.config) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(1);
        }
    };

    let output = match dispatch(name, &config) {
        Ok(output) => output,
        Err(err) => {
            eprintln!("{name} failed: {err}");
            return ExitCode::from(exit_code_for(&err) as u8);
        }
    };

    let out_dir = resolve_out_dir(args.out.as_deref(), &config);
    let document = match write_outputs(name, &output, &out_dir, !args.no_timestamp) {
        Ok(document) => document,
        Err(err) => {
            eprintln!("cannot write outputs to {}: {err}", out_dir.display());
            return ExitCode::from(1);
        }
    };
    println!("{}", serde_json::to_string_pretty(&document).expect("serializable"));

    if output.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for failure in &output.failures {
            eprintln!("acceptance failure: {failure}");
        }
        ExitCode::from(2)
    }
}
