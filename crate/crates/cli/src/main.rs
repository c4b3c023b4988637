use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consensus_cli::commands::{graph_report, run_experiment, run_sweep, sare_report, RunOptions};
use consensus_cli::config::{load_config, ExperimentConfig};
use consensus_cli::CliError;

#[derive(Parser)]
#[command(name = "consensus", version, about = "Adaptive consensus experiments for stochastic multi-agent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stochastic Riccati equation and print P, K, Gamma.
    Sare(ConfigArg),
    /// Report spanning trees, leader/follower blocks and spectra.
    GraphCheck(ConfigArg),
    /// Simulate an ensemble and write CSVs plus a manifest.
    Run(RunArgs),
    /// Repeat `run` over values of one scalar config key.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.directory` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the ensemble.
    #[arg(long)]
    threads: Option<usize>,
    /// Run even if protocol validation fails; the manifest records the override.
    #[arg(long)]
    force: bool,
    /// Also write SVG line plots.
    #[arg(long)]
    emit_plots: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dotted scalar key, e.g. `protocol.gamma`.
    #[arg(long)]
    key: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    /// Continue after a failing value.
    #[arg(long)]
    keep_going: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions { threads: self.threads, force: self.force, emit_plots: self.emit_plots }
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
        self.out
            .clone()
            .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output.directory".into()))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Sare(args) => {
            print!("{}", sare_report(&load_config(&args.config)?)?);
            Ok(0)
        }
        Command::GraphCheck(args) => {
            let (report, code) = graph_report(&load_config(&args.config)?)?;
            print!("{report}");
            Ok(code)
        }
        Command::Run(args) => {
            let cfg = load_config(&args.config)?;
            let out = args.out_dir(&cfg)?;
            let run = run_experiment(&cfg, &out, &args.options())?;
            if let Some(c) = &run.curves {
                let last = c.theta_ms.len() - 1;
                println!("E|theta|^2: {:e} -> {:e}", c.theta_ms[0], c.theta_ms[last]);
            }
            if let Some(fit) = &run.rate_fit {
                println!("delta_hat = {:.6} (theory {:.6}, r^2 = {:.4})", fit.delta_hat, fit.theory_delta, fit.r_squared);
            }
            if run.overridden {
                println!("validation failed; overridden with --force");
            }
            println!("wrote {} files to {}", run.files.len() + 1, out.display());
            if run.exit_code() != 0 {
                return Err(CliError::Blowup { count: run.blown_up.len(), dir: out.display().to_string() });
            }
            Ok(0)
        }
        Command::Sweep(args) => {
            let text = read(&args.run.config)?;
            let cfg = consensus_cli::config::parse_config(&text)?;
            let out = args.run.out_dir(&cfg)?;
            let entries = run_sweep(&text, &args.key, &args.values, &out, &args.run.options(), args.keep_going)?;
            for e in &entries {
                let ttt = e.time_to_threshold.map_or("-".to_string(), |t| format!("{t}"));
                println!("{}={}: exit {} time_to_threshold {}", args.key, e.value, e.exit_code, ttt);
                if let Some(err) = &e.error {
                    eprintln!("  {err}");
                }
            }
            Ok(entries.iter().map(|e| e.exit_code).find(|&c| c != 0).unwrap_or(0))
        }
    }
}

fn main() -> ExitCode {
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
