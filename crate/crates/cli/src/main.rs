use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use f4tele::sim::Mode;
use f4tele_cli::{cmd_analyze, cmd_simulate, cmd_sweep, cmd_validate, Outcome};

#[derive(Parser, Debug)]
#[command(name = "f4tele", version, about = "Rotating FSO telemetry bundle: simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one config and write CSV reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "f4tele")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Simulated seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Defaults to $F4TELE_OUT_DIR, then ./f4tele-out.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate the analytic waiting-time model.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Evaluate every point of this plan instead of the config alone.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare simulated and predicted mean waits per set.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "f4tele")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a parameter sweep plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's base config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, mode, seed, duration, out_dir } => {
            cmd_simulate(config, *mode, *seed, *duration, out_dir.as_deref())
        }
        Command::Analyze { config, plan, out_dir } => {
            cmd_analyze(config, plan.as_deref(), out_dir.as_deref())
        }
        Command::Validate { config, mode, seed, duration, tolerance, out_dir } => {
            cmd_validate(config, *mode, *seed, *duration, *tolerance, out_dir.as_deref())
        }
        Command::Sweep { plan, config, out_dir } => {
            cmd_sweep(plan, config.as_deref(), out_dir.as_deref())
        }
    };
    let Outcome { code, stdout, stderr } = match result {
        Ok(o) => o,
        Err(e) => Outcome { code: e.exit_code(), stdout: String::new(), stderr: e.report() },
    };
    print!("{stdout}");
    eprint!("{stderr}");
    ExitCode::from(code as u8)
}
