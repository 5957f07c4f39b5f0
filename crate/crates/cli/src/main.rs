//! `qnpd`: batch driver for the primal-dual deblurring experiments.

mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qnpd::selftest::{self, SelftestOptions};

use crate::manifest::ManifestError;

#[derive(Parser)]
#[command(name = "qnpd", version, about = "Quasi-Newton primal-dual solvers: experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solvers listed in a manifest and write traces, images and a summary.
    Run { manifest: PathBuf },
    /// Run the embedded invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate the data-term gradient (negative control).
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Convert a trace CSV into `iter gap` and `time gap` columns.
    Plotdata {
        trace: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { manifest } => match run::cmd_run(&manifest) {
            Ok(0) => ExitCode::SUCCESS,
            Ok(_) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e:#}");
                if e.downcast_ref::<ManifestError>().is_some() {
                    ExitCode::from(2)
                } else {
                    ExitCode::from(1)
                }
            }
        },
        Command::Selftest { seed, corrupt_gradient } => {
            let report = selftest::run(&SelftestOptions { seed, corrupt_gradient });
            print!("{}", report.render());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Plotdata { trace, out_dir } => match run::cmd_plotdata(&trace, out_dir.as_deref()) {
            Ok((a, b)) => {
                println!("{}\n{}", a.display(), b.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
