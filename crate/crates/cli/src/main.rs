mod commands;
mod error;
mod io;

use clap::{Args, Parser, Subcommand};
use countcopula::FilterKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "countcopula", version, about = "Simulate, fit and diagnose Gaussian-copula count time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a count series from a marginal and a latent ARMA model.
    Simulate(Common),
    /// Fit one or more estimators over a grid of ARMA orders.
    Fit(Common),
    /// PIT histogram, latent residuals and residual summaries for a fitted model.
    Diagnose(Common),
    /// Monte-Carlo study: simulate, fit and tabulate estimates across replications.
    Replicate(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Particle count, overriding the configuration.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Particle filter, overriding the configuration.
    #[arg(long, value_parser = ["sis", "sisr", "apf"])]
    pub filter: Option<String>,
    /// Also write the latent path (simulate) or per-step filter output (fit, diagnose).
    #[arg(long)]
    pub debug_latent: bool,
}

impl Common {
    pub fn filter_kind(&self) -> Option<FilterKind> {
        self.filter.as_deref().map(|f| f.parse().expect("validated by clap"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::Fit(c) | Command::Diagnose(c) | Command::Replicate(c) => c,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let res = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Fit(c) => commands::fit(c),
        Command::Diagnose(c) => commands::diagnose(c),
        Command::Replicate(c) => commands::replicate(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
