mod commands;
mod config;
mod svg;

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{Overrides, PipelineConfig};

/// Change points and time-varying graphs for high-dimensional time series.
#[derive(Parser)]
#[command(name = "tvnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from the piecewise locally stationary design.
    Simulate(Overrides),
    /// Scan for covariance change points.
    Detect(Overrides),
    /// Estimate precision matrices and graphs over the evaluation grid.
    Estimate(Overrides),
    /// Change-point error tables and ROC sweeps against the simulated truth.
    Evaluate(Overrides),
    /// Theoretical rates for user-supplied constants.
    Rates {
        #[command(flatten)]
        common: Overrides,
        #[command(flatten)]
        rates: RateFlags,
    },
    /// Run every stage into one output directory.
    Pipeline(Overrides),
}

#[derive(Debug, Clone, Default, Args)]
struct RateFlags {
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    m_xq: Option<f64>,
    #[arg(long)]
    n_x: Option<f64>,
    #[arg(long)]
    kappa_p: Option<f64>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
}

impl RateFlags {
    fn apply(&self, common: &Overrides, cfg: &mut PipelineConfig) {
        let r = &mut cfg.rates;
        if let Some(n) = common.n {
            r.n = n;
        }
        if let Some(p) = common.p {
            r.p = p;
        }
        for (slot, v) in [
            (&mut r.q, self.q),
            (&mut r.a, self.a),
            (&mut r.m_xq, self.m_xq),
            (&mut r.n_x, self.n_x),
            (&mut r.kappa_p, self.kappa_p),
            (&mut r.l, self.lipschitz),
            (&mut r.c0, self.c0),
            (&mut r.c1, self.c1),
            (&mut r.c2, self.c2),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

/// 2 for numerical failures inside the estimators, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<tvnet::Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<String> {
    match cli.command {
        Command::Simulate(o) => commands::simulate(&o.resolve()?),
        Command::Detect(o) => commands::detect(&o.resolve()?),
        Command::Estimate(o) => commands::estimate(&o.resolve()?),
        Command::Evaluate(o) => commands::evaluate(&o.resolve()?),
        Command::Rates { common, rates } => {
            let mut cfg = common.resolve()?;
            rates.apply(&common, &mut cfg);
            commands::rates(&cfg)
        }
        Command::Pipeline(o) => commands::pipeline(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(summary) => {
            // A closed pipe on stdout is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
