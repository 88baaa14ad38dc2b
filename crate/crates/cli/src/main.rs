//! `finsler-verify`: config-driven checks of pseudo-Finsler identities,
//! divergence theorems and conservation laws.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::{Outcome, RunOptions, Theorem};
use config::RunConfig;
use error::{CliError, EXIT_GATE, EXIT_NUMERIC_FAIL, EXIT_PASS};

#[derive(Debug, Parser)]
#[command(name = "finsler-verify", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON report path (overrides `output.report`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV convergence table path (overrides `output.csv`).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Quadrature orders, e.g. `4,8,12`.
    #[arg(long, global = true, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run past failed applicability gates; reports are marked forced.
    #[arg(long, global = true)]
    force: bool,
    /// Scale Newton seeds and face conormals by this factor.
    #[arg(long, global = true)]
    seed_scale: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump fiber tensors at points.
    Tensors,
    /// Pointwise identities.
    Identities,
    /// Divergence theorem on a box.
    Divergence {
        #[arg(long, value_enum)]
        theorem: Theorem,
    },
    /// Energy drift between two slices.
    Energy,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Tensors => "tensors",
            Command::Identities => "identities",
            Command::Divergence { theorem: Theorem::Rund } => "divergence_rund",
            Command::Divergence {
                theorem: Theorem::Finsler,
            } => "divergence_finsler",
            Command::Energy => "energy",
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        path: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let cfg = RunConfig::load(path)?.prepare()?;
    if let Some(s) = cli.seed_scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(CliError::Config {
                path: "--seed-scale".into(),
                message: format!("must be positive, got {s}"),
            });
        }
    }
    if let Some(o) = &cli.orders {
        if o.is_empty() || o.contains(&0) {
            return Err(CliError::Config {
                path: "--orders".into(),
                message: "orders must be positive".into(),
            });
        }
    }
    let opts = RunOptions {
        orders: cli.orders.clone(),
        force: cli.force,
        seed_scale: cli.seed_scale,
    };
    let out = match &cli.command {
        Command::Tensors => commands::cmd_tensors(&cfg, &opts)?,
        Command::Identities => commands::cmd_identities(&cfg, &opts)?,
        Command::Divergence { theorem } => commands::cmd_divergence(&cfg, &opts, *theorem)?,
        Command::Energy => commands::cmd_energy(&cfg, &opts)?,
    };
    let doc = commands::document(cli.command.name(), &out);
    if let Some(p) = cli.out.as_ref().or(cfg.raw.output.report.as_ref()) {
        output::write_json(p, &doc)?;
    } else {
        println!("{}", finsler_core::report::to_json(&doc));
    }
    if let (Some(p), Some(t)) = (cli.csv.as_ref().or(cfg.raw.output.csv.as_ref()), &out.table) {
        output::write_csv(p, t)?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_NUMERIC_FAIL);
        }
    };
    let result = pool.install(|| run(&cli));
    let elapsed = start.elapsed().as_secs_f64();
    let code = match result {
        Ok(out) => {
            for r in &out.reports {
                let status = if r.passed { "PASS" } else { "FAIL" };
                let forced = if r.forced { " (forced)" } else { "" };
                eprintln!("{status} {}{forced}", r.check);
            }
            if out.refused {
                EXIT_GATE
            } else if out.reports.iter().all(|r| r.passed) {
                EXIT_PASS
            } else {
                EXIT_NUMERIC_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    eprintln!("{} finished in {elapsed:.3} s (exit {code})", cli.command.name());
    ExitCode::from(code)
}
