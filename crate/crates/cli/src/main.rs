mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Lattice Boltzmann adjoint topology optimization driver.
///
/// Exit codes: 0 ok, 1 configuration or usage error, 2 a solver diverged,
/// 3 a solver hit its step or iteration limit, 4 sensitivity verification
/// failed its tolerance.
#[derive(Debug, Parser)]
#[command(name = "adjlb", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Case file (TOML, or JSON when the extension is `.json`). A run
    /// manifest is accepted too.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady forward solve.
    Forward(Common),
    /// Forward solve, then one adjoint solve and the sensitivity.
    Adjoint {
        #[command(flatten)]
        common: Common,
        /// continuous | discrete (default: the config's optimizer method).
        #[arg(long)]
        method: Option<String>,
    },
    /// Both adjoints against central finite differences.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated node indices (default: the chamber diagonal).
        #[arg(long)]
        nodes: Option<String>,
        #[arg(long)]
        fdm_step: Option<f64>,
    },
    /// Maximum stable inlet speed per relaxation time and solver.
    Stability(Common),
    /// Level-set optimization.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Forward(c) => commands::forward(&c.config, &c.out),
        Command::Adjoint { common, method } => commands::adjoint(&common.config, &common.out, method.as_deref()),
        Command::Verify { common, nodes, fdm_step } => {
            commands::verify(&common.config, &common.out, nodes.as_deref(), fdm_step)
        }
        Command::Stability(c) => commands::stability(&c.config, &c.out),
        Command::Optimize { common, method } => commands::optimize(&common.config, &common.out, method.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
