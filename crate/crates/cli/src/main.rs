//! `linvar`: validate, derive and classify linear idempotent theories.
//!
//! Exit status: 0 for a definitive answer, 1 for usage, input or validation
//! errors, 2 when a bounded search ran out before deciding.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "linvar",
    version,
    about = "Maltsev properties of linear idempotent theories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Write the run report as JSON to PATH.
    #[arg(long, global = true, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Variables available to flat saturation (default 2 * max arity + 2).
    #[arg(long, global = true, env = "LINVAR_BUDGET", value_name = "N")]
    pub budget: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

/// Theory arguments are DSL file paths or `preset:NAME`.
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a theory and report linearity and idempotency.
    Validate { theory: String },
    /// Apply the derivative (or order derivative) once, or iterate it.
    Derive {
        theory: String,
        /// Use the order derivative.
        #[arg(long)]
        order: bool,
        /// Iterate until inconsistency or a fixpoint.
        #[arg(long)]
        iterate: bool,
    },
    /// Decide congruence modularity, nontrivial congruence identities and n-permutability.
    Classify {
        theory: String,
        /// Idempotent but not necessarily linear input: only the sound direction.
        #[arg(long)]
        sufficient_only: bool,
    },
    /// Decide whether an identity follows from a theory.
    Entail { theory: String, identity: String },
    /// Search for finite models.
    Models {
        theory: String,
        #[arg(long, default_value_t = 2, value_name = "N")]
        min: usize,
        #[arg(long, default_value_t = 3, value_name = "N")]
        max: usize,
        /// Look for a model violating this identity.
        #[arg(long, value_name = "EXPR")]
        refute: Option<String>,
    },
    /// Join two theories over disjoint signatures.
    Join {
        left: String,
        right: String,
        /// Check stagewise decomposition and the prime-filter property.
        #[arg(long)]
        check_decomposition: bool,
    },
    /// Project a derivation `F(x1,...,xn) = y` over a join onto the owner of `F`.
    Project {
        left: String,
        right: String,
        derivation: PathBuf,
    },
    /// Verify a derivation JSON file against a theory.
    CheckDerivation { theory: String, derivation: PathBuf },
}

/// What a command produced.
pub struct Outcome {
    pub summary: String,
    pub result: serde_json::Value,
    pub bounds: serde_json::Value,
    pub exit: u8,
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'a [String],
    version: &'static str,
    bounds: &'a serde_json::Value,
    wall_time_ms: u128,
    result: &'a serde_json::Value,
    exit_code: u8,
}

fn check_options(cli: &Cli) -> Result<(), String> {
    if cli.common.budget == Some(0) {
        return Err("--budget must be positive".into());
    }
    if cli.common.threads == Some(0) {
        return Err("--threads must be positive".into());
    }
    if let Command::Models { min, max, .. } = &cli.command {
        if *min == 0 || min > max {
            return Err(format!("invalid size range --min {min} --max {max}"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(msg) = check_options(&cli) {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    let start = Instant::now();
    let outcome = commands::run(&cli).unwrap_or_else(|e| Outcome {
        summary: format!("error: {e:#}"),
        result: serde_json::json!({ "error": format!("{e:#}") }),
        bounds: serde_json::Value::Null,
        exit: 1,
    });
    if outcome.exit == 1 {
        eprintln!("{}", outcome.summary);
    } else {
        println!("{}", outcome.summary);
    }

    if let Some(path) = &cli.common.json {
        let report = RunReport {
            command: &argv[1..],
            version: env!("CARGO_PKG_VERSION"),
            bounds: &outcome.bounds,
            wall_time_ms: start.elapsed().as_millis(),
            result: &outcome.result,
            exit_code: outcome.exit,
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(path, text + "\n") {
            eprintln!("error: writing {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    ExitCode::from(outcome.exit)
}
