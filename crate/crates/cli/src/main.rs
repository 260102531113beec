use std::path::PathBuf;
use std::process::ExitCode;

use carpetq_cli::{load_config, run_command, CliError, Command, Context};
use clap::Parser;
use serde_json::json;

/// Carpet measures, stopping-time partitions, antichains, entropy sequences
/// and quantization diagnostics.
#[derive(Debug, Parser)]
#[command(name = "carpetq", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "carpetq-out")]
    out: PathBuf,
    /// Overrides `cap_words` from the config.
    #[arg(long)]
    cap_words: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(err: &CliError) -> ExitCode {
    let subject = match err {
        CliError::Config(c) => c.subject(),
        _ => "run".into(),
    };
    eprintln!("error: {err}");
    eprintln!(
        "{}",
        json!({ "error": { "subject": subject, "message": err.to_string() } })
    );
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&e.into()),
    };
    if let Some(cap) = args.cap_words {
        if cap == 0 {
            return fail(
                &carpetq_cli::ConfigError::Range("--cap-words must be positive".into()).into(),
            );
        }
        cfg.cap_words = cap;
    }
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    let result = Context::new(cfg, args.out).and_then(|ctx| run_command(args.command, &ctx));
    match result {
        Ok(outcome) if outcome.passed() => ExitCode::SUCCESS,
        Ok(outcome) => {
            eprintln!("{}", json!({ "failures": outcome.failures }));
            ExitCode::from(1)
        }
        Err(e) => fail(&e),
    }
}
