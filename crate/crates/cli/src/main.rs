use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use mqplab_cli::{load_config, run_command, write_report, CliError, Command, Status, Timing};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Simulate,
    Lyapunov,
    Cramer,
    Tails,
    Css,
    Hjb,
    Mqp,
    Validate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Lyapunov => Command::Lyapunov,
            Sub::Cramer => Command::Cramer,
            Sub::Tails => Command::Tails,
            Sub::Css => Command::Css,
            Sub::Hjb => Command::Hjb,
            Sub::Mqp => Command::Mqp,
            Sub::Validate => Command::Validate,
        }
    }
}

/// Simulate linear systems with multiplicative noise and analyze their
/// tails, Lyapunov statistics and optimal feedback.
#[derive(Debug, Parser)]
#[command(name = "mqp-lab", version)]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to MQPLAB_THREADS, then `run.threads`.
    #[arg(long, env = "MQPLAB_THREADS")]
    threads: Option<usize>,
}

fn run(args: Args) -> Result<Status, CliError> {
    let started = Instant::now();
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output.dir = out;
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(mqplab_cli::ConfigError::Invalid(vec![mqplab_cli::config::Issue {
                key: "--threads".into(),
                message: "must be positive".into(),
            }])
            .into());
        }
        cfg.run.threads = Some(t);
    }
    let command = Command::from(args.command);
    let out = run_command(command, &cfg)?;
    let timing = Timing {
        wall_seconds: started.elapsed().as_secs_f64(),
        threads: cfg.run.threads,
    };
    write_report(&cfg.output.dir, &out.report, &out.tables, &timing)?;
    for c in &out.report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "{} finished ({:?}); report written to {}",
        command.name(),
        out.report.status,
        cfg.output.dir.join("report.json").display()
    );
    Ok(out.report.status)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
