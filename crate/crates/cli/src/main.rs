use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use knobtune_core::error::Error;
use knobtune_core::workflow::{cmd_prepare_knowledge, cmd_report, cmd_select, cmd_transform, cmd_tune, Session, SessionConfig};

/// Knowledge-guided knob tuning for database systems.
#[derive(Debug, Parser)]
#[command(name = "knobtune", version)]
struct Cli {
    /// Session file (TOML).
    #[arg(long, global = true, default_value = "session.toml")]
    config: PathBuf,
    /// Overrides the session seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Redo work whose output already exists.
    #[arg(long, global = true)]
    force: bool,
    /// Overrides the session output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect, filter, summarize and check tuning knowledge per knob.
    PrepareKnowledge,
    /// Extract structured attributes from the prepared knowledge.
    Transform,
    /// Choose the knobs to tune for the workload.
    SelectKnobs,
    /// Run the optimizer against the configured backend.
    Tune,
    /// Print the best-so-far series of a session log as CSV.
    Report {
        /// Session log; defaults to `<output_dir>/session.jsonl`.
        log: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<SessionConfig, Error> {
    let mut cfg = SessionConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::Report { log: Some(path) } = &cli.command {
        print!("{}", cmd_report(path)?);
        return Ok(());
    }
    let cfg = load(cli)?;
    if let Command::Report { log: None } = &cli.command {
        print!("{}", cmd_report(&cfg.log_path())?);
        return Ok(());
    }
    let session = Session::open(cfg)?;
    match &cli.command {
        Command::PrepareKnowledge => {
            let s = cmd_prepare_knowledge(&session, cli.force)?;
            for (adapter, msg) in &s.errors {
                eprintln!("warning: {adapter}: {msg}");
            }
            println!(
                "lake: {} written, {} already present, {} without knowledge, {} unverified",
                s.written.len(),
                s.skipped.len(),
                s.knowledge_free.len(),
                s.unverified.len()
            );
        }
        Command::Transform => {
            let s = cmd_transform(&session, cli.force)?;
            for (knob, warnings) in &s.warnings {
                for w in warnings {
                    eprintln!("warning: {knob}: {w}");
                }
            }
            println!("structured: {} written, {} already present", s.written.len(), s.skipped.len());
        }
        Command::SelectKnobs => {
            let r = cmd_select(&session)?;
            if r.fallback {
                eprintln!("warning: model unavailable, static knob list used");
            }
            println!("selected {} knobs:", r.final_set.len());
            for k in r.ranking.iter().filter(|k| r.final_set.contains(*k)) {
                println!("  {k}");
            }
        }
        Command::Tune => {
            let s = cmd_tune(&session, cli.force)?;
            if s.replayed > 0 {
                println!("resumed after {} logged evaluations", s.replayed);
            }
            print!("{}", s.report);
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
