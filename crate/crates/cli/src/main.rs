use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hardylab::run::{parse_config, run, set_thread_limit};
use hardylab::solvers::levels_ending_at;

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "kebab-case")]
enum Verb {
    Solve,
    Cap,
    LambdaStar,
    Nu,
    Sweep,
    SectorSearch,
    Verify,
    Study,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Solve => "solve",
            Verb::Cap => "cap",
            Verb::LambdaStar => "lambda-star",
            Verb::Nu => "nu",
            Verb::Sweep => "sweep",
            Verb::SectorSearch => "sector-search",
            Verb::Verify => "verify",
            Verb::Study => "study",
        }
    }
}

/// Best constants and extremals for singular-weight Hardy quotients.
#[derive(Debug, Parser)]
#[command(name = "hardylab", version)]
struct Cli {
    verb: Verb,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report files (default: the config's output.dir, else the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Finest refinement level; runs the three levels ending there.
    #[arg(long)]
    levels: Option<usize>,
    /// Do not print the report.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Ok(t) = std::env::var("HARDYLAB_THREADS") {
        let n = match t.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("hardylab: HARDYLAB_THREADS must be a positive integer, got '{t}'");
                return ExitCode::from(2);
            }
        };
        if let Err(e) = set_thread_limit(n) {
            eprintln!("hardylab: {e}");
            return ExitCode::from(2);
        }
    }

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("hardylab: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match parse_config(&text, Some(cli.verb.name())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("hardylab: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(l) = cli.levels {
        config.options.levels = levels_ending_at(l);
    }

    let outcome = run(&config);
    if let Some(msg) = &outcome.report.error {
        eprintln!("hardylab: {msg}");
    }
    if !cli.quiet {
        print!("{}", outcome.json());
    }

    let dir = cli
        .out
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = config.output.stem.clone().unwrap_or_else(|| cli.verb.name().to_string());
    if let Err(e) = outcome.write(&dir, &stem) {
        eprintln!("hardylab: cannot write reports to {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    ExitCode::from(outcome.exit_code as u8)
}
