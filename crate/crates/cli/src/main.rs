use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rescuenet::metrics;
use rescuenet::scenario::Scenario;
use rescuenet::sim::{run_scenario, SimError};

const EXIT_INPUT: u8 = 1;
const EXIT_INTERNAL: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "rescuenet", version, about = "UAV earthquake-rescue network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a scenario and write its JSON Lines trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `run.t_end_ms`.
        #[arg(long)]
        until: Option<u64>,
        /// Trace output path; stdout when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Assert runtime invariants after every event; exit 3 on violation.
        #[arg(long)]
        check_invariants: bool,
    },
    /// Compute metrics from a trace.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Write the CSV here and print a summary; CSV goes to stdout otherwise.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self { code, message: message.to_string() }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::new(EXIT_INTERNAL, e)),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "ok: {}x{} grid, {} zones, {} drones, {} sensors",
                s.world.width,
                s.world.height,
                s.world.zones.len(),
                s.actors.drones.len(),
                s.actors.sensors.len()
            );
            Ok(())
        }
        Command::Run { scenario, seed, until, trace, check_invariants } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s.run.seed = seed;
            }
            if let Some(until) = until {
                s.run.t_end_ms = until;
            }
            match run_scenario(s, None, check_invariants) {
                Ok(text) => write_out(trace.as_deref(), &text),
                Err((e, partial)) => {
                    if let Some(text) = partial {
                        write_out(trace.as_deref(), &text)?;
                    }
                    let code = match e {
                        SimError::Invariant { .. } => EXIT_INVARIANT,
                        SimError::Scenario(_) | SimError::World(_) => EXIT_INPUT,
                        SimError::Engine(_) => EXIT_INTERNAL,
                    };
                    Err(Failure::new(code, e))
                }
            }
        }
        Command::Report { trace, csv } => {
            let text = fs::read_to_string(&trace)
                .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", trace.display())))?;
            let report =
                metrics::report(&text).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", trace.display())))?;
            match csv {
                Some(path) => {
                    write_out(Some(&path), &report.to_csv())?;
                    print!("{}", report.summary());
                    Ok(())
                }
                None => write_out(None, &report.to_csv()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| execute(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
