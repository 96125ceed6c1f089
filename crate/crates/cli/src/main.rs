use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergokit::config::{ExperimentConfig, MAX_SEED};
use ergokit::experiments::{self, CATALOG};
use ergokit::report::Report;
use ergokit::Error;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "ergokit", version, about = "Run schedule, induced-map and block experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Directory for the CSV and JSON reports.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long, env = "ERGOKIT_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
        threads: Option<u16>,
    },
    /// List the experiment catalog.
    List,
    /// Print a config for an experiment with its defaults filled in.
    Example {
        id: String,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            let width = CATALOG.iter().map(|e| e.id.len()).max().unwrap_or(0);
            for e in CATALOG {
                println!("{:width$}  {}", e.id, e.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Example { id, seed } => match experiments::example_config(&id, seed) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(_) => {
                eprintln!("error: unknown experiment '{id}' (see `ergokit list`)");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { config, out, threads } => run(&config, &out, threads),
    }
}

fn run(path: &Path, out: &Path, threads: Option<u16>) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cfg = match ExperimentConfig::parse(&text).and_then(|c| experiments::check_config(&c).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let report = match experiments::run(&cfg) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    if let Err(e) = write_report(&report, out) {
        eprintln!("error: writing reports to {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    for r in &report.rows {
        if r.error.is_empty() {
            println!("{:5} {} = {}", r.verdict.as_str(), r.quantity, r.value);
        } else {
            println!("{:5} {} = {} ± {}", r.verdict.as_str(), r.quantity, r.value, r.error);
        }
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn write_report(report: &Report, out: &Path) -> ergokit::Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    std::fs::create_dir_all(out).map_err(io)?;
    let csv = report.to_csv()?;
    std::fs::write(out.join(format!("{}.csv", report.experiment)), csv).map_err(io)?;
    std::fs::write(out.join(format!("{}.json", report.experiment)), report.to_json()).map_err(io)?;
    Ok(())
}
