//! `arranger-sim`: run simulated arranger deployments, check transcripts
//! against the correctness properties, sweep scenario sets and run the
//! building-block benchmarks.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use arranger_bench::{run_suite, BenchConfig, BenchError, Suite};
use arranger_core::simnet::sweep::{csv, load_dir};
use arranger_core::simnet::{check, failing, run, sweep, Property, Scenario, ScenarioError, Transcript};
use arranger_core::DecodeError;
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed transcript: {0}")]
    Transcript(#[from] DecodeError),
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Parser)]
#[command(name = "arranger-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and report the failing properties.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Write the logger's accepted tags as CSV here.
        #[arg(long)]
        logger_csv: Option<PathBuf>,
    },
    /// Check a transcript against one property, or `all` applicable ones.
    Check {
        transcript: PathBuf,
        #[arg(long, default_value = "all")]
        property: String,
    },
    /// Run every scenario in a directory over several seeds.
    Sweep {
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// CSV report path; `-` for standard output.
        #[arg(long, default_value = "-")]
        report: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run benchmark suites and write a CSV report.
    Bench {
        /// all | size | hash | compress | sign | agg | ver | trans
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        /// Also write `figure,series,x,y` plot data here.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Length of one measurement in milliseconds.
        #[arg(long, default_value_t = 1000)]
        duration_ms: u64,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if path == Path::new("-") {
        print!("{text}");
        Ok(())
    } else {
        fs::write(path, text).map_err(io_err(path))
    }
}

fn names(ps: impl IntoIterator<Item = Property>) -> String {
    let v: Vec<&str> = ps.into_iter().map(Property::name).collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(",")
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, transcript: Option<&Path>, logger: Option<&Path>) -> Result<bool, CliError> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    let out = run(&s)?;
    if let Some(p) = transcript {
        write(p, &out.transcript)?;
    }
    if let Some(p) = logger {
        write(p, &out.logger_csv)?;
    }
    let t = Transcript::parse(&out.transcript)?;
    let failed = failing(&t);
    let expected = s.expected_failures()?;
    println!(
        "{} seed {}: {} at tick {}, {} accepted tags",
        s.name,
        s.seed,
        if out.quiescent { "quiescent" } else { "tick budget exhausted" },
        out.end_tick,
        out.accepted
    );
    println!("failing: {}", names(failed.iter().copied()));
    if failed != expected {
        println!("expected: {}", names(expected.iter().copied()));
    }
    Ok(failed == expected)
}

fn cmd_check(path: &Path, property: &str) -> Result<bool, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let t = Transcript::parse(&text)?;
    let props = if property == "all" {
        Property::applicable(&t.meta.mode)
    } else {
        vec![property.parse::<Property>().map_err(CliError::Usage)?]
    };
    let mut ok = true;
    for p in props {
        match check(&t, p) {
            Ok(()) => println!("PASS {p}"),
            Err(v) => {
                ok = false;
                println!("FAIL {v}");
            }
        }
    }
    Ok(ok)
}

fn cmd_sweep(dir: &Path, seeds: u64, report: &Path, workers: Option<usize>) -> Result<bool, CliError> {
    let scenarios: Vec<Scenario> = load_dir(dir)?.into_iter().map(|(_, s)| s).collect();
    if scenarios.is_empty() {
        return Err(CliError::Usage(format!("no *.toml scenarios in {}", dir.display())));
    }
    let workers = workers
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    let rows = sweep(&scenarios, seeds, workers)?;
    write(report, &csv(&rows))?;
    let bad = rows.iter().filter(|r| !r.ok()).count();
    eprintln!("{} runs over {} scenarios, {bad} unexpected outcomes", rows.len(), scenarios.len());
    Ok(bad == 0)
}

fn cmd_bench(suite: &str, out: &Path, plot: Option<&Path>, duration_ms: u64, repetitions: usize, seed: u64) -> Result<bool, CliError> {
    let suite: Suite = suite.parse()?;
    let config = BenchConfig {
        duration: Duration::from_millis(duration_ms),
        repetitions,
        seed,
        ..BenchConfig::default()
    };
    let report = run_suite(&config, suite)?;
    write(out, &report.to_csv())?;
    if let Some(p) = plot {
        write(p, &report.plot_data())?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, transcript, logger_csv } => {
            cmd_run(scenario, *seed, transcript.as_deref(), logger_csv.as_deref())
        }
        Command::Check { transcript, property } => cmd_check(transcript, property),
        Command::Sweep { dir, seeds, report, workers } => cmd_sweep(dir, *seeds, report, *workers),
        Command::Bench { suite, out, plot, duration_ms, repetitions, seed } => {
            cmd_bench(suite, out, plot.as_deref(), *duration_ms, *repetitions, *seed)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
