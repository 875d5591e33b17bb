//! Command-line front-end for balanced inverse iteration experiments.
//!
//! Verbs: `run <config>` executes an experiment serially, `sweep <config>`
//! runs its exponents concurrently, `compare <summary> <table1|table2>`
//! checks a summary against embedded reference quotients, `oracle`
//! prints independent eigenvalue references, and `counterexample <n>`
//! prints the bounded recurrence that never converges.
//!
//! Environment: `PLAPEIG_WORKERS` caps the sweep worker count,
//! `PLAPEIG_OUT_DIR` prefixes relative output paths.
//!
//! Exit codes: 0 ok; 1 comparison found rows outside tolerance;
//! 2 a run recorded invariant violations; 3 solver failure or mid-run
//! abort; 4 configuration, usage, or input errors.

mod config;
mod reference;
mod runner;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use plapeig::oracle::{counterexample_sequence, square_eigs_p2, EigenOracle1D};

use config::parse_config;
use reference::{compare_to_reference, table_by_name};
use runner::run_experiment;

const EXIT_OK: u8 = 0;
const EXIT_FLAGGED: u8 = 1;
const EXIT_VIOLATIONS: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(
    name = "plapeig",
    version,
    about = "Dirichlet p-Laplacian eigenpairs by balanced inverse iteration"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a TOML config, one exponent at a time.
    Run { config: PathBuf },
    /// Run the same experiment with exponents in parallel (PLAPEIG_WORKERS).
    Sweep { config: PathBuf },
    /// Compare a summary CSV against an embedded reference table
    /// (table1: midline seed, table2: diagonal seed).
    Compare {
        summary: PathBuf,
        #[arg(value_parser = ["table1", "table2"])]
        table: String,
    },
    /// Print independent eigenvalue references.
    ///
    /// `oracle 1d <p> [k_max] [length]` prints the closed-form Dirichlet
    /// eigenvalues of the 1d p-Laplacian; `oracle square [m_max]` prints
    /// the p = 2 unit-square spectrum with multiplicities.
    Oracle { which: String, params: Vec<f64> },
    /// Print the first n terms of the bounded recurrence whose averages
    /// fail to converge.
    Counterexample { n: usize },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let code = match cli.cmd {
        Cmd::Run { config } => cmd_run(&config, 1),
        Cmd::Sweep { config } => cmd_run(&config, sweep_workers()),
        Cmd::Compare { summary, table } => cmd_compare(&summary, &table),
        Cmd::Oracle { which, params } => cmd_oracle(&which, &params),
        Cmd::Counterexample { n } => cmd_counterexample(n),
    };
    ExitCode::from(code)
}

fn out_dir() -> PathBuf {
    std::env::var_os("PLAPEIG_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn sweep_workers() -> usize {
    if let Some(raw) = std::env::var_os("PLAPEIG_WORKERS") {
        if let Some(n) = raw.to_str().and_then(|s| s.parse::<usize>().ok()) {
            if n >= 1 {
                return n;
            }
        }
        eprintln!("warning: ignoring invalid PLAPEIG_WORKERS={raw:?}");
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cmd_run(config: &Path, workers: usize) -> u8 {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let spec = match parse_config(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let report = match run_experiment(&spec, workers, &out_dir()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    for row in &report.rows {
        println!(
            "p={} R={} alpha={} violations={} wall={:.3}s stop={}",
            row.p,
            row.r,
            row.alpha.map(|a| a.to_string()).unwrap_or_default(),
            row.violations,
            row.wall_s,
            row.stop
        );
    }
    for (p, msg) in &report.failures {
        eprintln!("p={p}: {msg}");
    }
    println!("summary: {}", report.summary_path.display());
    if !report.failures.is_empty() || report.any_aborted {
        EXIT_SOLVER
    } else if report.total_violations > 0 {
        EXIT_VIOLATIONS
    } else {
        EXIT_OK
    }
}

fn cmd_compare(summary: &Path, table: &str) -> u8 {
    let table = table_by_name(table).expect("clap restricts the table names");
    let report = match compare_to_reference(summary, table) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    println!("{} ({} seed, five-sweep reference quotients)", report.table, table.guess);
    for row in &report.rows {
        match (row.reference, row.rel_dev) {
            (Some(reference), Some(dev)) => println!(
                "p={} R={} ref={} rel_dev={:.3e} tol={} {}",
                row.p,
                row.computed,
                reference,
                dev,
                row.tolerance,
                if row.flagged { "FLAGGED" } else { "ok" }
            ),
            _ => println!("p={} R={} no reference row, skipped", row.p, row.computed),
        }
    }
    let compared = report.rows.len() - report.skipped;
    println!("{compared} compared, {} flagged, {} skipped", report.flagged, report.skipped);
    if report.flagged > 0 {
        EXIT_FLAGGED
    } else {
        EXIT_OK
    }
}

fn cmd_oracle(which: &str, params: &[f64]) -> u8 {
    match which {
        "1d" => {
            let Some(&p) = params.first() else {
                eprintln!("usage: plapeig oracle 1d <p> [k_max] [length]");
                return EXIT_CONFIG;
            };
            let k_max = params.get(1).copied().unwrap_or(5.0);
            let length = params.get(2).copied().unwrap_or(1.0);
            if !(k_max >= 1.0 && k_max.fract() == 0.0 && k_max <= 1e6) {
                eprintln!("k_max must be a positive integer, got {k_max}");
                return EXIT_CONFIG;
            }
            let oracle = match EigenOracle1D::new(p, length) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("{e}");
                    return EXIT_CONFIG;
                }
            };
            println!("p={p} length={length} pi_p={}", oracle.pi_p());
            for k in 1..=(k_max as u32) {
                println!("{k} {}", oracle.lambda_k(k));
            }
            EXIT_OK
        }
        "square" => {
            let m_max = params.first().copied().unwrap_or(4.0);
            if !(m_max >= 1.0 && m_max.fract() == 0.0 && m_max <= 1000.0) {
                eprintln!("m_max must be a positive integer, got {m_max}");
                return EXIT_CONFIG;
            }
            println!("unit square, p=2: lambda multiplicity");
            for (lambda, mult) in square_eigs_p2(m_max as u32) {
                println!("{lambda} {mult}");
            }
            EXIT_OK
        }
        other => {
            eprintln!("unknown oracle \"{other}\"; expected \"1d\" or \"square\"");
            EXIT_CONFIG
        }
    }
}

fn cmd_counterexample(n: usize) -> u8 {
    if n == 0 {
        eprintln!("n must be at least 1");
        return EXIT_CONFIG;
    }
    for x in counterexample_sequence(n) {
        println!("{x}");
    }
    EXIT_OK
}
