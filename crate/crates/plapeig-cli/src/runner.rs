//! Experiment execution: one mesh, one guess, one run per exponent,
//! artifacts on disk.
//!
//! Per-exponent work is independent, so a sweep runs on a small worker
//! pool; every worker writes only its own `trace_p{p}.csv` and dump
//! files, and the summary is assembled by the coordinator after all
//! workers have joined. Traces are therefore byte-identical between
//! serial and concurrent execution of the same spec.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::sync::Mutex;

use plapeig::{
    build_interval_mesh, build_rect_mesh, initial_guess, run_algorithm_a_with, Mesh, RunTrace,
    StopReason,
};
use thiserror::Error;

use crate::config::ExperimentSpec;

#[derive(Debug, Error)]
pub enum RunnerError {
    /// Mesh or guess construction failed; the experiment cannot run at all.
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// One line of the summary CSV.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub p: f64,
    pub r: f64,
    pub alpha: Option<f64>,
    pub violations: usize,
    pub wall_s: f64,
    pub stop: &'static str,
}

#[derive(Debug)]
pub struct ExperimentReport {
    /// Successful runs, ascending in p.
    pub rows: Vec<SummaryRow>,
    /// Runs that produced no trace, with their error messages.
    pub failures: Vec<(f64, String)>,
    pub total_violations: usize,
    /// True when some run stopped with a mid-run abort.
    pub any_aborted: bool,
    pub summary_path: PathBuf,
}

enum Outcome {
    Done(SummaryRow),
    Failed(f64, String),
}

/// Inserts `_p{p}` before the extension: `out/trace.csv`, p = 2.5 gives
/// `out/trace_p2.5.csv`. Exponents print in shortest round-trip form, so
/// distinct p values in one spec cannot collide.
fn with_p_suffix(path: &Path, p: f64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_p{p}.{ext}"),
        None => format!("{stem}_p{p}"),
    };
    path.with_file_name(name)
}

/// Relative paths land under the output directory; absolute paths are
/// taken as written.
fn resolve(out_dir: &Path, configured: &str) -> PathBuf {
    let p = Path::new(configured);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn create_parent(path: &Path) -> Result<(), RunnerError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|source| RunnerError::Io { path: dir.to_path_buf(), source })?;
        }
    }
    Ok(())
}

fn build_mesh(spec: &ExperimentSpec) -> Result<Arc<Mesh>, RunnerError> {
    let m = &spec.mesh;
    let width = m.width.unwrap_or(1.0);
    let mesh = match m.kind.as_str() {
        "interval" => build_interval_mesh(m.nx as usize, width),
        _ => build_rect_mesh(
            m.nx as usize,
            m.ny.unwrap_or(m.nx) as usize,
            width,
            m.height.unwrap_or(1.0),
        ),
    };
    mesh.map(Arc::new).map_err(|e| RunnerError::Setup(e.to_string()))
}

fn stop_name(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::RayleighConverged => "rayleigh_converged",
        StopReason::IterateConverged => "iterate_converged",
        StopReason::MaxIters => "max_iters",
        StopReason::Aborted { .. } => "aborted",
    }
}

/// Runs the experiment and writes all artifacts. `workers` bounds the number
/// of exponents in flight; 1 reproduces strictly serial execution.
pub fn run_experiment(
    spec: &ExperimentSpec,
    workers: usize,
    out_dir: &Path,
) -> Result<ExperimentReport, RunnerError> {
    let mesh = build_mesh(spec)?;
    let guess = spec.guess();
    let u0 = initial_guess(&mesh, &guess).map_err(|e| RunnerError::Setup(e.to_string()))?;

    let trace_base = resolve(out_dir, &spec.outputs.trace_csv);
    let summary_path = resolve(out_dir, &spec.outputs.summary);
    create_parent(&trace_base)?;
    create_parent(&summary_path)?;

    let outcomes: Vec<Mutex<Option<Outcome>>> =
        spec.p_values.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(spec.p_values.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&p) = spec.p_values.get(i) else { break };
                let outcome = run_one(spec, &mesh, &u0, p, &trace_base);
                *outcomes[i].lock().expect("outcome slot") = Some(outcome);
            });
        }
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for slot in outcomes {
        match slot.into_inner().expect("outcome slot").expect("worker filled the slot") {
            Outcome::Done(row) => rows.push(row),
            Outcome::Failed(p, message) => failures.push((p, message)),
        }
    }
    rows.sort_by(|a, b| a.p.total_cmp(&b.p));
    failures.sort_by(|a, b| a.0.total_cmp(&b.0));

    write_summary(&summary_path, &rows)?;

    Ok(ExperimentReport {
        total_violations: rows.iter().map(|r| r.violations).sum(),
        any_aborted: rows.iter().any(|r| r.stop == "aborted"),
        rows,
        failures,
        summary_path,
    })
}

fn run_one(
    spec: &ExperimentSpec,
    mesh: &Arc<Mesh>,
    u0: &plapeig::FeFunction,
    p: f64,
    trace_base: &Path,
) -> Outcome {
    let cfg = spec.run_config(p);
    let dump_dir = trace_base.parent().map(Path::to_path_buf).unwrap_or_default();
    let dump_every = spec.outputs.dump_every;
    let mut dump_error: Option<io::Error> = None;

    let trace = run_algorithm_a_with(mesh, u0, &cfg, |k, u| {
        let Some(every) = dump_every else { return };
        if k % every != 0 || dump_error.is_some() {
            return;
        }
        let path = dump_dir.join(format!("dump_p{p}_k{k:04}.txt"));
        if let Err(e) = write_dump(&path, u) {
            dump_error = Some(e);
        }
    });

    let trace = match trace {
        Ok(t) => t,
        Err(e) => return Outcome::Failed(p, e.to_string()),
    };
    if let Some(e) = dump_error {
        return Outcome::Failed(p, format!("dump write failed: {e}"));
    }
    if let Err(e) = write_trace(&with_p_suffix(trace_base, p), &trace) {
        return Outcome::Failed(p, format!("trace write failed: {e}"));
    }

    let last = trace.states.last().expect("trace always has the k = 0 row");
    Outcome::Done(SummaryRow {
        p,
        r: last.rayleigh,
        alpha: last.alpha,
        violations: trace.violations.len(),
        wall_s: trace.wall_time_s,
        stop: stop_name(&trace.stop),
    })
}

fn write_dump(path: &Path, u: &plapeig::FeFunction) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    u.dump(&mut out)?;
    out.flush()
}

fn write_trace(path: &Path, trace: &RunTrace) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    trace.write_csv(&mut out)?;
    out.flush()
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), RunnerError> {
    let wrap = |source| RunnerError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(fs::File::create(path).map_err(wrap)?);
    (|| {
        writeln!(out, "p,R,alpha,violations,wall_s,stop")?;
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{:.3},{}",
                r.p,
                r.r,
                r.alpha.map(|a| a.to_string()).unwrap_or_default(),
                r.violations,
                r.wall_s,
                r.stop
            )?;
        }
        out.flush()
    })()
    .map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_suffix_lands_before_the_extension() {
        assert_eq!(
            with_p_suffix(Path::new("out/trace.csv"), 2.5),
            PathBuf::from("out/trace_p2.5.csv")
        );
        assert_eq!(with_p_suffix(Path::new("trace"), 2.0), PathBuf::from("trace_p2"));
    }

    #[test]
    fn absolute_paths_ignore_the_output_dir() {
        assert_eq!(resolve(Path::new("runs"), "/tmp/s.csv"), PathBuf::from("/tmp/s.csv"));
        assert_eq!(resolve(Path::new("runs"), "s.csv"), PathBuf::from("runs/s.csv"));
    }
}
