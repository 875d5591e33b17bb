//! JSON-producing core of the browser demo, independent of any JS types
//! so it builds and tests on the host.
//!
//! Inputs are range-checked here rather than trusted from the page:
//! meshes are capped at 96x96 and exponents at (1, 6] to keep every call
//! comfortably under a second of single-threaded work.

use std::str::FromStr;
use std::sync::Arc;

use plapeig::fem::DEFAULT_ZERO_TOL;
use plapeig::oracle::counterexample_sequence;
use plapeig::ppoisson::solve_signed_power_rhs;
use plapeig::{
    build_rect_mesh, find_balanced_alpha, initial_guess, rayleigh, run_algorithm_a, BetaMap,
    FeFunction, InitialGuess, Mesh, PPoissonConfig, RootConfig, RunConfig, StopReason,
};
use serde_json::json;

const MAX_CELLS: u32 = 96;
const MAX_ITERS: u32 = 80;
const MAX_SAMPLES: u32 = 61;
const MAX_TERMS: usize = 100_000;

fn checked_mesh(p: f64, nx: u32) -> Result<Arc<Mesh>, String> {
    if !(p > 1.0 && p <= 6.0) || !p.is_finite() {
        return Err(format!("p must lie in (1, 6], got {p}"));
    }
    if !(4..=MAX_CELLS).contains(&nx) {
        return Err(format!("nx must lie in [4, {MAX_CELLS}], got {nx}"));
    }
    build_rect_mesh(nx as usize, nx as usize, 1.0, 1.0)
        .map(Arc::new)
        .map_err(|e| e.to_string())
}

fn checked_guess(mesh: &Arc<Mesh>, guess: &str) -> Result<FeFunction, String> {
    let g = InitialGuess::from_str(guess).map_err(|e| e.to_string())?;
    initial_guess(mesh, &g).map_err(|e| e.to_string())
}

fn stop_label(stop: &StopReason) -> (&'static str, Option<&str>) {
    match stop {
        StopReason::RayleighConverged => ("rayleigh_converged", None),
        StopReason::IterateConverged => ("iterate_converged", None),
        StopReason::MaxIters => ("max_iters", None),
        StopReason::Aborted { message } => ("aborted", Some(message)),
    }
}

/// Runs the balanced iteration on an nx-by-nx unit square and returns the
/// trace and the final iterate's nodal values (row-major on the
/// (nx+1)-by-(nx+1) lattice) as JSON.
pub fn run_iterations_json(
    p: f64,
    nx: u32,
    guess: &str,
    beta: &str,
    iters: u32,
) -> Result<String, String> {
    let mesh = checked_mesh(p, nx)?;
    let u0 = checked_guess(&mesh, guess)?;
    if !(1..=MAX_ITERS).contains(&iters) {
        return Err(format!("iters must lie in [1, {MAX_ITERS}], got {iters}"));
    }
    let beta_map = match beta {
        "linear" => BetaMap::Linear,
        "power" => BetaMap::Power { p },
        other => return Err(format!("beta must be \"linear\" or \"power\", got \"{other}\"")),
    };
    let mut cfg = RunConfig::new(p, beta_map);
    cfg.max_iters = iters;
    let trace = run_algorithm_a(&mesh, &u0, &cfg).map_err(|e| e.to_string())?;

    let states: Vec<_> = trace
        .states
        .iter()
        .map(|s| {
            json!({
                "k": s.k,
                "alpha": s.alpha,
                "beta": s.beta,
                "r": s.rayleigh,
                "rplus": s.r_plus,
                "rminus": s.r_minus,
                "lp_norm": s.lp_norm,
                "diff_w": s.diff_w,
            })
        })
        .collect();
    let (stop, stop_detail) = stop_label(&trace.stop);
    let values: Vec<f64> =
        trace.final_iterate.as_ref().map(|u| u.values().to_vec()).unwrap_or_default();
    Ok(json!({
        "p": p,
        "nx": nx,
        "alpha_star": trace.alpha_star,
        "stop": stop,
        "stop_detail": stop_detail,
        "violations": trace.violations.len(),
        "states": states,
        "values": values,
    })
    .to_string())
}

/// Splits the starting guess into its parts, solves the inner problem for
/// a sweep of load splits alpha (with beta = 1 - alpha), and reports both
/// part quotients plus the balanced alpha the root search settles on.
pub fn balance_curve_json(p: f64, nx: u32, guess: &str, samples: u32) -> Result<String, String> {
    let mesh = checked_mesh(p, nx)?;
    if !(5..=MAX_SAMPLES).contains(&samples) {
        return Err(format!("samples must lie in [5, {MAX_SAMPLES}], got {samples}"));
    }
    let u0 = checked_guess(&mesh, guess)?
        .normalize_lp(p)
        .map_err(|e| e.to_string())?;
    let up = u0.positive_part();
    let um = u0.negative_part();
    let cfg = PPoissonConfig::new(p);

    let mut alphas = Vec::with_capacity(samples as usize);
    let mut rplus = Vec::with_capacity(samples as usize);
    let mut rminus = Vec::with_capacity(samples as usize);
    let mut totals = Vec::with_capacity(samples as usize);
    // Consecutive alphas give nearby loads, so each solve warm-starts
    // from the previous one (the first runs the full continuation).
    let mut warm: Option<FeFunction> = None;
    for i in 0..samples {
        let t = i as f64 / (samples - 1) as f64;
        let alpha = 0.02 + 0.96 * t;
        let (phi, _) =
            solve_signed_power_rhs(&mesh, alpha, &up, 1.0 - alpha, &um, &cfg, warm.as_ref())
                .map_err(|e| e.to_string())?;
        let rep = rayleigh(&phi, p, DEFAULT_ZERO_TOL).map_err(|e| e.to_string())?;
        alphas.push(alpha);
        rplus.push(rep.plus);
        rminus.push(rep.minus);
        totals.push(rep.total);
        warm = Some(phi);
    }

    let bal = find_balanced_alpha(&u0, &BetaMap::Linear, &RootConfig::default(), &cfg, DEFAULT_ZERO_TOL, None)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "p": p,
        "nx": nx,
        "alphas": alphas,
        "rplus": rplus,
        "rminus": rminus,
        "r": totals,
        "alpha_balanced": bal.alpha_k,
        "beta_balanced": bal.beta_k,
        "r_balanced": bal.rayleigh.total,
        "fevals": bal.fevals,
    })
    .to_string())
}

/// First `n` terms of the bounded recurrence whose running means do not
/// converge.
pub fn counterexample_terms(n: usize) -> Result<Vec<f64>, String> {
    if n == 0 || n > MAX_TERMS {
        return Err(format!("n must lie in [1, {MAX_TERMS}], got {n}"));
    }
    Ok(counterexample_sequence(n))
}
