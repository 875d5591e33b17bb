//! The outer eigenpair iteration.
//!
//! Starting from a sign-changing u₀, each sweep normalizes the iterate in
//! L^p, finds the balanced α (see [`crate::balance`]), and takes φ at that
//! α as the next iterate. Along the run the Rayleigh quotient R[u_k]
//! decreases toward a Dirichlet eigenvalue of -Δ_p beyond the first,
//! α_k approaches the fixed point α* of the β map, and the size of the
//! unnormalized iterate stabilizes at
//!
//! ```text
//! ‖u_k‖_p → (α* / R*)^{1/(p-1)},    ‖∇u_k‖_p → (α* / R*^{1/p})^{1/(p-1)},
//! ```
//!
//! so the trace records the raw norms next to the quotient. The run stops
//! when R stalls, when successive iterates agree in the gradient norm, or
//! at the iteration cap, whichever comes first. Invariant violations
//! (quotient increase beyond tolerance, unbalanced parts, norm escape)
//! are collected in the trace rather than aborting the run; hard solver
//! failures after the first sweep end the run with a partial trace.

use std::io;
use std::str::FromStr;
use std::sync::Arc;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::balance::{find_balanced_alpha, BetaMap, RootConfig};
use crate::error::{Error, Result};
use crate::fem::{rayleigh_with, FeFunction};
use crate::mesh::Mesh;
use crate::ppoisson::PPoissonConfig;
use crate::quad::QuadratureRule;

/// Built-in starting shapes. Coordinates are normalized to the bounding
/// box, so the same guess works on stretched rectangles.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Bubble with a vertical nodal line through the middle,
    /// X(1-X)Y(1-Y)(1-2X). In 1D: X(1-X)(1-2X).
    Midline,
    /// Bubble antisymmetric across the diagonal, X(1-X)Y(1-Y)(X-Y).
    Diagonal,
    /// Positive inside the circle of radius 1/4 around the center,
    /// negative outside: X(1-X)Y(1-Y)(1/16 - (X-1/2)² - (Y-1/2)²).
    Circle,
    /// sin(mπX) sin(nπY); sin(mπX) in 1D.
    FirstEigProduct { m: u32, n: u32 },
    /// Caller-provided nodal values; boundary entries are forced to zero.
    CustomNodal(Vec<f64>),
}

impl FromStr for InitialGuess {
    type Err = Error;

    /// Accepts `midline`, `diagonal`, `circle`, `first_eig_product` and
    /// `first_eig_product:M,N`. Custom nodal data cannot be parsed from a
    /// name; construct that variant directly.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midline" => return Ok(InitialGuess::Midline),
            "diagonal" => return Ok(InitialGuess::Diagonal),
            "circle" => return Ok(InitialGuess::Circle),
            "first_eig_product" => return Ok(InitialGuess::FirstEigProduct { m: 2, n: 1 }),
            _ => {}
        }
        if let Some(args) = s.strip_prefix("first_eig_product:") {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() == 2 {
                if let (Ok(m), Ok(n)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
                    if m >= 1 && n >= 1 {
                        return Ok(InitialGuess::FirstEigProduct { m, n });
                    }
                }
            }
        }
        Err(Error::UnknownGuess(s.to_string()))
    }
}

/// Materializes a guess on a mesh. The polynomial 2D guesses need a 2D
/// mesh; `FirstEigProduct` and `CustomNodal` work in both dimensions.
pub fn initial_guess(mesh: &Arc<Mesh>, guess: &InitialGuess) -> Result<FeFunction> {
    let (lo, hi) = mesh.bounding_box();
    let w = hi[0] - lo[0];
    let h = hi[1] - lo[1];
    let dim = mesh.dim();
    if dim == 1 {
        match guess {
            InitialGuess::Midline => {
                return Ok(FeFunction::interpolate_dirichlet(mesh, |c| {
                    let x = (c[0] - lo[0]) / w;
                    x * (1.0 - x) * (1.0 - 2.0 * x)
                }))
            }
            InitialGuess::Diagonal | InitialGuess::Circle => {
                return Err(Error::UnknownGuess(format!(
                    "{guess:?} needs a 2d mesh"
                )))
            }
            _ => {}
        }
    }
    match guess {
        InitialGuess::Midline => Ok(FeFunction::interpolate_dirichlet(mesh, |c| {
            let x = (c[0] - lo[0]) / w;
            let y = (c[1] - lo[1]) / h;
            x * (1.0 - x) * y * (1.0 - y) * (1.0 - 2.0 * x)
        })),
        InitialGuess::Diagonal => Ok(FeFunction::interpolate_dirichlet(mesh, |c| {
            let x = (c[0] - lo[0]) / w;
            let y = (c[1] - lo[1]) / h;
            x * (1.0 - x) * y * (1.0 - y) * (x - y)
        })),
        InitialGuess::Circle => Ok(FeFunction::interpolate_dirichlet(mesh, |c| {
            let x = (c[0] - lo[0]) / w;
            let y = (c[1] - lo[1]) / h;
            let r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
            x * (1.0 - x) * y * (1.0 - y) * (1.0 / 16.0 - r2)
        })),
        InitialGuess::FirstEigProduct { m, n } => {
            let (m, n) = (*m as f64, *n as f64);
            Ok(FeFunction::interpolate_dirichlet(mesh, |c| {
                let x = (c[0] - lo[0]) / w;
                let mut v = (m * std::f64::consts::PI * x).sin();
                if dim == 2 {
                    let y = (c[1] - lo[1]) / h;
                    v *= (n * std::f64::consts::PI * y).sin();
                }
                v
            }))
        }
        InitialGuess::CustomNodal(values) => {
            let mut u = FeFunction::new(Arc::clone(mesh), values.clone())?;
            for i in 0..mesh.num_nodes() {
                if mesh.is_boundary(i) {
                    u.values_mut()[i] = 0.0;
                }
            }
            Ok(u)
        }
    }
}

/// What `validate_u0` measured.
#[derive(Debug, Clone, Serialize)]
pub struct U0Diagnostics {
    pub plus_norm: f64,
    pub minus_norm: f64,
    /// Fraction of interior nodal values that are exactly zero.
    pub zero_fraction: f64,
    /// Set when more than 5% of interior values vanish; such plateaus can
    /// slow the first balanced steps.
    pub warning: Option<String>,
}

/// Rejects starting iterates whose positive or negative part is below
/// `zero_tol` relative to the whole function.
pub fn validate_u0(u0: &FeFunction, p: f64, zero_tol: f64) -> Result<U0Diagnostics> {
    let full = u0.lp_norm(p)?;
    if full == 0.0 {
        return Err(Error::ZeroFunction);
    }
    let plus_norm = u0.positive_part().lp_norm(p)?;
    let minus_norm = u0.negative_part().lp_norm(p)?;
    if plus_norm < zero_tol * full || minus_norm < zero_tol * full {
        return Err(Error::NotSignChanging { plus_norm, minus_norm });
    }
    let mesh = u0.mesh();
    let mut zeros = 0usize;
    let mut interior = 0usize;
    for i in 0..mesh.num_nodes() {
        if !mesh.is_boundary(i) {
            interior += 1;
            if u0.values()[i] == 0.0 {
                zeros += 1;
            }
        }
    }
    let zero_fraction = if interior == 0 { 0.0 } else { zeros as f64 / interior as f64 };
    let warning = (zero_fraction > 0.05).then(|| {
        format!("{:.1}% of interior nodal values are exactly zero", 100.0 * zero_fraction)
    });
    Ok(U0Diagnostics { plus_norm, minus_norm, zero_fraction, warning })
}

/// Outer-iteration parameters. `new` fills the defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub p: f64,
    pub beta: BetaMap,
    pub max_iters: u32,
    /// Stop when the relative change of R between sweeps drops below this.
    pub rq_stop_tol: f64,
    /// Stop when ‖∇(u_{k+1} - u_k)‖_p / ‖∇u_{k+1}‖_p drops below this.
    pub diff_stop_tol: f64,
    /// Relative L^p threshold below which a clipped part counts as absent.
    pub zero_tol: f64,
    /// Relative amplitude of the uniform nodal noise injected before each
    /// sweep; zero disables the perturbation.
    pub noise: f64,
    pub seed: u64,
    /// Relative slack allowed before a Rayleigh increase or a norm escape
    /// is recorded as a violation.
    pub invariant_tol: f64,
    /// Relative gap |R⁺ - R⁻| above which the accepted step is recorded
    /// as unbalanced.
    pub balance_viol_tol: f64,
    pub root: RootConfig,
    pub solver: PPoissonConfig,
}

impl RunConfig {
    pub fn new(p: f64, beta: BetaMap) -> Self {
        RunConfig {
            p,
            beta,
            max_iters: 50,
            rq_stop_tol: 1e-8,
            diff_stop_tol: 1e-7,
            zero_tol: 1e-8,
            noise: 0.0,
            seed: 0,
            invariant_tol: 1e-4,
            balance_viol_tol: 1e-6,
            root: RootConfig::default(),
            solver: PPoissonConfig::new(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.solver.p != self.p {
            return Err(Error::Internal(format!(
                "run exponent {} disagrees with solver exponent {}",
                self.p, self.solver.p
            )));
        }
        if let BetaMap::Power { p } = self.beta {
            if !(p > 1.0) || !p.is_finite() {
                return Err(Error::InvalidExponent(p));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Internal("max_iters must be at least 1".into()));
        }
        for (name, v) in [
            ("rq_stop_tol", self.rq_stop_tol),
            ("diff_stop_tol", self.diff_stop_tol),
            ("zero_tol", self.zero_tol),
            ("invariant_tol", self.invariant_tol),
            ("balance_viol_tol", self.balance_viol_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Internal(format!("{name} must be positive")));
            }
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Internal("noise must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// One row of the run trace. Row k = 0 describes the normalized u₀ and
/// leaves the step quantities empty.
#[derive(Debug, Clone, Serialize)]
pub struct IterationState {
    pub k: u32,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Rayleigh quotient R[u_k].
    pub rayleigh: f64,
    pub r_plus: Option<f64>,
    pub r_minus: Option<f64>,
    /// ‖u_k‖_p before normalization (1 for the k = 0 row).
    pub lp_norm: f64,
    pub grad_norm: f64,
    /// ‖∇(u_k - u_{k-1})‖_p.
    pub diff_w: Option<f64>,
    /// ‖u_k - u_{k-1}‖_p.
    pub diff_lp: Option<f64>,
    /// p-Poisson solves spent on the balance search of this sweep.
    pub fevals: u32,
    /// Newton iterations inside the accepted solve.
    pub newton_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative change of R fell below `rq_stop_tol`.
    RayleighConverged,
    /// Gradient-norm difference of iterates fell below `diff_stop_tol`.
    IterateConverged,
    MaxIters,
    /// A mid-run failure ended the run early; the trace up to that sweep
    /// is still valid.
    Aborted { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    RayleighIncrease,
    BalanceGap,
    NormOutOfBounds,
}

/// A numeric near-miss worth flagging without stopping the run.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantViolation {
    pub kind: ViolationKind,
    pub iteration: u32,
    pub detail: String,
}

/// Full record of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub p: f64,
    pub beta_name: String,
    /// Fixed point of the β map; the limit of the balanced α.
    pub alpha_star: f64,
    pub states: Vec<IterationState>,
    pub stop: StopReason,
    pub violations: Vec<InvariantViolation>,
    pub wall_time_s: f64,
    /// Last unnormalized iterate, for dumps and plots.
    #[serde(skip)]
    pub final_iterate: Option<FeFunction>,
}

impl RunTrace {
    /// Writes the per-sweep trace as CSV. Undefined entries are left
    /// empty; floats print in shortest round-trip form, so re-parsing the
    /// file reproduces the run bit for bit.
    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "k,alpha,beta,R,Rplus,Rminus,lp_norm,diff_w,diff_lp")?;
        for s in &self.states {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.k,
                fmt_opt(s.alpha),
                fmt_opt(s.beta),
                s.rayleigh,
                fmt_opt(s.r_plus),
                fmt_opt(s.r_minus),
                s.lp_norm,
                fmt_opt(s.diff_w),
                fmt_opt(s.diff_lp),
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Machine-readable run summary.
    pub fn json_summary(&self) -> serde_json::Value {
        let last = self.states.last();
        let eigenvalue = last.map(|s| s.rayleigh);
        let norm_limit = eigenvalue
            .map(|r| (self.alpha_star / r).powf(1.0 / (self.p - 1.0)));
        serde_json::json!({
            "p": self.p,
            "beta": self.beta_name,
            "alpha_star": self.alpha_star,
            "iterations": self.states.len().saturating_sub(1),
            "stop": self.stop,
            "eigenvalue": eigenvalue,
            "alpha": last.and_then(|s| s.alpha),
            "lp_norm": last.map(|s| s.lp_norm),
            "predicted_norm_limit": norm_limit,
            "fevals_total": self.states.iter().map(|s| s.fevals).sum::<u32>(),
            "newton_total": self.states.iter().map(|s| s.newton_iterations).sum::<u32>(),
            "violations": self.violations,
            "wall_time_s": self.wall_time_s,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Asymptotic quantities of a finished run, compared against their
/// theoretical limits.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceDiagnostics {
    pub eigenvalue: f64,
    /// |R_last - R_prev| / R_last.
    pub rayleigh_rel_change: f64,
    /// |α_last - α*|.
    pub alpha_gap: f64,
    /// Relative distance of ‖u_last‖_p from (α*/R)^{1/(p-1)}.
    pub lp_norm_limit_gap: f64,
    /// Relative distance of ‖∇u_last‖_p from (α*/R^{1/p})^{1/(p-1)}.
    pub grad_norm_limit_gap: f64,
}

/// Needs at least u₀ and two sweeps to say anything about limits.
pub fn convergence_diagnostics(trace: &RunTrace) -> Result<ConvergenceDiagnostics> {
    if trace.states.len() < 3 {
        return Err(Error::TraceTooShort { len: trace.states.len() });
    }
    let last = &trace.states[trace.states.len() - 1];
    let prev = &trace.states[trace.states.len() - 2];
    let r = last.rayleigh;
    let exponent = 1.0 / (trace.p - 1.0);
    let lp_target = (trace.alpha_star / r).powf(exponent);
    let grad_target = (trace.alpha_star / r.powf(1.0 / trace.p)).powf(exponent);
    Ok(ConvergenceDiagnostics {
        eigenvalue: r,
        rayleigh_rel_change: (last.rayleigh - prev.rayleigh).abs() / r,
        alpha_gap: last.alpha.map(|a| (a - trace.alpha_star).abs()).unwrap_or(f64::NAN),
        lp_norm_limit_gap: (last.lp_norm - lp_target).abs() / lp_target,
        grad_norm_limit_gap: (last.grad_norm - grad_target).abs() / grad_target,
    })
}

fn perturb(u: &mut FeFunction, rng: &mut ChaCha8Rng, rel_amp: f64) {
    let amp = rel_amp * u.max_abs();
    if amp == 0.0 {
        return;
    }
    let mesh = Arc::clone(u.mesh());
    for i in 0..mesh.num_nodes() {
        if !mesh.is_boundary(i) {
            // 53 uniform bits in [0, 1).
            let xi = (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
            u.values_mut()[i] += amp * (2.0 * xi - 1.0);
        }
    }
}

/// Wall-clock stopwatch that degrades to zero where no monotonic clock
/// exists (bare wasm targets); run timing is diagnostic, never load-bearing.
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: Instant::now(),
        }
    }

    fn elapsed_s(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Runs the balanced iteration from `u0` until a stop rule fires.
pub fn run_algorithm_a(mesh: &Arc<Mesh>, u0: &FeFunction, cfg: &RunConfig) -> Result<RunTrace> {
    run_algorithm_a_with(mesh, u0, cfg, |_, _| {})
}

/// As [`run_algorithm_a`], invoking `on_iterate(k, u_k)` after every
/// accepted sweep (and once for the normalized u₀ at k = 0).
pub fn run_algorithm_a_with<F>(
    mesh: &Arc<Mesh>,
    u0: &FeFunction,
    cfg: &RunConfig,
    mut on_iterate: F,
) -> Result<RunTrace>
where
    F: FnMut(u32, &FeFunction),
{
    cfg.validate()?;
    let clock = Stopwatch::start();
    validate_u0(u0, cfg.p, cfg.zero_tol)?;
    let rule = QuadratureRule::for_dim(mesh.dim(), cfg.solver.quad_degree);

    let mut current = u0.normalize_lp(cfg.p)?;
    let r0 = rayleigh_with(&current, cfg.p, cfg.zero_tol, &rule)?;
    let mut states = vec![IterationState {
        k: 0,
        alpha: None,
        beta: None,
        rayleigh: r0.total.ok_or(Error::ZeroFunction)?,
        r_plus: r0.plus,
        r_minus: r0.minus,
        lp_norm: r0.lp_norms.full,
        grad_norm: r0.grad_norms.full,
        diff_w: None,
        diff_lp: None,
        fevals: 0,
        newton_iterations: 0,
    }];
    on_iterate(0, &current);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations: Vec<InvariantViolation> = Vec::new();
    let mut prev_fn = current.clone();
    let mut prev_r = states[0].rayleigh;
    let mut warm: Option<FeFunction> = None;
    let mut u1_norm: Option<f64> = None;
    let mut stop = StopReason::MaxIters;

    for k in 1..=cfg.max_iters {
        if cfg.noise > 0.0 {
            perturb(&mut current, &mut rng, cfg.noise);
            match current.normalize_lp(cfg.p) {
                Ok(v) => current = v,
                Err(e) => {
                    stop = StopReason::Aborted { message: format!("noise wiped the iterate: {e}") };
                    break;
                }
            }
        }
        let bal = match find_balanced_alpha(
            &current,
            &cfg.beta,
            &cfg.root,
            &cfg.solver,
            cfg.zero_tol,
            warm.as_ref(),
        ) {
            Ok(b) => b,
            Err(e) if k == 1 => return Err(e),
            Err(e) => {
                stop = StopReason::Aborted { message: e.to_string() };
                break;
            }
        };

        let rayl = bal.rayleigh;
        let r = match rayl.total {
            Some(r) => r,
            None => {
                stop = StopReason::Aborted { message: "step produced a numerically zero iterate".into() };
                break;
            }
        };
        let diff = bal.u_next.sub(&prev_fn)?;
        let diff_lp = diff.lp_norm_with(cfg.p, &rule)?;
        let diff_w = diff.grad_lp_norm(cfg.p)?;
        let lp_norm = rayl.lp_norms.full;

        if r > prev_r * (1.0 + cfg.invariant_tol) {
            violations.push(InvariantViolation {
                kind: ViolationKind::RayleighIncrease,
                iteration: k,
                detail: format!("R went {prev_r} -> {r}"),
            });
        }
        match (rayl.plus, rayl.minus) {
            (Some(rp), Some(rm)) => {
                if (rp - rm).abs() > cfg.balance_viol_tol * rp.max(rm) {
                    violations.push(InvariantViolation {
                        kind: ViolationKind::BalanceGap,
                        iteration: k,
                        detail: format!("R+ = {rp}, R- = {rm} at alpha = {}", bal.alpha_k),
                    });
                }
            }
            _ => violations.push(InvariantViolation {
                kind: ViolationKind::BalanceGap,
                iteration: k,
                detail: "a clipped part of the accepted step vanished".into(),
            }),
        }
        match u1_norm {
            None => u1_norm = Some(lp_norm),
            Some(base) => {
                if lp_norm < base / 100.0 || lp_norm > base * 100.0 {
                    violations.push(InvariantViolation {
                        kind: ViolationKind::NormOutOfBounds,
                        iteration: k,
                        detail: format!("‖u‖_p = {lp_norm} left [{} , {}]", base / 100.0, base * 100.0),
                    });
                }
            }
        }

        states.push(IterationState {
            k,
            alpha: Some(bal.alpha_k),
            beta: Some(bal.beta_k),
            rayleigh: r,
            r_plus: rayl.plus,
            r_minus: rayl.minus,
            lp_norm,
            grad_norm: rayl.grad_norms.full,
            diff_w: Some(diff_w),
            diff_lp: Some(diff_lp),
            fevals: bal.fevals,
            newton_iterations: bal.solve.newton_iterations,
        });
        on_iterate(k, &bal.u_next);

        let rel_dr = (prev_r - r).abs() / r.abs().max(f64::MIN_POSITIVE);
        let rel_diff_w = diff_w / rayl.grad_norms.full.max(f64::MIN_POSITIVE);

        prev_fn = bal.u_next;
        prev_r = r;
        match prev_fn.normalize_lp(cfg.p) {
            Ok(v) => current = v,
            Err(e) => {
                stop = StopReason::Aborted { message: format!("iterate collapsed to zero: {e}") };
                break;
            }
        }
        // Warm-start the next solve with the unnormalized solution: the operator is
        // (p-1)-homogeneous, so phi_k already sits at the scale of the next load,
        // while the normalized iterate is off by ||phi_k||^(p-1).
        warm = Some(prev_fn.clone());

        if rel_dr < cfg.rq_stop_tol {
            stop = StopReason::RayleighConverged;
            break;
        }
        if rel_diff_w < cfg.diff_stop_tol {
            stop = StopReason::IterateConverged;
            break;
        }
    }

    Ok(RunTrace {
        p: cfg.p,
        beta_name: match cfg.beta {
            BetaMap::Linear => "linear".to_string(),
            BetaMap::Power { .. } => "power".to_string(),
        },
        alpha_star: cfg.beta.fixed_point(),
        states,
        stop,
        violations,
        wall_time_s: clock.elapsed_s(),
        final_iterate: Some(prev_fn),
    })
}
