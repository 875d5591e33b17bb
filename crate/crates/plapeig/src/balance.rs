//! Balancing the positive and negative Rayleigh quotients.
//!
//! Given a sign-changing iterate u, each candidate α ∈ (0, 1) defines a
//! solve
//!
//! ```text
//! -Δ_p φ(α) = α (u₊)^{p-1} - β(α) (u₋)^{p-1},   φ(α) = 0 on ∂Ω,
//! ```
//!
//! and the balance residual F(α) = R⁺[φ(α)] - R⁻[φ(α)], where R± are the
//! Rayleigh quotients of the clipped parts. Raising α strengthens the
//! positive bump and weakens the negative one, so F decreases from +∞
//! (negative load only, φ ≤ 0, no positive part) to -∞ (positive load
//! only). The balanced α is the root; the next iterate is φ at that root.
//!
//! The root is located by a coarse grid scan for the first + to - sign
//! change, then Ridder refinement with bisection fallback while an
//! endpoint still carries an infinite marker value.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{rayleigh_with, FeFunction, RayleighReport};
use crate::mesh::Mesh;
use crate::ppoisson::{solve_signed_power_rhs, PPoissonConfig, SolveReport};
use crate::quad::QuadratureRule;

/// The coupling β(α) between the two load coefficients. Its fixed point
/// α* = β(α*) is the value the balanced α converges to along the
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMap {
    /// β(α) = 1 - α, fixed point 1/2.
    Linear,
    /// β(α) = (1 - α^p)^{1/p}, fixed point 2^{-1/p}.
    Power { p: f64 },
}

impl BetaMap {
    pub fn eval(&self, alpha: f64) -> f64 {
        match *self {
            BetaMap::Linear => 1.0 - alpha,
            BetaMap::Power { p } => (1.0 - alpha.powf(p)).max(0.0).powf(1.0 / p),
        }
    }

    /// Solves β(α) = α by bisection; β - id is strictly decreasing on
    /// [0, 1] with opposite signs at the ends, so this is exact to the
    /// last bit without relying on the closed forms.
    pub fn fixed_point(&self) -> f64 {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Stopping control for the α search.
#[derive(Debug, Clone)]
pub struct RootConfig {
    /// Bracket width below which the search stops.
    pub alpha_tol: f64,
    /// Relative residual target: stop when |F| ≤ f_tol · max(R⁺, R⁻).
    pub f_tol: f64,
    /// Hard cap on φ evaluations (each one is a p-Poisson solve).
    pub max_fevals: u32,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig { alpha_tol: 1e-9, f_tol: 1e-7, max_fevals: 80 }
    }
}

/// Outcome of one balanced step.
#[derive(Debug, Clone)]
pub struct BalanceResult {
    pub alpha_k: f64,
    pub beta_k: f64,
    /// φ at the balanced α, not normalized.
    pub u_next: FeFunction,
    /// F at the returned α.
    pub residual_f: f64,
    /// Number of p-Poisson solves spent.
    pub fevals: u32,
    /// Rayleigh data of `u_next`, reusable by the caller.
    pub rayleigh: RayleighReport,
    /// Report of the p-Poisson solve that produced `u_next`.
    pub solve: SolveReport,
}

/// One inner solve: φ(α) for the current iterate's clipped parts.
pub fn phi(
    mesh: &Arc<Mesh>,
    alpha: f64,
    u_plus: &FeFunction,
    u_minus: &FeFunction,
    beta: &BetaMap,
    cfg: &PPoissonConfig,
    warm: Option<&FeFunction>,
) -> Result<(FeFunction, SolveReport)> {
    solve_signed_power_rhs(mesh, alpha, u_plus, beta.eval(alpha), u_minus, cfg, warm)
}

/// F(α) from the Rayleigh data of φ(α). A vanishing positive part maps to
/// +∞ and a vanishing negative part to -∞, matching the limits of F at
/// the bracket ends. Both parts vanishing yields NaN; callers must treat
/// that as "no usable sign information".
pub fn balance_residual(report: &RayleighReport) -> f64 {
    match (report.plus, report.minus) {
        (Some(rp), Some(rm)) => rp - rm,
        (None, Some(_)) => f64::INFINITY,
        (Some(_), None) => f64::NEG_INFINITY,
        (None, None) => f64::NAN,
    }
}

struct EvalPoint {
    alpha: f64,
    f: f64,
    /// max(R⁺, R⁻), the scale for the relative residual test.
    scale: f64,
}

/// Candidate for the returned balanced step; the finite evaluation with
/// the smallest |F| seen so far.
struct Candidate {
    point: EvalPoint,
    beta: f64,
    phi: FeFunction,
    rayleigh: RayleighReport,
    solve: SolveReport,
}

struct Evaluator<'a> {
    mesh: &'a Arc<Mesh>,
    u_plus: FeFunction,
    u_minus: FeFunction,
    beta: &'a BetaMap,
    pp_cfg: &'a PPoissonConfig,
    rule: QuadratureRule,
    zero_tol: f64,
    warm: Option<FeFunction>,
    fevals: u32,
    budget: u32,
    best: Option<Candidate>,
}

impl<'a> Evaluator<'a> {
    fn eval(&mut self, alpha: f64) -> Result<EvalPoint> {
        if self.fevals >= self.budget {
            return Err(Error::NoSignChange {
                fevals: self.fevals,
                detail: format!("evaluation budget exhausted near alpha = {alpha}"),
            });
        }
        self.fevals += 1;
        let (phi_a, solve) = phi(
            self.mesh,
            alpha,
            &self.u_plus,
            &self.u_minus,
            self.beta,
            self.pp_cfg,
            self.warm.as_ref(),
        )?;
        if !solve.converged {
            return Err(Error::NonConvergence {
                iterations: solve.newton_iterations,
                residual: solve.final_residual_norm,
            });
        }
        let report = rayleigh_with(&phi_a, self.pp_cfg.p, self.zero_tol, &self.rule)?;
        let f = balance_residual(&report);
        let scale = match (report.plus, report.minus) {
            (Some(rp), Some(rm)) => rp.max(rm),
            (Some(rp), None) => rp,
            (None, Some(rm)) => rm,
            (None, None) => 0.0,
        };
        self.warm = Some(phi_a.clone());
        let point = EvalPoint { alpha, f, scale };
        if f.is_finite() {
            let better = match &self.best {
                Some(c) => f.abs() < c.point.f.abs(),
                None => true,
            };
            if better {
                self.best = Some(Candidate {
                    point: EvalPoint { alpha, f, scale },
                    beta: self.beta.eval(alpha),
                    phi: phi_a,
                    rayleigh: report,
                    solve,
                });
            }
        }
        Ok(point)
    }
}

/// Finds the balanced α for the (L^p-normalized, sign-changing) iterate
/// `u` and returns φ at that α. The balance residual is scale invariant
/// in `u`, so normalization only affects the magnitude of `u_next`.
pub fn find_balanced_alpha(
    u: &FeFunction,
    beta: &BetaMap,
    root_cfg: &RootConfig,
    pp_cfg: &PPoissonConfig,
    zero_tol: f64,
    warm: Option<&FeFunction>,
) -> Result<BalanceResult> {
    pp_cfg.validate()?;
    let mesh_arc = Arc::clone(u.mesh());
    let u_plus = u.positive_part();
    let u_minus = u.negative_part();
    {
        let rule = QuadratureRule::for_dim(u.mesh().dim(), pp_cfg.quad_degree);
        let p = pp_cfg.p;
        let plus_norm = u_plus.lp_norm_with(p, &rule)?;
        let minus_norm = u_minus.lp_norm_with(p, &rule)?;
        let full = u.lp_norm_with(p, &rule)?;
        if plus_norm < zero_tol * full || minus_norm < zero_tol * full {
            return Err(Error::NotSignChanging { plus_norm, minus_norm });
        }
    }

    let mut ev = Evaluator {
        mesh: &mesh_arc,
        u_plus,
        u_minus,
        beta,
        pp_cfg,
        rule: QuadratureRule::for_dim(u.mesh().dim(), pp_cfg.quad_degree),
        zero_tol,
        warm: warm.cloned(),
        fevals: 0,
        budget: root_cfg.max_fevals,
        best: None,
    };

    // Endpoint markers: at α = 0 the load is nonpositive so the positive
    // part of φ vanishes (F = +∞); at α = 1 symmetrically F = -∞. No
    // solve is spent on either.
    let bracket = scan_for_bracket(&mut ev, 10)?;
    let bracket = match bracket {
        Some(b) => b,
        None => {
            // One refinement pass with a 4x finer grid.
            match scan_for_bracket(&mut ev, 40)? {
                Some(b) => b,
                None => {
                    return Err(Error::NoSignChange {
                        fevals: ev.fevals,
                        detail: "balance residual has no sign change on the refined grid".into(),
                    })
                }
            }
        }
    };

    refine(&mut ev, bracket, root_cfg)?;
    let best = ev.best.ok_or_else(|| Error::NoSignChange {
        fevals: ev.fevals,
        detail: "no finite balance residual was ever observed".into(),
    })?;
    Ok(BalanceResult {
        alpha_k: best.point.alpha,
        beta_k: best.beta,
        u_next: best.phi,
        residual_f: best.point.f,
        fevals: ev.fevals,
        rayleigh: best.rayleigh,
        solve: best.solve,
    })
}

/// Scans αᵢ = i/n for the first transition from positive to negative F,
/// using the ±∞ endpoint markers at 0 and 1. NaN values (no usable sign)
/// are skipped. Stops at the first usable bracket.
fn scan_for_bracket(ev: &mut Evaluator, n: usize) -> Result<Option<(EvalPoint, EvalPoint)>> {
    let mut left = EvalPoint { alpha: 0.0, f: f64::INFINITY, scale: 0.0 };
    for i in 1..n {
        let alpha = i as f64 / n as f64;
        let point = ev.eval(alpha)?;
        if point.f.is_nan() {
            continue;
        }
        if point.f <= 0.0 {
            if left.f > 0.0 {
                return Ok(Some((left, point)));
            }
            // F already negative with no positive value to the left; the
            // marker at 0 supplies the positive side.
            return Ok(Some((
                EvalPoint { alpha: 0.0, f: f64::INFINITY, scale: 0.0 },
                point,
            )));
        }
        left = point;
    }
    if left.f > 0.0 {
        // Marker at 1 supplies the negative side.
        return Ok(Some((left, EvalPoint { alpha: 1.0, f: f64::NEG_INFINITY, scale: 0.0 })));
    }
    Ok(None)
}

/// Shrinks the bracket until the width or residual target is met. Uses
/// bisection while an endpoint is infinite, Ridder steps once both are
/// finite, and falls back to bisection whenever the Ridder point leaves
/// the bracket.
fn refine(ev: &mut Evaluator, bracket: (EvalPoint, EvalPoint), cfg: &RootConfig) -> Result<()> {
    let (mut lo, mut hi) = bracket;
    debug_assert!(lo.f > 0.0 && hi.f <= 0.0);
    if residual_met(&hi, cfg) || residual_met(&lo, cfg) {
        return Ok(());
    }
    while hi.alpha - lo.alpha > cfg.alpha_tol {
        let mid_alpha = 0.5 * (lo.alpha + hi.alpha);
        let mid = ev.eval(mid_alpha)?;
        if mid.f.is_nan() {
            return Err(Error::NoSignChange {
                fevals: ev.fevals,
                detail: format!(
                    "both clipped parts vanished at alpha = {mid_alpha}; zero_tol too coarse"
                ),
            });
        }
        if residual_met(&mid, cfg) {
            return Ok(());
        }
        let (mut new_lo, mut new_hi) = if mid.f > 0.0 {
            (mid, hi)
        } else {
            (lo, mid)
        };
        // Ridder step inside the updated bracket when all three values
        // are finite.
        if new_lo.f.is_finite() && new_hi.f.is_finite() {
            let xm = 0.5 * (new_lo.alpha + new_hi.alpha);
            // Value at xm is one of the bracket ends after the bisection
            // update only when the bracket did not move; re-derive from
            // the standard Ridder formula using the current endpoints.
            let fl = new_lo.f;
            let fh = new_hi.f;
            let fm_point = ev.eval(xm)?;
            if fm_point.f.is_nan() {
                return Err(Error::NoSignChange {
                    fevals: ev.fevals,
                    detail: format!("balance residual undefined at alpha = {xm}"),
                });
            }
            if residual_met(&fm_point, cfg) {
                return Ok(());
            }
            let fm = fm_point.f;
            let s = (fm * fm - fl * fh).sqrt();
            if s > 0.0 && s.is_finite() {
                let sign = if fl >= fh { 1.0 } else { -1.0 };
                let x_new = xm + (xm - new_lo.alpha) * sign * fm / s;
                if x_new > new_lo.alpha && x_new < new_hi.alpha {
                    let pt = ev.eval(x_new)?;
                    if !pt.f.is_nan() {
                        if residual_met(&pt, cfg) {
                            return Ok(());
                        }
                        // Insert both xm and x_new into the bracket.
                        let mut points = [fm_point, pt];
                        points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
                        let [a, b] = points;
                        if a.f > 0.0 && b.f <= 0.0 {
                            new_lo = a;
                            new_hi = b;
                        } else if b.f > 0.0 {
                            new_lo = b;
                        } else if a.f <= 0.0 {
                            new_hi = a;
                        }
                    }
                } else if fm > 0.0 {
                    new_lo = fm_point;
                } else {
                    new_hi = fm_point;
                }
            } else if fm > 0.0 {
                new_lo = fm_point;
            } else {
                new_hi = fm_point;
            }
        }
        lo = new_lo;
        hi = new_hi;
    }
    Ok(())
}

fn residual_met(p: &EvalPoint, cfg: &RootConfig) -> bool {
    p.f.is_finite() && p.scale > 0.0 && p.f.abs() <= cfg.f_tol * p.scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::rayleigh;
    use crate::mesh::build_interval_mesh;
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    fn normalized_sin2(n: usize, p: f64) -> FeFunction {
        let mesh = Arc::new(build_interval_mesh(n, 1.0).unwrap());
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| (2.0 * PI * x[0]).sin());
        u.normalize_lp(p).unwrap()
    }

    #[test]
    fn linear_beta_map_and_fixed_point() {
        let m = BetaMap::Linear;
        assert_eq!(m.eval(0.25), 0.75);
        assert_relative_eq!(m.fixed_point(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn power_beta_map_fixed_points_match_closed_form() {
        for (p, expect) in [
            (1.7, 0.665156029099061),
            (2.0, 0.707106781186548),
            (3.0, 0.793700525984100),
        ] {
            let m = BetaMap::Power { p };
            assert_relative_eq!(m.fixed_point(), expect, epsilon = 1e-12);
            // The fixed point satisfies beta(a) = a.
            let a = m.fixed_point();
            assert_relative_eq!(m.eval(a), a, epsilon = 1e-12);
        }
    }

    #[test]
    fn power_beta_map_endpoints() {
        let m = BetaMap::Power { p: 3.0 };
        assert_relative_eq!(m.eval(0.0), 1.0, epsilon = 1e-15);
        assert!(m.eval(1.0).abs() < 1e-7);
    }

    #[test]
    fn residual_convention_signs() {
        let mesh = Arc::new(build_interval_mesh(50, 1.0).unwrap());
        let plus_only = FeFunction::interpolate_dirichlet(&mesh, |x| (PI * x[0]).sin());
        let r = rayleigh(&plus_only, 2.0, 1e-8).unwrap();
        assert_eq!(balance_residual(&r), f64::NEG_INFINITY, "no negative part maps to -inf");
        let minus_only = plus_only.scaled(-1.0);
        let r = rayleigh(&minus_only, 2.0, 1e-8).unwrap();
        assert_eq!(balance_residual(&r), f64::INFINITY, "no positive part maps to +inf");
        let both = FeFunction::interpolate_dirichlet(&mesh, |x| (2.0 * PI * x[0]).sin());
        let r = rayleigh(&both, 2.0, 1e-8).unwrap();
        assert!(balance_residual(&r).is_finite());
    }

    #[test]
    fn symmetric_iterate_balances_at_fixed_point_linear() {
        let u = normalized_sin2(200, 2.0);
        let res = find_balanced_alpha(
            &u,
            &BetaMap::Linear,
            &RootConfig::default(),
            &PPoissonConfig::new(2.0),
            1e-8,
            None,
        )
        .unwrap();
        assert!(
            (res.alpha_k - 0.5).abs() <= 1e-6,
            "alpha {} should sit at the fixed point by symmetry",
            res.alpha_k
        );
        assert_relative_eq!(res.beta_k, 1.0 - res.alpha_k, epsilon = 1e-14);
        assert!(res.fevals <= 80);
        let rayl = res.rayleigh;
        let (rp, rm) = (rayl.plus.unwrap(), rayl.minus.unwrap());
        assert!((rp - rm).abs() <= 1e-5 * rp.max(rm), "R+ {rp} vs R- {rm}");
    }

    #[test]
    fn symmetric_iterate_balances_at_fixed_point_power() {
        let p = 3.0;
        let u = normalized_sin2(160, p);
        let beta = BetaMap::Power { p };
        let res = find_balanced_alpha(
            &u,
            &beta,
            &RootConfig::default(),
            &PPoissonConfig::new(p),
            1e-8,
            None,
        )
        .unwrap();
        let star = beta.fixed_point();
        assert!(
            (res.alpha_k - star).abs() <= 1e-5,
            "alpha {} vs fixed point {star}",
            res.alpha_k
        );
    }

    #[test]
    fn balanced_step_does_not_raise_rayleigh_quotient() {
        let p = 2.0;
        let u = normalized_sin2(200, p);
        let res = find_balanced_alpha(
            &u,
            &BetaMap::Linear,
            &RootConfig::default(),
            &PPoissonConfig::new(p),
            1e-8,
            None,
        )
        .unwrap();
        let before = rayleigh(&u, p, 1e-8).unwrap().total.unwrap();
        let after = res.rayleigh.total.unwrap();
        assert!(after <= before * (1.0 + 1e-6), "R went {before} -> {after}");
    }

    #[test]
    fn one_signed_iterate_is_rejected() {
        let mesh = Arc::new(build_interval_mesh(50, 1.0).unwrap());
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| (PI * x[0]).sin());
        let u = u.normalize_lp(2.0).unwrap();
        let err = find_balanced_alpha(
            &u,
            &BetaMap::Linear,
            &RootConfig::default(),
            &PPoissonConfig::new(2.0),
            1e-8,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotSignChanging { .. }), "got {err:?}");
    }

    #[test]
    fn exhausted_budget_reports_no_sign_change() {
        let u = normalized_sin2(60, 2.0);
        let cfg = RootConfig { max_fevals: 2, ..RootConfig::default() };
        let err = find_balanced_alpha(
            &u,
            &BetaMap::Linear,
            &cfg,
            &PPoissonConfig::new(2.0),
            1e-8,
            None,
        )
        .unwrap_err();
        match err {
            Error::NoSignChange { fevals, .. } => assert_eq!(fevals, 2),
            other => panic!("expected NoSignChange, got {other:?}"),
        }
    }

    #[test]
    fn warm_start_changes_no_answer() {
        let p = 2.5;
        let u = normalized_sin2(100, p);
        let cold = find_balanced_alpha(
            &u,
            &BetaMap::Linear,
            &RootConfig::default(),
            &PPoissonConfig::new(p),
            1e-8,
            None,
        )
        .unwrap();
        let warm_seed = u.scaled(0.37);
        let warm = find_balanced_alpha(
            &u,
            &BetaMap::Linear,
            &RootConfig::default(),
            &PPoissonConfig::new(p),
            1e-8,
            Some(&warm_seed),
        )
        .unwrap();
        assert!(
            (cold.alpha_k - warm.alpha_k).abs() <= 1e-6,
            "cold {} vs warm {}",
            cold.alpha_k,
            warm.alpha_k
        );
    }
}
