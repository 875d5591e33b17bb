//! Dirichlet p-Poisson solves: -div(|∇v|^{p-2} ∇v) = f, v = 0 on the boundary.
//!
//! The weak residual is regularized through w = |∇v|² + ε²,
//!
//! ```text
//! r_i(v) = Σ_T w^{(p-2)/2} ⟨∇v, ∇ψ_i⟩ |T|  -  ∫ f ψ_i dx,
//! ```
//!
//! whose exact derivative per element is the symmetric positive-definite
//! tensor w^{(p-2)/2} (I + (p-2) ∇v⊗∇v / w). Both local eigenvalues,
//! w^{(p-2)/2} and w^{(p-2)/2}(1 + (p-2)|∇v|²/w), are positive for p > 1
//! whenever ε > 0, so the Newton systems factorize without pivoting.
//!
//! Convergence far from p = 2 is handled by ε-continuation: solve at a
//! strongly regularized ε first, then re-solve with the previous solution
//! as the starting point while ε shrinks geometrically. Each Newton step is
//! damped by backtracking on the regularized energy
//! E_ε(v) = (1/p) Σ_T (|∇v|²+ε²)^{p/2} |T| - ⟨f, v⟩, which is convex in v.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::FeFunction;
use crate::linalg::{norm2, BandedSpd};
use crate::mesh::{DofMap, Mesh};
use crate::quad::QuadratureRule;

/// Solver parameters. `new` fills the defaults; fields are public so
/// experiments can override individual knobs.
#[derive(Debug, Clone)]
pub struct PPoissonConfig {
    pub p: f64,
    /// Relative residual tolerance; the reference scale is the residual at
    /// v = 0, i.e. the load norm.
    pub newton_tol: f64,
    /// Newton iteration cap per continuation stage.
    pub max_newton: u32,
    /// Strictly decreasing regularization values; the last entry is the ε
    /// at which the returned solution is accurate.
    pub eps_schedule: Vec<f64>,
    /// Backtracking shrink factor for the damped step.
    pub damping_shrink: f64,
    /// Smallest admissible step fraction before a stage gives up.
    pub min_step: f64,
    /// Polynomial exactness of the load quadrature.
    pub quad_degree: usize,
}

impl PPoissonConfig {
    pub fn new(p: f64) -> Self {
        // Geometric ε from 1e-2 down to 1e-10.
        let eps_schedule = (2..=10).map(|k| 10f64.powi(-k)).collect();
        PPoissonConfig {
            p,
            newton_tol: 1e-10,
            max_newton: 60,
            eps_schedule,
            damping_shrink: 0.5,
            min_step: 2f64.powi(-20),
            quad_degree: 4,
        }
    }

    pub fn eps_final(&self) -> f64 {
        *self.eps_schedule.last().expect("validated schedule")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidExponent(self.p));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Internal("newton_tol must be positive".into()));
        }
        if self.eps_schedule.is_empty()
            || self.eps_schedule.iter().any(|&e| !(e > 0.0))
            || self.eps_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::Internal(
                "eps_schedule must be strictly decreasing and positive".into(),
            ));
        }
        if !(self.damping_shrink > 0.0 && self.damping_shrink < 1.0) {
            return Err(Error::Internal("damping_shrink must lie in (0,1)".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::Internal("min_step must lie in (0,1]".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::Internal("max_newton must be at least 1".into()));
        }
        Ok(())
    }
}

/// What a solve did. `converged` implies
/// `final_residual_norm <= newton_tol * initial_residual_norm`, where the
/// initial residual is taken at v = 0 (the load norm), independent of any
/// warm start.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub newton_iterations: u32,
    pub final_residual_norm: f64,
    pub initial_residual_norm: f64,
    pub converged: bool,
    /// Regularized energy after each accepted step, per continuation stage.
    pub energy_trace: Vec<f64>,
}

/// Precomputed right-hand side ⟨f, ψ_i⟩ over interior unknowns.
#[derive(Debug, Clone)]
pub struct LoadVector {
    values: Vec<f64>,
}

impl LoadVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> LoadVector {
        LoadVector {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// ∫ f ψ_i dx for a pointwise-evaluable f, by per-element quadrature.
pub fn load_from_fn<F: Fn(&[f64]) -> f64>(
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &QuadratureRule,
    f: F,
) -> LoadVector {
    let dim = mesh.dim();
    let nverts = dim + 1;
    let mut values = vec![0.0; dofs.num_dofs()];
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let vol = mesh.element_volume(e);
        for (bary, w) in rule.iter() {
            let mut x = [0.0f64; 2];
            for (local, &node) in el.iter().enumerate().take(nverts) {
                let c = mesh.node(node);
                for d in 0..dim {
                    x[d] += bary[local] * c[d];
                }
            }
            let fx = f(&x[..dim]);
            for (local, &node) in el.iter().enumerate().take(nverts) {
                if let Some(dof) = dofs.dof_of(node) {
                    values[dof] += vol * w * fx * bary[local];
                }
            }
        }
    }
    LoadVector { values }
}

/// ∫ g ψ_i dx for a P1 function g.
pub fn load_from_fe(mesh: &Mesh, dofs: &DofMap, rule: &QuadratureRule, g: &FeFunction) -> LoadVector {
    load_from_powers(mesh, dofs, rule, 1.0, g, 1.0, 0.0, g, 1.0)
}

/// ∫ (a g₊^{p-1} - b g₋^{p-1}) ψ_i dx where g₊, g₋ are nodally nonnegative
/// P1 functions; the power is applied to the interpolated value at each
/// quadrature point.
pub fn load_from_nodal_power(
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &QuadratureRule,
    a: f64,
    g_plus: &FeFunction,
    b: f64,
    g_minus: &FeFunction,
    p: f64,
) -> LoadVector {
    debug_assert!(g_plus.values().iter().all(|&v| v >= 0.0));
    debug_assert!(g_minus.values().iter().all(|&v| v >= 0.0));
    load_from_powers(mesh, dofs, rule, a, g_plus, p - 1.0, b, g_minus, p - 1.0)
}

fn load_from_powers(
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &QuadratureRule,
    a: f64,
    ga: &FeFunction,
    ea: f64,
    b: f64,
    gb: &FeFunction,
    eb: f64,
) -> LoadVector {
    let nverts = mesh.dim() + 1;
    let mut values = vec![0.0; dofs.num_dofs()];
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let vol = mesh.element_volume(e);
        for (bary, w) in rule.iter() {
            let mut va = 0.0;
            let mut vb = 0.0;
            for (local, &node) in el.iter().enumerate().take(nverts) {
                va += bary[local] * ga.values()[node];
                vb += bary[local] * gb.values()[node];
            }
            let fx = a * power_or_identity(va, ea) - b * power_or_identity(vb, eb);
            if fx == 0.0 {
                continue;
            }
            for (local, &node) in el.iter().enumerate().take(nverts) {
                if let Some(dof) = dofs.dof_of(node) {
                    values[dof] += vol * w * fx * bary[local];
                }
            }
        }
    }
    LoadVector { values }
}

#[inline]
fn power_or_identity(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else if v == 0.0 {
        0.0
    } else {
        v.abs().powf(e - 1.0) * v
    }
}

/// P1 hat-function gradients on element `e`. Returns the vertex count.
fn basis_gradients(mesh: &Mesh, e: usize, out: &mut [[f64; 2]; 3]) -> usize {
    let el = mesh.element(e);
    if mesh.dim() == 1 {
        let h = mesh.element_volume(e);
        out[0] = [-1.0 / h, 0.0];
        out[1] = [1.0 / h, 0.0];
        2
    } else {
        let (a, b, c) = (mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2]));
        let two_area = 2.0 * mesh.element_volume(e);
        out[0] = [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area];
        out[1] = [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area];
        out[2] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
        3
    }
}

/// Largest interior-dof index distance within any element; the band width
/// of every assembled matrix.
pub fn system_bandwidth(mesh: &Mesh, dofs: &DofMap) -> usize {
    let mut bw = 0usize;
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        for (i, &ni) in el.iter().enumerate() {
            for &nj in el.iter().skip(i + 1) {
                if let (Some(di), Some(dj)) = (dofs.dof_of(ni), dofs.dof_of(nj)) {
                    bw = bw.max(di.abs_diff(dj));
                }
            }
        }
    }
    bw
}

/// Weak residual of the regularized operator at `v`, over interior dofs.
/// At ε = 0 this is exactly the weak form of -Δ_p v - f.
pub fn assemble_residual(
    v: &FeFunction,
    load: &LoadVector,
    dofs: &DofMap,
    p: f64,
    eps: f64,
) -> Vec<f64> {
    let mesh = v.mesh();
    let mut r: Vec<f64> = load.as_slice().iter().map(|&l| -l).collect();
    let mut grads = [[0.0f64; 2]; 3];
    for e in 0..mesh.num_elements() {
        let nverts = basis_gradients(mesh, e, &mut grads);
        let g = v.element_gradient(e);
        let w = g[0] * g[0] + g[1] * g[1] + eps * eps;
        let coef = w.powf((p - 2.0) / 2.0) * mesh.element_volume(e);
        let el = mesh.element(e);
        for (local, &node) in el.iter().enumerate().take(nverts) {
            if let Some(dof) = dofs.dof_of(node) {
                r[dof] += coef * (g[0] * grads[local][0] + g[1] * grads[local][1]);
            }
        }
    }
    r
}

/// Exact derivative of the regularized residual at `v`: per element
/// w^{(p-2)/2} (⟨∇ψ_i, ∇ψ_j⟩ + (p-2) ⟨∇v, ∇ψ_i⟩⟨∇v, ∇ψ_j⟩ / w) |T|.
pub fn assemble_jacobian(v: &FeFunction, dofs: &DofMap, p: f64, eps: f64) -> BandedSpd {
    let mesh = v.mesh();
    let bw = system_bandwidth(mesh, dofs);
    let mut a = BandedSpd::new(dofs.num_dofs(), bw);
    let mut grads = [[0.0f64; 2]; 3];
    for e in 0..mesh.num_elements() {
        let nverts = basis_gradients(mesh, e, &mut grads);
        let g = v.element_gradient(e);
        let w = g[0] * g[0] + g[1] * g[1] + eps * eps;
        let vol = mesh.element_volume(e);
        let c1 = w.powf((p - 2.0) / 2.0) * vol;
        // Limit w -> 0 of the rank-one term is zero (its factor g vanishes
        // with w); dividing blindly would turn p = 2, eps = 0 into 0/0.
        let c2 = if w > 0.0 { (p - 2.0) * c1 / w } else { 0.0 };
        let el = mesh.element(e);
        for (li, &ni) in el.iter().enumerate().take(nverts) {
            let Some(di) = dofs.dof_of(ni) else { continue };
            let gi = g[0] * grads[li][0] + g[1] * grads[li][1];
            for (lj, &nj) in el.iter().enumerate().take(nverts) {
                let Some(dj) = dofs.dof_of(nj) else { continue };
                if di < dj {
                    continue;
                }
                let gj = g[0] * grads[lj][0] + g[1] * grads[lj][1];
                let dot =
                    grads[li][0] * grads[lj][0] + grads[li][1] * grads[lj][1];
                a.add(di, dj, c1 * dot + c2 * gi * gj);
            }
        }
    }
    a
}

/// Regularized energy E_ε(v); the damped Newton step must not increase it.
fn energy(v: &FeFunction, load: &LoadVector, dofs: &DofMap, p: f64, eps: f64) -> f64 {
    let mesh = v.mesh();
    let mut bulk = 0.0;
    for e in 0..mesh.num_elements() {
        let g = v.element_gradient(e);
        let w = g[0] * g[0] + g[1] * g[1] + eps * eps;
        bulk += w.powf(p / 2.0) * mesh.element_volume(e);
    }
    let mut work = 0.0;
    for (dof, &l) in load.as_slice().iter().enumerate() {
        work += l * v.values()[dofs.node_of(dof)];
    }
    bulk / p - work
}

struct StageOutcome {
    converged: bool,
    residual: f64,
    iterations: u32,
}

/// Damped Newton at a fixed ε, updating `v` in place.
fn newton_stage(
    v: &mut FeFunction,
    load: &LoadVector,
    dofs: &DofMap,
    cfg: &PPoissonConfig,
    eps: f64,
    threshold: f64,
    energy_trace: &mut Vec<f64>,
) -> Result<StageOutcome> {
    let p = cfg.p;
    let mut iterations = 0u32;
    loop {
        let r = assemble_residual(v, load, dofs, p, eps);
        let rn = norm2(&r);
        if rn <= threshold || !rn.is_finite() {
            if !rn.is_finite() {
                return Err(Error::Internal(format!(
                    "residual became non-finite at eps {eps}"
                )));
            }
            return Ok(StageOutcome { converged: true, residual: rn, iterations });
        }
        if iterations >= cfg.max_newton {
            return Ok(StageOutcome { converged: false, residual: rn, iterations });
        }
        let jac = assemble_jacobian(v, dofs, p, eps);
        let chol = jac.cholesky()?;
        let step = chol.solve(&r);
        let e0 = energy(v, load, dofs, p, eps);
        let slack = 1e-13 * (e0.abs() + 1.0);
        let mut t = 1.0;
        let mut trial = v.clone();
        loop {
            for dof in 0..dofs.num_dofs() {
                let node = dofs.node_of(dof);
                trial.values_mut()[node] = v.values()[node] - t * step[dof];
            }
            let e1 = energy(&trial, load, dofs, p, eps);
            if e1 <= e0 + slack {
                break;
            }
            t *= cfg.damping_shrink;
            if t < cfg.min_step {
                // Stagnated below the resolvable energy decrease.
                let r_now = assemble_residual(v, load, dofs, p, eps);
                let rn_now = norm2(&r_now);
                return Ok(StageOutcome {
                    converged: rn_now <= threshold,
                    residual: rn_now,
                    iterations,
                });
            }
        }
        std::mem::swap(v, &mut trial);
        energy_trace.push(energy(v, load, dofs, p, eps));
        iterations += 1;
    }
}

/// Solves -Δ_p v = f with zero Dirichlet data.
///
/// With a warm start the final ε is attempted directly; on failure the full
/// continuation schedule runs. A cap hit is not an `Err`: the report comes
/// back with `converged = false` and callers decide whether that is fatal.
pub fn solve_ppoisson(
    mesh: &Arc<Mesh>,
    load: &LoadVector,
    cfg: &PPoissonConfig,
    v_init: Option<&FeFunction>,
) -> Result<(FeFunction, SolveReport)> {
    cfg.validate()?;
    let dofs = mesh.interior_dof_map();
    solve_with_dofs(mesh, &dofs, load, cfg, v_init)
}

/// As [`solve_ppoisson`] with a caller-provided dof map (saves rebuilding
/// it on repeated solves over one mesh).
pub fn solve_with_dofs(
    mesh: &Arc<Mesh>,
    dofs: &DofMap,
    load: &LoadVector,
    cfg: &PPoissonConfig,
    v_init: Option<&FeFunction>,
) -> Result<(FeFunction, SolveReport)> {
    if dofs.num_dofs() == 0 {
        return Err(Error::DegenerateMesh);
    }
    if load.as_slice().len() != dofs.num_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "load has {} entries for {} interior dofs",
            load.as_slice().len(),
            dofs.num_dofs()
        )));
    }
    let initial_residual_norm = load.norm2();
    let threshold = cfg.newton_tol * initial_residual_norm;
    let p = cfg.p;

    let mut v = match v_init {
        Some(u) => {
            let mut u = u.clone();
            for i in 0..mesh.num_nodes() {
                if mesh.is_boundary(i) {
                    u.values_mut()[i] = 0.0;
                }
            }
            u
        }
        None => FeFunction::zeros(Arc::clone(mesh)),
    };

    // p = 2 is linear: one factorization, one solve, no continuation.
    if p == 2.0 {
        let jac = assemble_jacobian(&FeFunction::zeros(Arc::clone(mesh)), dofs, 2.0, 0.0);
        let chol = jac.cholesky()?;
        let x = chol.solve(load.as_slice());
        let mut u = FeFunction::zeros(Arc::clone(mesh));
        for (dof, &xv) in x.iter().enumerate() {
            u.values_mut()[dofs.node_of(dof)] = xv;
        }
        let rn = norm2(&assemble_residual(&u, load, dofs, 2.0, 0.0));
        let e = energy(&u, load, dofs, 2.0, 0.0);
        let converged = rn <= threshold.max(1e-14 * initial_residual_norm.max(1.0));
        return Ok((
            u,
            SolveReport {
                newton_iterations: 1,
                final_residual_norm: rn,
                initial_residual_norm,
                converged,
                energy_trace: vec![e],
            },
        ));
    }

    let mut report = SolveReport {
        newton_iterations: 0,
        final_residual_norm: f64::INFINITY,
        initial_residual_norm,
        converged: false,
        energy_trace: Vec::new(),
    };

    let eps_final = cfg.eps_final();
    if v_init.is_some() {
        // A good initial iterate usually converges at the final epsilon directly,
        // skipping the continuation. If it does not, the half-corrected iterate is
        // worthless: discard it and run the schedule from the original start.
        let start = v.clone();
        let out = newton_stage(&mut v, load, dofs, cfg, eps_final, threshold, &mut report.energy_trace)?;
        report.newton_iterations += out.iterations;
        if out.converged {
            report.final_residual_norm = out.residual;
            report.converged = true;
            return Ok((v, report));
        }
        v = start;
        report.energy_trace.clear();
    }

    for &eps in &cfg.eps_schedule {
        let out = newton_stage(&mut v, load, dofs, cfg, eps, threshold, &mut report.energy_trace)?;
        report.newton_iterations += out.iterations;
        report.final_residual_norm = out.residual;
        report.converged = out.converged && eps == eps_final;
    }
    Ok((v, report))
}

/// Solves -Δ_p v = a g₊^{p-1} - b g₋^{p-1} for nodally nonnegative parts.
/// This is the inner problem of the balanced iteration.
pub fn solve_signed_power_rhs(
    mesh: &Arc<Mesh>,
    a: f64,
    g_plus: &FeFunction,
    b: f64,
    g_minus: &FeFunction,
    cfg: &PPoissonConfig,
    v_init: Option<&FeFunction>,
) -> Result<(FeFunction, SolveReport)> {
    cfg.validate()?;
    let dofs = mesh.interior_dof_map();
    let rule = QuadratureRule::for_dim(mesh.dim(), cfg.quad_degree);
    let load = load_from_nodal_power(mesh, &dofs, &rule, a, g_plus, b, g_minus, cfg.p);
    solve_with_dofs(mesh, &dofs, &load, cfg, v_init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::rayleigh;
    use crate::mesh::{build_interval_mesh, build_rect_mesh};
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    fn interval(n: usize) -> Arc<Mesh> {
        Arc::new(build_interval_mesh(n, 1.0).unwrap())
    }

    /// Torsion function of -(|v'|^{p-2} v')' = 1 on (0,1).
    fn torsion_exact(p: f64, x: f64) -> f64 {
        let q = p / (p - 1.0);
        (p - 1.0) / p * (0.5f64.powf(q) - (x - 0.5).abs().powf(q))
    }

    #[test]
    fn torsion_closed_form_reproduced_across_p() {
        let n = 100;
        let mesh = interval(n);
        let dofs = mesh.interior_dof_map();
        for p in [1.5, 2.0, 3.0, 4.0] {
            let cfg = PPoissonConfig::new(p);
            let rule = QuadratureRule::interval(cfg.quad_degree);
            let load = load_from_fn(&mesh, &dofs, &rule, |_| 1.0);
            let (v, rep) = solve_ppoisson(&mesh, &load, &cfg, None).unwrap();
            assert!(rep.converged, "p={p}: {rep:?}");
            let mut worst = 0.0f64;
            for i in 0..mesh.num_nodes() {
                let x = mesh.node(i)[0];
                worst = worst.max((v.values()[i] - torsion_exact(p, x)).abs());
            }
            assert!(worst <= 2.0 / n as f64, "p={p}: nodal error {worst}");
        }
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let mesh = interval(20);
        let dofs = mesh.interior_dof_map();
        let rule = QuadratureRule::interval(4);
        let load = load_from_fn(&mesh, &dofs, &rule, |_| 0.0);
        let cfg = PPoissonConfig::new(3.0);
        let (v, rep) = solve_ppoisson(&mesh, &load, &cfg, None).unwrap();
        assert!(rep.converged);
        assert!(v.max_abs() <= 1e-12);
    }

    #[test]
    fn manufactured_p2_solution_on_square() {
        let n = 32;
        let mesh = Arc::new(build_rect_mesh(n, n, 1.0, 1.0).unwrap());
        let dofs = mesh.interior_dof_map();
        let cfg = PPoissonConfig::new(2.0);
        let rule = QuadratureRule::triangle(cfg.quad_degree);
        let load = load_from_fn(&mesh, &dofs, &rule, |x| {
            2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()
        });
        let (v, rep) = solve_ppoisson(&mesh, &load, &cfg, None).unwrap();
        assert!(rep.converged);
        let exact = FeFunction::interpolate_dirichlet(&mesh, |x| {
            (PI * x[0]).sin() * (PI * x[1]).sin()
        });
        let err = v.sub(&exact).unwrap().lp_norm(2.0).unwrap();
        assert!(err < 3.0 / (n * n) as f64, "L2 error {err}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mesh = interval(12);
        let dofs = mesh.interior_dof_map();
        let nd = dofs.num_dofs();
        // Deterministic non-trivial state and direction.
        let mut v = FeFunction::zeros(Arc::clone(&mesh));
        for i in 0..mesh.num_nodes() {
            if !mesh.is_boundary(i) {
                let x = mesh.node(i)[0];
                v.values_mut()[i] = (2.3 * x).sin() - 0.4 * x;
            }
        }
        let dir: Vec<f64> = (0..nd).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let rule = QuadratureRule::interval(4);
        let zero_load = load_from_fn(&mesh, &dofs, &rule, |_| 0.0);
        for (p, eps) in [(1.6, 1e-3), (3.2, 1e-3), (2.0, 1e-6)] {
            let jac = assemble_jacobian(&v, &dofs, p, eps);
            let mut jd = vec![0.0; nd];
            jac.matvec(&dir, &mut jd);
            let delta = 1e-7;
            let mut vp = v.clone();
            let mut vm = v.clone();
            for dof in 0..nd {
                let node = dofs.node_of(dof);
                vp.values_mut()[node] += delta * dir[dof];
                vm.values_mut()[node] -= delta * dir[dof];
            }
            let rp = assemble_residual(&vp, &zero_load, &dofs, p, eps);
            let rm = assemble_residual(&vm, &zero_load, &dofs, p, eps);
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * delta)).collect();
            let scale = norm2(&jd).max(1e-12);
            let diff: Vec<f64> = fd.iter().zip(&jd).map(|(a, b)| a - b).collect();
            assert!(
                norm2(&diff) / scale <= 1e-6,
                "p={p} eps={eps}: fd mismatch {}",
                norm2(&diff) / scale
            );
        }
    }

    #[test]
    fn jacobian_2d_matches_finite_differences() {
        let mesh = Arc::new(build_rect_mesh(4, 4, 1.0, 1.0).unwrap());
        let dofs = mesh.interior_dof_map();
        let nd = dofs.num_dofs();
        let mut v = FeFunction::zeros(Arc::clone(&mesh));
        for i in 0..mesh.num_nodes() {
            if !mesh.is_boundary(i) {
                let c = mesh.node(i);
                v.values_mut()[i] = (3.0 * c[0] + 1.0).sin() * (2.0 - c[1]);
            }
        }
        let dir: Vec<f64> = (0..nd).map(|i| ((i * 53 % 17) as f64 - 8.0) / 9.0).collect();
        let rule = QuadratureRule::triangle(4);
        let zero_load = load_from_fn(&mesh, &dofs, &rule, |_| 0.0);
        let (p, eps) = (2.6, 1e-4);
        let jac = assemble_jacobian(&v, &dofs, p, eps);
        let mut jd = vec![0.0; nd];
        jac.matvec(&dir, &mut jd);
        let delta = 1e-7;
        let mut vp = v.clone();
        let mut vm = v.clone();
        for dof in 0..nd {
            let node = dofs.node_of(dof);
            vp.values_mut()[node] += delta * dir[dof];
            vm.values_mut()[node] -= delta * dir[dof];
        }
        let rp = assemble_residual(&vp, &zero_load, &dofs, p, eps);
        let rm = assemble_residual(&vm, &zero_load, &dofs, p, eps);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * delta)).collect();
        let diff: Vec<f64> = fd.iter().zip(&jd).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) / norm2(&jd) <= 1e-6);
    }

    #[test]
    fn p2_jacobian_is_state_independent() {
        let mesh = interval(10);
        let dofs = mesh.interior_dof_map();
        let v0 = FeFunction::zeros(Arc::clone(&mesh));
        let v1 = FeFunction::interpolate_dirichlet(&mesh, |x| (5.0 * x[0]).cos());
        let a0 = assemble_jacobian(&v0, &dofs, 2.0, 0.0);
        let a1 = assemble_jacobian(&v1, &dofs, 2.0, 0.0);
        for i in 0..dofs.num_dofs() {
            for j in i.saturating_sub(1)..=i {
                assert_relative_eq!(a0.get(i, j), a1.get(i, j), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn jacobian_at_zero_state_is_scaled_stiffness() {
        let mesh = interval(8);
        let dofs = mesh.interior_dof_map();
        let v0 = FeFunction::zeros(Arc::clone(&mesh));
        let p = 3.5;
        let eps = 1e-2;
        let a = assemble_jacobian(&v0, &dofs, p, eps);
        let stiff = assemble_jacobian(&v0, &dofs, 2.0, 0.0);
        let scale = eps.powf(p - 2.0);
        for i in 0..dofs.num_dofs() {
            for j in i.saturating_sub(1)..=i {
                assert_relative_eq!(a.get(i, j), scale * stiff.get(i, j), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn solution_is_unique_across_starting_points() {
        let mesh = interval(60);
        let dofs = mesh.interior_dof_map();
        let rule = QuadratureRule::interval(4);
        let load = load_from_fn(&mesh, &dofs, &rule, |x| (3.0 * PI * x[0]).sin() + 0.5);
        let cfg = PPoissonConfig::new(2.7);
        let (v1, r1) = solve_ppoisson(&mesh, &load, &cfg, None).unwrap();
        let warm = FeFunction::interpolate_dirichlet(&mesh, |x| x[0] * (1.0 - x[0]) * 4.0);
        let (v2, r2) = solve_ppoisson(&mesh, &load, &cfg, Some(&warm)).unwrap();
        assert!(r1.converged && r2.converged);
        let diff = v1.sub(&v2).unwrap().grad_lp_norm(2.7).unwrap();
        assert!(diff <= 10.0 * cfg.newton_tol * v1.grad_lp_norm(2.7).unwrap().max(1.0));
    }

    #[test]
    fn signed_power_scaling_homogeneity() {
        // Scaling the load by c scales the solution by c^{1/(p-1)}.
        let mesh = interval(50);
        let p = 3.0;
        let cfg = PPoissonConfig::new(p);
        let g = FeFunction::interpolate_dirichlet(&mesh, |x| (2.0 * PI * x[0]).sin());
        let gp = g.positive_part();
        let gm = g.negative_part();
        let (v1, _) = solve_signed_power_rhs(&mesh, 0.7, &gp, 0.3, &gm, &cfg, None).unwrap();
        let c = 5.0;
        let (vc, _) = solve_signed_power_rhs(&mesh, c * 0.7, &gp, c * 0.3, &gm, &cfg, None).unwrap();
        let scale = c.powf(1.0 / (p - 1.0));
        let expected = v1.scaled(scale);
        let err = vc.sub(&expected).unwrap().max_abs() / expected.max_abs();
        assert!(err <= 1e-8, "homogeneity defect {err}");
    }

    #[test]
    fn nonpositive_load_gives_nonpositive_solution() {
        // Weak maximum principle, discrete flavor: a = 0 load.
        for p in [2.0, 3.0] {
            let mesh = interval(40);
            let cfg = PPoissonConfig::new(p);
            let g = FeFunction::interpolate_dirichlet(&mesh, |x| (PI * x[0]).sin());
            let zero = FeFunction::zeros(Arc::clone(&mesh));
            let (v, rep) = solve_signed_power_rhs(&mesh, 0.0, &zero, 1.0, &g, &cfg, None).unwrap();
            assert!(rep.converged);
            let vmax = v.values().iter().cloned().fold(f64::MIN, f64::max);
            assert!(vmax <= 1e-8 * v.max_abs(), "p={p}: positive overshoot {vmax}");
        }
    }

    #[test]
    fn positive_load_is_positive_at_interior_nodes() {
        let mesh = Arc::new(build_rect_mesh(8, 8, 1.0, 1.0).unwrap());
        for p in [2.0, 3.0] {
            let cfg = PPoissonConfig::new(p);
            let g = FeFunction::interpolate_dirichlet(&mesh, |x| {
                (PI * x[0]).sin() * (PI * x[1]).sin()
            });
            let zero = FeFunction::zeros(Arc::clone(&mesh));
            let (v, rep) = solve_signed_power_rhs(&mesh, 1.0, &g, 0.0, &zero, &cfg, None).unwrap();
            assert!(rep.converged);
            for i in 0..mesh.num_nodes() {
                if !mesh.is_boundary(i) {
                    assert!(v.values()[i] > 0.0, "p={p}: node {i} not positive");
                }
            }
        }
    }

    #[test]
    fn rayleigh_quotient_decreases_through_solve() {
        // For f = |g|^{p-2} g the solution satisfies R[v] <= R[g].
        let mesh = interval(200);
        for p in [1.6, 2.0, 2.8] {
            let cfg = PPoissonConfig::new(p);
            let g = FeFunction::interpolate_dirichlet(&mesh, |x| {
                (2.0 * PI * x[0]).sin() + 0.3 * (5.0 * PI * x[0]).sin()
            });
            let (v, rep) =
                solve_signed_power_rhs(&mesh, 1.0, &g.positive_part(), 1.0, &g.negative_part(), &cfg, None)
                    .unwrap();
            assert!(rep.converged);
            let rg = rayleigh(&g, p, 1e-8).unwrap().total.unwrap();
            let rv = rayleigh(&v, p, 1e-8).unwrap().total.unwrap();
            assert!(rv <= rg * (1.0 + 1e-4), "p={p}: R[v]={rv} R[g]={rg}");
        }
    }

    #[test]
    fn energy_trace_is_monotone_per_stage() {
        let mesh = interval(80);
        let cfg = PPoissonConfig::new(4.0);
        let dofs = mesh.interior_dof_map();
        let rule = QuadratureRule::interval(4);
        let load = load_from_fn(&mesh, &dofs, &rule, |x| if x[0] < 0.3 { 1.0 } else { -0.5 });
        let (_, rep) = solve_ppoisson(&mesh, &load, &cfg, None).unwrap();
        assert!(rep.converged);
        // Energies within one stage never increase beyond round-off; stage
        // boundaries reset the scale, so only compare adjacent decreases.
        let slack: Vec<f64> = rep.energy_trace.iter().map(|e| 1e-12 * (e.abs() + 1.0)).collect();
        let mut violations = 0;
        for i in 1..rep.energy_trace.len() {
            if rep.energy_trace[i] > rep.energy_trace[i - 1] + slack[i] {
                violations += 1;
            }
        }
        // Stage transitions (at most schedule length) may bump the energy.
        assert!(violations <= cfg.eps_schedule.len(), "violations {violations}");
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        let mesh = Arc::new(build_rect_mesh(1, 1, 1.0, 1.0).unwrap());
        let dofs = mesh.interior_dof_map();
        let rule = QuadratureRule::triangle(4);
        let load = load_from_fn(&mesh, &dofs, &rule, |_| 1.0);
        let cfg = PPoissonConfig::new(2.0);
        assert!(matches!(
            solve_ppoisson(&mesh, &load, &cfg, None),
            Err(Error::DegenerateMesh)
        ));
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = PPoissonConfig::new(2.0);
        cfg.p = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PPoissonConfig::new(2.0);
        cfg.eps_schedule = vec![1e-4, 1e-3];
        assert!(cfg.validate().is_err());
        let mut cfg = PPoissonConfig::new(2.0);
        cfg.eps_schedule.clear();
        assert!(cfg.validate().is_err());
    }
}
