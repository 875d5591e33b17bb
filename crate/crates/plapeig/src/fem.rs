//! Piecewise-linear finite-element functions and their L^p calculus.
//!
//! An [`FeFunction`] is a P1 function given by one coefficient per mesh
//! node. The quantities the eigenvalue iteration lives on are
//!
//! ```text
//! ‖u‖_p   = (∫ |u|^p dx)^{1/p}          (per-element quadrature),
//! ‖∇u‖_p  = (Σ_T |∇u|_T^p |T|)^{1/p}    (exact: ∇u is constant per element),
//! R[u]    = ‖∇u‖_p^p / ‖u‖_p^p,
//! ```
//!
//! together with the Rayleigh quotients R⁺, R⁻ of the positive and negative
//! parts. Parts are formed by *nodal* clipping: (u⁺)_i = max(0, u_i). That
//! keeps u⁺ in the same P1 space at the cost of an O(h) committed error on
//! elements whose nodal values change sign; the error is surfaced, not
//! hidden, via [`RayleighReport::clipping_defect`], and it matters: R can
//! exceed both part quotients when sign changes cut through elements.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quad::{QuadratureRule, DEFAULT_DEGREE};

/// Part norms below `zero_tol * ‖u‖_p` mark the corresponding Rayleigh
/// quotient undefined.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Below this absolute L^p norm a function counts as identically zero and
/// every quotient is undefined.
pub const ABS_ZERO_THRESHOLD: f64 = 1e-14;

/// Continuous piecewise-linear function on a shared mesh.
#[derive(Debug, Clone)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a mesh with {} nodes",
                values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.num_nodes();
        Self { mesh, values: vec![0.0; n] }
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.num_nodes();
        Self { mesh, values: vec![c; n] }
    }

    /// Nodal interpolant of `f`; boundary nodes are forced to zero so the
    /// result is Dirichlet-admissible.
    pub fn interpolate_dirichlet<F: Fn(&[f64]) -> f64>(mesh: &Arc<Mesh>, f: F) -> Self {
        let values = (0..mesh.num_nodes())
            .map(|i| if mesh.is_boundary(i) { 0.0 } else { f(mesh.node(i)) })
            .collect();
        Self { mesh: Arc::clone(mesh), values }
    }

    /// Nodal interpolant of `f` at every node, boundary included.
    pub fn interpolate<F: Fn(&[f64]) -> f64>(mesh: &Arc<Mesh>, f: F) -> Self {
        let values = (0..mesh.num_nodes()).map(|i| f(mesh.node(i))).collect();
        Self { mesh: Arc::clone(mesh), values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_dirichlet_admissible(&self) -> bool {
        (0..self.mesh.num_nodes())
            .filter(|&i| self.mesh.is_boundary(i))
            .all(|i| self.values[i] == 0.0)
    }

    /// Gradient of the function on element `e`; constant per element.
    /// 1D gradients are returned as `[du/dx, 0]`.
    pub fn element_gradient(&self, e: usize) -> [f64; 2] {
        let el = self.mesh.element(e);
        if self.mesh.dim() == 1 {
            let h = self.mesh.element_volume(e);
            [(self.values[el[1]] - self.values[el[0]]) / h, 0.0]
        } else {
            let (a, b, c) = (self.mesh.node(el[0]), self.mesh.node(el[1]), self.mesh.node(el[2]));
            let (ua, ub, uc) = (self.values[el[0]], self.values[el[1]], self.values[el[2]]);
            let two_area = 2.0 * self.mesh.element_volume(e);
            // grad = sum_i u_i * grad(psi_i) with the P1 hat gradients.
            let gx = (ua * (b[1] - c[1]) + ub * (c[1] - a[1]) + uc * (a[1] - b[1])) / two_area;
            let gy = (ua * (c[0] - b[0]) + ub * (a[0] - c[0]) + uc * (b[0] - a[0])) / two_area;
            [gx, gy]
        }
    }

    /// Nodal clipping u⁺: max(0, u_i) per node.
    pub fn positive_part(&self) -> FeFunction {
        let values = self.values.iter().map(|&v| v.max(0.0)).collect();
        FeFunction { mesh: Arc::clone(&self.mesh), values }
    }

    /// Nodal clipping u⁻: max(0, -u_i) per node; u = u⁺ - u⁻ holds nodally.
    pub fn negative_part(&self) -> FeFunction {
        let values = self.values.iter().map(|&v| (-v).max(0.0)).collect();
        FeFunction { mesh: Arc::clone(&self.mesh), values }
    }

    /// ∫ |u|^p dx (p-th root) by per-element quadrature of default degree.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        let rule = QuadratureRule::for_dim(self.mesh.dim(), DEFAULT_DEGREE);
        self.lp_norm_with(p, &rule)
    }

    pub fn lp_norm_with(&self, p: f64, rule: &QuadratureRule) -> Result<f64> {
        check_exponent(p)?;
        let mut total = 0.0;
        let nverts = self.mesh.dim() + 1;
        for e in 0..self.mesh.num_elements() {
            let el = self.mesh.element(e);
            let vol = self.mesh.element_volume(e);
            let mut acc = 0.0;
            for (bary, w) in rule.iter() {
                let mut val = 0.0;
                for (local, &node) in el.iter().enumerate().take(nverts) {
                    val += bary[local] * self.values[node];
                }
                acc += w * val.abs().powf(p);
            }
            total += vol * acc;
        }
        Ok(total.powf(1.0 / p))
    }

    /// (Σ_T |∇u|^p |T|)^{1/p}; exact for P1 functions.
    pub fn grad_lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        let mut total = 0.0;
        for e in 0..self.mesh.num_elements() {
            let g = self.element_gradient(e);
            let mag = (g[0] * g[0] + g[1] * g[1]).sqrt();
            total += mag.powf(p) * self.mesh.element_volume(e);
        }
        Ok(total.powf(1.0 / p))
    }

    /// Returns ũ = u / ‖u‖_p. The Rayleigh quotient is invariant under this
    /// rescaling.
    pub fn normalize_lp(&self, p: f64) -> Result<FeFunction> {
        let norm = self.lp_norm(p)?;
        if norm < ABS_ZERO_THRESHOLD {
            return Err(Error::ZeroFunction);
        }
        Ok(self.scaled(1.0 / norm))
    }

    pub fn scaled(&self, c: f64) -> FeFunction {
        let values = self.values.iter().map(|&v| c * v).collect();
        FeFunction { mesh: Arc::clone(&self.mesh), values }
    }

    /// self - other, on the same mesh.
    pub fn sub(&self, other: &FeFunction) -> Result<FeFunction> {
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch(
                "subtracting functions from different meshes".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(FeFunction { mesh: Arc::clone(&self.mesh), values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Plain-text dump: "x value" (1D) or "x y value" rows, one per node.
    pub fn dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for i in 0..self.mesh.num_nodes() {
            let c = self.mesh.node(i);
            if self.mesh.dim() == 1 {
                writeln!(out, "{} {}", c[0], self.values[i])?;
            } else {
                writeln!(out, "{} {} {}", c[0], c[1], self.values[i])?;
            }
        }
        Ok(())
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

/// L^p norms of a function and its two clipped parts.
#[derive(Debug, Clone, Copy)]
pub struct PartNorms {
    pub full: f64,
    pub plus: f64,
    pub minus: f64,
}

/// Rayleigh quotients of u and of its parts, with the norms they came from.
///
/// A quotient is `None` exactly when its denominator part norm is below the
/// zero threshold. With nodal clipping, the sandwich
/// `min(R⁺, R⁻) <= R <= max(R⁺, R⁻)` holds only up to a defect from
/// sign-mixed elements; callers that need a sharp statement must divide R
/// by `1 +` [`Self::clipping_defect`] first.
#[derive(Debug, Clone, Copy)]
pub struct RayleighReport {
    pub p: f64,
    pub total: Option<f64>,
    pub plus: Option<f64>,
    pub minus: Option<f64>,
    pub lp_norms: PartNorms,
    pub grad_norms: PartNorms,
}

impl RayleighReport {
    /// Multiplicative gap d between R and the mediant of its parts:
    ///
    /// ```text
    /// min(R⁺, R⁻) <= R / (1 + d) <= max(R⁺, R⁻),    exactly,
    /// ```
    ///
    /// where `1 + d = (‖∇u‖ᵖ / Σ‖∇u±‖ᵖ) · (Σ‖u±‖ᵖ / ‖u‖ᵖ)`. On sign-mixed
    /// elements clipping inflates part mass (u⁺ + (-u⁻) overshoots |u|)
    /// and deflates part energy, so d > 0 and R itself may exceed both
    /// part quotients. d vanishes when every sign change is node-aligned.
    /// Meaningful only for sign-changing u.
    pub fn clipping_defect(&self) -> f64 {
        let a = self.grad_norms.full.powf(self.p);
        let a_parts =
            self.grad_norms.plus.powf(self.p) + self.grad_norms.minus.powf(self.p);
        let b = self.lp_norms.full.powf(self.p);
        let b_parts = self.lp_norms.plus.powf(self.p) + self.lp_norms.minus.powf(self.p);
        (a * b_parts) / (a_parts * b) - 1.0
    }

    /// |R⁺ - R⁻| when both are defined.
    pub fn balance_gap(&self) -> Option<f64> {
        Some((self.plus? - self.minus?).abs())
    }
}

/// Computes R, R⁺, R⁻ with the default quadrature degree.
///
/// Part quotients whose denominator norm is below `zero_tol * ‖u‖_p` are
/// undefined; a function with ‖u‖_p below the absolute zero threshold gets
/// an all-undefined report.
pub fn rayleigh(u: &FeFunction, p: f64, zero_tol: f64) -> Result<RayleighReport> {
    let rule = QuadratureRule::for_dim(u.mesh().dim(), DEFAULT_DEGREE);
    rayleigh_with(u, p, zero_tol, &rule)
}

pub fn rayleigh_with(
    u: &FeFunction,
    p: f64,
    zero_tol: f64,
    rule: &QuadratureRule,
) -> Result<RayleighReport> {
    check_exponent(p)?;
    let plus = u.positive_part();
    let minus = u.negative_part();
    let lp = PartNorms {
        full: u.lp_norm_with(p, rule)?,
        plus: plus.lp_norm_with(p, rule)?,
        minus: minus.lp_norm_with(p, rule)?,
    };
    let grad = PartNorms {
        full: u.grad_lp_norm(p)?,
        plus: plus.grad_lp_norm(p)?,
        minus: minus.grad_lp_norm(p)?,
    };
    let quotient = |g: f64, n: f64| (g / n).powf(p);
    let (total, rplus, rminus) = if lp.full < ABS_ZERO_THRESHOLD {
        (None, None, None)
    } else {
        let part_floor = zero_tol * lp.full;
        (
            Some(quotient(grad.full, lp.full)),
            (lp.plus >= part_floor).then(|| quotient(grad.plus, lp.plus)),
            (lp.minus >= part_floor).then(|| quotient(grad.minus, lp.minus)),
        )
    };
    Ok(RayleighReport {
        p,
        total,
        plus: rplus,
        minus: rminus,
        lp_norms: lp,
        grad_norms: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rect_mesh};
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    fn unit_square(n: usize) -> Arc<Mesh> {
        Arc::new(build_rect_mesh(n, n, 1.0, 1.0).unwrap())
    }

    fn interval(n: usize) -> Arc<Mesh> {
        Arc::new(build_interval_mesh(n, 1.0).unwrap())
    }

    #[test]
    fn constant_has_unit_lp_norm_on_unit_square() {
        let mesh = unit_square(8);
        let u = FeFunction::constant(Arc::clone(&mesh), 1.0);
        for p in [1.5, 2.0, 3.0, 4.7] {
            assert_relative_eq!(u.lp_norm(p).unwrap(), 1.0, max_relative = 1e-13);
            assert_eq!(u.grad_lp_norm(p).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_function_norms() {
        let mesh = interval(10);
        let u = FeFunction::zeros(mesh);
        assert_eq!(u.lp_norm(2.0).unwrap(), 0.0);
        assert!(u.normalize_lp(2.0).is_err());
    }

    #[test]
    fn rejects_p_at_most_one() {
        let mesh = interval(4);
        let u = FeFunction::constant(mesh, 1.0);
        assert!(u.lp_norm(1.0).is_err());
        assert!(u.lp_norm(0.5).is_err());
        assert!(u.grad_lp_norm(1.0).is_err());
    }

    #[test]
    fn sine_l2_norm_matches_closed_form() {
        // ∫_0^1 sin^2(pi x) dx = 1/2.
        let mesh = interval(1000);
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| (PI * x[0]).sin());
        assert_relative_eq!(u.lp_norm(2.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn sine_h1_seminorm_matches_closed_form() {
        // ∫_0^1 pi^2 cos^2(pi x) dx = pi^2 / 2.
        let mesh = interval(1000);
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| (PI * x[0]).sin());
        assert_relative_eq!(
            u.grad_lp_norm(2.0).unwrap(),
            (PI * PI / 2.0).sqrt(),
            epsilon = 1e-3
        );
    }

    #[test]
    fn linear_function_gradient_norm() {
        let mesh = interval(10);
        let u = FeFunction::interpolate(&mesh, |x| x[0]);
        assert_relative_eq!(u.grad_lp_norm(3.0).unwrap(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn parts_split_and_swap() {
        let mesh = interval(3);
        let u = FeFunction::new(Arc::clone(&mesh), vec![-1.0, 2.0, -0.5, 0.0]).unwrap();
        let plus = u.positive_part();
        let minus = u.negative_part();
        assert_eq!(plus.values(), &[0.0, 2.0, 0.0, 0.0]);
        assert_eq!(minus.values(), &[1.0, 0.0, 0.5, 0.0]);
        // u = u⁺ - u⁻ nodally
        for i in 0..u.values().len() {
            assert_eq!(u.values()[i], plus.values()[i] - minus.values()[i]);
        }
        // (-u)⁺ = u⁻
        let neg = u.scaled(-1.0);
        assert_eq!(neg.positive_part().values(), minus.values());
    }

    #[test]
    fn square_first_eigenpair_rayleigh() {
        let mesh = unit_square(64);
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| {
            (PI * x[0]).sin() * (PI * x[1]).sin()
        });
        let rep = rayleigh(&u, 2.0, DEFAULT_ZERO_TOL).unwrap();
        let total = rep.total.unwrap();
        assert_relative_eq!(total, 2.0 * PI * PI, max_relative = 5e-3);
        // One-signed: only R⁺ defined and equal to the total.
        assert!(rep.minus.is_none());
        assert_relative_eq!(rep.plus.unwrap(), total, max_relative = 1e-12);
    }

    #[test]
    fn zero_function_all_undefined() {
        let mesh = unit_square(4);
        let u = FeFunction::zeros(mesh);
        let rep = rayleigh(&u, 2.0, DEFAULT_ZERO_TOL).unwrap();
        assert!(rep.total.is_none() && rep.plus.is_none() && rep.minus.is_none());
    }

    #[test]
    fn normalize_is_idempotent_and_scale_invariant() {
        let mesh = unit_square(16);
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| {
            (2.0 * PI * x[0]).sin() * (PI * x[1]).sin()
        });
        let p = 2.7;
        let n1 = u.normalize_lp(p).unwrap();
        assert_relative_eq!(n1.lp_norm(p).unwrap(), 1.0, epsilon = 1e-12);
        let n2 = u.scaled(17.0).normalize_lp(p).unwrap();
        for (a, b) in n1.values().iter().zip(n2.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let r1 = rayleigh(&u, p, DEFAULT_ZERO_TOL).unwrap().total.unwrap();
        let r2 = rayleigh(&n1, p, DEFAULT_ZERO_TOL).unwrap().total.unwrap();
        assert_relative_eq!(r1, r2, max_relative = 1e-10);
    }

    #[test]
    fn clipping_defect_zero_without_mixed_elements() {
        // Nodal line x = 1/2 lies on mesh edges for even n, so no element
        // mixes signs and the parts split the gradient norm exactly.
        let mesh = unit_square(8);
        let u = FeFunction::interpolate_dirichlet(&mesh, |x| {
            (2.0 * PI * x[0]).sin() * (PI * x[1]).sin()
        });
        let rep = rayleigh(&u, 2.0, DEFAULT_ZERO_TOL).unwrap();
        assert!(rep.clipping_defect().abs() <= 1e-12);
        let both = rep.plus.unwrap().max(rep.minus.unwrap());
        assert_relative_eq!(rep.total.unwrap(), both, max_relative = 1e-10);
    }

    #[test]
    fn mixed_sign_element_gradient_identity() {
        let mesh = interval(3);
        // Sawtooth with a sign change inside element 1.
        let u = FeFunction::new(Arc::clone(&mesh), vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        let rep = rayleigh(&u, 2.0, DEFAULT_ZERO_TOL).unwrap();
        assert!(rep.clipping_defect() >= 0.0);
        // Parts still satisfy the nodal identity, and both quotients exist.
        assert!(rep.plus.is_some() && rep.minus.is_some());
    }

    #[test]
    fn element_gradient_2d_known_plane() {
        let mesh = unit_square(2);
        let u = FeFunction::interpolate(&mesh, |x| 3.0 * x[0] - 2.0 * x[1] + 0.25);
        for e in 0..mesh.num_elements() {
            let g = u.element_gradient(e);
            assert_relative_eq!(g[0], 3.0, max_relative = 1e-12);
            assert_relative_eq!(g[1], -2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn dump_format_1d() {
        let mesh = interval(2);
        let u = FeFunction::new(mesh, vec![0.0, 0.25, 0.0]).unwrap();
        let mut buf = Vec::new();
        u.dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 0\n0.5 0.25\n1 0\n");
    }
}
