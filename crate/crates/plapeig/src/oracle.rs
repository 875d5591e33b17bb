//! Independent ground truth for validating the finite-element stack.
//!
//! Nothing in this module touches a mesh or a solver. The 1D Dirichlet
//! eigenvalues of the p-Laplacian on (0, L) have the closed form
//!
//! ```text
//! lambda_k = (p - 1) * (k * pi_p / L)^p,   pi_p = 2*pi / (p * sin(pi/p)),
//! ```
//!
//! and the same values can be recomputed from scratch by a shooting method:
//! integrate the first-order system and bisect on the eigenvalue until the
//! k-th Dirichlet mode fits the interval. The two routes share no code, so
//! their agreement (`lambda_k_1d` vs `shoot_1d`) is a meaningful check, and
//! both together pin down the 1D results of the FEM solver.

use crate::error::{Error, Result};

/// Closed-form 1D eigenvalue oracle for a fixed exponent and interval length.
#[derive(Debug, Clone, Copy)]
pub struct EigenOracle1D {
    pub p: f64,
    pub length: f64,
    /// Cached pi_p = 2*pi / (p * sin(pi/p)); equals pi at p = 2.
    pi_p: f64,
}

impl EigenOracle1D {
    pub fn new(p: f64, length: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidExponent(p));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidMeshSpec(format!(
                "interval length must be positive, got {length}"
            )));
        }
        let pi = std::f64::consts::PI;
        let pi_p = 2.0 * pi / (p * (pi / p).sin());
        Ok(Self { p, length, pi_p })
    }

    pub fn pi_p(&self) -> f64 {
        self.pi_p
    }

    /// k-th Dirichlet eigenvalue of -(|u'|^{p-2} u')' on (0, length).
    pub fn lambda_k(&self, k: u32) -> f64 {
        assert!(k >= 1, "eigenvalue index starts at 1");
        (self.p - 1.0) * (f64::from(k) * self.pi_p / self.length).powf(self.p)
    }
}

/// Free-function form of [`EigenOracle1D::lambda_k`].
pub fn lambda_k_1d(k: u32, oracle: &EigenOracle1D) -> f64 {
    oracle.lambda_k(k)
}

/// Dirichlet Laplacian (p = 2) spectrum of the unit square: all values
/// pi^2 (m^2 + n^2) for 1 <= m, n <= m_max, sorted, with multiplicities
/// merged. The first entries are 2 pi^2, 5 pi^2 (twice), 8 pi^2, 10 pi^2
/// (twice).
pub fn square_eigs_p2(m_max: u32) -> Vec<(f64, u32)> {
    assert!(m_max >= 1);
    let mut by_key = std::collections::BTreeMap::new();
    for m in 1..=m_max {
        for n in 1..=m_max {
            *by_key.entry(m * m + n * n).or_insert(0u32) += 1;
        }
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    by_key
        .into_iter()
        .map(|(key, mult)| (pi2 * f64::from(key), mult))
        .collect()
}

/// |y|^{e-1} * sign(y), regularized near y = 0 so that negative exponents
/// (which occur for p > 2 in the conjugate variable) stay finite.
fn signed_power_reg(y: f64, e: f64, eps: f64) -> f64 {
    (y * y + eps * eps).powf((e - 1.0) / 2.0) * y
}

#[derive(Clone, Copy)]
struct ShootState {
    x: f64,
    u: f64,
    v: f64,
}

/// One classical RK4 step of the system
/// u' = |v|^{p'-2} v, v' = -lambda |u|^{p-2} u.
fn rk4_step(s: ShootState, h: f64, p: f64, pc: f64, lambda: f64, eps: f64) -> (f64, f64) {
    let f = |u: f64, v: f64| {
        (
            signed_power_reg(v, pc - 1.0, eps),
            -lambda * signed_power_reg(u, p - 1.0, eps),
        )
    };
    let (k1u, k1v) = f(s.u, s.v);
    let (k2u, k2v) = f(s.u + 0.5 * h * k1u, s.v + 0.5 * h * k1v);
    let (k3u, k3v) = f(s.u + 0.5 * h * k2u, s.v + 0.5 * h * k2v);
    let (k4u, k4v) = f(s.u + h * k3u, s.v + h * k3v);
    (
        s.u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        s.v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Outcome of integrating the shooting system across (0, length):
/// interior zero count of u and the terminal value u(length).
fn integrate_shot(p: f64, lambda: f64, length: f64, local_tol: f64) -> (u32, f64) {
    let pc = p / (p - 1.0);
    let eps = 1e-10;
    let mut s = ShootState { x: 0.0, u: 0.0, v: 1.0 };
    let mut h = length / 100.0;
    let h_max = length / 50.0;
    let h_min = length * 1e-12;
    let mut zeros = 0u32;
    while s.x < length {
        if s.x + h > length {
            h = length - s.x;
        }
        // Step doubling: one step of h against two of h/2.
        let (u1, v1) = rk4_step(s, h, p, pc, lambda, eps);
        let (uh, vh) = rk4_step(s, 0.5 * h, p, pc, lambda, eps);
        let mid = ShootState { x: s.x + 0.5 * h, u: uh, v: vh };
        let (u2, v2) = rk4_step(mid, 0.5 * h, p, pc, lambda, eps);
        let scale = 1.0 + s.u.abs().max(s.v.abs());
        let err = ((u2 - u1).abs().max((v2 - v1).abs())) / scale;
        if err <= local_tol || h <= h_min {
            if s.u * u2 < 0.0 {
                zeros += 1;
            }
            s = ShootState { x: s.x + h, u: u2, v: v2 };
        }
        let grow = if err > 0.0 {
            0.9 * (local_tol / err).powf(0.2)
        } else {
            5.0
        };
        h = (h * grow.clamp(0.2, 5.0)).clamp(h_min, h_max);
    }
    (zeros, s.u)
}

/// k-th 1D eigenvalue by shooting: bisect lambda on the Sturm predicate
/// "the k-th Dirichlet zero has passed x = length". Independent of
/// `lambda_k_1d`; used to cross-check it.
///
/// `tol` is the relative width of the final lambda bracket.
pub fn shoot_1d(k: u32, p: f64, length: f64, tol: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(p));
    }
    assert!(k >= 1 && tol > 0.0 && length > 0.0);
    let local_tol = (tol * 1e-2).min(1e-10);
    // u starts increasing from 0, so after m interior zeros its sign is
    // (-1)^m; lambda has passed lambda_k once a k-th zero exists or the
    // terminal value has flipped past the (k-1)-th.
    let passed = |lambda: f64| -> bool {
        let (zeros, u_end) = integrate_shot(p, lambda, length, local_tol);
        let parity = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        zeros >= k || (zeros == k - 1 && u_end * parity < 0.0)
    };
    let mut lo = 1.0;
    let mut guard = 0;
    while passed(lo) {
        lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return Err(Error::NonBracketed { lambda_hi: lo });
        }
    }
    let mut hi = 2.0 * lo;
    guard = 0;
    while !passed(hi) {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::NonBracketed { lambda_hi: hi });
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if passed(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The bounded divergent sequence x_{k+1} = x_k + sigma_{k+1}/(k+1) with
/// x_0 = 0, sigma_0 = 1 and
///
/// ```text
/// sigma_{k+1} = 1        if x_k < 0,
///               -1       if x_k > 1,
///               sigma_k  if 0 <= x_k <= 1.
/// ```
///
/// Harmonic steps keep it in [-1, 2] yet it never settles: a useful stand-in
/// for "monotone quantities may converge while the iterates do not".
/// Returns the first `n` terms x_0, ..., x_{n-1}.
pub fn counterexample_sequence(n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let mut xs = Vec::with_capacity(n);
    xs.push(0.0);
    let mut sigma = 1.0;
    for k in 0..n.saturating_sub(1) {
        let x = xs[k];
        if x < 0.0 {
            sigma = 1.0;
        } else if x > 1.0 {
            sigma = -1.0;
        }
        xs.push(x + sigma / (k as f64 + 1.0));
    }
    xs
}
