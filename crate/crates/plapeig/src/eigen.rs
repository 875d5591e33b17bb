//! Discrete Dirichlet eigenpairs of the Laplacian (p = 2) on a mesh.
//!
//! These serve as seeds and as independent checks: the matrices are the
//! exact P1 stiffness and consistent mass, so the pairs (μ, x) satisfy
//! K x = μ M x up to solver tolerance, and μ equals the discrete Rayleigh
//! quotient xᵀKx / xᵀMx. The first pair comes from plain inverse
//! iteration; the second from two-vector subspace iteration with the
//! first pair deflated out, which stays stable when the second eigenvalue
//! is a double one (the square has sin 2πx sin πy and sin πx sin 2πy at
//! the same eigenvalue).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::FeFunction;
use crate::linalg::{dot, BandedCholesky, BandedSpd};
use crate::mesh::{DofMap, Mesh};
use crate::ppoisson::{assemble_jacobian, system_bandwidth};

const PI: f64 = std::f64::consts::PI;

/// Eigenvalue with its mass-normalized eigenfunction (zero on the
/// boundary, xᵀMx = 1, entry of largest magnitude positive).
#[derive(Debug, Clone)]
pub struct DiscreteEigenpair {
    pub value: f64,
    pub u: FeFunction,
}

/// Consistent P1 mass matrix over interior unknowns. Element matrices are
/// |T|/12 (2 on the diagonal, 1 off) in 2D and h/6 (2 and 1) in 1D.
pub fn mass_matrix(mesh: &Mesh, dofs: &DofMap) -> BandedSpd {
    let bw = system_bandwidth(mesh, dofs);
    let mut m = BandedSpd::new(dofs.num_dofs(), bw);
    let nverts = mesh.dim() + 1;
    let scale = if mesh.dim() == 1 { 1.0 / 6.0 } else { 1.0 / 12.0 };
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let vol = mesh.element_volume(e);
        for (li, &ni) in el.iter().enumerate().take(nverts) {
            let Some(di) = dofs.dof_of(ni) else { continue };
            for (lj, &nj) in el.iter().enumerate().take(nverts) {
                let Some(dj) = dofs.dof_of(nj) else { continue };
                if di < dj {
                    continue;
                }
                let coeff = if li == lj { 2.0 } else { 1.0 };
                m.add(di, dj, scale * vol * coeff);
            }
        }
    }
    m
}

struct Operators {
    chol: BandedCholesky,
    stiff: BandedSpd,
    mass: BandedSpd,
    dofs: DofMap,
}

fn build_operators(mesh: &Arc<Mesh>) -> Result<Operators> {
    let dofs = mesh.interior_dof_map();
    if dofs.num_dofs() == 0 {
        return Err(Error::DegenerateMesh);
    }
    let zero = FeFunction::zeros(Arc::clone(mesh));
    let stiff = assemble_jacobian(&zero, &dofs, 2.0, 0.0);
    let mass = mass_matrix(mesh, &dofs);
    let chol = stiff.clone().cholesky()?;
    Ok(Operators { chol, stiff, mass, dofs })
}

impl Operators {
    fn n(&self) -> usize {
        self.dofs.num_dofs()
    }

    fn m_inner(&self, x: &[f64], y: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.resize(x.len(), 0.0);
        self.mass.matvec(y, scratch);
        dot(x, scratch)
    }

    fn k_inner(&self, x: &[f64], y: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.resize(x.len(), 0.0);
        self.stiff.matvec(y, scratch);
        dot(x, scratch)
    }

    /// One inverse power step: x ← K⁻¹ M x.
    fn apply_inverse(&self, x: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
        scratch.resize(x.len(), 0.0);
        self.mass.matvec(x, scratch);
        self.chol.solve(scratch)
    }

    fn m_normalize(&self, x: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        let n = self.m_inner(x, x, scratch).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroFunction);
        }
        for v in x.iter_mut() {
            *v /= n;
        }
        Ok(())
    }

    fn to_function(&self, mesh: &Arc<Mesh>, x: &[f64]) -> FeFunction {
        let mut u = FeFunction::zeros(Arc::clone(mesh));
        for (dof, &v) in x.iter().enumerate() {
            u.values_mut()[self.dofs.node_of(dof)] = v;
        }
        u
    }

    /// ‖K x - μ M x‖₂ / ‖K x‖₂, the convergence measure of the iterations.
    fn rel_eigen_residual(&self, x: &[f64], mu: f64) -> f64 {
        let mut kx = vec![0.0; x.len()];
        let mut mx = vec![0.0; x.len()];
        self.stiff.matvec(x, &mut kx);
        self.mass.matvec(x, &mut mx);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, m) in kx.iter().zip(&mx) {
            let r = k - mu * m;
            num += r * r;
            den += k * k;
        }
        (num / den).sqrt()
    }
}

fn seed_from_fn<F: Fn(&[f64]) -> f64>(mesh: &Arc<Mesh>, ops: &Operators, f: F) -> Vec<f64> {
    let g = FeFunction::interpolate_dirichlet(mesh, f);
    (0..ops.n()).map(|dof| g.values()[ops.dofs.node_of(dof)]).collect()
}

fn fix_sign(x: &mut [f64]) {
    let mut idx = 0;
    let mut best = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            idx = i;
        }
    }
    if x[idx] < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Smallest Dirichlet eigenpair of K x = μ M x by inverse iteration.
pub fn first_eigenpair_p2(mesh: &Arc<Mesh>) -> Result<DiscreteEigenpair> {
    let ops = build_operators(mesh)?;
    let mut scratch = Vec::new();
    let (w, h) = domain_extent(mesh);
    let mut x = seed_from_fn(mesh, &ops, |c| {
        let mut v = (PI * c[0] / w).sin();
        if mesh.dim() == 2 {
            v *= (PI * c[1] / h).sin();
        }
        v
    });
    ops.m_normalize(&mut x, &mut scratch)?;
    for _ in 0..200 {
        let mut y = ops.apply_inverse(&x, &mut scratch);
        ops.m_normalize(&mut y, &mut scratch)?;
        let rq = ops.k_inner(&y, &y, &mut scratch);
        x = y;
        if ops.rel_eigen_residual(&x, rq) <= 1e-12 {
            break;
        }
    }
    fix_sign(&mut x);
    let value = ops.k_inner(&x, &x, &mut scratch) / ops.m_inner(&x, &x, &mut scratch);
    Ok(DiscreteEigenpair { value, u: ops.to_function(mesh, &x) })
}

fn domain_extent(mesh: &Mesh) -> (f64, f64) {
    let (lo, hi) = mesh.bounding_box();
    let w = hi[0] - lo[0];
    let h = if mesh.dim() == 2 { hi[1] - lo[1] } else { 1.0 };
    (w, h)
}

/// Eigenvalues and vectors of the symmetric 2x2 matrix [[a, b], [b, c]],
/// ordered low then high.
fn sym2x2(a: f64, b: f64, c: f64) -> ((f64, [f64; 2]), (f64, [f64; 2])) {
    let mid = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mid - d, mid + d);
    let v1 = {
        let cand1 = [b, l1 - a];
        let cand2 = [l1 - c, b];
        let n1 = cand1[0].hypot(cand1[1]);
        let n2 = cand2[0].hypot(cand2[1]);
        if n1 >= n2 && n1 > 0.0 {
            [cand1[0] / n1, cand1[1] / n1]
        } else if n2 > 0.0 {
            [cand2[0] / n2, cand2[1] / n2]
        } else {
            [1.0, 0.0]
        }
    };
    let v2 = [-v1[1], v1[0]];
    ((l1, v1), (l2, v2))
}

/// Second Dirichlet eigenpair by deflated two-vector subspace iteration.
///
/// When the second eigenvalue is simple the lower Ritz pair is returned.
/// When it is (numerically) double, the Ritz vector with the larger
/// mass-weighted overlap against the first seed is returned, which pins
/// down a deterministic representative of the eigenspace.
pub fn second_eigenpair_p2(mesh: &Arc<Mesh>) -> Result<DiscreteEigenpair> {
    let ops = build_operators(mesh)?;
    if ops.n() < 3 {
        return Err(Error::DegenerateMesh);
    }
    let mut scratch = Vec::new();
    let first = {
        let pair = first_eigenpair_p2(mesh)?;
        let mut x: Vec<f64> =
            (0..ops.n()).map(|dof| pair.u.values()[ops.dofs.node_of(dof)]).collect();
        ops.m_normalize(&mut x, &mut scratch)?;
        x
    };
    let deflate = |x: &mut Vec<f64>, scratch: &mut Vec<f64>| {
        let c = {
            scratch.resize(x.len(), 0.0);
            ops.mass.matvec(&first, scratch);
            dot(x, scratch)
        };
        for (xi, fi) in x.iter_mut().zip(&first) {
            *xi -= c * fi;
        }
    };

    let (w, h) = domain_extent(mesh);
    let mut s1 = if mesh.dim() == 2 {
        seed_from_fn(mesh, &ops, |c| (2.0 * PI * c[0] / w).sin() * (PI * c[1] / h).sin())
    } else {
        seed_from_fn(mesh, &ops, |c| (2.0 * PI * c[0] / w).sin())
    };
    let mut s2 = if mesh.dim() == 2 {
        seed_from_fn(mesh, &ops, |c| (PI * c[0] / w).sin() * (2.0 * PI * c[1] / h).sin())
    } else {
        seed_from_fn(mesh, &ops, |c| (3.0 * PI * c[0] / w).sin())
    };
    deflate(&mut s1, &mut scratch);
    deflate(&mut s2, &mut scratch);
    ops.m_normalize(&mut s1, &mut scratch)?;
    let seed_ref = s1.clone();
    let mut x1 = s1;
    let mut x2 = s2;
    // Make x2 M-orthogonal to x1 and unit.
    let c = ops.m_inner(&x2, &x1, &mut scratch);
    for (a, b) in x2.iter_mut().zip(&x1) {
        *a -= c * b;
    }
    ops.m_normalize(&mut x2, &mut scratch)?;

    let mut ritz = (f64::INFINITY, f64::INFINITY);
    for _ in 0..300 {
        let mut y1 = ops.apply_inverse(&x1, &mut scratch);
        let mut y2 = ops.apply_inverse(&x2, &mut scratch);
        deflate(&mut y1, &mut scratch);
        deflate(&mut y2, &mut scratch);
        ops.m_normalize(&mut y1, &mut scratch)?;
        let c = ops.m_inner(&y2, &y1, &mut scratch);
        for (a, b) in y2.iter_mut().zip(&y1) {
            *a -= c * b;
        }
        ops.m_normalize(&mut y2, &mut scratch)?;
        // Rayleigh-Ritz on span{y1, y2}; the basis is M-orthonormal so
        // the projected problem is the plain symmetric 2x2 eigenproblem.
        let a = ops.k_inner(&y1, &y1, &mut scratch);
        let b = ops.k_inner(&y1, &y2, &mut scratch);
        let cc = ops.k_inner(&y2, &y2, &mut scratch);
        let ((l1, v1), (l2, v2)) = sym2x2(a, b, cc);
        let z1: Vec<f64> =
            y1.iter().zip(&y2).map(|(p, q)| v1[0] * p + v1[1] * q).collect();
        let z2: Vec<f64> =
            y1.iter().zip(&y2).map(|(p, q)| v2[0] * p + v2[1] * q).collect();
        x1 = z1;
        x2 = z2;
        ritz = (l1, l2);
        if ops.rel_eigen_residual(&x1, l1) <= 1e-10 {
            break;
        }
    }

    let (l1, l2) = ritz;
    let degenerate = (l2 - l1).abs() <= 1e-6 * l1.abs();
    let mut x = if degenerate {
        let o1 = ops.m_inner(&x1, &seed_ref, &mut scratch).abs();
        let o2 = ops.m_inner(&x2, &seed_ref, &mut scratch).abs();
        if o2 > o1 {
            x2
        } else {
            x1
        }
    } else {
        x1
    };
    ops.m_normalize(&mut x, &mut scratch)?;
    fix_sign(&mut x);
    let value = ops.k_inner(&x, &x, &mut scratch) / ops.m_inner(&x, &x, &mut scratch);
    Ok(DiscreteEigenpair { value, u: ops.to_function(mesh, &x) })
}
