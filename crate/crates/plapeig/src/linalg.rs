//! Banded symmetric positive-definite systems.
//!
//! The structured meshes used here give Newton systems with small, known
//! bandwidth (tridiagonal on intervals, about the row length of the grid on
//! rectangles), so a dense-band Cholesky factorization is both simple and
//! fast, and it is exactly reproducible: no pivoting, fixed operation order.

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band: entry (i, j) with
/// 0 <= i - j <= bandwidth lives at `data[i * (bandwidth + 1) + (j + bandwidth - i)]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn new(n: usize, bandwidth: usize) -> Self {
        BandedSpd {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (j + self.bandwidth - i)
    }

    /// Adds `v` to entry (i, j). Only the lower triangle is stored; the
    /// symmetric counterpart is implicit.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth {
            return 0.0;
        }
        self.data[self.idx(r, c)]
    }

    /// y = A x with the full symmetric matrix.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
    }

    /// In-place lower Cholesky A = L Lᵀ within the band. Fails when a pivot
    /// is not strictly positive (matrix not SPD).
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let bw = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.idx(i, j)];
                let kstart = lo.max(j.saturating_sub(bw));
                for k in kstart..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotSpd { pivot: i });
                    }
                    let k = self.idx(i, j);
                    self.data[k] = s.sqrt();
                } else {
                    let d = self.data[self.idx(j, j)];
                    let k = self.idx(i, j);
                    self.data[k] = s / d;
                }
            }
        }
        Ok(BandedCholesky {
            n: self.n,
            bandwidth: bw,
            data: self.data,
        })
    }
}

/// Cholesky factor of a [`BandedSpd`]; solves by forward/back substitution.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bandwidth + 1) + (j + self.bandwidth - i)
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        // L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        // Lᵀ x = y
        for i in (0..self.n).rev() {
            let hi = (i + self.bandwidth).min(self.n - 1);
            let mut s = b[i];
            for j in (i + 1)..=hi {
                s -= self.data[self.idx(j, i)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tridiag(n: usize, diag: f64, off: f64) -> BandedSpd {
        let mut a = BandedSpd::new(n, 1);
        for i in 0..n {
            a.add(i, i, diag);
            if i + 1 < n {
                a.add(i + 1, i, off);
            }
        }
        a
    }

    #[test]
    fn solves_known_tridiagonal_system() {
        // Discrete 1D Laplacian scaled by h; solution of -u'' = 1 is a parabola.
        let n = 50;
        let h = 1.0 / (n as f64 + 1.0);
        let a = tridiag(n, 2.0 / h, -1.0 / h);
        let b = vec![h; n];
        let chol = a.clone().cholesky().unwrap();
        let x = chol.solve(&b);
        for (i, &xi) in x.iter().enumerate() {
            let t = (i as f64 + 1.0) * h;
            assert_relative_eq!(xi, 0.5 * t * (1.0 - t), max_relative = 1e-10);
        }
        // Residual check through matvec.
        let mut r = vec![0.0; n];
        a.matvec(&x, &mut r);
        for (ri, bi) in r.iter().zip(&b) {
            assert_relative_eq!(ri, bi, epsilon = 1e-12);
        }
    }

    #[test]
    fn wider_band_round_trip() {
        let n = 40;
        let bw = 7;
        let mut a = BandedSpd::new(n, bw);
        // Diagonally dominant symmetric band, deterministic entries.
        for i in 0..n {
            a.add(i, i, 10.0 + (i % 3) as f64);
            for d in 1..=bw.min(i) {
                let v = 1.0 / (1 + (i * 31 + d * 17) % 5 + d) as f64;
                a.add(i, i - d, v);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let x = a.clone().cholesky().unwrap().solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_relative_eq!(xi, ti, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut a = BandedSpd::new(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::NotSpd { pivot: 1 })));
    }

    #[test]
    fn get_returns_symmetric_entries() {
        let mut a = BandedSpd::new(4, 2);
        a.add(2, 0, 5.0);
        assert_eq!(a.get(2, 0), 5.0);
        assert_eq!(a.get(0, 2), 5.0);
        assert_eq!(a.get(3, 0), 0.0);
    }
}
