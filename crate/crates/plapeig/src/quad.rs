//! Quadrature rules on the reference simplex.
//!
//! Points are barycentric, weights are fractions of the element measure and
//! sum to 1, so an integral over element T is `vol(T) * sum_q w_q f(x_q)`.
//! Integrands like |u|^p are not polynomial for general p; the default
//! degree used by the norm and load routines is 4, which keeps the
//! quadrature error below the P1 interpolation error on the meshes of
//! interest. Degrees up to 7 are available.

/// Default polynomial exactness degree used across the crate.
pub const DEFAULT_DEGREE: usize = 4;

/// A fixed-point rule with barycentric points and normalized weights.
///
/// Invariants: all weights positive, weights sum to 1, rule is exact for
/// polynomials up to `degree` on the reference simplex.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    /// Barycentric coordinates; 1D rules use the first two entries.
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Rule for the reference triangle, exact at least to `degree` (<= 7).
    /// Requests between the tabulated degrees round up.
    pub fn triangle(degree: usize) -> Self {
        let degree = degree.clamp(1, 7);
        match degree {
            1 => Self::tri_centroid(),
            2 => Self::tri_deg2(),
            3 | 4 => Self::tri_deg4(),
            5 => Self::tri_deg5(),
            6 => Self::tri_deg6(),
            _ => Self::tri_deg7(),
        }
    }

    /// Gauss-Legendre rule on the reference segment, exact to `degree`.
    pub fn interval(degree: usize) -> Self {
        let degree = degree.clamp(1, 9);
        let n = degree / 2 + 1;
        let (xs, ws): (&[f64], &[f64]) = match n {
            1 => (&GL1_X, &GL1_W),
            2 => (&GL2_X, &GL2_W),
            3 => (&GL3_X, &GL3_W),
            4 => (&GL4_X, &GL4_W),
            _ => (&GL5_X, &GL5_W),
        };
        let points = xs.iter().map(|&x| [1.0 - x, x, 0.0]).collect();
        QuadratureRule {
            degree: 2 * n - 1,
            points,
            weights: ws.to_vec(),
        }
    }

    /// Rule matching the element kind of a mesh dimension.
    pub fn for_dim(dim: usize, degree: usize) -> Self {
        match dim {
            1 => Self::interval(degree),
            _ => Self::triangle(degree),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    fn tri_centroid() -> Self {
        QuadratureRule {
            degree: 1,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    fn tri_deg2() -> Self {
        QuadratureRule {
            degree: 2,
            points: orbit3(1.0 / 6.0),
            weights: vec![1.0 / 3.0; 3],
        }
    }

    fn tri_deg4() -> Self {
        // Six-point rule, two symmetric orbits.
        let mut points = orbit3(0.445_948_490_915_965);
        points.extend(orbit3(0.091_576_213_509_771));
        let mut weights = vec![0.223_381_589_678_011; 3];
        weights.extend(vec![0.109_951_743_655_322; 3]);
        QuadratureRule { degree: 4, points, weights }
    }

    fn tri_deg5() -> Self {
        // Seven-point rule: centroid plus two orbits.
        let mut points = vec![[1.0 / 3.0; 3]];
        points.extend(orbit3(0.470_142_064_105_115));
        points.extend(orbit3(0.101_286_507_323_456));
        let mut weights = vec![0.225];
        weights.extend(vec![0.132_394_152_788_506; 3]);
        weights.extend(vec![0.125_939_180_544_827; 3]);
        QuadratureRule { degree: 5, points, weights }
    }

    fn tri_deg6() -> Self {
        // Twelve-point rule: two 3-orbits and one 6-orbit.
        let mut points = orbit3(0.063_089_014_491_502);
        points.extend(orbit3(0.249_286_745_170_910));
        points.extend(orbit6(0.310_352_451_033_785, 0.053_145_049_844_816));
        let mut weights = vec![0.050_844_906_370_207; 3];
        weights.extend(vec![0.116_786_275_726_379; 3]);
        weights.extend(vec![0.082_851_075_618_374; 6]);
        QuadratureRule { degree: 6, points, weights }
    }

    fn tri_deg7() -> Self {
        // Duffy map of a 5x5 Gauss-Legendre grid: x = s(1-t), y = st with
        // Jacobian s. Positive weights, exact past degree 7.
        let mut points = Vec::with_capacity(25);
        let mut weights = Vec::with_capacity(25);
        for (&s, &wu) in GL5_X.iter().zip(GL5_W.iter()) {
            for (&t, &wv) in GL5_X.iter().zip(GL5_W.iter()) {
                let x = s * (1.0 - t);
                let y = s * t;
                points.push([1.0 - x - y, x, y]);
                // The factor 2 renormalizes to the triangle measure 1/2.
                weights.push(2.0 * wu * wv * s);
            }
        }
        QuadratureRule { degree: 7, points, weights }
    }
}

/// The three permutations of (1-2a, a, a).
fn orbit3(a: f64) -> Vec<[f64; 3]> {
    let b = 1.0 - 2.0 * a;
    vec![[b, a, a], [a, b, a], [a, a, b]]
}

/// The six permutations of (a, b, 1-a-b).
fn orbit6(a: f64, b: f64) -> Vec<[f64; 3]> {
    let c = 1.0 - a - b;
    vec![
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ]
}

// Gauss-Legendre nodes/weights on [0, 1].
const GL1_X: [f64; 1] = [0.5];
const GL1_W: [f64; 1] = [1.0];
const GL2_X: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
const GL2_W: [f64; 2] = [0.5, 0.5];
const GL3_X: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const GL3_W: [f64; 3] = [
    0.277_777_777_777_777_9,
    0.444_444_444_444_444_2,
    0.277_777_777_777_777_9,
];
const GL4_X: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_13,
    0.930_568_155_797_026_23,
];
const GL4_W: [f64; 4] = [
    0.173_927_422_568_726_9,
    0.326_072_577_431_273_1,
    0.326_072_577_431_273_1,
    0.173_927_422_568_726_9,
];
const GL5_X: [f64; 5] = [
    0.046_910_077_030_668_02,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_331_93,
];
const GL5_W: [f64; 5] = [
    0.118_463_442_528_094_49,
    0.239_314_335_249_683_26,
    0.284_444_444_444_444_5,
    0.239_314_335_249_683_26,
    0.118_463_442_528_094_49,
];

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
    fn tri_monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>().max(1.0);
        fact(a) * fact(b) / fact(a + b + 2)
    }

    fn tri_monomial_quad(rule: &QuadratureRule, a: u32, b: u32) -> f64 {
        // Reference triangle has measure 1/2; barycentric l2 = x, l3 = y.
        0.5 * rule
            .iter()
            .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
            .sum::<f64>()
    }

    #[test]
    fn triangle_rules_have_positive_weights_summing_to_one() {
        for degree in 1..=7 {
            let rule = QuadratureRule::triangle(degree);
            assert!(rule.iter().all(|(_, w)| w > 0.0), "degree {degree}");
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-13, "degree {degree}: sum {total}");
            assert!(rule
                .iter()
                .all(|(l, _)| l.iter().all(|&c| (-1e-14..=1.0).contains(&c))));
        }
    }

    #[test]
    fn triangle_rules_are_exact_to_declared_degree() {
        for degree in 1..=7usize {
            let rule = QuadratureRule::triangle(degree);
            assert!(rule.degree >= degree);
            for a in 0..=rule.degree as u32 {
                for b in 0..=(rule.degree as u32 - a) {
                    let got = tri_monomial_quad(&rule, a, b);
                    let want = tri_monomial_exact(a, b);
                    assert!(
                        ((got - want) / want).abs() < 1e-12,
                        "degree {degree} x^{a} y^{b}: got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn interval_rules_are_exact_to_declared_degree() {
        for degree in 1..=9usize {
            let rule = QuadratureRule::interval(degree);
            assert!(rule.degree >= degree);
            for a in 0..=rule.degree as u32 {
                // barycentric l2 = x on [0, 1]; exact integral 1/(a+1)
                let got: f64 = rule.iter().map(|(l, w)| w * l[1].powi(a as i32)).sum();
                let want = 1.0 / f64::from(a + 1);
                assert!(
                    ((got - want) / want).abs() < 1e-13,
                    "degree {degree} x^{a}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn degree_requests_round_up() {
        assert!(QuadratureRule::triangle(3).degree >= 3);
        assert_eq!(QuadratureRule::triangle(0).degree, 1);
        assert_eq!(QuadratureRule::triangle(100).degree, 7);
    }
}
