//! Quadrature rules on the reference triangle and on intervals.
//!
//! The reference triangle has vertices (0,0), (1,0), (0,1) and area 1/2.
//! Degree 1 uses the centroid; higher degrees use the collapsed-coordinate
//! (conical product) Gauss rule, which has positive weights and interior
//! points for every degree.

use crate::error::{Error, Result};

/// Highest degree for which [`triangle`] produces a rule.
pub const MAX_TRIANGLE_DEGREE: usize = 40;

/// Default degree for assembly and functional integrals.
pub const DEFAULT_DEGREE: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates (λ0, λ1, λ2); the reference point is (λ1, λ2).
    pub points: Vec<[f64; 3]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates (ξ, η) of point `i`.
    pub fn reference_point(&self, i: usize) -> [f64; 2] {
        let [_, l1, l2] = self.points[i];
        [l1, l2]
    }

    /// Applies the rule to a function of reference coordinates.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p[1], p[2])).sum()
    }
}

/// Triangle rule exact for polynomials of total degree `exact_degree`.
pub fn triangle(exact_degree: usize) -> Result<QuadratureRule> {
    if exact_degree == 0 || exact_degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::UnsupportedDegree(exact_degree));
    }
    if exact_degree == 1 {
        let third = 1.0 / 3.0;
        return Ok(QuadratureRule { points: vec![[third, third, third]], weights: vec![0.5], exact_degree });
    }
    // x^a y^b becomes u^a (1-u)^(b+1) v^b under x = u, y = (1-u) v, so the
    // u direction needs degree exact_degree + 1.
    let n = (exact_degree + 2).div_ceil(2);
    let (gx, gw) = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (u, wu) in gx.iter().zip(&gw) {
        for (v, wv) in gx.iter().zip(&gw) {
            let x = *u;
            let y = (1.0 - u) * v;
            points.push([1.0 - x - y, x, y]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule { points, weights, exact_degree })
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|wi| 0.5 * wi).collect())
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let n = n as f64;
    let d = n * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫_T x^a y^b = a! b! / (a + b + 2)!
    fn monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn degree_one_is_the_centroid_rule() {
        let q = triangle(1).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.weights[0], 0.5);
        assert_eq!(q.reference_point(0), [1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn x2y2_with_degree_six() {
        let q = triangle(6).unwrap();
        let v = q.integrate(|x, y| x * x * y * y);
        assert!((v - 1.0 / 180.0).abs() < 1e-15, "{v}");
    }

    #[test]
    fn exact_up_to_requested_degree() {
        for deg in 1..=12 {
            let q = triangle(deg).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            assert!((q.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    let v = q.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                    let e = monomial_exact(a, b);
                    assert!((v - e).abs() < 1e-14 * e.max(1e-3), "deg {deg} x^{a} y^{b}: {v} vs {e}");
                }
            }
        }
    }

    #[test]
    fn degree_six_misses_degree_seven() {
        let q = triangle(6).unwrap();
        let v = q.integrate(|x, _| x.powi(7));
        assert!((v - monomial_exact(7, 0)).abs() > 1e-10);
    }

    #[test]
    fn unsupported_degrees() {
        assert_eq!(triangle(0), Err(Error::UnsupportedDegree(0)));
        assert!(matches!(triangle(MAX_TRIANGLE_DEGREE + 1), Err(Error::UnsupportedDegree(_))));
        assert!(triangle(10).is_ok());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let v: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(p as i32)).sum();
                let e = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                assert!((v - e).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }
}
