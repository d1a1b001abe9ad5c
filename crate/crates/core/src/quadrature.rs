//! Gauss rules on the unit interval and on triangles.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss–Legendre
//! rules. With `n` points per direction the rule integrates polynomials of
//! total degree `2n - 2` exactly on the reference triangle.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature rule on the reference triangle `{(s, t): s, t >= 0, s + t <= 1}`
/// expressed in barycentric coordinates. Weights sum to one, so an integral
/// over a physical triangle is `area * sum(w_q f(x_q))`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Rule exact for polynomials of total degree `order`.
    pub fn of_order(order: usize) -> Self {
        let n = order.div_ceil(2) + 1;
        let (x, wx) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (i, &u) in x.iter().enumerate() {
            for (j, &v) in x.iter().enumerate() {
                // (u, v) in the unit square -> (s, t) = (u, v(1 - u)), jacobian (1 - u).
                let s = u;
                let t = v * (1.0 - u);
                points.push([1.0 - s - t, s, t]);
                weights.push(2.0 * wx[i] * wx[j] * (1.0 - u));
            }
        }
        Self { points, weights }
    }

    /// Physical coordinates of each point on the triangle with vertices `p`.
    pub fn map(&self, p: &[[f64; 2]; 3]) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        let p = *p;
        self.points.iter().zip(&self.weights).map(move |(l, &w)| {
            ([l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0], l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1]], w)
        })
    }
}

/// Gauss rule on an edge: returns (parameter in [0,1], weight summing to one).
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EdgeRule {
    pub fn with_points(n: usize) -> Self {
        let (params, weights) = gauss_legendre_unit(n);
        Self { params, weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre_unit(n);
            for k in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_rules_match_the_monomial_formula() {
        // ∫_T s^a t^b = a! b! / (a + b + 2)! on the reference triangle of area 1/2.
        for order in [2, 4, 8] {
            let rule = TriangleRule::of_order(order);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(l, w)| 0.5 * w * l[1].powi(a as i32) * l[2].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() < 1e-15, "order {order} a={a} b={b}");
                }
            }
        }
    }
}
