//! Gauss-Legendre quadrature.

use std::f64::consts::PI;

/// Node count used for averaging over the secret parameter.
pub const DEFAULT_NODES: usize = 64;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `n ≥ 1` nodes; nodes are roots of `P_n`, found by Newton
    /// iteration from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`, ascending in `x`.
    pub fn nodes_on(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (mid + half * x, half * w))
            .collect()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.nodes_on(a, b).into_iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + h * i as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }

    /// Adaptive bisection: a panel is accepted once the rule on the panel and
    /// on its two halves agree within the panel's share of `tol`.
    pub fn integrate_adaptive<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, tol: f64, mut f: F) -> f64 {
        let whole = self.integrate(a, b, &mut f);
        self.adapt(a, b, whole, tol, 0, &mut f)
    }

    fn adapt<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, whole: f64, tol: f64, depth: u32, f: &mut F) -> f64 {
        let mid = 0.5 * (a + b);
        let left = self.integrate(a, mid, &mut *f);
        let right = self.integrate(mid, b, &mut *f);
        if (left + right - whole).abs() <= tol || depth >= 40 {
            return left + right;
        }
        self.adapt(a, mid, left, 0.5 * tol, depth + 1, f) + self.adapt(mid, b, right, 0.5 * tol, depth + 1, f)
    }
}

impl Default for GaussLegendre {
    fn default() -> Self {
        Self::new(DEFAULT_NODES)
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [1, 2, 5, 16, 64] {
            let rule = GaussLegendre::new(n);
            let total: f64 = rule.nodes_on(0.0, 3.0).iter().map(|(_, w)| w).sum();
            assert!((total - 3.0).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let rule = GaussLegendre::new(5);
        // ∫₀¹ x⁹ dx = 1/10
        assert!((rule.integrate(0.0, 1.0, |x| x.powi(9)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn known_three_point_rule() {
        let rule = GaussLegendre::new(3);
        let pts = rule.nodes_on(-1.0, 1.0);
        let x = (0.6f64).sqrt();
        assert!((pts[0].0 + x).abs() < 1e-15 && (pts[2].0 - x).abs() < 1e-15);
        assert!((pts[1].1 - 8.0 / 9.0).abs() < 1e-15);
        assert!((pts[0].1 - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_square_root_endpoint() {
        // ∫₀¹ √x dx = 2/3; the endpoint singularity in the derivative needs bisection
        let rule = GaussLegendre::default();
        let v = rule.integrate_adaptive(0.0, 1.0, 1e-13, f64::sqrt);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn composite_matches_single_on_smooth_integrand() {
        let rule = GaussLegendre::new(16);
        let a = rule.integrate(0.0, 2.0, f64::exp);
        let b = rule.integrate_composite(0.0, 2.0, 4, f64::exp);
        assert!((a - b).abs() < 1e-13);
        assert!((a - (2f64.exp() - 1.0)).abs() < 1e-13);
    }
}
