//! One-dimensional quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `n` points, exact for polynomials of degree `2n - 1`.
    ///
    /// Nodes are returned in increasing order. Newton iteration on the
    /// three-term recurrence, started from the Chebyshev-like guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
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
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    /// Integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

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

/// Composite Gauss–Legendre integral of `f` over [a, b] with `panels` equal
/// panels of the given rule.
pub fn composite(rule: &GaussLegendre, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            rule.integrate(lo, lo + h, &mut f)
        })
        .sum()
}

/// Lagrange basis weights of the cubic through `xs`, evaluated at `x`.
pub fn lagrange4(xs: [f64; 4], x: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                w[i] *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
    }
    w
}

/// Cubic Lagrange weights on a uniform grid `x_i = i` for the stencil
/// `{i0, .., i0+3}` at fractional position `x`.
pub fn lagrange4_uniform(i0: f64, x: f64) -> [f64; 4] {
    let u = x - i0;
    [
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_reproduces_cubics() {
        let xs = [0.1, 0.4, 0.45, 1.3];
        let f = |x: f64| 2.0 - x + 3.0 * x * x - 0.5 * x * x * x;
        let w = lagrange4(xs, 0.77);
        let v: f64 = (0..4).map(|i| w[i] * f(xs[i])).sum();
        assert!((v - f(0.77)).abs() < 1e-13);
        let wu = lagrange4_uniform(2.0, 3.6);
        let vu: f64 = (0..4).map(|i| wu[i] * f(2.0 + i as f64)).sum();
        assert!((vu - f(3.6)).abs() < 1e-12);
    }

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..12 {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn weights_sum_to_two_and_nodes_sorted() {
        let rule = GaussLegendre::new(32);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn composite_matches_smooth_integral() {
        let rule = GaussLegendre::new(8);
        let got = composite(&rule, 0.0, PI, 4, f64::sin);
        assert!((got - 2.0).abs() < 1e-14);
    }
}
