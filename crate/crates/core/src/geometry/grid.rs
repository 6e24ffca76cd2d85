use super::curve::Curve;
use super::surface::Surface;
use super::{Boundary, BoundaryParam};
use crate::quadrature::{lagrange4, lagrange4_uniform, GaussLegendre};
use crate::Point;
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, PartialEq)]
pub enum GridKind {
    /// `2ñ` equispaced parameters `t_j = πj/ñ`.
    Trapezoid { n_half: usize },
    /// Gauss–Legendre in `cos θ` times `2N` uniform `φ_k = πk/N`.
    /// `theta` holds the polar angles in increasing order; node `(j, k)`
    /// has index `j·2N + k`.
    GaussProduct { order: usize, theta: Vec<f64> },
}

/// Boundary nodes with quadrature weights (Jacobian included), outward
/// normals and parameters.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<const D: usize> {
    pub nodes: Vec<Point<D>>,
    pub weights: Vec<f64>,
    pub normals: Vec<Point<D>>,
    pub params: Vec<BoundaryParam>,
    pub jacobians: Vec<f64>,
    pub kind: GridKind,
}

impl<const D: usize> QuadratureGrid<D> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Largest distance between consecutive nodes along a parameter line.
    pub fn spacing(&self) -> f64 {
        match &self.kind {
            GridKind::Trapezoid { .. } => (0..self.len())
                .map(|j| (self.nodes[(j + 1) % self.len()] - self.nodes[j]).norm())
                .fold(0.0, f64::max),
            GridKind::GaussProduct { order, .. } => {
                let np = 2 * order;
                let mut h: f64 = 0.0;
                for j in 0..*order {
                    for k in 0..np {
                        let i = j * np + k;
                        h = h.max((self.nodes[j * np + (k + 1) % np] - self.nodes[i]).norm());
                        if j + 1 < *order {
                            h = h.max((self.nodes[i + np] - self.nodes[i]).norm());
                        }
                    }
                }
                h
            }
        }
    }

    /// Weights `c_j` with `Σ_j c_j f(y_j) ≈ f(param)` for smooth boundary
    /// functions sampled on the grid.
    ///
    /// Trigonometric interpolation on the trapezoid grid (dense), cubic
    /// Lagrange in `θ` and periodic cubic in `φ` on the product grid.
    pub fn interpolation_weights(&self, param: BoundaryParam) -> Vec<(usize, f64)> {
        match &self.kind {
            GridKind::Trapezoid { n_half } => {
                let n = 2 * n_half;
                (0..n)
                    .map(|j| {
                        let x = param.t() - PI * j as f64 / *n_half as f64;
                        let half = (0.5 * x).sin();
                        let c = if half.abs() < 1e-13 {
                            1.0
                        } else {
                            (*n_half as f64 * x).sin() * (0.5 * x).cos() / half / n as f64
                        };
                        (j, c)
                    })
                    .collect()
            }
            GridKind::GaussProduct { order, theta } => {
                let np = 2 * order;
                let [th, ph] = param.0;
                let j0 = theta.partition_point(|&t| t < th).saturating_sub(2).min(order - 4);
                let wt = lagrange4([theta[j0], theta[j0 + 1], theta[j0 + 2], theta[j0 + 3]], th);
                let u = ph.rem_euclid(TAU) / (PI / *order as f64);
                let k0 = u.floor() - 1.0;
                let wp = lagrange4_uniform(k0, u);
                let mut out = Vec::with_capacity(16);
                for (a, &ct) in wt.iter().enumerate() {
                    for (b, &cp) in wp.iter().enumerate() {
                        let k = (k0 as i64 + b as i64).rem_euclid(np as i64) as usize;
                        out.push(((j0 + a) * np + k, ct * cp));
                    }
                }
                out
            }
        }
    }

    /// Interpolated value of nodal data at `param`.
    pub fn interpolate(&self, values: &[f64], param: BoundaryParam) -> f64 {
        self.interpolation_weights(param)
            .into_iter()
            .map(|(j, c)| c * values[j])
            .sum()
    }
}

/// Trapezoid grid with `2ñ` nodes `t_j = πj/ñ` and weights `(π/ñ)|x'(t_j)|`.
///
/// # Panics
/// If `n_half < 4`.
pub fn boundary_grid_2d(geom: &Curve, n_half: usize) -> QuadratureGrid<2> {
    assert!(n_half >= 4, "boundary_grid_2d needs ñ >= 4, got {n_half}");
    let n = 2 * n_half;
    let h = PI / n_half as f64;
    let mut g = QuadratureGrid {
        nodes: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        params: Vec::with_capacity(n),
        jacobians: Vec::with_capacity(n),
        kind: GridKind::Trapezoid { n_half },
    };
    for j in 0..n {
        let f = geom.frame(BoundaryParam::curve(h * j as f64));
        g.nodes.push(f.point);
        g.weights.push(h * f.jacobian);
        g.normals.push(f.normal);
        g.params.push(f.param);
        g.jacobians.push(f.jacobian);
    }
    g
}

/// Product grid with `2N²` nodes: `θ_j = arccos t_j` for the Gauss–Legendre
/// nodes `t_j`, `φ_k = πk/N`, weights `(π/N)·w_j·J`.
///
/// # Panics
/// If `order < 4`.
pub fn boundary_grid_3d(geom: &Surface, order: usize) -> QuadratureGrid<3> {
    assert!(order >= 4, "boundary_grid_3d needs N >= 4, got {order}");
    let gl = GaussLegendre::new(order);
    // t ascending means θ descending; reverse so θ increases with j
    let theta: Vec<f64> = gl.nodes.iter().rev().map(|t| t.acos()).collect();
    let wt: Vec<f64> = gl.weights.iter().rev().copied().collect();
    let np = 2 * order;
    let n = order * np;
    let mut g = QuadratureGrid {
        nodes: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        params: Vec::with_capacity(n),
        jacobians: Vec::with_capacity(n),
        kind: GridKind::GaussProduct {
            order,
            theta: theta.clone(),
        },
    };
    let dphi = PI / order as f64;
    for (j, &th) in theta.iter().enumerate() {
        for k in 0..np {
            let f = geom.frame(BoundaryParam::surface(th, dphi * k as f64));
            g.nodes.push(f.point);
            g.weights.push(dphi * wt[j] * f.jacobian);
            g.normals.push(f.normal);
            g.params.push(f.param);
            g.jacobians.push(f.jacobian);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite;

    #[test]
    fn circle_perimeter_is_exact() {
        let g = boundary_grid_2d(&Curve::circle(1.0), 64);
        assert_eq!(g.len(), 128);
        assert!((g.total_weight() - TAU).abs() < 1e-10);
        assert!(g.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn heart_perimeter_converges_to_adaptive_oracle() {
        let heart = Curve::heart();
        let rule = GaussLegendre::new(20);
        let oracle = composite(&rule, 0.0, TAU, 64, |t| heart.speed(t));
        let mut prev = f64::INFINITY;
        for n_half in [16, 32, 64, 128, 256] {
            let err = (boundary_grid_2d(&heart, n_half).total_weight() - oracle).abs();
            assert!(err <= prev || err < 1e-13);
            prev = err;
        }
        assert!(prev < 1e-12);
        assert_eq!(boundary_grid_2d(&heart, 256).len(), 512);
    }

    #[test]
    fn sphere_area_and_pinched_ball_self_convergence() {
        let g = boundary_grid_3d(&Surface::sphere(1.0), 16);
        assert!((g.total_weight() - 4.0 * PI).abs() < 1e-10);
        let pb = Surface::pinched_ball();
        let a24 = boundary_grid_3d(&pb, 24).total_weight();
        let a32 = boundary_grid_3d(&pb, 32);
        assert_eq!(a32.len(), 2048);
        assert!(((a24 - a32.total_weight()) / a24).abs() < 1e-6);
    }

    #[test]
    fn trigonometric_interpolation_is_exact_for_band_limited_data() {
        let g = boundary_grid_2d(&Curve::heart(), 16);
        let f = |t: f64| 1.0 + (3.0 * t).cos() - 0.5 * (7.0 * t).sin();
        let vals: Vec<f64> = g.params.iter().map(|p| f(p.t())).collect();
        for &t in &[0.0, 0.123, 2.5, 6.2] {
            assert!((g.interpolate(&vals, BoundaryParam::curve(t)) - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_interpolation_is_accurate_for_smooth_data() {
        let g = boundary_grid_3d(&Surface::pinched_ball(), 24);
        let f = |p: &BoundaryParam| (p.0[0]).cos() + (p.0[1]).sin() * (p.0[0]).sin();
        let vals: Vec<f64> = g.params.iter().map(f).collect();
        for &(t, p) in &[(0.7, 0.1), (1.6, 3.3), (2.4, 6.0)] {
            let q = BoundaryParam::surface(t, p);
            assert!((g.interpolate(&vals, q) - f(&q)).abs() < 1e-4);
        }
    }
}
