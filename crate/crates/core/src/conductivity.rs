//! Step 2b: the conductivity from `σμ̃ − ∇u·∇σ = 0` with known boundary
//! values, by radial-basis expansion and least-squares collocation.

use crate::geometry::InteriorNodeSet;
use crate::levi_operators::{gradient_with_near, DensityPair, Discretization, DrmBasis};
use crate::linalg::median;
use crate::{Error, Point, Result};
use nalgebra::{DMatrix, DVector};
use std::io::Write;

/// `l_i(x) = 1 + |x − x_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBasis<const D: usize> {
    pub centers: Vec<Point<D>>,
}

impl<const D: usize> SigmaBasis<D> {
    pub fn new(centers: Vec<Point<D>>) -> Self {
        Self { centers }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn l(&self, i: usize, x: &Point<D>) -> f64 {
        1.0 + (x - self.centers[i]).norm()
    }

    /// `∇l_i(x)`, taken as zero at the centre itself (flagged by `None`).
    pub fn grad_l(&self, i: usize, x: &Point<D>) -> Option<Point<D>> {
        let d = x - self.centers[i];
        let r = d.norm();
        if r == 0.0 {
            None
        } else {
            Some(d / r)
        }
    }
}

/// Collocation system for the coefficients of `σ = Σ c_i l_i`.
#[derive(Debug, Clone)]
pub struct TransportSystem {
    /// Rows `μ̃(x_p) l_i(x_p) − ∇u(x_p)·∇l_i(x_p)`.
    pub transport: DMatrix<f64>,
    /// Rows `l_i(b_m)`.
    pub boundary: DMatrix<f64>,
    pub sigma_star: Vec<f64>,
    /// Weight `w_b` of the boundary rows.
    pub boundary_weight: f64,
    /// Collocation points that coincided with a basis centre.
    pub center_hits: usize,
    /// Smallest `|∇u|` over the collocation points.
    pub min_grad_u: f64,
}

/// Transport rows from given `μ̃` and `∇u` at the collocation points.
pub fn transport_rows<const D: usize>(
    colloc: &[Point<D>],
    mu: &[f64],
    grad_u: &[Point<D>],
    basis: &SigmaBasis<D>,
) -> (DMatrix<f64>, usize) {
    let mut hits = 0;
    let t = DMatrix::from_fn(colloc.len(), basis.len(), |p, i| {
        let x = &colloc[p];
        let g = match basis.grad_l(i, x) {
            Some(g) => g,
            None => {
                hits += 1;
                Point::<D>::zeros()
            }
        };
        mu[p] * basis.l(i, x) - grad_u[p].dot(&g)
    });
    (t, hits)
}

/// Assemble transport rows from the recovered density pair and boundary
/// rows from `σ*` at `boundary_points`; `w_b = 10 ×` the median transport
/// row norm.
pub fn assemble_transport_system<const D: usize>(
    pair: &DensityPair,
    drm: &DrmBasis<D>,
    disc: &Discretization<D>,
    basis: &SigmaBasis<D>,
    colloc: &InteriorNodeSet<D>,
    boundary_points: &[Point<D>],
    sigma_star: &[f64],
) -> Result<TransportSystem> {
    if !pair.is_finite() {
        return Err(Error::Domain("density pair has non-finite entries".into()));
    }
    if boundary_points.len() != sigma_star.len() {
        return Err(Error::Dimension(format!(
            "{} boundary points with {} conductivity values",
            boundary_points.len(),
            sigma_star.len()
        )));
    }
    let near = disc.near_fields(colloc)?;
    let grads: Vec<Point<D>> = colloc
        .nodes
        .iter()
        .zip(&near)
        .map(|(x, nf)| gradient_with_near(pair, x, nf, drm, disc))
        .collect();
    let mu: Vec<f64> = colloc.nodes.iter().map(|x| drm.mu(&pair.alpha, x)).collect();
    let (transport, center_hits) = transport_rows(&colloc.nodes, &mu, &grads, basis);
    let boundary = DMatrix::from_fn(boundary_points.len(), basis.len(), |m, i| {
        basis.l(i, &boundary_points[m])
    });
    let min_grad_u = grads.iter().map(|g| g.norm()).fold(f64::INFINITY, f64::min);
    Ok(TransportSystem::new(
        transport,
        boundary,
        sigma_star.to_vec(),
        center_hits,
        min_grad_u,
    ))
}

impl TransportSystem {
    pub fn new(
        transport: DMatrix<f64>,
        boundary: DMatrix<f64>,
        sigma_star: Vec<f64>,
        center_hits: usize,
        min_grad_u: f64,
    ) -> Self {
        let norms: Vec<f64> = transport.row_iter().map(|r| r.norm()).collect();
        let m = median(&norms);
        let boundary_weight = if m > 0.0 && m.is_finite() { 10.0 * m } else { 1.0 };
        Self {
            transport,
            boundary,
            sigma_star,
            boundary_weight,
            center_hits,
            min_grad_u,
        }
    }

    /// Relative transport residual `‖T c‖ / (‖T‖_F ‖c‖)` for a coefficient vector.
    pub fn transport_residual(&self, c: &[f64]) -> f64 {
        let c = DVector::from_column_slice(c);
        (&self.transport * &c).norm() / (self.transport.norm() * c.norm())
    }
}

/// Conductivity `σ(x) = Σ c_i l_i(x)`, clamped below at `10⁻³ median σ*`.
#[derive(Debug, Clone)]
pub struct SigmaField<const D: usize> {
    pub basis: SigmaBasis<D>,
    pub coefficients: Vec<f64>,
    pub floor: f64,
    /// Ridge actually used; differs from the requested one after a fallback.
    pub ridge: f64,
    pub ridge_fallback: bool,
}

impl<const D: usize> SigmaField<D> {
    /// Unclamped expansion value.
    pub fn raw(&self, x: &Point<D>) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.basis.l(i, x))
            .sum()
    }

    /// Clamped values and the number of clamped points.
    pub fn evaluate(&self, points: &[Point<D>]) -> (Vec<f64>, usize) {
        let mut clamped = 0;
        let values = points
            .iter()
            .map(|x| {
                let v = self.raw(x);
                if v < self.floor {
                    clamped += 1;
                    self.floor
                } else {
                    v
                }
            })
            .collect();
        (values, clamped)
    }
}

/// Minimize `‖Tc‖² + w_b²‖Bc − σ*‖² + λ_s‖c‖²`.
///
/// If the normal matrix cannot be factored, retries with
/// `λ_s = 10⁻¹⁰ · trace/K` and records the fallback.
pub fn solve_sigma<const D: usize>(sys: &TransportSystem, basis: &SigmaBasis<D>, ridge: f64) -> Result<SigmaField<D>> {
    let k = basis.len();
    if sys.transport.ncols() != k || sys.boundary.ncols() != k {
        return Err(Error::Dimension("transport system and basis differ in size".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::param("lambda_s", format!("must be non-negative, got {ridge}")));
    }
    let wb2 = sys.boundary_weight * sys.boundary_weight;
    let normal = sys.transport.tr_mul(&sys.transport) + sys.boundary.tr_mul(&sys.boundary) * wb2;
    let rhs = sys.boundary.tr_mul(&DVector::from_column_slice(&sys.sigma_star)) * wb2;
    let attempt = |lambda: f64| {
        let mut a = normal.clone();
        for i in 0..k {
            a[(i, i)] += lambda;
        }
        a.cholesky().map(|c| c.solve(&rhs))
    };
    let (coef, used, fallback) = match attempt(ridge) {
        Some(c) if c.iter().all(|v| v.is_finite()) => (c, ridge, false),
        _ => {
            let lambda = 1e-10 * normal.trace() / k as f64;
            let c = attempt(lambda).ok_or_else(|| Error::Solve("conductivity normal matrix is singular".into()))?;
            (c, lambda, true)
        }
    };
    let floor = 1e-3 * median(&sys.sigma_star);
    Ok(SigmaField {
        basis: basis.clone(),
        coefficients: coef.as_slice().to_vec(),
        floor,
        ridge: used,
        ridge_fallback: fallback,
    })
}

/// Clamped conductivity values at `points`.
pub fn evaluate_sigma<const D: usize>(field: &SigmaField<D>, points: &[Point<D>]) -> Vec<f64> {
    field.evaluate(points).0
}

/// CSV rows `coords, sigma_true, sigma_recovered, abs_error`.
pub fn write_sigma_csv<const D: usize>(
    mut out: impl Write,
    points: &[Point<D>],
    truth: Option<&[f64]>,
    recovered: &[f64],
) -> std::io::Result<()> {
    let axes = ["x", "y", "z"];
    let header: Vec<&str> = axes[..D].to_vec();
    writeln!(out, "{},sigma_true,sigma_recovered,abs_error", header.join(","))?;
    for (j, p) in points.iter().enumerate() {
        let coords: Vec<String> = p.iter().map(|c| format!("{c:.12e}")).collect();
        let (t, e) = match truth {
            Some(t) => (
                format!("{:.12e}", t[j]),
                format!("{:.12e}", (recovered[j] - t[j]).abs()),
            ),
            None => (String::new(), String::new()),
        };
        writeln!(out, "{},{t},{:.12e},{e}", coords.join(","), recovered[j])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn ring(n: usize, r: f64) -> Vec<Point<2>> {
        (0..n)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / n as f64;
                Vector2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    #[test]
    fn basis_values_and_gradients() {
        let b = SigmaBasis::new(vec![Vector2::new(0.5, 0.0)]);
        assert_eq!(b.l(0, &Vector2::new(0.5, 0.0)), 1.0);
        assert!(b.grad_l(0, &Vector2::new(0.5, 0.0)).is_none());
        let g = b.grad_l(0, &Vector2::new(0.5, 2.0)).unwrap();
        assert!((g - Vector2::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_transport_leaves_boundary_interpolation() {
        let centers = ring(12, 1.0);
        let basis = SigmaBasis::new(centers.clone());
        let colloc = ring(5, 0.3);
        let (t, hits) = transport_rows(&colloc, &[0.0; 5], &[Vector2::zeros(); 5], &basis);
        assert_eq!(hits, 0);
        assert!(t.iter().all(|v| *v == 0.0));
        let sigma_star: Vec<f64> = centers.iter().map(|p| (1.0 + p.x + p.y).powi(2)).collect();
        let boundary = DMatrix::from_fn(12, 12, |m, i| basis.l(i, &centers[m]));
        let sys = TransportSystem::new(t, boundary, sigma_star.clone(), 0, 0.0);
        let field = solve_sigma(&sys, &basis, 0.0).unwrap();
        for (p, s) in centers.iter().zip(&sigma_star) {
            assert!((field.raw(p) - s).abs() < 1e-8);
        }
    }

    #[test]
    fn row_scaling_does_not_move_the_minimizer() {
        let centers: Vec<Point<2>> = ring(10, 1.0).into_iter().chain(ring(4, 0.4)).collect();
        let basis = SigmaBasis::new(centers);
        let colloc = ring(7, 0.6);
        let mu: Vec<f64> = (0..7).map(|p| 0.3 + 0.1 * p as f64).collect();
        let grads: Vec<Point<2>> = colloc.iter().map(|x| Vector2::new(1.0 + x.y, 0.5 - x.x)).collect();
        let (t, _) = transport_rows(&colloc, &mu, &grads, &basis);
        let bpts = ring(10, 1.0);
        let boundary = DMatrix::from_fn(10, basis.len(), |m, i| basis.l(i, &bpts[m]));
        let star: Vec<f64> = bpts.iter().map(|p| 2.0 + p.x).collect();
        let a = solve_sigma(
            &TransportSystem::new(t.clone(), boundary.clone(), star.clone(), 0, 1.0),
            &basis,
            0.0,
        )
        .unwrap();
        let b = solve_sigma(&TransportSystem::new(t * 2.0, boundary, star, 0, 1.0), &basis, 0.0).unwrap();
        let probe = Vector2::new(0.1, -0.2);
        assert!((a.raw(&probe) - b.raw(&probe)).abs() < 1e-6 * a.raw(&probe).abs());
    }

    #[test]
    fn clamp_keeps_values_positive() {
        let basis = SigmaBasis::new(vec![Vector2::zeros()]);
        let field = SigmaField {
            basis,
            coefficients: vec![-1.0],
            floor: 0.01,
            ridge: 0.0,
            ridge_fallback: false,
        };
        let (v, n) = field.evaluate(&[Vector2::new(0.2, 0.0), Vector2::new(1.0, 1.0)]);
        assert_eq!(n, 2);
        assert!(v.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_sigma_csv(&mut buf, &[Vector2::new(0.5, 0.25)], Some(&[2.0]), &[2.5]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,sigma_true,sigma_recovered,abs_error");
        assert_eq!(lines[1].split(',').count(), 5);
    }
}
