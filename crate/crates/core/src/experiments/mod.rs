//! Manufactured test cases, noise, error metrics and the two-step pipeline.

mod pipeline;

pub use pipeline::{
    prepare, run_single, step1, PipelineSettings, Prepared, ReconstructionReport, RunOutcome, TraceMode, STAGES,
};

use crate::geometry::{Boundary, BoundaryFrame, Curve, QuadratureGrid, SimplexMesh, Surface};
use crate::{Error, Point, Result};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_3;
use std::sync::Arc;

/// Exact `(σ, u, h)` on a domain with `∇·(σ∇u) = 0` and the Robin data
/// `g = σ∂_νu + hu` they induce.
#[derive(Debug, Clone)]
pub struct ManufacturedCase<const D: usize> {
    pub name: &'static str,
    pub eps: f64,
    pub geom: Arc<dyn Boundary<D>>,
    pub sigma: fn(&Point<D>) -> f64,
    pub grad_sigma: fn(&Point<D>) -> Point<D>,
    pub u: fn(&Point<D>) -> f64,
    pub grad_u: fn(&Point<D>) -> Point<D>,
    pub lap_u: fn(&Point<D>) -> f64,
    pub h: fn(&Point<D>) -> f64,
}

impl<const D: usize> ManufacturedCase<D> {
    pub fn g(&self, frame: &BoundaryFrame<D>) -> f64 {
        let x = &frame.point;
        (self.sigma)(x) * (self.grad_u)(x).dot(&frame.normal) + (self.h)(x) * (self.u)(x)
    }

    pub fn dnu(&self, frame: &BoundaryFrame<D>) -> f64 {
        (self.grad_u)(&frame.point).dot(&frame.normal)
    }

    /// `∇·(σ∇u)` by central differences of the analytic flux.
    pub fn divergence_fd(&self, x: &Point<D>, step: f64) -> f64 {
        let flux = |p: &Point<D>| (self.grad_u)(p) * (self.sigma)(p);
        (0..D)
            .map(|i| {
                let mut e = Point::<D>::zeros();
                e[i] = step;
                (flux(&(x + e))[i] - flux(&(x - e))[i]) / (2.0 * step)
            })
            .sum()
    }
}

fn s2(x: &Point<2>) -> f64 {
    1.0 + x[0] + x[1]
}

/// Heart-shaped domain with `σ = (1+x+y)²`, `u = −(x²−y²)/(1+x+y) − 2`,
/// `h = 2x + y² + 2`, layer width `1/10`.
pub fn case_heart_2d() -> ManufacturedCase<2> {
    ManufacturedCase {
        name: "heart2d",
        eps: 0.1,
        geom: Arc::new(Curve::heart()),
        sigma: |x| s2(x).powi(2),
        grad_sigma: |x| Vector2::new(1.0, 1.0) * (2.0 * s2(x)),
        u: |x| -(x[0] * x[0] - x[1] * x[1]) / s2(x) - 2.0,
        grad_u: |x| {
            let (s, q) = (s2(x), x[0] * x[0] - x[1] * x[1]);
            Vector2::new(-(2.0 * x[0] * s - q) / (s * s), (2.0 * x[1] * s + q) / (s * s))
        },
        lap_u: |x| {
            let (s, q) = (s2(x), x[0] * x[0] - x[1] * x[1]);
            4.0 * (x[0] - x[1]) / (s * s) - 4.0 * q / (s * s * s)
        },
        h: |x| 2.0 * x[0] + x[1] * x[1] + 2.0,
    }
}

fn s3(x: &Point<3>) -> f64 {
    2.0 + 0.5 * x[0] + 0.5 * x[1] + x[2]
}

fn w3(x: &Point<3>) -> f64 {
    x[0].exp() * (x[1] + FRAC_PI_3).sin()
}

fn grad_w3(x: &Point<3>) -> Vector3<f64> {
    let e = x[0].exp();
    Vector3::new(e * (x[1] + FRAC_PI_3).sin(), e * (x[1] + FRAC_PI_3).cos(), 0.0)
}

/// Pinched ball with `σ = (2+x/2+y/2+z)²`,
/// `u = eˣ sin(y+π/3)/(2+x/2+y/2+z) − 5`, `h = x²+2y+z+4`, layer width `1/12`.
pub fn case_pinched_ball_3d() -> ManufacturedCase<3> {
    ManufacturedCase {
        name: "pinched_ball3d",
        eps: 1.0 / 12.0,
        geom: Arc::new(Surface::pinched_ball()),
        sigma: |x| s3(x).powi(2),
        grad_sigma: |x| Vector3::new(0.5, 0.5, 1.0) * (2.0 * s3(x)),
        u: |x| w3(x) / s3(x) - 5.0,
        grad_u: |x| {
            let s = s3(x);
            grad_w3(x) / s - Vector3::new(0.5, 0.5, 1.0) * (w3(x) / (s * s))
        },
        lap_u: |x| {
            let s = s3(x);
            -2.0 * grad_w3(x).dot(&Vector3::new(0.5, 0.5, 1.0)) / (s * s) + 3.0 * w3(x) / (s * s * s)
        },
        h: |x| x[0] * x[0] + 2.0 * x[1] + x[2] + 4.0,
    }
}

/// `U + δ·rand` with independent uniform `(−1, 1)` draws, in node order.
pub fn add_noise(values: &[f64], delta: f64, seed: u64) -> Vec<f64> {
    add_noise_with(values, delta, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// As [`add_noise`], drawing from an existing stream.
pub fn add_noise_with(values: &[f64], delta: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if delta == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| v + delta * rng.gen_range(-1.0..1.0)).collect()
}

/// `√(Σ_j w_j |(h_j − h*_j)/h*_j|²)` over the boundary grid.
pub fn relative_error_boundary<const D: usize>(rec: &[f64], truth: &[f64], grid: &QuadratureGrid<D>) -> Result<f64> {
    if rec.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::Dimension("boundary error: node count mismatch".into()));
    }
    let mut s = 0.0;
    for j in 0..grid.len() {
        if truth[j] == 0.0 {
            return Err(Error::Domain(format!("exact value vanishes at boundary node {j}")));
        }
        s += grid.weights[j] * ((rec[j] - truth[j]) / truth[j]).powi(2);
    }
    Ok(s.sqrt())
}

/// `√(Σ_l |S_l| · mean over vertices of |(σ − σ*)/σ*|²)`.
pub fn relative_error_domain<const D: usize>(rec: &[f64], truth: &[f64], mesh: &SimplexMesh<D>) -> Result<f64> {
    if rec.len() != mesh.points.len() || truth.len() != mesh.points.len() {
        return Err(Error::Dimension("domain error: vertex count mismatch".into()));
    }
    if let Some(j) = truth.iter().position(|t| *t == 0.0) {
        return Err(Error::Domain(format!("exact value vanishes at vertex {j}")));
    }
    let rel: Vec<f64> = rec.iter().zip(truth).map(|(r, t)| ((r - t) / t).powi(2)).collect();
    Ok(mesh.integrate_vertex_values(&rel).sqrt())
}

/// Observed extremes of the manufactured-case invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub samples: usize,
    /// `max |∇·(σ∇u)|` relative to `max(|∇σ·∇u| + σ|Δu|)`.
    pub divergence_residual: f64,
    pub max_g: f64,
    /// Fraction of boundary samples with `g ≥ 0`.
    pub g_nonnegative_fraction: f64,
    pub max_u: f64,
    pub min_grad_u: f64,
}

impl InvariantReport {
    pub fn divergence_ok(&self) -> bool {
        self.divergence_residual <= 1e-5
    }

    pub fn g_negative(&self) -> bool {
        self.max_g < 0.0
    }

    pub fn u_negative(&self) -> bool {
        self.max_u < 0.0
    }

    pub fn grad_nonvanishing(&self) -> bool {
        self.min_grad_u > 0.0
    }
}

/// Uniform random points in the domain by rejection from its bounding box.
pub fn random_interior_points<const D: usize>(geom: &dyn Boundary<D>, count: usize, seed: u64) -> Vec<Point<D>> {
    let nodes = geom.quadrature(if D == 2 { 128 } else { 16 }).nodes;
    let mut lo = Point::<D>::repeat(f64::INFINITY);
    let mut hi = Point::<D>::repeat(f64::NEG_INFINITY);
    for p in &nodes {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Point::<D>::from_fn(|i, _| rng.gen_range(lo[i]..hi[i]));
        if geom.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Check `∇·(σ∇u) = 0`, `u < 0`, `|∇u| > 0` at random interior points and
/// `g < 0` at random boundary points.
pub fn check_invariants<const D: usize>(case: &ManufacturedCase<D>, samples: usize, seed: u64) -> InvariantReport {
    let pts = random_interior_points(case.geom.as_ref(), samples, seed);
    let mut scale: f64 = 0.0;
    let mut div: f64 = 0.0;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_grad = f64::INFINITY;
    for x in &pts {
        let gu = (case.grad_u)(x);
        scale = scale.max(((case.grad_sigma)(x).dot(&gu)).abs() + (case.sigma)(x) * (case.lap_u)(x).abs());
        div = div.max(case.divergence_fd(x, 1e-4).abs());
        max_u = max_u.max((case.u)(x));
        min_grad = min_grad.min(gu.norm());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut max_g = f64::NEG_INFINITY;
    let mut nonneg = 0;
    for _ in 0..samples {
        let param = if D == 2 {
            crate::geometry::BoundaryParam::curve(rng.gen_range(0.0..std::f64::consts::TAU))
        } else {
            let c: f64 = rng.gen_range(-1.0..1.0);
            crate::geometry::BoundaryParam::surface(c.acos(), rng.gen_range(0.0..std::f64::consts::TAU))
        };
        let frame = case.geom.frame(param);
        let g = case.g(&frame);
        max_g = max_g.max(g);
        max_u = max_u.max((case.u)(&frame.point));
        if g >= 0.0 {
            nonneg += 1;
        }
    }
    InvariantReport {
        samples,
        divergence_residual: div / scale,
        max_g,
        g_nonnegative_fraction: nonneg as f64 / samples as f64,
        max_u,
        min_grad_u: min_grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{star_mesh_2d, Boundary};
    use std::f64::consts::PI;

    #[test]
    fn case_reference_values() {
        let c = case_heart_2d();
        assert_eq!((c.sigma)(&Vector2::new(0.0, 0.0)), 1.0);
        assert_eq!((c.sigma)(&Vector2::new(1.0, 1.0)), 9.0);
        assert_eq!((c.u)(&Vector2::new(0.0, 0.0)), -2.0);
        assert!(((c.sigma)(&Vector2::new(1.5, 1.2)) - 13.69).abs() < 1e-12);
        let b = case_pinched_ball_3d();
        assert_eq!((b.sigma)(&Vector3::zeros()), 4.0);
        assert!(((b.u)(&Vector3::zeros()) - ((PI / 3.0).sin() / 2.0 - 5.0)).abs() < 1e-14);
        assert!(((b.u)(&Vector3::zeros()) + 4.5670).abs() < 1e-4);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        fn check<const D: usize>(c: &ManufacturedCase<D>, x: Point<D>) {
            let h = 1e-5;
            let mut lap = 0.0;
            for i in 0..D {
                let mut e = Point::<D>::zeros();
                e[i] = h;
                let d = ((c.u)(&(x + e)) - (c.u)(&(x - e))) / (2.0 * h);
                assert!((d - (c.grad_u)(&x)[i]).abs() < 1e-7);
                let ds = ((c.sigma)(&(x + e)) - (c.sigma)(&(x - e))) / (2.0 * h);
                assert!((ds - (c.grad_sigma)(&x)[i]).abs() < 1e-6);
                let e2 = e * 100.0;
                lap += ((c.u)(&(x + e2)) - 2.0 * (c.u)(&x) + (c.u)(&(x - e2))) / (1e-6);
            }
            assert!((lap - (c.lap_u)(&x)).abs() < 1e-4, "{lap} vs {}", (c.lap_u)(&x));
        }
        check(&case_heart_2d(), Vector2::new(0.9, 0.8));
        check(&case_pinched_ball_3d(), Vector3::new(0.1, -0.2, 0.3));
    }

    #[test]
    fn robin_data_reproduce_h() {
        let c = case_heart_2d();
        let f = c.geom.frame(crate::geometry::BoundaryParam::curve(0.7));
        let h = (c.g(&f) - (c.sigma)(&f.point) * c.dnu(&f)) / (c.u)(&f.point);
        assert!((h - (c.h)(&f.point)).abs() < 1e-13);
    }

    #[test]
    fn noise_contract() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        assert_eq!(add_noise(&v, 0.0, 3), v);
        let a = add_noise(&v, 0.05, 3);
        let b = add_noise(&v, 0.05, 3);
        assert_eq!(a, b);
        assert!(a.iter().zip(&v).all(|(x, y)| (x - y).abs() <= 0.05));
        assert_ne!(a, add_noise(&v, 0.05, 4));
    }

    #[test]
    fn metric_reference_values() {
        let circle = Curve::circle(1.0);
        let grid = circle.quadrature(64);
        let truth: Vec<f64> = grid.nodes.iter().map(|p| 2.0 + p[0]).collect();
        let rec: Vec<f64> = truth.iter().map(|t| 1.01 * t).collect();
        assert_eq!(relative_error_boundary(&truth, &truth, &grid).unwrap(), 0.0);
        let e = relative_error_boundary(&rec, &truth, &grid).unwrap();
        assert!((e - 0.01 * (2.0 * PI).sqrt()).abs() < 1e-12);
        let mesh = star_mesh_2d(&circle, 20, 400);
        let t: Vec<f64> = mesh.points.iter().map(|p| 3.0 + p[1]).collect();
        let r: Vec<f64> = t.iter().map(|v| 1.1 * v).collect();
        let e = relative_error_domain(&r, &t, &mesh).unwrap();
        assert!((e - 0.1 * PI.sqrt()).abs() < 1e-4);
        assert!(relative_error_domain(&r, &vec![0.0; t.len()], &mesh).is_err());
    }

    #[test]
    fn invariants_hold_in_3d() {
        let rep = check_invariants(&case_pinched_ball_3d(), 200, 1);
        assert!(rep.divergence_ok(), "{rep:?}");
        assert!(rep.g_negative() && rep.u_negative() && rep.grad_nonvanishing());
    }

    #[test]
    fn heart_case_has_positive_g_somewhere() {
        // the 2D configuration violates g < 0 on a short arc near t ≈ 2.7
        let c = case_heart_2d();
        let f = c.geom.frame(crate::geometry::BoundaryParam::curve(2.703));
        assert!(c.g(&f) > 0.5);
        let rep = check_invariants(&c, 300, 2);
        assert!(rep.divergence_ok() && rep.u_negative() && rep.grad_nonvanishing());
        assert!(rep.g_nonnegative_fraction > 0.0 && rep.g_nonnegative_fraction < 0.1);
    }
}
