use super::{Boundary, BoundaryFrame, BoundaryParam, Projection, QuadratureGrid};
use crate::Point;
use nalgebra::Vector3;
use std::f64::consts::{PI, TAU};
use std::fmt::Debug;

/// Radius function of a star-shaped surface, given on unit directions.
///
/// `radius_grad` is the gradient of the degree-zero extension
/// `x ↦ r(x/|x|)` at a unit vector, which is tangent to the sphere.
pub trait RadialShape: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn radius(&self, w: &Vector3<f64>) -> f64;
    fn radius_grad(&self, w: &Vector3<f64>) -> Vector3<f64>;
}

/// `r(θ, φ) = 0.5·sqrt(1.5 + 0.5 cos 2φ (cos 2θ − 1))`.
///
/// In Cartesian directions this is `0.5·sqrt(1.5 − (w_x² − w_y²))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PinchedBall;

impl RadialShape for PinchedBall {
    fn name(&self) -> &str {
        "pinched_ball3d"
    }

    fn radius(&self, w: &Vector3<f64>) -> f64 {
        0.5 * (1.5 - (w.x * w.x - w.y * w.y)).sqrt()
    }

    fn radius_grad(&self, w: &Vector3<f64>) -> Vector3<f64> {
        let a = w.x * w.x - w.y * w.y;
        let grad_a = Vector3::new(2.0 * w.x, -2.0 * w.y, 0.0) - 2.0 * a * w;
        -grad_a / (4.0 * (1.5 - a).sqrt())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    pub radius: f64,
}

impl RadialShape for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn radius(&self, _w: &Vector3<f64>) -> f64 {
        self.radius
    }

    fn radius_grad(&self, _w: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
}

pub(crate) fn unit_direction(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

pub(crate) fn direction_angles(w: &Vector3<f64>) -> (f64, f64) {
    let theta = w.z.clamp(-1.0, 1.0).acos();
    let phi = w.y.atan2(w.x).rem_euclid(TAU);
    (theta, phi)
}

/// Star-shaped closed surface `q(θ, φ) = c + r(x̂) x̂`.
#[derive(Debug)]
pub struct Surface {
    shape: Box<dyn RadialShape>,
    center: Vector3<f64>,
    diameter: f64,
}

impl Surface {
    pub fn new(shape: impl RadialShape + 'static) -> Self {
        Self::with_center(Box::new(shape), Vector3::zeros())
    }

    pub fn with_center(shape: Box<dyn RadialShape>, center: Vector3<f64>) -> Self {
        let (nt, np) = (24, 48);
        let mut pts = Vec::with_capacity(nt * np + 2);
        for i in 0..=nt {
            for j in 0..np {
                let w = unit_direction(PI * i as f64 / nt as f64, TAU * j as f64 / np as f64);
                pts.push(shape.radius(&w) * w);
                if i == 0 || i == nt {
                    break;
                }
            }
        }
        let mut diameter: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        Self {
            shape,
            center,
            diameter,
        }
    }

    pub fn pinched_ball() -> Self {
        Self::new(PinchedBall)
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(Sphere { radius })
    }

    pub fn shape(&self) -> &dyn RadialShape {
        self.shape.as_ref()
    }

    fn frame_dir(&self, w: &Vector3<f64>) -> BoundaryFrame<3> {
        let r = self.shape.radius(w);
        let g = self.shape.radius_grad(w);
        let n = w - g / r;
        let nn = n.norm();
        let (theta, phi) = direction_angles(w);
        BoundaryFrame {
            param: BoundaryParam::surface(theta, phi),
            point: self.center + r * w,
            normal: n / nn,
            jacobian: r * r * nn,
        }
    }

    fn radial(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let v = p - self.center;
        let n = v.norm();
        if n == 0.0 {
            Vector3::z()
        } else {
            v / n
        }
    }
}

impl Boundary<3> for Surface {
    fn name(&self) -> &str {
        self.shape.name()
    }

    fn frame(&self, param: BoundaryParam) -> BoundaryFrame<3> {
        let [theta, phi] = param.0;
        let mut f = self.frame_dir(&unit_direction(theta, phi));
        f.param = param;
        f
    }

    /// Foot point by alternating tangent-plane and radial projections.
    ///
    /// The fixed point satisfies `p − y ∥ ν(y)`. Convergence is linear with
    /// rate about `depth · curvature`, so this is meant for points within a
    /// layer much thinner than the smallest radius of curvature. Any
    /// preimage of `p` under `(θ, φ, s) ↦ q(θ, φ) − s ν(θ, φ)` is accepted.
    fn project(&self, p: &Point<3>, hint: Option<BoundaryParam>) -> Projection<3> {
        let w = match hint {
            Some(h) => unit_direction(h.0[0], h.0[1]),
            None => self.radial(p),
        };
        let mut frame = self.frame_dir(&w);
        let tol = 1e-14 * self.diameter;
        for _ in 0..400 {
            let depth = (frame.point - p).dot(&frame.normal);
            let target = p + depth * frame.normal;
            let next = self.frame_dir(&self.radial(&target));
            let moved = (next.point - frame.point).norm();
            frame = next;
            if moved <= tol {
                break;
            }
        }
        let depth = (frame.point - p).dot(&frame.normal);
        Projection { frame, depth }
    }

    fn contains(&self, p: &Point<3>) -> bool {
        let v = p - self.center;
        let n = v.norm();
        n == 0.0 || n < self.shape.radius(&(v / n))
    }

    fn diameter(&self) -> f64 {
        self.diameter
    }

    fn center(&self) -> Point<3> {
        self.center
    }

    fn quadrature(&self, resolution: usize) -> QuadratureGrid<3> {
        super::boundary_grid_3d(self, resolution)
    }

    /// Fibonacci lattice on the parameter sphere.
    fn spread_params(&self, count: usize) -> Vec<BoundaryParam> {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / count as f64;
                BoundaryParam::surface(z.acos(), (golden * i as f64).rem_euclid(TAU))
            })
            .collect()
    }

    fn radial_extent(&self, dir: &Point<3>) -> f64 {
        self.shape.radius(&dir.normalize())
    }

    fn star_mesh(&self, rings: usize, angular: usize) -> super::SimplexMesh<3> {
        super::star_mesh_3d(self, rings, angular)
    }
}
