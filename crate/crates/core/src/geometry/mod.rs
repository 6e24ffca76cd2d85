//! Parametric domain boundaries, boundary quadrature grids and interior
//! layer nodes.
//!
//! Two families are supported: closed planar curves `t ↦ x(t)`, `t ∈ [0, 2π)`
//! ([`Curve`]) and star-shaped closed surfaces `q(θ, φ) = r(θ, φ) x̂(θ, φ)`
//! ([`Surface`]). Both implement [`Boundary`], which is what the rest of the
//! crate is generic over.

mod curve;
mod grid;
mod layer;
mod mesh;
mod surface;

pub use curve::{Circle, Curve, CurveShape, FourierCurve, Heart};
pub use grid::{boundary_grid_2d, boundary_grid_3d, GridKind, QuadratureGrid};
pub use layer::{layer_measure, layer_nodes, InteriorNodeSet};
pub use mesh::{icosphere, star_mesh_2d, star_mesh_3d, SimplexMesh};
pub use surface::{PinchedBall, RadialShape, Sphere, Surface};

use crate::Point;
use std::fmt::Debug;

/// Boundary parameter: `[t, 0]` on curves, `[θ, φ]` on surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParam(pub [f64; 2]);

impl BoundaryParam {
    pub fn curve(t: f64) -> Self {
        Self([t, 0.0])
    }

    pub fn surface(theta: f64, phi: f64) -> Self {
        Self([theta, phi])
    }

    pub fn t(&self) -> f64 {
        self.0[0]
    }
}

/// Local boundary data at one parameter value.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFrame<const D: usize> {
    pub param: BoundaryParam,
    pub point: Point<D>,
    /// Outward unit normal.
    pub normal: Point<D>,
    /// `|x'(t)|` on curves, `|q_θ × q_φ| / sin θ` on surfaces.
    pub jacobian: f64,
}

/// Nearest-boundary-point query result.
#[derive(Debug, Clone, Copy)]
pub struct Projection<const D: usize> {
    pub frame: BoundaryFrame<D>,
    /// Signed distance to the boundary, positive inside the domain.
    pub depth: f64,
}

/// A closed, smooth boundary of a bounded domain in `ℝ^D`.
pub trait Boundary<const D: usize>: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn frame(&self, param: BoundaryParam) -> BoundaryFrame<D>;

    /// Nearest boundary point to `p`. A parameter hint close to the answer
    /// makes the search local and cheap.
    fn project(&self, p: &Point<D>, hint: Option<BoundaryParam>) -> Projection<D>;

    fn contains(&self, p: &Point<D>) -> bool {
        self.project(p, None).depth > 0.0
    }

    /// Unsigned distance to the boundary.
    fn distance(&self, p: &Point<D>) -> f64 {
        self.project(p, None).depth.abs()
    }

    fn diameter(&self) -> f64;

    /// A point well inside the domain, with respect to which the domain is
    /// star-shaped.
    fn center(&self) -> Point<D>;

    /// Boundary quadrature grid at the given resolution (`ñ` on curves, Gauss
    /// order `N` on surfaces).
    fn quadrature(&self, resolution: usize) -> QuadratureGrid<D>;

    /// `count` quasi-uniformly spread boundary parameters.
    fn spread_params(&self, count: usize) -> Vec<BoundaryParam>;

    /// Radial extent of the domain in the direction of the unit vector `dir`
    /// from [`Boundary::center`]; used to build star-shaped interior meshes.
    fn radial_extent(&self, dir: &Point<D>) -> f64;

    /// Star-shaped simplex mesh with `rings` radial shells; `angular` is the
    /// number of angles on curves and the icosphere level on surfaces.
    fn star_mesh(&self, rings: usize, angular: usize) -> SimplexMesh<D>;

    /// Nyström matrix of `2∮∂Φ(x,y)/∂ν(x) ψ(y) ds(y)` on `grid`.
    ///
    /// The default handles the weakly singular diagonal by subtracting
    /// `ψ(x)·2∮∂Φ/∂ν(y) ds = −ψ(x)`; curves override it with the
    /// analytic diagonal limit.
    fn adjoint_double_layer(&self, grid: &QuadratureGrid<D>) -> nalgebra::DMatrix<f64> {
        crate::levi_operators::adjoint_double_layer_subtracted(grid)
    }

    /// Point at signed depth `depth` along the inward normal of `frame`.
    fn offset(&self, frame: &BoundaryFrame<D>, depth: f64) -> Point<D> {
        frame.point - frame.normal * depth
    }
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_section(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
