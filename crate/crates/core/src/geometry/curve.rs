use super::{golden_section, Boundary, BoundaryFrame, BoundaryParam, GridKind, Projection, QuadratureGrid};
use crate::Point;
use nalgebra::{DMatrix, Vector2};
use std::f64::consts::TAU;
use std::fmt::Debug;

/// A `2π`-periodic parametrisation of a closed planar curve.
pub trait CurveShape: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn point(&self, t: f64) -> Vector2<f64>;
    fn d1(&self, t: f64) -> Vector2<f64>;

    /// Second derivative. The default is a centred difference of [`d1`]
    /// with step `1e-6`, accurate to roughly `1e-9`; shapes with a closed
    /// form should override it.
    ///
    /// [`d1`]: CurveShape::d1
    fn d2(&self, t: f64) -> Vector2<f64> {
        let h = 1e-6;
        (self.d1(t + h) - self.d1(t - h)) / (2.0 * h)
    }
}

/// The heart-shaped curve
/// `x(t) = (0.5 cos t, 0.5 sin t − 0.4 sin² t + 0.4) + (1, 0.8)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Heart;

impl CurveShape for Heart {
    fn name(&self) -> &str {
        "heart2d"
    }

    fn point(&self, t: f64) -> Vector2<f64> {
        let (s, c) = t.sin_cos();
        Vector2::new(0.5 * c + 1.0, 0.5 * s - 0.4 * s * s + 0.4 + 0.8)
    }

    fn d1(&self, t: f64) -> Vector2<f64> {
        let (s, c) = t.sin_cos();
        Vector2::new(-0.5 * s, 0.5 * c - 0.8 * s * c)
    }

    fn d2(&self, t: f64) -> Vector2<f64> {
        let (s, c) = t.sin_cos();
        Vector2::new(-0.5 * c, -0.5 * s - 0.8 * (2.0 * t).cos())
    }
}

/// Circle of radius `radius` centred at `center`.
#[derive(Debug, Clone, Copy)]
pub struct Circle {
    pub center: Vector2<f64>,
    pub radius: f64,
}

impl Circle {
    pub fn new(radius: f64) -> Self {
        Self {
            center: Vector2::zeros(),
            radius,
        }
    }
}

impl CurveShape for Circle {
    fn name(&self) -> &str {
        "circle"
    }

    fn point(&self, t: f64) -> Vector2<f64> {
        self.center + self.radius * Vector2::new(t.cos(), t.sin())
    }

    fn d1(&self, t: f64) -> Vector2<f64> {
        self.radius * Vector2::new(-t.sin(), t.cos())
    }

    fn d2(&self, t: f64) -> Vector2<f64> {
        -self.radius * Vector2::new(t.cos(), t.sin())
    }
}

/// Curve given by truncated Fourier series in each coordinate:
/// `x_i(t) = a_i0 + Σ_k (a_ik cos kt + b_ik sin kt)`.
#[derive(Debug, Clone)]
pub struct FourierCurve {
    /// Constant terms.
    pub offset: Vector2<f64>,
    /// Cosine coefficients, `cos[k-1]` multiplies `cos kt`.
    pub cos: Vec<Vector2<f64>>,
    /// Sine coefficients, `sin[k-1]` multiplies `sin kt`.
    pub sin: Vec<Vector2<f64>>,
}

impl FourierCurve {
    fn eval(&self, t: f64, order: u32) -> Vector2<f64> {
        let mut v = if order == 0 { self.offset } else { Vector2::zeros() };
        let terms = self.cos.len().max(self.sin.len());
        for k in 1..=terms {
            let kf = k as f64;
            let (s, c) = (kf * t).sin_cos();
            let a = self.cos.get(k - 1).copied().unwrap_or_else(Vector2::zeros);
            let b = self.sin.get(k - 1).copied().unwrap_or_else(Vector2::zeros);
            // d^m/dt^m of (a cos kt + b sin kt)
            let (ca, cb) = match order % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            v += kf.powi(order as i32) * (a * ca + b * cb);
        }
        v
    }
}

impl CurveShape for FourierCurve {
    fn name(&self) -> &str {
        "fourier2d"
    }

    fn point(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 0)
    }

    fn d1(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 1)
    }

    fn d2(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 2)
    }
}

const SAMPLES: usize = 1024;

/// A closed planar boundary built from a [`CurveShape`].
#[derive(Debug)]
pub struct Curve {
    shape: Box<dyn CurveShape>,
    /// `+1` for counter-clockwise parametrisations, `-1` otherwise.
    orientation: f64,
    samples: Vec<Vector2<f64>>,
    diameter: f64,
    center: Vector2<f64>,
}

impl Curve {
    pub fn new(shape: impl CurveShape + 'static) -> Self {
        Self::from_boxed(Box::new(shape))
    }

    pub fn from_boxed(shape: Box<dyn CurveShape>) -> Self {
        let samples: Vec<_> = (0..SAMPLES)
            .map(|i| shape.point(TAU * i as f64 / SAMPLES as f64))
            .collect();
        // signed area and centroid by the trapezoid rule
        let h = TAU / SAMPLES as f64;
        let mut area = 0.0;
        let mut moment = Vector2::zeros();
        for i in 0..SAMPLES {
            let t = h * i as f64;
            let p = shape.point(t);
            let d = shape.d1(t);
            let cross = p.x * d.y - p.y * d.x;
            area += 0.5 * cross * h;
            moment += p * cross * h / 3.0;
        }
        let orientation = area.signum();
        let center = moment / area;
        let mut diameter: f64 = 0.0;
        for (i, a) in samples.iter().enumerate() {
            for b in &samples[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        Self {
            shape,
            orientation,
            samples,
            diameter,
            center,
        }
    }

    pub fn heart() -> Self {
        Self::new(Heart)
    }

    pub fn circle(radius: f64) -> Self {
        Self::new(Circle::new(radius))
    }

    pub fn shape(&self) -> &dyn CurveShape {
        self.shape.as_ref()
    }

    pub fn point(&self, t: f64) -> Vector2<f64> {
        self.shape.point(t)
    }

    pub fn d1(&self, t: f64) -> Vector2<f64> {
        self.shape.d1(t)
    }

    pub fn d2(&self, t: f64) -> Vector2<f64> {
        self.shape.d2(t)
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.shape.d1(t).norm()
    }

    pub fn normal(&self, t: f64) -> Vector2<f64> {
        let d = self.shape.d1(t);
        self.orientation * Vector2::new(d.y, -d.x) / d.norm()
    }

    /// Signed curvature, positive where the domain is locally convex.
    pub fn curvature(&self, t: f64) -> f64 {
        let d1 = self.shape.d1(t);
        let d2 = self.shape.d2(t);
        self.orientation * (d1.x * d2.y - d1.y * d2.x) / d1.norm().powi(3)
    }

    /// Perimeter by the trapezoid rule with `2 * n_half` points.
    pub fn perimeter(&self, n_half: usize) -> f64 {
        let n = 2 * n_half;
        (0..n).map(|i| self.speed(TAU * i as f64 / n as f64)).sum::<f64>() * TAU / n as f64
    }

    fn newton_foot(&self, p: &Vector2<f64>, t0: f64) -> Option<f64> {
        let mut t = t0;
        for _ in 0..40 {
            let x = self.shape.point(t) - p;
            let d1 = self.shape.d1(t);
            let d2 = self.shape.d2(t);
            let f = x.dot(&d1);
            let df = d1.norm_squared() + x.dot(&d2);
            if df <= 0.0 {
                return None;
            }
            let step = (f / df).clamp(-0.25, 0.25);
            t -= step;
            if step.abs() < 1e-14 {
                return Some(t);
            }
        }
        Some(t)
    }

    fn global_foot(&self, p: &Vector2<f64>) -> f64 {
        let (best, _) = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - p).norm_squared()))
            .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        let h = TAU / SAMPLES as f64;
        let tb = best as f64 * h;
        let tol = 1e-10 * self.diameter / self.speed(tb).max(1e-12);
        let t = golden_section(tb - h, tb + h, tol.max(1e-15), |t| {
            (self.shape.point(t) - p).norm_squared()
        });
        // polish; golden section alone leaves ~sqrt(eps) in the parameter
        match self.newton_foot(p, t) {
            Some(tn) if (tn - t).abs() < h => tn,
            _ => t,
        }
    }

    fn frame_at(&self, t: f64) -> BoundaryFrame<2> {
        let t = t.rem_euclid(TAU);
        BoundaryFrame {
            param: BoundaryParam::curve(t),
            point: self.shape.point(t),
            normal: self.normal(t),
            jacobian: self.speed(t),
        }
    }
}

impl Boundary<2> for Curve {
    fn name(&self) -> &str {
        self.shape.name()
    }

    fn frame(&self, param: BoundaryParam) -> BoundaryFrame<2> {
        self.frame_at(param.t())
    }

    fn project(&self, p: &Point<2>, hint: Option<BoundaryParam>) -> Projection<2> {
        let t = match hint {
            Some(h) => match self.newton_foot(p, h.t()) {
                Some(t) => {
                    // Newton converges to a local foot; accept it only if it is
                    // no worse than the nearest dense sample.
                    let d = (self.shape.point(t) - p).norm_squared();
                    let coarse = self
                        .samples
                        .iter()
                        .map(|s| (s - p).norm_squared())
                        .fold(f64::INFINITY, f64::min);
                    if d <= coarse * (1.0 + 1e-9) + 1e-300 {
                        t
                    } else {
                        self.global_foot(p)
                    }
                }
                None => self.global_foot(p),
            },
            None => self.global_foot(p),
        };
        let frame = self.frame_at(t);
        let depth = (frame.point - p).dot(&frame.normal);
        Projection { frame, depth }
    }

    fn diameter(&self) -> f64 {
        self.diameter
    }

    fn center(&self) -> Point<2> {
        self.center
    }

    fn quadrature(&self, resolution: usize) -> QuadratureGrid<2> {
        super::boundary_grid_2d(self, resolution)
    }

    fn spread_params(&self, count: usize) -> Vec<BoundaryParam> {
        (0..count)
            .map(|i| BoundaryParam::curve(TAU * i as f64 / count as f64))
            .collect()
    }

    /// Entries `2·K₂₂(t_i, t_j)`, diagonal from the curvature limit.
    fn adjoint_double_layer(&self, grid: &QuadratureGrid<2>) -> DMatrix<f64> {
        let n_half = match grid.kind {
            GridKind::Trapezoid { n_half } => n_half,
            _ => return crate::levi_operators::adjoint_double_layer_subtracted(grid),
        };
        let n = grid.len();
        DMatrix::from_fn(n, n, |i, j| {
            2.0 * crate::kernels::k22_kernel(grid.params[i].t(), grid.params[j].t(), self, n_half)
        })
    }

    fn star_mesh(&self, rings: usize, angular: usize) -> super::SimplexMesh<2> {
        super::star_mesh_2d(self, rings, angular)
    }

    fn radial_extent(&self, dir: &Point<2>) -> f64 {
        let c = self.center;
        let cross = |t: f64| {
            let v = self.shape.point(t) - c;
            dir.x * v.y - dir.y * v.x
        };
        let h = TAU / SAMPLES as f64;
        let mut best: Option<f64> = None;
        // sample values shared between neighbouring intervals, so a crossing
        // at t = 0 ≡ 2π is not lost to rounding
        let f: Vec<f64> = (0..SAMPLES).map(|i| cross(i as f64 * h)).collect();
        for i in 0..SAMPLES {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let (fa, fb) = (f[i], f[(i + 1) % SAMPLES]);
            if fa == 0.0 || fa.signum() != fb.signum() {
                // bisection on the sign change, keep the crossing in front
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                if fa == 0.0 {
                    hi = a;
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let fm = cross(mid);
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                let v = self.shape.point(0.5 * (lo + hi)) - c;
                if v.dot(dir) > 0.0 {
                    let r = v.norm();
                    best = Some(best.map_or(r, |b: f64| b.min(r)));
                }
            }
        }
        best.unwrap_or(0.0)
    }
}
