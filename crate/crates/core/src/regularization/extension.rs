use super::mollifier::ScalarField;
use crate::geometry::{Boundary, BoundaryParam};
use crate::quadrature::lagrange4_uniform;
use crate::{Error, Point, Result};
use nalgebra::DMatrix;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

/// Refuse grids beyond this many samples.
pub const MAX_LAYER_SAMPLES: usize = 40_000_000;

/// Depth samples per normal line, at least; the outer fit needs them.
pub const MIN_DEPTH_SAMPLES: usize = 16;

/// Measurement grid in normal coordinates `X(a) − s ν(a)` over the layer
/// `0 < s < ε`.
///
/// Boundary parameters are `t_i = 2πi/n_a` on curves and
/// `θ_i = (i+½)π/n_a, φ_k = 2πk/n_b` on surfaces; depths `s_l = (l+½)h_s`.
/// Samples are stored parameter-major, depth fastest.
#[derive(Debug, Clone)]
pub struct LayerGrid<const D: usize> {
    geom: Arc<dyn Boundary<D>>,
    pub n_a: usize,
    pub n_b: usize,
    pub n_s: usize,
    pub h_s: f64,
    pub eps: f64,
    /// Half the largest cell diagonal: an upper bound on the distance from
    /// a layer point to the nearest sample.
    pub fill: f64,
}

impl<const D: usize> LayerGrid<D> {
    /// Grid whose neighbouring samples are at most `spacing` apart.
    pub fn new(geom: Arc<dyn Boundary<D>>, eps: f64, spacing: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::param("eps", format!("must be positive, got {eps}")));
        }
        if !(spacing > 0.0) {
            return Err(Error::param("spacing", format!("must be positive, got {spacing}")));
        }
        let n_s = ((eps / spacing).ceil() as usize).max(MIN_DEPTH_SAMPLES);
        let h_s = eps / n_s as f64;
        let mut n_a = ((PI * geom.diameter() / spacing).ceil() as usize).max(8);
        let mut grid = Self {
            geom,
            n_a,
            n_b: 1,
            n_s,
            h_s,
            eps,
            fill: 0.0,
        };
        for _ in 0..4 {
            grid.n_a = n_a;
            grid.n_b = if D == 2 { 1 } else { 2 * n_a };
            if grid.len() > MAX_LAYER_SAMPLES {
                return Err(Error::param(
                    "spacing",
                    format!(
                        "layer grid would need {} samples (limit {MAX_LAYER_SAMPLES})",
                        grid.len()
                    ),
                ));
            }
            let (da, db) = grid.max_neighbour_distance();
            let worst = da.max(db);
            if worst <= spacing {
                grid.fill = 0.5 * (da * da + db * db + h_s * h_s).sqrt();
                return Ok(grid);
            }
            n_a = ((n_a as f64 * worst / spacing * 1.02).ceil() as usize).max(n_a + 1);
        }
        Err(Error::param("spacing", "layer grid refinement did not converge"))
    }

    pub fn len(&self) -> usize {
        self.n_a * self.n_b * self.n_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn geometry(&self) -> &Arc<dyn Boundary<D>> {
        &self.geom
    }

    fn param(&self, a: usize, b: usize) -> BoundaryParam {
        if D == 2 {
            BoundaryParam::curve(TAU * a as f64 / self.n_a as f64)
        } else {
            BoundaryParam::surface(
                PI * (a as f64 + 0.5) / self.n_a as f64,
                TAU * b as f64 / self.n_b as f64,
            )
        }
    }

    /// Fractional grid coordinates of a boundary parameter.
    fn coords(&self, param: BoundaryParam) -> (f64, f64) {
        if D == 2 {
            (param.t().rem_euclid(TAU) / TAU * self.n_a as f64, 0.0)
        } else {
            let [th, ph] = param.0;
            (
                th / PI * self.n_a as f64 - 0.5,
                ph.rem_euclid(TAU) / TAU * self.n_b as f64,
            )
        }
    }

    /// Largest distance between parameter neighbours along each parameter
    /// direction, checked on the boundary and at the deepest sample.
    fn max_neighbour_distance(&self) -> (f64, f64) {
        let mut da: f64 = 0.0;
        let mut db: f64 = 0.0;
        let deep = (self.n_s as f64 - 0.5) * self.h_s;
        let b_step = if D == 2 { 1 } else { 1.max(self.n_b / 512) };
        for depth in [0.0, deep] {
            let at = |a: usize, b: usize| {
                let f = self.geom.frame(self.param(a % self.n_a, b % self.n_b));
                self.geom.offset(&f, depth)
            };
            let a_range = if D == 2 { self.n_a } else { self.n_a - 1 };
            for b in (0..self.n_b).step_by(b_step) {
                for a in 0..a_range {
                    let p = at(a, b);
                    da = da.max((at(a + 1, b) - p).norm());
                    if D == 3 {
                        db = db.max((at(a, b + 1) - p).norm());
                    }
                }
            }
        }
        (da, db)
    }

    /// Sample point with multi-index `(a, b, l)`.
    pub fn point(&self, a: usize, b: usize, l: usize) -> Point<D> {
        let f = self.geom.frame(self.param(a, b));
        self.geom.offset(&f, (l as f64 + 0.5) * self.h_s)
    }

    /// Evaluate `f` at every sample, in storage order.
    pub fn sample(&self, mut f: impl FnMut(&Point<D>) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for a in 0..self.n_a {
            for b in 0..self.n_b {
                let frame = self.geom.frame(self.param(a, b));
                for l in 0..self.n_s {
                    out.push(f(&self.geom.offset(&frame, (l as f64 + 0.5) * self.h_s)));
                }
            }
        }
        out
    }

    /// Cubic interpolation of samples at parameter `param` and depth `s`.
    /// Stencils are periodic in `t` and `φ` and one-sided near the ends of
    /// the `θ` and depth ranges.
    pub fn interpolate(&self, values: &[f64], param: BoundaryParam, s: f64) -> f64 {
        let cs = s / self.h_s - 0.5;
        let s0 = clamp_stencil(cs, self.n_s);
        let ws = lagrange4_uniform(s0, cs);
        let s0 = s0 as usize;
        let n_s = self.n_s;
        self.interpolate_lines(param, |line| (0..4).map(|l| ws[l] * values[line * n_s + s0 + l]).sum())
    }

    /// Cubic interpolation across normal lines of per-line values; line
    /// `(a, b)` has index `a·n_b + b`.
    pub fn interpolate_lines(&self, param: BoundaryParam, line: impl Fn(usize) -> f64) -> f64 {
        let (ca, cb) = self.coords(param);
        if D == 2 {
            let a0 = ca.floor() - 1.0;
            let wa = lagrange4_uniform(a0, ca);
            return wa
                .iter()
                .enumerate()
                .map(|(i, w)| w * line((a0 as i64 + i as i64).rem_euclid(self.n_a as i64) as usize))
                .sum();
        }
        let a0 = clamp_stencil(ca, self.n_a);
        let wa = lagrange4_uniform(a0, ca);
        let b0 = cb.floor() - 1.0;
        let wb = lagrange4_uniform(b0, cb);
        let mut sum = 0.0;
        for (i, wai) in wa.iter().enumerate() {
            let a = a0 as usize + i;
            for (j, wbj) in wb.iter().enumerate() {
                let b = (b0 as i64 + j as i64).rem_euclid(self.n_b as i64) as usize;
                sum += wai * wbj * line(a * self.n_b + b);
            }
        }
        sum
    }
}

/// First index of a 4-point stencil around fractional index `x`, kept
/// inside `0..n`.
fn clamp_stencil(x: f64, n: usize) -> f64 {
    ((x.floor() - 1.0).max(0.0)).min(n as f64 - 4.0)
}

/// Extension `Ũ` of layer samples to the outer side of the boundary.
///
/// At depths covered by the samples they are interpolated. Above the first
/// sample and outside the domain, each normal line carries the least-squares
/// quadratic fitted to its samples in the depth window `(0, min(ε, 3α))`.
/// The fit reproduces quadratic normal profiles, so symmetric mollifiers
/// stay unbiased, and it does not amplify sample noise the way pointwise
/// extrapolation does.
#[derive(Debug, Clone)]
pub struct ExtendedField<'a, const D: usize> {
    pub grid: &'a LayerGrid<D>,
    pub values: &'a [f64],
    window: f64,
    fits: Vec<[f64; 3]>,
}

impl<'a, const D: usize> ExtendedField<'a, D> {
    /// Wrap samples for mollification at scale `alpha`; the grid must be
    /// fine enough that every layer point is within `α/4` of a sample.
    pub fn new(grid: &'a LayerGrid<D>, values: &'a [f64], alpha: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} samples for a layer grid of {}",
                values.len(),
                grid.len()
            )));
        }
        let limit = alpha / 4.0;
        if grid.fill > limit {
            return Err(Error::Coverage { fill: grid.fill, limit });
        }
        let n_w = ((3.0 * alpha / grid.h_s).round() as usize).clamp(4, grid.n_s);
        let window = n_w as f64 * grid.h_s;
        let design = DMatrix::from_fn(n_w, 3, |l, k| ((l as f64 + 0.5) / n_w as f64).powi(k as i32));
        let pinv = (design.transpose() * &design)
            .try_inverse()
            .ok_or_else(|| Error::Solve("singular depth fit".into()))?
            * design.transpose();
        let lines = grid.n_a * grid.n_b;
        let fits = (0..lines)
            .map(|line| {
                let v = &values[line * grid.n_s..line * grid.n_s + n_w];
                let mut c = [0.0; 3];
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck = (0..n_w).map(|l| pinv[(k, l)] * v[l]).sum();
                }
                c
            })
            .collect();
        Ok(Self {
            grid,
            values,
            window,
            fits,
        })
    }

    fn profile(&self, param: BoundaryParam, depth: f64) -> f64 {
        if depth >= 0.5 * self.grid.h_s {
            return self.grid.interpolate(self.values, param, depth);
        }
        let x = depth / self.window;
        self.grid.interpolate_lines(param, |line| {
            let c = &self.fits[line];
            c[0] + x * (c[1] + x * c[2])
        })
    }
}

impl<const D: usize> ScalarField<D> for ExtendedField<'_, D> {
    fn value(&self, p: &Point<D>, hint: Option<BoundaryParam>) -> f64 {
        let pr = self.grid.geom.project(p, hint);
        self.profile(pr.frame.param, pr.depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Curve, Surface};
    use nalgebra::{Vector2, Vector3};

    fn heart_grid(spacing: f64) -> LayerGrid<2> {
        LayerGrid::new(Arc::new(Curve::heart()), 0.1, spacing).unwrap()
    }

    #[test]
    fn neighbour_spacing_and_fill() {
        let g = heart_grid(0.01);
        assert!(g.fill <= 0.5 * (2.0f64).sqrt() * 0.01 + 1e-12);
        for a in 0..g.n_a {
            let p = g.point(a, 0, 0);
            let q = g.point((a + 1) % g.n_a, 0, 0);
            assert!((p - q).norm() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn constants_are_preserved_everywhere() {
        let g = heart_grid(0.01);
        let values = vec![-2.5; g.len()];
        let f = ExtendedField::new(&g, &values, 0.05).unwrap();
        for t in [0.1, 1.7, 3.0, 4.5] {
            let fr = g.geom.frame(BoundaryParam::curve(t));
            for d in [-0.04, -0.01, 0.0, 0.02, 0.07] {
                let p = g.geom.offset(&fr, d);
                assert!((f.value(&p, Some(fr.param)) + 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reproduces_samples_at_nodes() {
        let g = heart_grid(0.02);
        let values = g.sample(|p| p[0].sin() + p[1] * p[1]);
        let f = ExtendedField::new(&g, &values, 0.1).unwrap();
        for (a, l) in [(0, 0), (7, 2), (g.n_a - 1, g.n_s - 1)] {
            let p = g.point(a, 0, l);
            let hint = BoundaryParam::curve(TAU * a as f64 / g.n_a as f64);
            let v = f.value(&p, Some(hint));
            assert!((v - values[a * g.n_s + l]).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_profiles_are_continued_exactly() {
        let g = heart_grid(0.01);
        let u = |p: &Point<2>| 1.0 + 0.5 * p[0] - p[1] + 0.3 * p[0] * p[1];
        let values = g.sample(u);
        let f = ExtendedField::new(&g, &values, 0.05).unwrap();
        let fr = g.geom.frame(BoundaryParam::curve(0.9));
        for d in [-0.03, -0.01] {
            let p = g.geom.offset(&fr, d);
            // the bilinear term is not quadratic along the curved normal
            // coordinate lines, so allow interpolation-level error
            assert!((f.value(&p, Some(fr.param)) - u(&p)).abs() < 1e-5);
        }
        let p = Vector2::new(1.0, 0.4);
        let pr = g.geom.project(&p, None);
        assert!(pr.depth > 0.0 && pr.depth < 0.1);
    }

    #[test]
    fn affine_interpolation_error_is_small() {
        let g = heart_grid(0.01);
        let grad = Vector2::new(0.8, -1.2);
        let values = g.sample(|p| grad.dot(p));
        let f = ExtendedField::new(&g, &values, 0.05).unwrap();
        for k in 0..40 {
            let t = 0.157 * k as f64;
            let fr = g.geom.frame(BoundaryParam::curve(t));
            let p = g.geom.offset(&fr, 0.013 + 0.002 * k as f64);
            let err = (f.value(&p, Some(fr.param)) - grad.dot(&p)).abs();
            assert!(err <= 1e-2 * grad.norm() * 0.01, "k = {k}: {err}");
        }
    }

    #[test]
    fn coverage_is_checked() {
        let g = heart_grid(0.02);
        let values = vec![0.0; g.len()];
        assert!(matches!(
            ExtendedField::new(&g, &values, 0.03),
            Err(Error::Coverage { .. })
        ));
        assert!(matches!(
            ExtendedField::new(&g, &values[1..], 0.5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn surface_grid_interpolates_smooth_data() {
        let geom: Arc<dyn Boundary<3>> = Arc::new(Surface::pinched_ball());
        let g = LayerGrid::new(geom, 1.0 / 12.0, 0.03).unwrap();
        let u = |p: &Point<3>| p[0].exp() * (p[1] + 1.0).sin() + p[2];
        let values = g.sample(u);
        let f = ExtendedField::new(&g, &values, 0.2).unwrap();
        let mut worst: f64 = 0.0;
        for p in [
            Vector3::new(0.5, 0.1, 0.2),
            Vector3::new(-0.1, 0.2, 0.6),
            Vector3::new(0.05, 0.0, -0.62),
        ] {
            let dir = p / p.norm();
            let r = g.geom.radial_extent(&dir);
            for frac in [0.9, 0.95, 1.03] {
                let q = dir * r * frac;
                worst = worst.max((f.value(&q, None) - u(&q)).abs());
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
