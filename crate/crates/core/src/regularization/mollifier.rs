use crate::geometry::{BoundaryFrame, BoundaryParam};
use crate::kernels::sphere_measure;
use crate::quadrature::{composite, GaussLegendre};
use crate::{Error, Point, Result};
use std::sync::OnceLock;

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (4.0 * t * (1.0 - t))).exp()
    }
}

fn bump_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let q = t * (1.0 - t);
        bump(t) * (1.0 - 2.0 * t) / (4.0 * q * q)
    }
}

/// `c` with `|S^{n-1}| c ∫₀¹ b(t) t^{n-1} dt = 1`, i.e. unit mass in `ℝⁿ`.
fn norm_constant(dim: usize) -> f64 {
    static C: OnceLock<[f64; 2]> = OnceLock::new();
    let c = C.get_or_init(|| {
        let rule = GaussLegendre::new(20);
        let c2 = 1.0 / (2.0 * std::f64::consts::PI * composite(&rule, 0.0, 1.0, 64, |t| bump(t) * t));
        let c3 = 1.0 / (4.0 * std::f64::consts::PI * composite(&rule, 0.0, 1.0, 64, |t| bump(t) * t * t));
        [c2, c3]
    });
    c[dim - 2]
}

/// `ρ(t) = c·exp(−1/(1−(2t−1)²))` on `(0, 1)`, normalized so that
/// `∫₀¹ ρ(t) t dt = 1/(2π)`.
pub fn mollifier_profile(t: f64) -> f64 {
    norm_constant(2) * bump(t)
}

pub fn mollifier_profile_derivative(t: f64) -> f64 {
    norm_constant(2) * bump_derivative(t)
}

/// Radial mollifier `ρ_α(r) = ρ(r/α)/αⁿ` of unit mass in `ℝⁿ`.
///
/// In 3D the profile is normalized by `∫ρ(t)t² dt = 1/(4π)` rather than the
/// planar moment condition, so that it still has unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub dim: usize,
    pub alpha: f64,
    c_norm: f64,
}

impl Mollifier {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::param("dim", format!("must be 2 or 3, got {dim}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        Ok(Self {
            dim,
            alpha,
            c_norm: norm_constant(dim),
        })
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn profile(&self, t: f64) -> f64 {
        self.c_norm * bump(t)
    }

    pub fn profile_derivative(&self, t: f64) -> f64 {
        self.c_norm * bump_derivative(t)
    }

    pub fn kernel(&self, r: f64) -> f64 {
        self.profile(r / self.alpha) / self.alpha.powi(self.dim as i32)
    }

    pub fn kernel_derivative(&self, r: f64) -> f64 {
        self.profile_derivative(r / self.alpha) / self.alpha.powi(self.dim as i32 + 1)
    }
}

/// Tensor quadrature over the unit ball for `∫ ρ'(t) (−ω·ν) U(x + αtω) tⁿ⁻¹ dt dω`.
///
/// Radial Gauss points on `(0, 1)`; angles equispaced about `ν` in 2D,
/// Gauss in `cos∠(ω, ν)` times equispaced azimuth in 3D.
#[derive(Debug, Clone)]
pub struct BallRule {
    pub mollifier: Mollifier,
    /// `(t, [ω·ν, ω·e₁, ω·e₂], weight)`, with `ρ'(t) tⁿ⁻¹ (−ω·ν)` folded
    /// into the weight.
    points: Vec<(f64, [f64; 3], f64)>,
    /// Weights `ρ(t) tⁿ⁻¹` of the same points for `R_α[U](x)`, summing to 1.
    mass: Vec<f64>,
}

impl BallRule {
    pub fn new(mollifier: Mollifier, n_radial: usize, n_polar: usize, n_azimuth: usize) -> Self {
        let radial = GaussLegendre::new(n_radial);
        let mut dirs = Vec::new();
        if mollifier.dim == 2 {
            for k in 0..n_azimuth {
                let a = std::f64::consts::TAU * (k as f64 + 0.5) / n_azimuth as f64;
                dirs.push(([a.cos(), a.sin(), 0.0], std::f64::consts::TAU / n_azimuth as f64));
            }
        } else {
            let polar = GaussLegendre::new(n_polar);
            for (c, wc) in polar.nodes.iter().zip(&polar.weights) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..n_azimuth {
                    let a = std::f64::consts::TAU * (k as f64 + 0.5) / n_azimuth as f64;
                    dirs.push((
                        [*c, s * a.cos(), s * a.sin()],
                        wc * std::f64::consts::TAU / n_azimuth as f64,
                    ));
                }
            }
        }
        // The flat tails of the profile make low-order radial rules miss the
        // first moment ∫ρ'(t)tⁿdt = −n/|Sⁿ⁻¹| slightly; rescale so that it is
        // exact, which makes affine fields exact.
        let n = mollifier.dim as i32;
        let discrete: f64 = radial
            .on_interval(0.0, 1.0)
            .map(|(t, wt)| wt * mollifier.profile_derivative(t) * t.powi(n))
            .sum();
        let exact = if n == 2 {
            -2.0 / sphere_measure::<2>()
        } else {
            -3.0 / sphere_measure::<3>()
        };
        let scale = exact / discrete;
        let mut points = Vec::with_capacity(radial.len() * dirs.len());
        let mut mass = Vec::with_capacity(radial.len() * dirs.len());
        for (t, wt) in radial.on_interval(0.0, 1.0) {
            let radial_weight = scale * wt * mollifier.profile_derivative(t) * t.powi(n - 1);
            let mass_weight = wt * mollifier.profile(t) * t.powi(n - 1);
            for (w, ww) in &dirs {
                points.push((t, *w, radial_weight * ww * (-w[0])));
                mass.push(mass_weight * ww);
            }
        }
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        Self {
            mollifier,
            points,
            mass,
        }
    }

    /// 16 radial × 32 angular points in 2D, 12 × 12 × 24 in 3D.
    pub fn standard(mollifier: Mollifier) -> Self {
        if mollifier.dim == 2 {
            Self::new(mollifier, 16, 1, 32)
        } else {
            Self::new(mollifier, 12, 12, 24)
        }
    }

    /// At least the standard rule, refined so that neighbouring points are no
    /// farther apart than a grid of spacing `α / grid_factor`.
    pub fn resolving(mollifier: Mollifier, grid_factor: f64) -> Self {
        let g = grid_factor.max(1.0);
        let radial = (2.0 * g).ceil() as usize;
        let around = (std::f64::consts::TAU * g).ceil() as usize;
        if mollifier.dim == 2 {
            Self::new(mollifier, radial.max(16), 1, around.max(32))
        } else {
            Self::new(mollifier, radial.max(12), (around / 2).max(12), around.max(24))
        }
    }

    /// The standard rule with every point count doubled.
    pub fn doubled(mollifier: Mollifier) -> Self {
        if mollifier.dim == 2 {
            Self::new(mollifier, 32, 1, 64)
        } else {
            Self::new(mollifier, 24, 24, 48)
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Orthonormal tangent vectors completing `nu`.
fn tangents<const D: usize>(nu: &Point<D>) -> [Point<D>; 2] {
    let mut e1 = Point::<D>::zeros();
    let mut e2 = Point::<D>::zeros();
    if D == 2 {
        e1[0] = -nu[1];
        e1[1] = nu[0];
    } else {
        // cross with the axis least aligned with nu
        let axis = (0..3).min_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs())).unwrap_or(0);
        let mut a = Point::<D>::zeros();
        a[axis] = 1.0;
        e1 = a - nu * nu[axis];
        e1.normalize_mut();
        e2[0] = nu[1] * e1[2] - nu[2] * e1[1];
        e2[1] = nu[2] * e1[0] - nu[0] * e1[2];
        e2[2] = nu[0] * e1[1] - nu[1] * e1[0];
    }
    [e1, e2]
}

/// A field that can be sampled anywhere in the `α`-neighbourhood of the
/// boundary. The hint is the boundary parameter of a nearby foot point.
pub trait ScalarField<const D: usize>: Sync {
    fn value(&self, p: &Point<D>, hint: Option<BoundaryParam>) -> f64;
}

/// Adapter for closures.
pub struct FnField<F>(pub F);

impl<const D: usize, F: Fn(&Point<D>) -> f64 + Sync> ScalarField<D> for FnField<F> {
    fn value(&self, p: &Point<D>, _hint: Option<BoundaryParam>) -> f64 {
        (self.0)(p)
    }
}

/// `∂_ν R_α[U](x) = ∫_{|x−y|≤α} ρ_α'(|x−y|) (x−y)·ν(x)/|x−y| U(y) dy`.
///
/// Requires `α ≤ ε` so that the ball stays in the region where the
/// extended data are defined.
pub fn mollified_normal_derivative<const D: usize>(
    x: &BoundaryFrame<D>,
    field: &dyn ScalarField<D>,
    rule: &BallRule,
    eps: f64,
) -> Result<f64> {
    let alpha = rule.mollifier.alpha;
    if alpha > eps * (1.0 + 1e-12) {
        return Err(Error::param(
            "alpha",
            format!("mollifier radius {alpha} exceeds layer width {eps}"),
        ));
    }
    if rule.mollifier.dim != D {
        return Err(Error::Dimension(format!(
            "{}D mollifier used in {D}D",
            rule.mollifier.dim
        )));
    }
    let [e1, e2] = tangents(&x.normal);
    let mut sum = 0.0;
    for (t, w, weight) in &rule.points {
        let omega = x.normal * w[0] + e1 * w[1] + e2 * w[2];
        let y = x.point + omega * (alpha * t);
        sum += weight * field.value(&y, Some(x.param));
    }
    Ok(sum / alpha)
}

/// `R_α[U](x) = ∫ρ_α(|x−y|) U(y) dy`, with the discrete weights normalized
/// so that constants are reproduced exactly.
pub fn mollified_value<const D: usize>(
    x: &BoundaryFrame<D>,
    field: &dyn ScalarField<D>,
    rule: &BallRule,
    eps: f64,
) -> Result<f64> {
    let alpha = rule.mollifier.alpha;
    if alpha > eps * (1.0 + 1e-12) {
        return Err(Error::param(
            "alpha",
            format!("mollifier radius {alpha} exceeds layer width {eps}"),
        ));
    }
    let [e1, e2] = tangents(&x.normal);
    let mut sum = 0.0;
    for ((t, w, _), m) in rule.points.iter().zip(&rule.mass) {
        let omega = x.normal * w[0] + e1 * w[1] + e2 * w[2];
        sum += m * field.value(&(x.point + omega * (alpha * t)), Some(x.param));
    }
    Ok(sum)
}

/// Mass `|S^{n-1}| ∫ρ(t)tⁿ⁻¹dt` of the normalized profile, for checks.
pub fn mollifier_mass(dim: usize) -> f64 {
    let m = match dim {
        2 => Mollifier::new(2, 1.0),
        _ => Mollifier::new(3, 1.0),
    }
    .expect("unit scale is valid");
    let rule = GaussLegendre::new(20);
    let moment = composite(&rule, 0.0, 1.0, 64, |t| m.profile(t) * t.powi(dim as i32 - 1));
    moment
        * if dim == 2 {
            sphere_measure::<2>()
        } else {
            sphere_measure::<3>()
        }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector3};

    #[test]
    fn planar_moment_condition() {
        let rule = GaussLegendre::new(24);
        let m = composite(&rule, 0.0, 1.0, 80, |t| mollifier_profile(t) * t);
        assert!((m - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-8);
        assert_eq!(mollifier_profile(0.0), 0.0);
        assert_eq!(mollifier_profile(1.0), 0.0);
        assert_eq!(mollifier_profile(1.5), 0.0);
    }

    #[test]
    fn unit_mass_in_both_dimensions() {
        assert!((mollifier_mass(2) - 1.0).abs() < 1e-10);
        assert!((mollifier_mass(3) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let h = 1e-5;
        for t in [0.3, 0.5, 0.7] {
            let fd = (mollifier_profile(t + h) - mollifier_profile(t - h)) / (2.0 * h);
            assert!((fd - mollifier_profile_derivative(t)).abs() < 1e-6, "t = {t}");
        }
    }

    fn frame2(point: Vector2<f64>, normal: Vector2<f64>) -> BoundaryFrame<2> {
        BoundaryFrame {
            param: BoundaryParam::curve(0.0),
            point,
            normal,
            jacobian: 1.0,
        }
    }

    #[test]
    fn affine_fields_give_exact_normal_derivative_2d() {
        let rule = BallRule::standard(Mollifier::new(2, 0.05).unwrap());
        let g = Vector2::new(1.3, -0.7);
        let nu = Vector2::new(0.6, 0.8);
        let x = frame2(Vector2::new(0.2, 0.1), nu);
        let field = FnField(|p: &Point<2>| 2.0 + g.dot(p));
        let d = mollified_normal_derivative(&x, &field, &rule, 0.1).unwrap();
        assert!((d - g.dot(&nu)).abs() < 1e-3 * g.norm(), "{d} vs {}", g.dot(&nu));
        let constant = FnField(|_: &Point<2>| 3.5);
        assert!(mollified_normal_derivative(&x, &constant, &rule, 0.1).unwrap().abs() < 1e-10);
    }

    #[test]
    fn affine_fields_give_exact_normal_derivative_3d() {
        let rule = BallRule::standard(Mollifier::new(3, 0.04).unwrap());
        let g = Vector3::new(0.3, -1.1, 0.5);
        let nu = Vector3::new(1.0, 2.0, -2.0) / 3.0;
        let x = BoundaryFrame {
            param: BoundaryParam::surface(1.0, 0.0),
            point: Vector3::new(0.1, 0.2, 0.3),
            normal: nu,
            jacobian: 1.0,
        };
        let field = FnField(|p: &Point<3>| -1.0 + g.dot(p));
        let d = mollified_normal_derivative(&x, &field, &rule, 0.1).unwrap();
        assert!((d - g.dot(&nu)).abs() < 1e-3 * g.norm(), "{d} vs {}", g.dot(&nu));
    }

    #[test]
    fn mollified_value_reproduces_affine_fields() {
        let rule = BallRule::standard(Mollifier::new(2, 0.05).unwrap());
        let g = Vector2::new(1.3, -0.7);
        let x = frame2(Vector2::new(0.2, 0.1), Vector2::new(0.6, 0.8));
        let field = FnField(|p: &Point<2>| 2.0 + g.dot(p));
        let v = mollified_value(&x, &field, &rule, 0.1).unwrap();
        assert!((v - field.0(&x.point)).abs() < 1e-12);
        // |y − x|² has mean α²∫ρt³ over the unit-mass ball
        let sq = FnField(|p: &Point<2>| (p - x.point).norm_squared());
        let m = composite(&GaussLegendre::new(24), 0.0, 1.0, 80, |t| {
            mollifier_profile(t) * t.powi(3)
        });
        let v = mollified_value(&x, &sq, &rule, 0.1).unwrap();
        assert!(
            (v - 0.05f64.powi(2) * 2.0 * std::f64::consts::PI * m).abs() < 1e-7,
            "{v}"
        );
    }

    #[test]
    fn rejects_radius_larger_than_layer() {
        let rule = BallRule::standard(Mollifier::new(2, 0.2).unwrap());
        let x = frame2(Vector2::zeros(), Vector2::new(1.0, 0.0));
        let field = FnField(|_: &Point<2>| 0.0);
        assert!(mollified_normal_derivative(&x, &field, &rule, 0.1).is_err());
    }

    #[test]
    fn resolving_rule_never_coarser_than_standard() {
        let m = Mollifier::new(2, 0.05).unwrap();
        assert_eq!(BallRule::resolving(m, 1.0).len(), BallRule::standard(m).len());
        let fine = BallRule::resolving(m, 16.0);
        assert_eq!(fine.len(), 32 * 101);
        let total: f64 = fine.mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
