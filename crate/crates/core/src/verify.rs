//! Oracle and invariant suites behind `levi-eit verify` and the acceptance
//! target. Each check reduces to a measured value and a limit.
//!
//! The brute-force oracles integrate in polar coordinates about the
//! evaluation point with graded Gauss rules, sharing no code with the
//! DRM/RIM reductions they check.

use crate::experiments::{case_heart_2d, case_pinched_ball_3d, check_invariants, InvariantReport};
use crate::geometry::{layer_nodes, Boundary, BoundaryFrame, BoundaryParam, Curve, InteriorNodeSet};
use crate::kernels::{dphi_dnu_y_unchecked, grad_fundamental, phi_unchecked};
use crate::levi_operators::{
    assemble_k12, assemble_k21, assemble_k22, drm_dk, rim_volume_integral, Discretization, DrmBasis, RimRule,
};
use crate::quadrature::{composite, GaussLegendre};
use crate::regularization::{
    growth_check, mollified_normal_derivative, mollifier_profile, BallRule, FnField, GrowthCheck, Mollifier,
};
use crate::Point;
use nalgebra::{DVector, Vector2, Vector3};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Check {
    pub criterion: u8,
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    /// Failure explained by the test case itself rather than the code.
    pub known: Option<&'static str>,
}

impl Check {
    fn at_most(criterion: u8, name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            criterion,
            name,
            value,
            limit,
            pass: value <= limit,
            known: None,
        }
    }

    pub fn line(&self) -> String {
        let mut s = format!(
            "{} [{}] {}: {:.3e} (limit {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.value,
            self.limit
        );
        if let (false, Some(k)) = (self.pass, self.known) {
            s.push_str(&format!(" [known: {k}]"));
        }
        s
    }
}

/// Parameter intervals `[ρ_a, ρ_b]` along the ray `x + ρ·dir` that lie
/// inside the curve, found from sign changes of `dir × (x(t) − x)`.
pub fn ray_intervals(curve: &Curve, x: &Vector2<f64>, dir: &Vector2<f64>) -> Vec<(f64, f64)> {
    let n = 4096;
    let cross = |t: f64| {
        let v = curve.point(t) - x;
        dir.x * v.y - dir.y * v.x
    };
    let mut hits = Vec::new();
    for i in 0..n {
        let (a, b) = (TAU * i as f64 / n as f64, TAU * (i + 1) as f64 / n as f64);
        let (fa, fb) = (cross(a), cross(b));
        if fa.signum() != fb.signum() {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = cross(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            let v = curve.point(0.5 * (lo + hi)) - x;
            let rho = v.dot(dir);
            if rho > 0.0 {
                hits.push(rho);
            }
        }
    }
    hits.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut start = 0.0;
    for (i, h) in hits.iter().enumerate() {
        if i % 2 == 0 {
            out.push((start, *h));
        } else {
            start = *h;
        }
    }
    out
}

/// `∫_a^b g(ρ) dρ` split at `kinks`, graded towards `a` for integrable
/// endpoint singularities.
pub fn radial_integral(a: f64, b: f64, kinks: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(24);
    let mut pts = vec![a];
    pts.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    pts.push(b);
    let mut sum = 0.0;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // ρ = lo + (hi − lo) s²
        sum += rule.integrate(0.0, 1.0, |s| {
            let rho = lo + (hi - lo) * s * s;
            g(rho) * 2.0 * (hi - lo) * s
        });
    }
    sum
}

/// `∫_Ω F(x, y) dy` in polar coordinates about an interior `x`, with `F`
/// possibly singular at `y = x` and kinked across the circle through
/// `kink_center`.
pub fn polar_volume_integral(
    curve: &Curve,
    x: &Vector2<f64>,
    kink_center: Option<Vector2<f64>>,
    panels: usize,
    f: impl Fn(&Vector2<f64>, f64) -> f64,
) -> f64 {
    let rule = GaussLegendre::new(16);
    let mut total = 0.0;
    for p in 0..panels {
        let (a, b) = (TAU * p as f64 / panels as f64, TAU * (p + 1) as f64 / panels as f64);
        total += rule.integrate(a, b, |th| {
            let dir = Vector2::new(th.cos(), th.sin());
            let kink = kink_center.map(|c| (c - x).dot(&dir)).into_iter().collect::<Vec<_>>();
            ray_intervals(curve, x, &dir)
                .into_iter()
                .map(|(lo, hi)| radial_integral(lo, hi, &kink, |rho| f(&(x + dir * rho), rho) * rho))
                .sum::<f64>()
        });
    }
    total
}

/// Unit-disk value of `2∫_Ω ∂Φ(x,y)/∂ν(x) f(y) dy` at `x = (cos t, sin t)`.
/// About `x` the integrand is `(1/π)(θ̂·ν) f(x + ρθ̂)` on the chord
/// `ρ ∈ [0, −2 θ̂·ν]`.
pub fn disk_k21_oracle(t: f64, kink_center: Option<Vector2<f64>>, f: impl Fn(&Vector2<f64>) -> f64) -> f64 {
    let x = Vector2::new(t.cos(), t.sin());
    let rule = GaussLegendre::new(16);
    let panels = 400;
    let mut total = 0.0;
    for p in 0..panels {
        let (a, b) = (
            t + PI / 2.0 + PI * p as f64 / panels as f64,
            t + PI / 2.0 + PI * (p + 1) as f64 / panels as f64,
        );
        total += rule.integrate(a, b, |th| {
            let dir = Vector2::new(th.cos(), th.sin());
            let c = dir.dot(&x);
            let len = -2.0 * c;
            let kink: Vec<f64> = kink_center.map(|k| (k - x).dot(&dir)).into_iter().collect();
            c / PI * radial_integral(0.0, len, &kink, |rho| f(&(x + dir * rho)))
        });
    }
    total
}

/// DRM volume integrals against the polar oracle at 5 heart points; worst
/// relative deviation.
pub fn drm_oracle_error() -> f64 {
    let heart = Arc::new(Curve::heart());
    let disc = Discretization::new(heart.clone(), 256);
    let layer = layer_nodes(heart.as_ref(), 0.1, 32, 5).expect("heart layer nodes");
    let basis = DrmBasis::new(layer.nodes.clone());
    let points = [
        Vector2::new(1.0, 1.0),
        Vector2::new(0.8, 1.3),
        Vector2::new(1.2, 0.7),
        layer.nodes[3],
        layer.nodes[20],
    ];
    let mut worst: f64 = 0.0;
    for (i, x) in points.iter().enumerate() {
        let k = (7 * i) % basis.len();
        let c = basis.centers[k];
        let Ok(dk) = drm_dk(x, k, &basis, &disc) else {
            return f64::INFINITY;
        };
        let oracle = polar_volume_integral(&heart, x, Some(c), 400, |y, _| {
            phi_unchecked(x, y) * (1.0 + (y - c).norm())
        });
        worst = worst.max(((dk - oracle) / oracle).abs());
    }
    worst
}

/// RIM `K21` on the unit disk against the chord oracle at 8 nodes, for
/// three density vectors.
pub fn rim_oracle_error() -> f64 {
    let disk = Arc::new(Curve::circle(1.0));
    let disc = Discretization::new(disk, 256);
    let basis = DrmBasis::new(vec![
        Vector2::new(0.3, 0.2),
        Vector2::new(-0.5, 0.1),
        Vector2::new(0.0, -0.7),
        Vector2::new(0.85, 0.0),
    ]);
    let Ok(k21) = assemble_k21(&disc, &basis, RimRule::Exact) else {
        return f64::INFINITY;
    };
    let densities: [Vec<f64>; 3] = [
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.5, -1.0, 0.3, 0.2],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    let mut worst: f64 = 0.0;
    for alpha in &densities {
        let v = &k21 * DVector::from_column_slice(alpha);
        for j in (0..disc.grid.len()).step_by(disc.grid.len() / 8) {
            let t = disc.grid.params[j].t();
            let mut oracle = 0.0;
            for (k, a) in alpha.iter().enumerate() {
                if *a != 0.0 {
                    let c = basis.centers[k];
                    oracle += a * disk_k21_oracle(t, Some(c), |y| 1.0 + (y - c).norm());
                }
            }
            worst = worst.max(((v[j] - oracle) / oracle).abs());
        }
    }
    worst
}

fn unit_disk(n_half: usize) -> Discretization<2> {
    Discretization::new(Arc::new(Curve::circle(1.0)), n_half)
}

/// Brute-force operator oracles and Gauss identities.
pub fn oracle_suite() -> Vec<Check> {
    let mut out = vec![
        Check::at_most(
            4,
            "DRM D_k vs polar quadrature, 5 heart points",
            drm_oracle_error(),
            1e-3,
        ),
        Check::at_most(4, "RIM K21 vs chord quadrature, 8 disk nodes", rim_oracle_error(), 1e-3),
    ];
    let d = unit_disk(64);
    let area = [d.grid.nodes[5], Vector2::new(0.1, 0.3)]
        .iter()
        .map(|x| (rim_volume_integral(&d, x, |_| 1.0, 8) - PI).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most(4, "RIM area of the unit disk = pi", area, 1e-8));

    let heart = Curve::heart().quadrature(256);
    let gauss = [Vector2::new(1.0, 1.0), Vector2::new(0.8, 1.05), Vector2::new(1.2, 0.6)]
        .iter()
        .map(|x| {
            let s: f64 = (0..heart.len())
                .map(|j| dphi_dnu_y_unchecked(x, &heart.nodes[j], &heart.normals[j]) * heart.weights[j])
                .sum();
            (s + 1.0).abs()
        })
        .fold(0.0, f64::max);
    out.push(Check::at_most(
        4,
        "Gauss: interior flux of dPhi/dnu = -1 (heart)",
        gauss,
        1e-8,
    ));

    let d = unit_disk(32);
    let k = assemble_k22(&d);
    let rows = (0..d.grid.len())
        .map(|i| (k.row(i).sum() + 1.0).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most(4, "Gauss: circle K22 row sums = -1", rows, 1e-8));
    out
}

fn central_gradient<const D: usize>(f: impl Fn(&Point<D>) -> f64, x: &Point<D>, h: f64) -> Point<D> {
    let mut g = Point::<D>::zeros();
    for i in 0..D {
        let mut e = Point::<D>::zeros();
        e[i] = h;
        g[i] = (f(&(x + e)) - f(&(x - e))) / (2.0 * h);
    }
    g
}

/// Closed-form micro-checks of the kernels and the mollifier.
pub fn micro_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let mut fd: f64 = 0.0;
    for (x, y) in [
        (Vector2::new(0.3, -0.2), Vector2::new(0.6, 0.2)),
        (Vector2::new(-1.0, 0.5), Vector2::new(0.2, 0.1)),
    ] {
        let g = grad_fundamental(&x, &y).unwrap_or_default();
        fd = fd.max((central_gradient(|p| phi_unchecked(p, &y), &x, 1e-6) - g).norm() / g.norm());
    }
    let (x, y) = (Vector3::new(0.1, 0.2, -0.3), Vector3::new(0.5, -0.1, 0.2));
    let g = grad_fundamental(&x, &y).unwrap_or_default();
    fd = fd.max((central_gradient(|p| phi_unchecked(p, &y), &x, 1e-6) - g).norm() / g.norm());
    out.push(Check::at_most(5, "grad Phi vs central differences (2D, 3D)", fd, 1e-6));

    let d = unit_disk(32);
    let k = assemble_k22(&d);
    let diag = (0..d.grid.len())
        .map(|i| (k[(i, i)] + 1.0 / 64.0).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most(5, "circle K22 diagonal = -1/(2n)", diag, 1e-12));

    let single = |r: f64| {
        let c = Curve::circle(r);
        let set = InteriorNodeSet::from_points(&c, vec![Vector2::zeros()], 0.1);
        let disc = Discretization::new(Arc::new(Curve::circle(r)), 32);
        assemble_k12(&set, &disc)
            .map(|k| k.row(0).sum())
            .unwrap_or(f64::INFINITY)
    };
    let sl = single(1.0).abs().max((single(2.0) + 2.0 * 2f64.ln()).abs());
    out.push(Check::at_most(
        5,
        "single layer of 1 at disk centre: 0 (r = 1), -2 ln 2 (r = 2)",
        sl,
        1e-10,
    ));

    let rule = GaussLegendre::new(24);
    let m = composite(&rule, 0.0, 1.0, 80, |t| mollifier_profile(t) * t);
    out.push(Check::at_most(
        5,
        "mollifier moment = 1/(2 pi)",
        (m - 1.0 / TAU).abs(),
        1e-8,
    ));

    let mut affine: f64 = 0.0;
    if let Ok(m2) = Mollifier::new(2, 0.05) {
        let rule = BallRule::standard(m2);
        let g = Vector2::new(1.3, -0.7);
        let nu = Vector2::new(0.6, 0.8);
        let x = BoundaryFrame {
            param: BoundaryParam::curve(0.0),
            point: Vector2::new(0.2, 0.1),
            normal: nu,
            jacobian: 1.0,
        };
        let field = FnField(|p: &Point<2>| 2.0 + g.dot(p));
        let d = mollified_normal_derivative(&x, &field, &rule, 0.1).unwrap_or(f64::INFINITY);
        affine = affine.max((d - g.dot(&nu)).abs() / g.norm());
    }
    if let Ok(m3) = Mollifier::new(3, 0.04) {
        let rule = BallRule::standard(m3);
        let g = Vector3::new(0.3, -1.1, 0.5);
        let nu = Vector3::new(1.0, 2.0, -2.0) / 3.0;
        let x = BoundaryFrame {
            param: BoundaryParam::surface(1.0, 0.0),
            point: Vector3::new(0.1, 0.2, 0.3),
            normal: nu,
            jacobian: 1.0,
        };
        let field = FnField(|p: &Point<3>| -1.0 + g.dot(p));
        let d = mollified_normal_derivative(&x, &field, &rule, 0.1).unwrap_or(f64::INFINITY);
        affine = affine.max((d - g.dot(&nu)).abs() / g.norm());
    }
    out.push(Check::at_most(
        5,
        "mollified normal derivative of affine fields, / |grad|",
        affine,
        1e-3,
    ));
    out
}

/// Slope of the `R_α` growth on the heart, against `−1`.
pub fn growth_suite() -> Vec<Check> {
    let value = match growth_check(&Curve::heart(), &GrowthCheck::default()) {
        Ok(rep) => (rep.slope + 1.0).abs(),
        Err(_) => f64::INFINITY,
    };
    vec![Check::at_most(7, "growth slope of R_alpha, |slope + 1|", value, 0.35)]
}

fn invariant_checks(case: &'static str, rep: &InvariantReport, out: &mut Vec<Check>) {
    let name = |s: &'static str| -> &'static str {
        match (case, s) {
            ("heart2d", "div") => "heart2d: divergence residual",
            ("heart2d", "g") => "heart2d: max g on boundary (< 0)",
            ("heart2d", "u") => "heart2d: max u (< 0)",
            ("heart2d", "grad") => "heart2d: -min |grad u| (< 0)",
            (_, "div") => "pinched_ball3d: divergence residual",
            (_, "g") => "pinched_ball3d: max g on boundary (< 0)",
            (_, "u") => "pinched_ball3d: max u (< 0)",
            _ => "pinched_ball3d: -min |grad u| (< 0)",
        }
    };
    out.push(Check::at_most(8, name("div"), rep.divergence_residual, 1e-5));
    // the sign checks are strict
    let strict = |n, v: f64| Check {
        criterion: 8,
        name: n,
        value: v,
        limit: 0.0,
        pass: v < 0.0,
        known: None,
    };
    let mut g = strict(name("g"), rep.max_g);
    if case == "heart2d" {
        g.known = Some("g > 0 on part of the heart boundary for these exact fields");
    }
    out.push(g);
    out.push(strict(name("u"), rep.max_u));
    out.push(strict(name("grad"), -rep.min_grad_u));
}

/// Manufactured-case invariants on `samples` random points per case.
pub fn invariant_suite(samples: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    invariant_checks("heart2d", &check_invariants(&case_heart_2d(), samples, seed), &mut out);
    invariant_checks(
        "pinched_ball3d",
        &check_invariants(&case_pinched_ball_3d(), samples, seed),
        &mut out,
    );
    out
}

/// All suites that do not run the reconstruction pipeline.
pub fn run_all() -> Vec<Check> {
    let mut out = oracle_suite();
    out.extend(micro_suite());
    out.extend(growth_suite());
    out.extend(invariant_suite(1000, 1));
    out
}
