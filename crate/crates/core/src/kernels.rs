//! Pointwise kernels: the fundamental solution of `−Δ`, its gradient, the
//! Levi remainder, the Nyström kernel of the adjoint double layer on curves
//! and the regular kernel left after the radial integration reduction.
//!
//! The checked entry points return [`Error::Domain`] for coincident points;
//! the `*_unchecked` variants are for assembly loops that have already
//! excluded them.

use crate::geometry::Curve;
use crate::{Error, Point, Result};
use std::f64::consts::PI;

/// `|∂B_1|` in `ℝ^D`: `2π` for `D = 2`, `4π` for `D = 3`.
#[inline]
pub fn sphere_measure<const D: usize>() -> f64 {
    match D {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("only dimensions 2 and 3 are supported"),
    }
}

/// `Φ(x, y)`: `(1/2π) ln(1/|x−y|)` in 2D, `1/(4π|x−y|)` in 3D.
#[inline]
pub fn phi_unchecked<const D: usize>(x: &Point<D>, y: &Point<D>) -> f64 {
    let r = (x - y).norm();
    if D == 2 {
        -r.ln() / (2.0 * PI)
    } else {
        1.0 / (4.0 * PI * r)
    }
}

/// `∇ₓΦ(x, y) = −(x − y) / (|∂B_1| |x − y|^D)`.
#[inline]
pub fn grad_phi_unchecked<const D: usize>(x: &Point<D>, y: &Point<D>) -> Point<D> {
    let d = x - y;
    let r = d.norm();
    -d / (sphere_measure::<D>() * r.powi(D as i32))
}

/// `∂Φ/∂ν(y)` at `y` with normal `nu_y`.
#[inline]
pub fn dphi_dnu_y_unchecked<const D: usize>(x: &Point<D>, y: &Point<D>, nu_y: &Point<D>) -> f64 {
    -grad_phi_unchecked(x, y).dot(nu_y)
}

/// Hessian-vector form `∇ₓ (∂Φ/∂ν(y))`, used for gradients of double-layer
/// potentials at interior points.
#[inline]
pub fn grad_dphi_dnu_y_unchecked<const D: usize>(x: &Point<D>, y: &Point<D>, nu_y: &Point<D>) -> Point<D> {
    // ∂Φ/∂ν(y) = (x − y)·ν / (c r^D)
    let d = x - y;
    let r2 = d.norm_squared();
    let c = sphere_measure::<D>() * r2.powf(D as f64 / 2.0);
    (nu_y - d * (D as f64 * d.dot(nu_y) / r2)) / c
}

fn check_distinct<const D: usize>(x: &Point<D>, y: &Point<D>) -> Result<()> {
    if x == y {
        Err(Error::Domain("kernel evaluated at coincident points".into()))
    } else {
        Ok(())
    }
}

pub fn fundamental_solution<const D: usize>(x: &Point<D>, y: &Point<D>) -> Result<f64> {
    check_distinct(x, y)?;
    Ok(phi_unchecked(x, y))
}

pub fn grad_fundamental<const D: usize>(x: &Point<D>, y: &Point<D>) -> Result<Point<D>> {
    check_distinct(x, y)?;
    Ok(grad_phi_unchecked(x, y))
}

/// `R(x, y) = −∇ₓΦ(x, y)·∇σ(x) / σ(y)`.
pub fn levi_remainder<const D: usize>(
    x: &Point<D>,
    y: &Point<D>,
    grad_sigma_at_x: &Point<D>,
    sigma_at_y: f64,
) -> Result<f64> {
    check_distinct(x, y)?;
    if !(sigma_at_y > 0.0) {
        return Err(Error::Domain(format!(
            "conductivity must be positive, got {sigma_at_y}"
        )));
    }
    Ok(-grad_phi_unchecked(x, y).dot(grad_sigma_at_x) / sigma_at_y)
}

/// Nyström kernel `K₂₂(t, τ)` of the adjoint double layer on a curve, for
/// the trapezoid rule with `2ñ` nodes. The diagonal uses the limit
/// `(1/2ñ)·x''(t)·ν(x(t)) / (2|x'(t)|)`.
pub fn k22_kernel(t: f64, tau: f64, curve: &Curve, n_half: usize) -> f64 {
    let two_n = 2.0 * n_half as f64;
    let xt = curve.point(t);
    let nu = curve.normal(t);
    let d = curve.point(tau) - xt;
    let r2 = d.norm_squared();
    let scale = 1e-28 * (1.0 + xt.norm_squared());
    if r2 <= scale {
        curve.d2(t).dot(&nu) / (2.0 * curve.speed(t)) / two_n
    } else {
        d.dot(&nu) / (two_n * r2) * curve.speed(tau)
    }
}

/// Regular kernel `RK(x, z) = ((z−x)·ν(z))((z−x)·ν(x)) / (2^{D−1} π |z−x|^D)`,
/// set to 0 when `|z − x| < 1e-12·diam`.
pub fn rk_kernel<const D: usize>(x: &Point<D>, z: &Point<D>, nu_x: &Point<D>, nu_z: &Point<D>, diam: f64) -> f64 {
    let d = z - x;
    let r = d.norm();
    if r < 1e-12 * diam {
        return 0.0;
    }
    d.dot(nu_z) * d.dot(nu_x) / (2f64.powi(D as i32 - 1) * PI * r.powi(D as i32))
}
