//! Boundary reduction of the volume and single-layer potentials and the
//! Nyström blocks of the density-pair system
//!
//! ```text
//! [ K11      K12     ] [ μ̃ ]   [ U            ]   on the layer
//! [ K21   I + K22    ] [ ψ̃ ] = [ 2g̃ − 2h̃U    ]   on ∂Ω
//! ```
//!
//! `μ̃` is expanded as `Σ α_k f_k` with `f_k(x) = 1 + |x − x_k|`. The volume
//! potential of each `f_k` is reduced to the boundary by the dual
//! reciprocity identity (`K11`), and the normal derivative of the volume
//! potential on ∂Ω by radial integration (`K21`).
//!
//! Layer points sit close to ∂Ω compared with the boundary spacing, so the
//! plain rule for `∮Φ(x,y)φ(y)ds` loses accuracy there. Every evaluation
//! point carries a [`NearField`]: the exact single layer of the constant
//! (on an oversampled grid) minus its plain-rule value, applied to the
//! density value at the foot point.

use crate::geometry::{Boundary, BoundaryFrame, BoundaryParam, GridKind, InteriorNodeSet, QuadratureGrid};
use crate::kernels::{dphi_dnu_y_unchecked, grad_dphi_dnu_y_unchecked, grad_phi_unchecked, phi_unchecked, rk_kernel};
use crate::quadrature::GaussLegendre;
use crate::{Error, Point, Result};
use nalgebra::{DMatrix, DVector, SMatrix};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex};

/// Radial basis `f_k(x) = 1 + |x − x_k|` with primitives `f̂_k`, `Δf̂_k = f_k`:
/// `r²/4 + r³/9` in 2D, `r²/6 + r³/12` in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct DrmBasis<const D: usize> {
    pub centers: Vec<Point<D>>,
}

/// `(a, b)` with `∇f̂ = (a + b r)(x − x_k)`.
fn primitive_coeffs<const D: usize>() -> (f64, f64) {
    if D == 2 {
        (0.5, 1.0 / 3.0)
    } else {
        (1.0 / 3.0, 0.25)
    }
}

impl<const D: usize> DrmBasis<D> {
    pub fn new(centers: Vec<Point<D>>) -> Self {
        Self { centers }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn f(&self, k: usize, x: &Point<D>) -> f64 {
        1.0 + (x - self.centers[k]).norm()
    }

    /// `∇f_k`, with the value 0 at the center.
    pub fn grad_f(&self, k: usize, x: &Point<D>) -> Point<D> {
        let d = x - self.centers[k];
        let r = d.norm();
        if r == 0.0 {
            Point::zeros()
        } else {
            d / r
        }
    }

    pub fn fhat(&self, k: usize, x: &Point<D>) -> f64 {
        let r2 = (x - self.centers[k]).norm_squared();
        let r = r2.sqrt();
        let (a, b) = primitive_coeffs::<D>();
        0.5 * a * r2 + b / 3.0 * r2 * r
    }

    pub fn grad_fhat(&self, k: usize, x: &Point<D>) -> Point<D> {
        let d = x - self.centers[k];
        let (a, b) = primitive_coeffs::<D>();
        d * (a + b * d.norm())
    }

    pub fn hess_fhat(&self, k: usize, x: &Point<D>) -> SMatrix<f64, D, D> {
        let d = x - self.centers[k];
        let r = d.norm();
        let (a, b) = primitive_coeffs::<D>();
        let mut h = SMatrix::<f64, D, D>::identity() * (a + b * r);
        if r > 0.0 {
            h += d * d.transpose() * (b / r);
        }
        h
    }

    /// `μ̃(x) = Σ α_k f_k(x)`.
    pub fn mu(&self, alpha: &[f64], x: &Point<D>) -> f64 {
        alpha.iter().enumerate().map(|(k, a)| a * self.f(k, x)).sum()
    }

    /// `∇μ̃(x)`.
    pub fn grad_mu(&self, alpha: &[f64], x: &Point<D>) -> Point<D> {
        alpha
            .iter()
            .enumerate()
            .fold(Point::zeros(), |acc, (k, a)| acc + self.grad_f(k, x) * *a)
    }

    /// Interpolation matrix `F_ik = f_k(c_i)`.
    pub fn interpolation_matrix(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, k| self.f(k, &self.centers[i]))
    }

    /// Coefficients interpolating `values` at the centers.
    pub fn fit(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} centers",
                values.len(),
                self.len()
            )));
        }
        let lu = self.interpolation_matrix().lu();
        lu.solve(&DVector::from_column_slice(values))
            .map(|v| v.as_slice().to_vec())
            .ok_or_else(|| Error::Solve("singular DRM interpolation matrix".into()))
    }
}

/// Density pair: DRM coefficients of `μ̃` and nodal values of `ψ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub alpha: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DensityPair {
    pub fn zeros(m: usize, n_boundary: usize) -> Self {
        Self {
            alpha: vec![0.0; m],
            psi: vec![0.0; n_boundary],
        }
    }

    pub fn from_vector(v: &[f64], m: usize) -> Self {
        Self {
            alpha: v[..m].to_vec(),
            psi: v[m..].to_vec(),
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(&self.psi).all(|v| v.is_finite())
    }
}

/// Near-boundary correction for one interior evaluation point.
#[derive(Debug, Clone)]
pub struct NearField<const D: usize> {
    pub foot: BoundaryFrame<D>,
    pub depth: f64,
    /// `c_j` with `φ(foot) ≈ Σ c_j φ_j`; empty when no correction is needed.
    pub interp: Vec<(usize, f64)>,
    /// `∮Φ(x,y)ds` (accurate) minus its plain-grid value.
    pub single_layer_defect: f64,
    /// Same for `∮∇ₓΦ(x,y)ds`.
    pub gradient_defect: Point<D>,
}

impl<const D: usize> NearField<D> {
    pub fn is_active(&self) -> bool {
        !self.interp.is_empty()
    }
}

const MAX_OVERSAMPLING: usize = 64;

/// Boundary, its quadrature grid and the machinery to integrate against it
/// from interior points.
#[derive(Debug)]
pub struct Discretization<const D: usize> {
    pub geom: Arc<dyn Boundary<D>>,
    pub grid: QuadratureGrid<D>,
    spacing: f64,
    resolution: usize,
    fine: Mutex<HashMap<usize, Arc<QuadratureGrid<D>>>>,
}

impl<const D: usize> Discretization<D> {
    /// `resolution` is `ñ` for curves and the Gauss order `N` for surfaces.
    pub fn new(geom: Arc<dyn Boundary<D>>, resolution: usize) -> Self {
        let grid = geom.quadrature(resolution);
        let spacing = grid.spacing();
        Self {
            geom,
            grid,
            spacing,
            resolution,
            fine: Mutex::new(HashMap::new()),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    fn fine_grid(&self, factor: usize) -> Arc<QuadratureGrid<D>> {
        let mut cache = self.fine.lock().expect("grid cache poisoned");
        cache
            .entry(factor)
            .or_insert_with(|| Arc::new(self.geom.quadrature(self.resolution * factor)))
            .clone()
    }

    /// Oversampling factor so that the fine spacing is at most a third of
    /// the depth; 1 means the plain grid is already adequate.
    fn oversampling(&self, depth: f64) -> usize {
        let f = (3.0 * self.spacing / depth).ceil();
        if f <= 1.0 {
            1
        } else {
            (f as usize).min(MAX_OVERSAMPLING)
        }
    }

    pub fn near_field(&self, x: &Point<D>, hint: Option<BoundaryParam>) -> Result<NearField<D>> {
        let pr = self.geom.project(x, hint);
        if !(pr.depth > 0.0) || !self.geom.contains(x) {
            return Err(Error::Domain(format!(
                "evaluation point {:?} is not inside the domain",
                x.as_slice()
            )));
        }
        let factor = self.oversampling(pr.depth);
        if factor == 1 {
            return Ok(NearField {
                foot: pr.frame,
                depth: pr.depth,
                interp: Vec::new(),
                single_layer_defect: 0.0,
                gradient_defect: Point::zeros(),
            });
        }
        let fine = self.fine_grid(factor);
        let sums = |g: &QuadratureGrid<D>| {
            let mut s = 0.0;
            let mut gs = Point::<D>::zeros();
            for (y, w) in g.nodes.iter().zip(&g.weights) {
                s += phi_unchecked(x, y) * w;
                gs += grad_phi_unchecked(x, y) * *w;
            }
            (s, gs)
        };
        let (sf, gf) = sums(&fine);
        let (sg, gg) = sums(&self.grid);
        Ok(NearField {
            foot: pr.frame,
            depth: pr.depth,
            interp: self.grid.interpolation_weights(pr.frame.param),
            single_layer_defect: sf - sg,
            gradient_defect: gf - gg,
        })
    }

    /// Near fields for a node set, using stored foot parameters as hints.
    pub fn near_fields(&self, points: &InteriorNodeSet<D>) -> Result<Vec<NearField<D>>> {
        points
            .nodes
            .iter()
            .zip(&points.params)
            .map(|(x, p)| self.near_field(x, *p))
            .collect()
    }
}

/// Volume potential `∫_Ω Φ(x,y) f(y) dy` of `f = Δf̂` at interior `x`,
/// written as boundary integrals:
///
/// ```text
/// ∮ Φ(x,y) Q(y) ds − ∮ (f̂(y) − f̂(x) − ∇f̂(x)·(y−x)) ∂Φ/∂ν(y) ds,
/// Q(y) = ∂f̂/∂ν(y) − ∇f̂(x)·ν(y)
/// ```
///
/// which equals `∮[Φ ∂_ν f̂ − f̂ ∂_ν Φ] ds − f̂(x)` by the Gauss identity
/// and `∮(y−x)_i ∂_νΦ ds = ∮Φ ν_i ds`, but with bounded integrands.
pub fn volume_potential<const D: usize>(
    x: &Point<D>,
    fhat: impl Fn(&Point<D>) -> f64,
    grad_fhat: impl Fn(&Point<D>) -> Point<D>,
    disc: &Discretization<D>,
    near: &NearField<D>,
) -> f64 {
    let g = &disc.grid;
    let fx = fhat(x);
    let gx = grad_fhat(x);
    let mut sum = 0.0;
    for j in 0..g.len() {
        let y = &g.nodes[j];
        let nu = &g.normals[j];
        let q = (grad_fhat(y) - gx).dot(nu);
        let rem = fhat(y) - fx - gx.dot(&(y - x));
        sum += g.weights[j] * (phi_unchecked(x, y) * q - rem * dphi_dnu_y_unchecked(x, y, nu));
    }
    if near.is_active() {
        let q_foot = (grad_fhat(&near.foot.point) - gx).dot(&near.foot.normal);
        sum += q_foot * near.single_layer_defect;
    }
    sum
}

/// `D_k(x) = ∫_Ω Φ(x,y) f_k(y) dy` by the boundary reduction.
pub fn drm_dk<const D: usize>(x: &Point<D>, k: usize, basis: &DrmBasis<D>, disc: &Discretization<D>) -> Result<f64> {
    let near = disc.near_field(x, None)?;
    Ok(volume_potential(
        x,
        |y| basis.fhat(k, y),
        |y| basis.grad_fhat(k, y),
        disc,
        &near,
    ))
}

/// Per-node tables of `f̂_k` and `∂_ν f̂_k` on the boundary grid.
struct PrimitiveTables {
    fhat: DMatrix<f64>,
    dnu: DMatrix<f64>,
}

fn primitive_tables<const D: usize>(basis: &DrmBasis<D>, grid: &QuadratureGrid<D>) -> PrimitiveTables {
    let (n, m) = (grid.len(), basis.len());
    let mut fhat = DMatrix::zeros(n, m);
    let mut dnu = DMatrix::zeros(n, m);
    for j in 0..n {
        for k in 0..m {
            fhat[(j, k)] = basis.fhat(k, &grid.nodes[j]);
            dnu[(j, k)] = basis.grad_fhat(k, &grid.nodes[j]).dot(&grid.normals[j]);
        }
    }
    PrimitiveTables { fhat, dnu }
}

/// `K11[i, k] = D_k(z_i)`.
pub fn assemble_k11<const D: usize>(
    eval: &InteriorNodeSet<D>,
    basis: &DrmBasis<D>,
    disc: &Discretization<D>,
) -> Result<DMatrix<f64>> {
    let near = disc.near_fields(eval)?;
    Ok(k11_with_near(eval, &near, basis, disc))
}

fn k11_with_near<const D: usize>(
    eval: &InteriorNodeSet<D>,
    near: &[NearField<D>],
    basis: &DrmBasis<D>,
    disc: &Discretization<D>,
) -> DMatrix<f64> {
    let g = &disc.grid;
    let tables = primitive_tables(basis, g);
    let (p, m, n) = (eval.len(), basis.len(), g.len());
    let mut out = DMatrix::zeros(p, m);
    let mut phi = vec![0.0; n];
    let mut dphi = vec![0.0; n];
    for (i, x) in eval.nodes.iter().enumerate() {
        for j in 0..n {
            phi[j] = phi_unchecked(x, &g.nodes[j]) * g.weights[j];
            dphi[j] = dphi_dnu_y_unchecked(x, &g.nodes[j], &g.normals[j]) * g.weights[j];
        }
        for k in 0..m {
            let fx = basis.fhat(k, x);
            let gx = basis.grad_fhat(k, x);
            let mut sum = 0.0;
            for j in 0..n {
                let y = &g.nodes[j];
                let q = tables.dnu[(j, k)] - gx.dot(&g.normals[j]);
                let rem = tables.fhat[(j, k)] - fx - gx.dot(&(y - x));
                sum += phi[j] * q - rem * dphi[j];
            }
            let nf = &near[i];
            if nf.is_active() {
                let q_foot = (basis.grad_fhat(k, &nf.foot.point) - gx).dot(&nf.foot.normal);
                sum += q_foot * nf.single_layer_defect;
            }
            out[(i, k)] = sum;
        }
    }
    out
}

/// `K12[i, j] ≈ Φ(z_i, y_j) w_j`, plus the near-field correction
/// `c_j(foot_i)·(S(z_i) − S_grid(z_i))`.
pub fn assemble_k12<const D: usize>(eval: &InteriorNodeSet<D>, disc: &Discretization<D>) -> Result<DMatrix<f64>> {
    let near = disc.near_fields(eval)?;
    Ok(k12_with_near(eval, &near, disc))
}

fn k12_with_near<const D: usize>(
    eval: &InteriorNodeSet<D>,
    near: &[NearField<D>],
    disc: &Discretization<D>,
) -> DMatrix<f64> {
    let g = &disc.grid;
    let mut out = DMatrix::from_fn(eval.len(), g.len(), |i, j| {
        phi_unchecked(&eval.nodes[i], &g.nodes[j]) * g.weights[j]
    });
    for (i, nf) in near.iter().enumerate() {
        for &(j, c) in &nf.interp {
            out[(i, j)] += c * nf.single_layer_defect;
        }
    }
    out
}

/// `2∫_Ω ∂Φ(x_j,y)/∂ν(x_j) f_k(y) dy` at the boundary nodes, by radial
/// integration:
///
/// ```text
/// Σ_m RK(x_j, y_m) · Σ_l w_l f_k(x_j + (1+t_l)/2·(y_m − x_j)) · w_m
/// ```
///
/// with an `n_gauss`-point Gauss–Legendre rule along each segment.
pub fn assemble_k21_rim<const D: usize>(
    disc: &Discretization<D>,
    basis: &DrmBasis<D>,
    n_gauss: usize,
) -> Result<DMatrix<f64>> {
    if n_gauss < 4 {
        return Err(Error::param(
            "n_gauss",
            format!("radial Gauss order must be >= 4, got {n_gauss}"),
        ));
    }
    let g = &disc.grid;
    let diam = disc.geom.diameter();
    let rule = GaussLegendre::new(n_gauss);
    let s: Vec<f64> = rule.nodes.iter().map(|t| 0.5 * (1.0 + t)).collect();
    let (n, m) = (g.len(), basis.len());
    // centers in structure-of-arrays form for the inner loop
    let cs: Vec<Vec<f64>> = (0..D).map(|d| basis.centers.iter().map(|c| c[d]).collect()).collect();
    let mut out = DMatrix::zeros(n, m);
    let mut acc = vec![0.0; m];
    let mut seg = vec![[0.0; D]; n_gauss];
    for j in 0..n {
        let x = &g.nodes[j];
        acc.iter_mut().for_each(|a| *a = 0.0);
        for mm in 0..n {
            let wgt = rk_kernel(x, &g.nodes[mm], &g.normals[j], &g.normals[mm], diam) * g.weights[mm];
            if wgt == 0.0 {
                continue;
            }
            let dz = g.nodes[mm] - x;
            for (l, p) in seg.iter_mut().enumerate() {
                for d in 0..D {
                    p[d] = x[d] + s[l] * dz[d];
                }
            }
            for (l, p) in seg.iter().enumerate() {
                let wl = wgt * rule.weights[l];
                for k in 0..m {
                    let mut r2 = 0.0;
                    for d in 0..D {
                        let t = p[d] - cs[d][k];
                        r2 += t * t;
                    }
                    acc[k] += wl * (1.0 + r2.sqrt());
                }
            }
        }
        for k in 0..m {
            out[(j, k)] = acc[k];
        }
    }
    Ok(out)
}

/// `∫_0^1 |a + s·b| ds` in closed form, given `|b|²`, `a·b` and `|a|²`.
#[inline]
pub fn segment_distance_integral(b2: f64, ab: f64, a2: f64) -> f64 {
    if b2 == 0.0 {
        return a2.sqrt();
    }
    let l = b2.sqrt();
    let p = -ab / b2;
    let e2 = (a2 / b2 - p * p).max(0.0);
    let (u0, u1) = (-p, 1.0 - p);
    let s0 = (u0 * u0 + e2).sqrt();
    let s1 = (u1 * u1 + e2).sqrt();
    let mut v = 0.5 * (u1 * s1 - u0 * s0);
    if e2 > 1e-28 {
        // u + sqrt(u² + e²) without cancellation for u < 0
        let g = |u: f64, s: f64| if u >= 0.0 { u + s } else { e2 / (s - u) };
        v += 0.5 * e2 * (g(u1, s1) / g(u0, s0)).ln();
    }
    l * v
}

/// As [`assemble_k21_rim`], with the segment integral of `f_k` evaluated
/// exactly by [`segment_distance_integral`] instead of by Gauss–Legendre.
///
/// A segment `[x_j, y_m]` passing close to a center `x_k` sees the kink of
/// `|y − x_k|`, which limits a fixed Gauss rule to about three digits.
pub fn assemble_k21_rim_exact<const D: usize>(disc: &Discretization<D>, basis: &DrmBasis<D>) -> DMatrix<f64> {
    let g = &disc.grid;
    let diam = disc.geom.diameter();
    let (n, m) = (g.len(), basis.len());
    let mut out = DMatrix::zeros(n, m);
    let mut acc = vec![0.0; m];
    let mut a: Vec<[f64; D]> = vec![[0.0; D]; m];
    let mut a2 = vec![0.0; m];
    for j in 0..n {
        let x = &g.nodes[j];
        for k in 0..m {
            let d = x - basis.centers[k];
            for dd in 0..D {
                a[k][dd] = d[dd];
            }
            a2[k] = d.norm_squared();
        }
        acc.iter_mut().for_each(|v| *v = 0.0);
        for mm in 0..n {
            let wgt = rk_kernel(x, &g.nodes[mm], &g.normals[j], &g.normals[mm], diam) * g.weights[mm];
            if wgt == 0.0 {
                continue;
            }
            let b = g.nodes[mm] - x;
            let b2 = b.norm_squared();
            for k in 0..m {
                let mut ab = 0.0;
                for dd in 0..D {
                    ab += a[k][dd] * b[dd];
                }
                // Σ_l w_l f_k(...) over [-1, 1] is twice the mean of f_k on the segment
                acc[k] += wgt * 2.0 * (1.0 + segment_distance_integral(b2, ab, a2[k]));
            }
        }
        for k in 0..m {
            out[(j, k)] = acc[k];
        }
    }
    out
}

/// Inner rule of the radial integration along segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RimRule {
    /// Gauss–Legendre with the given number of points.
    Gauss(usize),
    /// Closed-form integral of `f_k` along the segment.
    Exact,
}

pub fn assemble_k21<const D: usize>(
    disc: &Discretization<D>,
    basis: &DrmBasis<D>,
    rule: RimRule,
) -> Result<DMatrix<f64>> {
    match rule {
        RimRule::Gauss(n) => assemble_k21_rim(disc, basis, n),
        RimRule::Exact => Ok(assemble_k21_rim_exact(disc, basis)),
    }
}

/// `∫_Ω F(y) dy` by radial integration from the origin `x`:
///
/// ```text
/// ∮ ((z−x)·ν(z)) / |z−x|^D · ∫_0^{|z−x|} F(x + ρ θ̂) ρ^{D−1} dρ ds(z)
/// ```
///
/// `x` may lie inside Ω or on ∂Ω; `F` must be defined along every segment
/// `[x, z]`, also where it leaves Ω.
pub fn rim_volume_integral<const D: usize>(
    disc: &Discretization<D>,
    x: &Point<D>,
    f: impl Fn(&Point<D>) -> f64,
    n_gauss: usize,
) -> f64 {
    let g = &disc.grid;
    let rule = GaussLegendre::new(n_gauss);
    let mut sum = 0.0;
    for m in 0..g.len() {
        let dz = g.nodes[m] - x;
        let r = dz.norm();
        if r < 1e-12 * disc.geom.diameter() {
            continue;
        }
        let radial = rule.integrate(0.0, r, |rho| f(&(x + dz * (rho / r))) * rho.powi(D as i32 - 1));
        sum += dz.dot(&g.normals[m]) / r.powi(D as i32) * radial * g.weights[m];
    }
    sum
}

/// `K22` block (`2∮∂Φ/∂ν(x) ψ ds` on the grid), via the geometry's rule.
pub fn assemble_k22<const D: usize>(disc: &Discretization<D>) -> DMatrix<f64> {
    disc.geom.adjoint_double_layer(&disc.grid)
}

/// Adjoint double layer with the weakly singular part removed through
/// `∮∂Φ(x,y)/∂ν(y) ds(y) = −1/2` on ∂Ω:
///
/// ```text
/// 2∮∂_{ν(x)}Φ ψ ds = 2∮[∂_{ν(x)}Φ ψ(y) − ∂_{ν(y)}Φ ψ(x)] ds − ψ(x)
/// ```
///
/// The bracket is bounded; its self term is dropped.
pub fn adjoint_double_layer_subtracted<const D: usize>(grid: &QuadratureGrid<D>) -> DMatrix<f64> {
    let n = grid.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let x = &grid.nodes[i];
        let nu_x = &grid.normals[i];
        let mut diag = -1.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let y = &grid.nodes[j];
            let w = grid.weights[j];
            out[(i, j)] = 2.0 * grad_phi_unchecked(x, y).dot(nu_x) * w;
            diag -= 2.0 * dphi_dnu_y_unchecked(x, y, &grid.normals[j]) * w;
        }
        out[(i, i)] = diag;
    }
    out
}

/// The four blocks with the inner-product weights of the layer and boundary
/// spaces.
#[derive(Debug, Clone)]
pub struct OperatorBlocks {
    pub k11: DMatrix<f64>,
    pub k12: DMatrix<f64>,
    pub k21: DMatrix<f64>,
    pub k22: DMatrix<f64>,
    /// Weights of the discrete `L²(Ω_ε)` inner product on layer rows.
    pub layer_weights: Vec<f64>,
    /// Boundary quadrature weights.
    pub boundary_weights: Vec<f64>,
}

impl OperatorBlocks {
    /// Assemble all blocks. `layer_measure` is `|Ω_ε|`, shared equally
    /// between the layer rows.
    pub fn assemble<const D: usize>(
        disc: &Discretization<D>,
        eval: &InteriorNodeSet<D>,
        basis: &DrmBasis<D>,
        rim: RimRule,
        layer_measure: f64,
    ) -> Result<Self> {
        let near = disc.near_fields(eval)?;
        let k11 = k11_with_near(eval, &near, basis, disc);
        let k12 = k12_with_near(eval, &near, disc);
        let k21 = assemble_k21(disc, basis, rim)?;
        let k22 = assemble_k22(disc);
        let p = eval.len().max(1);
        Ok(Self {
            k11,
            k12,
            k21,
            k22,
            layer_weights: vec![layer_measure / p as f64; eval.len()],
            boundary_weights: disc.grid.weights.clone(),
        })
    }

    pub fn n_alpha(&self) -> usize {
        self.k11.ncols()
    }

    pub fn n_psi(&self) -> usize {
        self.k22.ncols()
    }

    /// `[[K11, K12], [K21, I + K22]]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (p, m) = self.k11.shape();
        let n = self.n_psi();
        let mut k = DMatrix::zeros(p + n, m + n);
        k.view_mut((0, 0), (p, m)).copy_from(&self.k11);
        k.view_mut((0, m), (p, n)).copy_from(&self.k12);
        k.view_mut((p, 0), (n, m)).copy_from(&self.k21);
        k.view_mut((p, m), (n, n)).copy_from(&self.k22);
        for i in 0..n {
            k[(p + i, m + i)] += 1.0;
        }
        k
    }

    /// Apply the stacked operator to a pair: `(layer values, boundary values)`.
    pub fn apply(&self, pair: &DensityPair) -> (Vec<f64>, Vec<f64>) {
        let a = DVector::from_column_slice(&pair.alpha);
        let s = DVector::from_column_slice(&pair.psi);
        let layer = &self.k11 * &a + &self.k12 * &s;
        let boundary = &self.k21 * &a + &self.k22 * &s + &s;
        (layer.as_slice().to_vec(), boundary.as_slice().to_vec())
    }

    /// Write all blocks in the block dump format (see [`write_block`]).
    pub fn dump(&self, mut out: impl Write) -> std::io::Result<()> {
        for (tag, m) in [
            (*b"K11 ", &self.k11),
            (*b"K12 ", &self.k12),
            (*b"K21 ", &self.k21),
            (*b"K22 ", &self.k22),
        ] {
            write_block(&mut out, tag, m)?;
        }
        Ok(())
    }
}

/// Magic bytes starting every dumped block.
pub const BLOCK_MAGIC: [u8; 8] = *b"LEVIBLK1";

/// One block: magic, 4-byte ASCII tag, rows and columns as little-endian
/// `u64`, then `rows·cols` little-endian `f64` in row-major order.
pub fn write_block(mut out: impl Write, tag: [u8; 4], m: &DMatrix<f64>) -> std::io::Result<()> {
    out.write_all(&BLOCK_MAGIC)?;
    out.write_all(&tag)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Inverse of [`write_block`].
pub fn read_block(mut input: impl Read) -> std::io::Result<([u8; 4], DMatrix<f64>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if magic != BLOCK_MAGIC {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad block magic"));
    }
    let mut tag = [0u8; 4];
    input.read_exact(&mut tag)?;
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    let rows = u64::from_le_bytes(b) as usize;
    input.read_exact(&mut b)?;
    let cols = u64::from_le_bytes(b) as usize;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            input.read_exact(&mut b)?;
            m[(i, j)] = f64::from_le_bytes(b);
        }
    }
    Ok((tag, m))
}

/// `u(x) = Σ α_k D_k(x) + ∮Φ(x,y)ψ̃(y)ds` at an interior point.
pub fn evaluate_representation<const D: usize>(
    pair: &DensityPair,
    x: &Point<D>,
    basis: &DrmBasis<D>,
    disc: &Discretization<D>,
) -> Result<f64> {
    let near = disc.near_field(x, None)?;
    Ok(representation_with_near(pair, x, &near, basis, disc))
}

pub(crate) fn representation_with_near<const D: usize>(
    pair: &DensityPair,
    x: &Point<D>,
    near: &NearField<D>,
    basis: &DrmBasis<D>,
    disc: &Discretization<D>,
) -> f64 {
    let g = &disc.grid;
    let mut u = 0.0;
    for (k, a) in pair.alpha.iter().enumerate() {
        if *a != 0.0 {
            u += a * volume_potential(x, |y| basis.fhat(k, y), |y| basis.grad_fhat(k, y), disc, near);
        }
    }
    for j in 0..g.len() {
        u += phi_unchecked(x, &g.nodes[j]) * g.weights[j] * pair.psi[j];
    }
    if near.is_active() {
        let psi_foot: f64 = near.interp.iter().map(|&(j, c)| c * pair.psi[j]).sum();
        u += psi_foot * near.single_layer_defect;
    }
    u
}

/// `∇u(x)` and whether `x` lies within `1e-3·diam` of the boundary, where
/// the quadrature is near-singular.
///
/// `∇D_k(x) = ∮∇ₓΦ Q ds − ∮(f̂(y) − f̂(x) − ∇f̂(x)·(y−x)) ∇ₓ∂_{ν(y)}Φ ds`;
/// the terms from differentiating `f̂(x)` and `∇f̂(x)` cancel.
pub fn evaluate_representation_gradient<const D: usize>(
    pair: &DensityPair,
    x: &Point<D>,
    basis: &DrmBasis<D>,
    disc: &Discretization<D>,
) -> Result<(Point<D>, bool)> {
    let near = disc.near_field(x, None)?;
    let flag = near.depth < 1e-3 * disc.geom.diameter();
    Ok((gradient_with_near(pair, x, &near, basis, disc), flag))
}

pub(crate) fn gradient_with_near<const D: usize>(
    pair: &DensityPair,
    x: &Point<D>,
    near: &NearField<D>,
    basis: &DrmBasis<D>,
    disc: &Discretization<D>,
) -> Point<D> {
    let g = &disc.grid;
    let n = g.len();
    let gphi: Vec<Point<D>> = (0..n)
        .map(|j| grad_phi_unchecked(x, &g.nodes[j]) * g.weights[j])
        .collect();
    let gdphi: Vec<Point<D>> = (0..n)
        .map(|j| grad_dphi_dnu_y_unchecked(x, &g.nodes[j], &g.normals[j]) * g.weights[j])
        .collect();
    let mut grad = Point::<D>::zeros();
    for (k, a) in pair.alpha.iter().enumerate() {
        if *a == 0.0 {
            continue;
        }
        let fx = basis.fhat(k, x);
        let gx = basis.grad_fhat(k, x);
        let mut gk = Point::<D>::zeros();
        for j in 0..n {
            let y = &g.nodes[j];
            let q = (basis.grad_fhat(k, y) - gx).dot(&g.normals[j]);
            let rem = basis.fhat(k, y) - fx - gx.dot(&(y - x));
            gk += gphi[j] * q - gdphi[j] * rem;
        }
        if near.is_active() {
            let q_foot = (basis.grad_fhat(k, &near.foot.point) - gx).dot(&near.foot.normal);
            gk += near.gradient_defect * q_foot;
        }
        grad += gk * *a;
    }
    for (g, p) in gphi.iter().zip(&pair.psi).take(n) {
        grad += g * *p;
    }
    if near.is_active() {
        let psi_foot: f64 = near.interp.iter().map(|&(j, c)| c * pair.psi[j]).sum();
        grad += near.gradient_defect * psi_foot;
    }
    grad
}

/// `μ̃(x) = Σ α_k f_k(x)`.
pub fn mu_tilde<const D: usize>(pair: &DensityPair, x: &Point<D>, basis: &DrmBasis<D>) -> f64 {
    basis.mu(&pair.alpha, x)
}

/// Resolution-independent description of a grid, for reports.
pub fn grid_label<const D: usize>(grid: &QuadratureGrid<D>) -> String {
    match &grid.kind {
        GridKind::Trapezoid { n_half } => format!("trapezoid n_half={n_half} nodes={}", grid.len()),
        GridKind::GaussProduct { order, .. } => format!("gauss-product N={order} nodes={}", grid.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{layer_nodes, Curve, Surface};
    use nalgebra::{Vector2, Vector3};
    use std::f64::consts::PI;

    fn disk(n_half: usize) -> Discretization<2> {
        Discretization::new(Arc::new(Curve::circle(1.0)), n_half)
    }

    #[test]
    fn primitive_laplacian_matches_basis() {
        let b2 = DrmBasis::new(vec![Vector2::new(0.2, -0.1)]);
        let b3 = DrmBasis::new(vec![Vector3::new(0.2, -0.1, 0.3)]);
        let h = 1e-3;
        let x2 = Vector2::new(0.7, 0.4);
        let lap2: f64 = (0..2)
            .map(|i| {
                let mut e = Vector2::zeros();
                e[i] = h;
                (b2.fhat(0, &(x2 + e)) - 2.0 * b2.fhat(0, &x2) + b2.fhat(0, &(x2 - e))) / (h * h)
            })
            .sum();
        assert!((lap2 - b2.f(0, &x2)).abs() < 1e-5 * b2.f(0, &x2));
        let x3 = Vector3::new(-0.3, 0.5, 0.1);
        let lap3: f64 = (0..3)
            .map(|i| {
                let mut e = Vector3::zeros();
                e[i] = h;
                (b3.fhat(0, &(x3 + e)) - 2.0 * b3.fhat(0, &x3) + b3.fhat(0, &(x3 - e))) / (h * h)
            })
            .sum();
        assert!((lap3 - b3.f(0, &x3)).abs() < 1e-5 * b3.f(0, &x3));
    }

    #[test]
    fn volume_potential_of_unit_density_at_disk_center() {
        let d = disk(64);
        let x = Vector2::zeros();
        let near = d.near_field(&x, None).unwrap();
        let v = volume_potential(&x, |y| y.norm_squared() / 4.0, |y| y / 2.0, &d, &near);
        assert!((v - 0.25).abs() < 1e-12);
        // f = 1 + r centred at the origin: ∫ r ln(1/r)(1 + r) dr = 1/4 + 1/9
        let b = DrmBasis::new(vec![Vector2::zeros()]);
        assert!((drm_dk(&x, 0, &b, &d).unwrap() - 13.0 / 36.0).abs() < 1e-10);
    }

    #[test]
    fn constant_primitive_gives_zero() {
        let d = Discretization::new(Arc::new(Curve::heart()), 64);
        let x = Vector2::new(1.0, 1.0);
        let near = d.near_field(&x, None).unwrap();
        let v = volume_potential(&x, |_| 1.0, |_| Vector2::zeros(), &d, &near);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn single_layer_constants_at_disk_center() {
        let set = InteriorNodeSet::from_points(&Curve::circle(1.0), vec![Vector2::zeros()], 0.1);
        let k = assemble_k12(&set, &disk(32)).unwrap();
        assert!(k.row(0).sum().abs() < 1e-12);
        let d2 = Discretization::new(Arc::new(Curve::circle(2.0)), 32);
        let set2 = InteriorNodeSet::from_points(&Curve::circle(2.0), vec![Vector2::zeros()], 0.1);
        let k2 = assemble_k12(&set2, &d2).unwrap();
        assert!((k2.row(0).sum() + 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn near_boundary_single_layer_is_corrected() {
        let d = Discretization::new(Arc::new(Curve::heart()), 64);
        let set = layer_nodes(d.geom.as_ref(), 0.1, 16, 1).unwrap();
        let k = assemble_k12(&set, &d).unwrap();
        let fine = Discretization::new(Arc::new(Curve::heart()), 4096);
        for (i, x) in set.nodes.iter().enumerate() {
            // ψ = cos t is smooth, so the fine plain rule is the oracle
            let exact: f64 = (0..fine.grid.len())
                .map(|j| phi_unchecked(x, &fine.grid.nodes[j]) * fine.grid.weights[j] * fine.grid.params[j].t().cos())
                .sum();
            let approx: f64 = (0..d.grid.len()).map(|j| k[(i, j)] * d.grid.params[j].t().cos()).sum();
            assert!((exact - approx).abs() < 1e-6, "{i}: {exact} vs {approx}");
        }
    }

    #[test]
    fn circle_k22_identities() {
        let d = disk(32);
        let k = assemble_k22(&d);
        for i in 0..d.grid.len() {
            assert!((k.row(i).sum() + 1.0).abs() < 1e-10);
            assert!((k[(i, i)] + 1.0 / 64.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_subtracted_double_layer_row_sums() {
        let g = Surface::sphere(0.7).quadrature(12);
        let k = adjoint_double_layer_subtracted(&g);
        for i in (0..g.len()).step_by(17) {
            assert!((k.row(i).sum() + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rim_area_identity() {
        let d = disk(64);
        for x in [d.grid.nodes[5], Vector2::new(0.1, 0.3)] {
            let area = rim_volume_integral(&d, &x, |_| 1.0, 8);
            assert!((area - PI).abs() < 1e-8);
        }
    }

    #[test]
    fn segment_integral_matches_quadrature() {
        let rule = GaussLegendre::new(40);
        for &(a, b) in &[
            (Vector2::new(0.3, -0.2), Vector2::new(1.0, 0.5)),
            (Vector2::new(-0.5, 0.0), Vector2::new(1.0, 0.0)),
            (Vector2::new(0.0, 0.0), Vector2::new(0.2, 0.1)),
            (Vector2::new(2.0, 1.0), Vector2::new(-0.1, 0.3)),
        ] {
            let exact = segment_distance_integral(b.norm_squared(), a.dot(&b), a.norm_squared());
            let p = (-a.dot(&b) / b.norm_squared()).clamp(0.0, 1.0);
            let f = |s: f64| (a + b * s).norm();
            let quad = rule.integrate(0.0, p, f) + rule.integrate(p, 1.0, f);
            assert!((exact - quad).abs() < 1e-12, "{exact} vs {quad}");
        }
    }

    #[test]
    fn block_dump_roundtrip() {
        let m = DMatrix::from_fn(3, 2, |i, j| i as f64 - 0.5 * j as f64);
        let mut buf = Vec::new();
        write_block(&mut buf, *b"K12 ", &m).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 16 + 6 * 8);
        let (tag, back) = read_block(&buf[..]).unwrap();
        assert_eq!(&tag, b"K12 ");
        assert_eq!(back, m);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = Discretization::new(Arc::new(Curve::heart()), 64);
        let set = layer_nodes(d.geom.as_ref(), 0.1, 8, 2).unwrap();
        let basis = DrmBasis::new(set.nodes.clone());
        let pair = DensityPair {
            alpha: (0..8).map(|k| (k as f64 * 0.7).sin()).collect(),
            psi: d.grid.params.iter().map(|p| (2.0 * p.t()).cos()).collect(),
        };
        let x = Vector2::new(1.0, 1.0);
        let (g, flag) = evaluate_representation_gradient(&pair, &x, &basis, &d).unwrap();
        assert!(!flag);
        let h = 1e-6 * d.geom.diameter();
        for i in 0..2 {
            let mut e = Vector2::zeros();
            e[i] = h;
            let fd = (evaluate_representation(&pair, &(x + e), &basis, &d).unwrap()
                - evaluate_representation(&pair, &(x - e), &basis, &d).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * g.norm(), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn outside_point_is_rejected() {
        let d = disk(16);
        let pair = DensityPair::zeros(0, d.grid.len());
        let b = DrmBasis::<2>::new(vec![]);
        assert!(evaluate_representation(&pair, &Vector2::new(1.5, 0.0), &b, &d).is_err());
        assert_eq!(
            evaluate_representation(&pair, &Vector2::new(0.2, 0.0), &b, &d).unwrap(),
            0.0
        );
    }
}
