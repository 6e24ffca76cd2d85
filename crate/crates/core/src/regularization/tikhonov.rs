use crate::levi_operators::{DensityPair, OperatorBlocks};
use crate::linalg::{spd_solve, weighted_gram, weighted_rhs};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Weighted Tikhonov problem `min ‖Kφ − b‖²_W + β‖φ‖²_V` with its normal
/// matrix `KᵀWK` cached, so that several `β` or right-hand sides reuse it.
#[derive(Debug, Clone)]
pub struct TikhonovSystem {
    k: DMatrix<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
    gram: DMatrix<f64>,
    n_alpha: usize,
}

impl TikhonovSystem {
    /// `W` holds the layer cell measures and boundary quadrature weights;
    /// `V` weighs the `α` coefficients by `|Ω_ε|/M` and `ψ` by the boundary
    /// weights.
    pub fn new(blocks: &OperatorBlocks) -> Self {
        let k = blocks.stacked();
        let mut w = blocks.layer_weights.clone();
        w.extend_from_slice(&blocks.boundary_weights);
        let m = blocks.n_alpha();
        let layer_measure: f64 = blocks.layer_weights.iter().sum();
        let mut v = vec![layer_measure / m.max(1) as f64; m];
        v.extend_from_slice(&blocks.boundary_weights);
        let gram = weighted_gram(&k, &w);
        Self {
            k,
            w,
            v,
            gram,
            n_alpha: m,
        }
    }

    /// A system from an explicit matrix and weights; `n_alpha` columns of
    /// `k` belong to the volume density.
    pub fn from_parts(k: DMatrix<f64>, w: Vec<f64>, v: Vec<f64>, n_alpha: usize) -> Result<Self> {
        if w.len() != k.nrows() || v.len() != k.ncols() || n_alpha > k.ncols() {
            return Err(Error::Dimension(format!(
                "matrix {}x{} with {} row weights, {} column weights",
                k.nrows(),
                k.ncols(),
                w.len(),
                v.len()
            )));
        }
        let gram = weighted_gram(&k, &w);
        Ok(Self { k, w, v, gram, n_alpha })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Solve `(βV + KᵀWK)φ = KᵀWb`.
    pub fn solve_stacked(&self, b: &[f64], beta: f64) -> Result<Vec<f64>> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        if b.len() != self.k.nrows() {
            return Err(Error::Dimension(format!(
                "right-hand side of length {} for {} rows",
                b.len(),
                self.k.nrows()
            )));
        }
        let mut a = self.gram.clone();
        for (i, vi) in self.v.iter().enumerate() {
            a[(i, i)] += beta * vi;
        }
        let rhs = weighted_rhs(&self.k, &self.w, b);
        Ok(spd_solve(a, &rhs)?.as_slice().to_vec())
    }

    /// Solve with the layer and boundary parts of `b` given separately.
    pub fn solve(&self, rhs_layer: &[f64], rhs_boundary: &[f64], beta: f64) -> Result<DensityPair> {
        let mut b = rhs_layer.to_vec();
        b.extend_from_slice(rhs_boundary);
        let phi = self.solve_stacked(&b, beta)?;
        Ok(DensityPair::from_vector(&phi, self.n_alpha))
    }

    /// `‖Kφ − b‖²_W + β‖φ‖²_V`.
    pub fn functional(&self, phi: &[f64], b: &[f64], beta: f64) -> f64 {
        let r = &self.k * DVector::from_column_slice(phi) - DVector::from_column_slice(b);
        let misfit: f64 = r.iter().zip(&self.w).map(|(ri, wi)| wi * ri * ri).sum();
        let penalty: f64 = phi.iter().zip(&self.v).map(|(p, vi)| vi * p * p).sum();
        misfit + beta * penalty
    }

    /// Weighted residual `‖Kφ − b‖_W`.
    pub fn residual(&self, phi: &[f64], b: &[f64]) -> f64 {
        self.functional(phi, b, 0.0).sqrt()
    }
}

/// One-shot `(βI + 𝕂*𝕂)φ = 𝕂*b` for the stacked density system.
pub fn tikhonov_solve(
    blocks: &OperatorBlocks,
    rhs_layer: &[f64],
    rhs_boundary: &[f64],
    beta: f64,
) -> Result<DensityPair> {
    if rhs_layer.len() != blocks.k11.nrows() || rhs_boundary.len() != blocks.n_psi() {
        return Err(Error::Dimension(format!(
            "right-hand sides of length {}/{} for {}/{} rows",
            rhs_layer.len(),
            rhs_boundary.len(),
            blocks.k11.nrows(),
            blocks.n_psi()
        )));
    }
    TikhonovSystem::new(blocks).solve(rhs_layer, rhs_boundary, beta)
}
