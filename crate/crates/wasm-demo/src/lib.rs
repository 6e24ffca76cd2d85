//! Browser demo: the heart-shaped 2D case at reduced resolution.
//!
//! Exports a `HeartDemo` that assembles the operators once and then
//! reconstructs `h` and `σ` for any noise level and seed, plus the radial
//! profile of the mollifier. Everything also builds and runs natively.

use levi_eit::experiments::{case_heart_2d, prepare, run_single, PipelineSettings, Prepared};
use levi_eit::regularization::Mollifier;
use wasm_bindgen::prelude::*;

/// Settings scaled to `resolution` boundary nodes, clamped to `[32, 256]`.
pub fn demo_settings(resolution: usize) -> PipelineSettings {
    let n = resolution.clamp(32, 256);
    PipelineSettings {
        resolution: n,
        layer_count: n,
        drm_centers: n,
        grid_factor: 6.0,
        colloc_rings: 6,
        colloc_angular: (n / 4).max(16),
        error_rings: 8,
        error_angular: (n / 2).max(16),
        holdout: 8,
        ..PipelineSettings::defaults(2)
    }
}

#[wasm_bindgen]
pub struct HeartDemo {
    prep: Prepared<2>,
}

#[wasm_bindgen]
impl HeartDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(resolution: usize) -> Result<HeartDemo, String> {
        let prep = prepare(case_heart_2d(), demo_settings(resolution)).map_err(|e| e.to_string())?;
        Ok(HeartDemo { prep })
    }

    /// Boundary nodes as interleaved `x, y`.
    pub fn boundary(&self) -> Vec<f64> {
        self.prep.frames.iter().flat_map(|f| [f.point[0], f.point[1]]).collect()
    }

    /// Interior points where `σ` is compared, interleaved `x, y`.
    pub fn sigma_points(&self) -> Vec<f64> {
        self.prep.mesh.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn reconstruct(&self, delta: f64, seed: u32) -> Result<Reconstruction, String> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(format!("delta must be a non-negative number, got {delta}"));
        }
        let r = run_single(&self.prep, delta, seed as u64)
            .into_result()
            .map_err(|e| e.to_string())?;
        let (alpha, beta) = r
            .params
            .as_ref()
            .map(|p| (p.alpha, p.beta))
            .unwrap_or((f64::NAN, f64::NAN));
        Ok(Reconstruction {
            re_h: r.re_h.unwrap_or(f64::NAN),
            re_sigma: r.re_sigma.unwrap_or(f64::NAN),
            alpha,
            beta,
            h: r.h.unwrap_or_default(),
            h_true: r.h_true,
            sigma: r.sigma.unwrap_or_default(),
            sigma_true: r.sigma_true,
        })
    }
}

#[wasm_bindgen]
pub struct Reconstruction {
    re_h: f64,
    re_sigma: f64,
    alpha: f64,
    beta: f64,
    h: Vec<f64>,
    h_true: Vec<f64>,
    sigma: Vec<f64>,
    sigma_true: Vec<f64>,
}

#[wasm_bindgen]
impl Reconstruction {
    #[wasm_bindgen(getter)]
    pub fn re_h(&self) -> f64 {
        self.re_h
    }

    #[wasm_bindgen(getter)]
    pub fn re_sigma(&self) -> f64 {
        self.re_sigma
    }

    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[wasm_bindgen(getter)]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn h(&self) -> Vec<f64> {
        self.h.clone()
    }

    pub fn h_true(&self) -> Vec<f64> {
        self.h_true.clone()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.sigma.clone()
    }

    pub fn sigma_true(&self) -> Vec<f64> {
        self.sigma_true.clone()
    }
}

/// `ρ_α(r)` at `n` equispaced radii in `[0, α]`.
#[wasm_bindgen]
pub fn mollifier_profile(dim: usize, alpha: f64, n: usize) -> Result<Vec<f64>, String> {
    let m = Mollifier::new(dim, alpha).map_err(|e| e.to_string())?;
    let n = n.max(2);
    Ok((0..n).map(|i| m.kernel(alpha * i as f64 / (n - 1) as f64)).collect())
}
