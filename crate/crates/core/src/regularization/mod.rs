//! Step 1: mollified normal derivatives and the Robin coefficient. Step 2a:
//! Tikhonov solve of the density system. A-priori parameter rules.

mod extension;
mod growth;
mod mollifier;
mod tikhonov;

pub use extension::{ExtendedField, LayerGrid, MAX_LAYER_SAMPLES};
pub use growth::{growth_check, GrowthCheck, GrowthReport};
pub use mollifier::{
    mollified_normal_derivative, mollified_value, mollifier_mass, mollifier_profile, mollifier_profile_derivative,
    BallRule, FnField, Mollifier, ScalarField,
};
pub use tikhonov::{tikhonov_solve, TikhonovSystem};

use crate::{Error, Result};

fn check_rule_args(delta: f64, lambda0: f64, dim: usize) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    if !(lambda0 > 0.0 && lambda0 <= 1.0) {
        return Err(Error::param("lambda0", format!("must lie in (0, 1], got {lambda0}")));
    }
    if dim != 2 && dim != 3 {
        return Err(Error::param("dim", format!("must be 2 or 3, got {dim}")));
    }
    Ok(())
}

/// `α = c_α δ^{1/(n/2+λ₀)}`.
pub fn alpha_rule(delta: f64, lambda0: f64, dim: usize, c_alpha: f64) -> Result<f64> {
    check_rule_args(delta, lambda0, dim)?;
    Ok(c_alpha * delta.powf(1.0 / (dim as f64 / 2.0 + lambda0)))
}

/// `β = c_β δ^{λ₀/(n/2+λ₀)}`.
pub fn beta_rule(delta: f64, lambda0: f64, dim: usize, c_beta: f64) -> Result<f64> {
    check_rule_args(delta, lambda0, dim)?;
    Ok(c_beta * delta.powf(lambda0 / (dim as f64 / 2.0 + lambda0)))
}

/// Inputs to the parameter choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRules {
    pub lambda0: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
    /// Noise level at which the rules are evaluated when `δ = 0`.
    pub delta_floor: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl ParamRules {
    pub fn defaults(dim: usize) -> Self {
        let (c_alpha, c_beta, delta_floor) = if dim == 2 { (0.6, 5e-6, 1e-3) } else { (0.3, 1e-5, 1e-2) };
        Self {
            lambda0: 0.5,
            c_alpha,
            c_beta,
            delta_floor,
            alpha: None,
            beta: None,
        }
    }
}

/// Where an effective parameter came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSource {
    Rule,
    /// The rule exceeded the layer width and was capped at `ε`.
    Capped,
    Override,
}

impl ParamSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamSource::Rule => "rule",
            ParamSource::Capped => "rule-capped-at-eps",
            ParamSource::Override => "override",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub dim: usize,
    pub delta: f64,
    pub lambda0: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
    /// Noise level fed to the rules (`max(δ, floor)`).
    pub rule_delta: f64,
    pub alpha_rule: f64,
    pub beta_rule: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_source: ParamSource,
    pub beta_source: ParamSource,
}

impl RegularizationParams {
    pub fn resolve(rules: &ParamRules, delta: f64, dim: usize, eps: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::param("delta", format!("must be non-negative, got {delta}")));
        }
        let rule_delta = if delta > 0.0 { delta } else { rules.delta_floor };
        let alpha_rule = alpha_rule(rule_delta, rules.lambda0, dim, rules.c_alpha)?;
        let beta_rule = beta_rule(rule_delta, rules.lambda0, dim, rules.c_beta)?;
        let (alpha, alpha_source) = match rules.alpha {
            Some(a) if a > 0.0 && a <= eps => (a, ParamSource::Override),
            Some(a) => {
                return Err(Error::param(
                    "alpha",
                    format!("override {a} must lie in (0, ε = {eps}]"),
                ))
            }
            None if alpha_rule > eps => (eps, ParamSource::Capped),
            None => (alpha_rule, ParamSource::Rule),
        };
        let (beta, beta_source) = match rules.beta {
            Some(b) if b > 0.0 => (b, ParamSource::Override),
            Some(b) => return Err(Error::param("beta", format!("override {b} must be positive"))),
            None => (beta_rule, ParamSource::Rule),
        };
        Ok(Self {
            dim,
            delta,
            lambda0: rules.lambda0,
            c_alpha: rules.c_alpha,
            c_beta: rules.c_beta,
            rule_delta,
            alpha_rule,
            beta_rule,
            alpha,
            beta,
            alpha_source,
            beta_source,
        })
    }
}

/// `h(x_j) = (g(x_j) − σ(x_j) ∂_νu(x_j)) / U(x_j)`.
///
/// Fails if some `|U(x_j)|` is below `10⁻⁶ max|U|`.
pub fn recover_h(g: &[f64], sigma: &[f64], u: &[f64], dnu: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    if sigma.len() != n || u.len() != n || dnu.len() != n {
        return Err(Error::Dimension(format!(
            "boundary samples of lengths {n}/{}/{}/{}",
            sigma.len(),
            u.len(),
            dnu.len()
        )));
    }
    let floor = 1e-6 * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some((node, v)) = u.iter().enumerate().find(|(_, v)| !(v.abs() >= floor) || **v == 0.0) {
        return Err(Error::Degenerate {
            node,
            value: v.abs(),
            floor,
        });
    }
    Ok((0..n).map(|j| (g[j] - sigma[j] * dnu[j]) / u[j]).collect())
}

/// Boundary right-hand side `2g̃ − 2h̃U` with `g̃ = g/σ`, `h̃ = h/σ`.
pub fn boundary_rhs(g: &[f64], h: &[f64], sigma: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    if h.len() != n || sigma.len() != n || u.len() != n {
        return Err(Error::Dimension("boundary samples of different lengths".into()));
    }
    if let Some((j, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::Domain(format!(
            "conductivity {s} at boundary node {j} is not positive"
        )));
    }
    Ok((0..n)
        .map(|j| 2.0 * g[j] / sigma[j] - 2.0 * h[j] / sigma[j] * u[j])
        .collect())
}
