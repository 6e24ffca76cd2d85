//! Run configuration: a TOML file with one level of sections, plus
//! `section.key=value` overrides. Unset keys take the case defaults.
//!
//! ```toml
//! [case]
//! name = "heart2d"        # or "pinched_ball3d", "fourier2d"
//!
//! [noise]
//! delta = [0.01, 0.1]
//! seed = [7]
//!
//! [regularization]
//! beta = 0.05
//! ```

use crate::experiments::{case_heart_2d, case_pinched_ball_3d, ManufacturedCase, PipelineSettings, TraceMode};
use crate::geometry::{Curve, FourierCurve};
use crate::levi_operators::RimRule;
use crate::{Error, Result};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Noise levels of a sweep when the config does not list any.
pub const SWEEP_DELTAS: [f64; 4] = [0.01, 0.02, 0.05, 0.1];
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub case: CaseSection,
    pub noise: NoiseSection,
    pub grid: GridSection,
    pub regularization: RegularizationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseSection {
    pub name: Option<String>,
    /// Layer width.
    pub eps: Option<f64>,
    /// `fourier2d` only: the Example-1 fields on a custom curve
    /// `x(t) = offset + Σ_k cos[k−1] cos kt + sin[k−1] sin kt`.
    pub fourier_offset: Option<[f64; 2]>,
    pub fourier_cos: Option<Vec<[f64; 2]>>,
    pub fourier_sin: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub delta: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// `ñ` for curves, Gauss order `N` for surfaces.
    pub resolution: Option<usize>,
    pub layer_count: Option<usize>,
    pub node_seed: Option<u64>,
    pub grid_factor: Option<f64>,
    pub colloc_rings: Option<usize>,
    /// Angles per ring in 2D, icosphere level in 3D.
    pub colloc_angular: Option<usize>,
    pub boundary_stride: Option<usize>,
    pub error_rings: Option<usize>,
    pub error_angular: Option<usize>,
    pub holdout: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizationSection {
    pub lambda0: Option<f64>,
    pub c_alpha: Option<f64>,
    pub c_beta: Option<f64>,
    pub delta_floor: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_s: Option<f64>,
    /// DRM centres `M`.
    pub drm_centers: Option<usize>,
    /// Radial Gauss order `N_G` of the RIM; 0 selects the closed form.
    pub rim_order: Option<usize>,
    pub trace: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
    /// CSV dumps of `h` and `σ`.
    pub fields: Option<bool>,
    /// Binary dump of the operator blocks.
    pub matrices: Option<bool>,
    /// `#time` lines in the reports.
    pub timing: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub dir: String,
    pub fields: bool,
    pub matrices: bool,
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub enum CaseChoice {
    Plane(ManufacturedCase<2>),
    Space(ManufacturedCase<3>),
}

impl CaseChoice {
    pub fn name(&self) -> &'static str {
        match self {
            CaseChoice::Plane(c) => c.name,
            CaseChoice::Space(c) => c.name,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CaseChoice::Plane(_) => 2,
            CaseChoice::Space(_) => 3,
        }
    }
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub case: CaseChoice,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub settings: PipelineSettings,
    pub output: OutputOptions,
    /// The effective configuration, every key set.
    pub effective: RunConfig,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string().trim_end().to_string())
}

/// Parse `text` (possibly empty), then apply `section.key=value`
/// overrides in order. Values are TOML literals; anything that does not
/// parse as one is taken as a string.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    // parsing the text on its own first gives line/column diagnostics
    toml::from_str::<RunConfig>(text).map_err(config_err)?;
    let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table).try_into::<RunConfig>().map_err(config_err)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form section.key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key `{}` must be section.key", key.trim())))?;
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    // a scalar given for a list key becomes a one-element list
    let value = match (section, field, value) {
        ("noise", "delta" | "seed", v @ (toml::Value::Float(_) | toml::Value::Integer(_))) => {
            toml::Value::Array(vec![v])
        }
        (_, _, v) => v,
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a section"))),
    }
}

fn at_least(name: &'static str, value: usize, min: usize) -> Result<usize> {
    if value < min {
        return Err(Error::param(name, format!("must be at least {min}, got {value}")));
    }
    Ok(value)
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::param(name, format!("must be positive, got {value}")));
    }
    Ok(value)
}

fn fourier_case(c: &CaseSection) -> Result<ManufacturedCase<2>> {
    let offset = c.fourier_offset.unwrap_or([0.0, 0.0]);
    let cos: Vec<Vector2<f64>> = c
        .fourier_cos
        .clone()
        .unwrap_or_default()
        .iter()
        .map(|v| Vector2::new(v[0], v[1]))
        .collect();
    let sin: Vec<Vector2<f64>> = c
        .fourier_sin
        .clone()
        .unwrap_or_default()
        .iter()
        .map(|v| Vector2::new(v[0], v[1]))
        .collect();
    if cos.is_empty() && sin.is_empty() {
        return Err(Error::param(
            "fourier_cos",
            "a fourier2d case needs at least one harmonic",
        ));
    }
    let curve = Curve::new(FourierCurve {
        offset: Vector2::new(offset[0], offset[1]),
        cos,
        sin,
    });
    let mut case = case_heart_2d();
    case.name = "fourier2d";
    case.geom = Arc::new(curve);
    Ok(case)
}

impl RunConfig {
    /// Validate and fill defaults. `sweep` selects the default noise list.
    pub fn resolve(&self, sweep: bool) -> Result<Resolved> {
        let name = self.case.name.clone().unwrap_or_else(|| "heart2d".to_string());
        let case = match name.as_str() {
            "heart2d" => CaseChoice::Plane(case_heart_2d()),
            "pinched_ball3d" => CaseChoice::Space(case_pinched_ball_3d()),
            "fourier2d" => CaseChoice::Plane(fourier_case(&self.case)?),
            other => {
                return Err(Error::param(
                    "name",
                    format!("unknown case `{other}` (heart2d, pinched_ball3d, fourier2d)"),
                ))
            }
        };
        let dim = case.dim();
        let mut s = PipelineSettings::defaults(dim);

        let deltas = self.noise.delta.clone().unwrap_or_else(|| {
            if sweep {
                SWEEP_DELTAS.to_vec()
            } else {
                vec![DEFAULT_DELTA]
            }
        });
        if deltas.is_empty() {
            return Err(Error::param("delta", "list is empty"));
        }
        for &d in &deltas {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::param("delta", format!("must be non-negative, got {d}")));
            }
        }
        let seeds = self.noise.seed.clone().unwrap_or_else(|| vec![DEFAULT_SEED]);
        if seeds.is_empty() {
            return Err(Error::param("seed", "list is empty"));
        }

        if let Some(e) = self.case.eps {
            s.eps = Some(positive("eps", e)?);
        }
        let g = &self.grid;
        let min_res = if dim == 2 { 16 } else { 4 };
        if let Some(v) = g.resolution {
            s.resolution = at_least("resolution", v, min_res)?;
        }
        if let Some(v) = g.layer_count {
            s.layer_count = at_least("layer_count", v, 4)?;
            s.drm_centers = s.layer_count;
        }
        if let Some(v) = g.node_seed {
            s.node_seed = v;
        }
        if let Some(v) = g.grid_factor {
            s.grid_factor = positive("grid_factor", v)?;
        }
        if let Some(v) = g.colloc_rings {
            s.colloc_rings = at_least("colloc_rings", v, 1)?;
        }
        if let Some(v) = g.colloc_angular {
            s.colloc_angular = at_least("colloc_angular", v, if dim == 2 { 4 } else { 0 })?;
        }
        if let Some(v) = g.boundary_stride {
            s.boundary_stride = at_least("boundary_stride", v, 1)?;
        }
        if let Some(v) = g.error_rings {
            s.error_rings = at_least("error_rings", v, 1)?;
        }
        if let Some(v) = g.error_angular {
            s.error_angular = at_least("error_angular", v, if dim == 2 { 4 } else { 0 })?;
        }
        if let Some(v) = g.holdout {
            s.holdout = at_least("holdout", v, 1)?;
        }
        if dim == 3 && (s.colloc_angular > 5 || s.error_angular > 5) {
            return Err(Error::param(
                "colloc_angular",
                "icosphere levels above 5 are not supported",
            ));
        }

        let r = &self.regularization;
        if let Some(v) = r.lambda0 {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param("lambda0", format!("must lie in (0, 1], got {v}")));
            }
            s.rules.lambda0 = v;
        }
        if let Some(v) = r.c_alpha {
            s.rules.c_alpha = positive("c_alpha", v)?;
        }
        if let Some(v) = r.c_beta {
            s.rules.c_beta = positive("c_beta", v)?;
        }
        if let Some(v) = r.delta_floor {
            s.rules.delta_floor = positive("delta_floor", v)?;
        }
        if let Some(v) = r.alpha {
            s.rules.alpha = Some(positive("alpha", v)?);
        }
        if let Some(v) = r.beta {
            s.rules.beta = Some(positive("beta", v)?);
        }
        if let Some(v) = r.lambda_s {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param("lambda_s", format!("must be non-negative, got {v}")));
            }
            s.lambda_s = v;
        }
        if let Some(v) = r.drm_centers {
            if v == 0 || v > s.layer_count {
                return Err(Error::param(
                    "drm_centers",
                    format!("must lie in [1, layer_count = {}], got {v}", s.layer_count),
                ));
            }
            s.drm_centers = v;
        }
        if let Some(v) = r.rim_order {
            s.rim = match v {
                0 => RimRule::Exact,
                1..=64 => RimRule::Gauss(v),
                _ => {
                    return Err(Error::param(
                        "rim_order",
                        format!("must be 0 (closed form) or 1..=64, got {v}"),
                    ))
                }
            };
        }
        if let Some(t) = &r.trace {
            s.trace = TraceMode::parse(t)
                .ok_or_else(|| Error::param("trace", format!("`{t}` is not one of exact, mollified, interpolated")))?;
        }

        let o = &self.output;
        let output = OutputOptions {
            dir: o.dir.clone().unwrap_or_else(|| "out".to_string()),
            fields: o.fields.unwrap_or(true),
            matrices: o.matrices.unwrap_or(false),
            timing: o.timing.unwrap_or(true),
        };

        let eps = s.eps.unwrap_or(match &case {
            CaseChoice::Plane(c) => c.eps,
            CaseChoice::Space(c) => c.eps,
        });
        s.eps = Some(eps);
        let effective = RunConfig {
            case: CaseSection {
                name: Some(name),
                eps: Some(eps),
                ..self.case.clone()
            },
            noise: NoiseSection {
                delta: Some(deltas.clone()),
                seed: Some(seeds.clone()),
            },
            grid: GridSection {
                resolution: Some(s.resolution),
                layer_count: Some(s.layer_count),
                node_seed: Some(s.node_seed),
                grid_factor: Some(s.grid_factor),
                colloc_rings: Some(s.colloc_rings),
                colloc_angular: Some(s.colloc_angular),
                boundary_stride: Some(s.boundary_stride),
                error_rings: Some(s.error_rings),
                error_angular: Some(s.error_angular),
                holdout: Some(s.holdout),
            },
            regularization: RegularizationSection {
                lambda0: Some(s.rules.lambda0),
                c_alpha: Some(s.rules.c_alpha),
                c_beta: Some(s.rules.c_beta),
                delta_floor: Some(s.rules.delta_floor),
                alpha: s.rules.alpha,
                beta: s.rules.beta,
                lambda_s: Some(s.lambda_s),
                drm_centers: Some(s.drm_centers),
                rim_order: Some(match s.rim {
                    RimRule::Exact => 0,
                    RimRule::Gauss(n) => n,
                }),
                trace: Some(s.trace.as_str().to_string()),
            },
            output: OutputSection {
                dir: Some(output.dir.clone()),
                fields: Some(output.fields),
                matrices: Some(output.matrices),
                timing: Some(output.timing),
            },
        };
        Ok(Resolved {
            case,
            deltas,
            seeds,
            settings: s,
            output,
            effective,
        })
    }
}

impl Resolved {
    /// The effective configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(&self.effective).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let r = parse_config("", &[]).unwrap().resolve(false).unwrap();
        assert_eq!(r.case.name(), "heart2d");
        assert_eq!(r.deltas, vec![0.01]);
        assert_eq!(r.seeds, vec![7]);
        let mut defaults = PipelineSettings::defaults(2);
        defaults.eps = Some(0.1);
        assert_eq!(r.settings, defaults);
        let sweep = parse_config("", &[]).unwrap().resolve(true).unwrap();
        assert_eq!(sweep.deltas, SWEEP_DELTAS.to_vec());
    }

    #[test]
    fn negative_delta_names_the_key() {
        let e = parse_config("[noise]\ndelta = [-1.0]\n", &[])
            .unwrap()
            .resolve(false)
            .unwrap_err();
        assert!(matches!(e, Error::Parameter { name: "delta", .. }), "{e}");
        let e = parse_config("", &["noise.delta=-1".into()])
            .unwrap()
            .resolve(false)
            .unwrap_err();
        assert!(e.to_string().contains("delta"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = parse_config("[grid]\nresolution = 64\nbogus = 1\n", &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
        assert!(parse_config("", &["grid.bogus=1".into()]).is_err());
        assert!(parse_config("[nope]\n", &[]).is_err());
        assert!(parse_config("", &["nodot=1".into()]).is_err());
    }

    #[test]
    fn overrides_are_echoed() {
        let cfg = parse_config(
            "[regularization]\nc_beta = 1e-4\n",
            &["regularization.beta=0.05".into(), "case.name=pinched_ball3d".into()],
        )
        .unwrap();
        let r = cfg.resolve(false).unwrap();
        assert_eq!(r.settings.rules.beta, Some(0.05));
        assert_eq!(r.settings.rules.c_beta, 1e-4);
        assert_eq!(r.case.dim(), 3);
        let echo = r.echo();
        assert!(echo.contains("beta = 0.05"), "{echo}");
        // the echo is itself a valid config resolving to the same settings
        let again = parse_config(&echo, &[]).unwrap().resolve(false).unwrap();
        assert_eq!(again.settings, r.settings);
        assert_eq!(again.echo(), echo);
    }

    #[test]
    fn string_and_list_overrides() {
        let cfg = parse_config(
            "",
            &[
                "regularization.trace=exact".into(),
                "noise.seed=3".into(),
                "noise.delta=[0.0, 0.1]".into(),
            ],
        )
        .unwrap();
        let r = cfg.resolve(false).unwrap();
        assert_eq!(r.settings.trace, TraceMode::Exact);
        assert_eq!(r.seeds, vec![3]);
        assert_eq!(r.deltas, vec![0.0, 0.1]);
        assert!(parse_config("", &["regularization.trace=sideways".into()])
            .unwrap()
            .resolve(false)
            .is_err());
    }

    #[test]
    fn fourier_case_needs_harmonics() {
        let cfg = parse_config(
            "[case]\nname = \"fourier2d\"\nfourier_cos = [[1.0, 0.0]]\nfourier_sin = [[0.0, 1.0]]\n",
            &[],
        )
        .unwrap();
        let r = cfg.resolve(false).unwrap();
        assert_eq!(r.case.name(), "fourier2d");
        assert!(parse_config("[case]\nname = \"fourier2d\"\n", &[])
            .unwrap()
            .resolve(false)
            .is_err());
    }
}
