//! Report serialization. A report is TOML: the effective configuration,
//! then `[run]`, `[discretization]`, `[parameters]`, `[errors]`,
//! `[diagnostics]` and `[timing]`. Timing lines start with `#time ` so they
//! read as comments and are easy to filter; everything else is a
//! deterministic function of the configuration and the seed.
//!
//! Field dumps are CSV with a header row, coordinates first.

use crate::conductivity::write_sigma_csv;
use crate::experiments::{Prepared, RunOutcome};
use crate::levi_operators::RimRule;
use crate::Point;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Prefix of the lines that vary between identical runs.
pub const TIME_PREFIX: &str = "#time ";

/// Boundary nodes kept in the display export of `h`.
pub const DISPLAY_NODES: usize = 32;

/// TOML float literal; `{:?}` is the shortest round-trip form.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:?}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "nan".to_string())
}

fn quoted(s: &str) -> String {
    format!("{s:?}")
}

/// Drop the `#time` lines.
pub fn strip_timing(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with(TIME_PREFIX))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Render the report of one run. `config_echo` is the effective
/// configuration as TOML.
pub fn render_report<const D: usize>(
    config_echo: &str,
    prep: &Prepared<D>,
    outcome: &RunOutcome,
    timing: bool,
) -> String {
    let r = &outcome.report;
    let mut s = String::new();
    s.push_str(config_echo.trim_end());
    s.push_str("\n\n[run]\n");
    let _ = writeln!(s, "case = {}", quoted(r.case));
    let _ = writeln!(s, "dim = {}", r.dim);
    let _ = writeln!(s, "delta = {}", num(r.delta));
    let _ = writeln!(s, "seed = {}", r.seed);
    let status = if outcome.error.is_none() { "ok" } else { "failed" };
    let _ = writeln!(s, "status = {}", quoted(status));
    let completed: Vec<String> = r.completed.iter().map(|c| quoted(c)).collect();
    let _ = writeln!(s, "completed = [{}]", completed.join(", "));
    if let Some(e) = &outcome.error {
        let _ = writeln!(s, "failed_stage = {}", quoted(e.stage().unwrap_or("unknown")));
        let _ = writeln!(s, "error = {}", quoted(&e.to_string()));
    }

    s.push_str("\n[discretization]\n");
    let _ = writeln!(s, "eps = {}", num(r.eps));
    let _ = writeln!(s, "boundary_nodes = {}", r.boundary_nodes);
    let _ = writeln!(s, "layer_nodes = {}", r.layer_nodes);
    let _ = writeln!(s, "drm_centers = {}", prep.drm.len());
    let _ = writeln!(s, "layer_measure = {}", num(r.layer_measure));
    let _ = writeln!(s, "measurement_samples = {}", r.measurement_samples);
    let _ = writeln!(s, "measurement_fill = {}", num(r.measurement_fill));
    let _ = writeln!(s, "sigma_centers = {}", prep.sigma_basis.len());
    let _ = writeln!(s, "collocation_points = {}", prep.colloc.len());
    let _ = writeln!(s, "error_mesh_vertices = {}", prep.mesh.points.len());
    let rim = match r.settings.rim {
        RimRule::Exact => "closed-form".to_string(),
        RimRule::Gauss(n) => format!("gauss-{n}"),
    };
    let _ = writeln!(s, "rim = {}", quoted(&rim));

    s.push_str("\n[parameters]\n");
    if let Some(p) = &r.params {
        let _ = writeln!(s, "delta = {}", num(p.delta));
        let _ = writeln!(s, "rule_delta = {}", num(p.rule_delta));
        let _ = writeln!(s, "lambda0 = {}", num(p.lambda0));
        let _ = writeln!(s, "c_alpha = {}", num(p.c_alpha));
        let _ = writeln!(s, "c_beta = {}", num(p.c_beta));
        let _ = writeln!(s, "alpha = {}", num(p.alpha));
        let _ = writeln!(s, "alpha_source = {}", quoted(p.alpha_source.as_str()));
        let _ = writeln!(s, "alpha_rule = {}", num(p.alpha_rule));
        let _ = writeln!(
            s,
            "alpha_rule_used = {}",
            p.alpha_source != crate::regularization::ParamSource::Override
        );
        let _ = writeln!(s, "beta = {}", num(p.beta));
        let _ = writeln!(s, "beta_source = {}", quoted(p.beta_source.as_str()));
        let _ = writeln!(s, "beta_rule = {}", num(p.beta_rule));
        let _ = writeln!(
            s,
            "beta_rule_used = {}",
            p.beta_source != crate::regularization::ParamSource::Override
        );
    }
    let _ = writeln!(s, "lambda_s = {}", num(r.settings.lambda_s));
    if let Some(ridge) = r.ridge {
        let _ = writeln!(s, "ridge_used = {}", num(ridge));
        let _ = writeln!(s, "ridge_fallback = {}", r.ridge_fallback);
    }
    let _ = writeln!(s, "trace = {}", quoted(r.settings.trace.as_str()));

    s.push_str("\n[errors]\n");
    let _ = writeln!(s, "re_h = {}", opt(r.re_h));
    let _ = writeln!(s, "re_sigma = {}", opt(r.re_sigma));
    let _ = writeln!(s, "holdout_max_relative = {}", opt(r.holdout_error));

    s.push_str("\n[diagnostics]\n");
    let _ = writeln!(s, "min_grad_u = {}", opt(r.min_grad_u));
    if let Some(m) = r.min_grad_u {
        let _ = writeln!(s, "min_grad_u_warning = {}", m < 1e-3 * field_scale(prep));
    }
    let _ = writeln!(s, "sigma_clamped = {}", r.clamped);
    let _ = writeln!(s, "center_hits = {}", r.center_hits);

    if timing {
        s.push_str("\n[timing]\n");
        for (stage, secs) in &r.timings {
            let _ = writeln!(s, "{TIME_PREFIX}{stage} = {secs:.6}");
        }
    }
    s
}

/// `max |u| / diam` over the error mesh, the scale of `|∇u|`.
fn field_scale<const D: usize>(prep: &Prepared<D>) -> f64 {
    let umax = prep
        .mesh
        .points
        .iter()
        .map(|p| (prep.case.u)(p).abs())
        .fold(0.0, f64::max);
    umax / prep.case.geom.diameter()
}

fn coord_header<const D: usize>() -> String {
    ["x", "y", "z"][..D].join(",")
}

fn coords<const D: usize>(p: &Point<D>) -> String {
    p.iter().map(|c| format!("{c:.12e}")).collect::<Vec<_>>().join(",")
}

/// CSV rows `coords, h_true, h_recovered, abs_error` at the boundary nodes
/// `indices`.
pub fn write_h_csv<const D: usize>(
    mut out: impl Write,
    points: &[Point<D>],
    truth: &[f64],
    recovered: &[f64],
    indices: impl Iterator<Item = usize>,
) -> std::io::Result<()> {
    writeln!(out, "{},h_true,h_recovered,abs_error", coord_header::<D>())?;
    for j in indices {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e}",
            coords(&points[j]),
            truth[j],
            recovered[j],
            (recovered[j] - truth[j]).abs()
        )?;
    }
    Ok(())
}

/// Evenly strided subset of `n` indices of size `count`.
pub fn display_indices(n: usize, count: usize) -> Vec<usize> {
    let count = count.min(n);
    (0..count).map(|i| i * n / count).collect()
}

/// Write `report.toml` and the requested dumps into `dir`. Returns the
/// rendered report.
pub fn write_run<const D: usize>(
    dir: &Path,
    config_echo: &str,
    prep: &Prepared<D>,
    outcome: &RunOutcome,
    fields: bool,
    matrices: bool,
    timing: bool,
) -> std::io::Result<String> {
    std::fs::create_dir_all(dir)?;
    let text = render_report(config_echo, prep, outcome, timing);
    std::fs::write(dir.join("report.toml"), &text)?;
    let r = &outcome.report;
    if fields {
        let points: Vec<Point<D>> = prep.frames.iter().map(|f| f.point).collect();
        if let Some(h) = &r.h {
            let mut buf = Vec::new();
            write_h_csv(&mut buf, &points, &r.h_true, h, 0..points.len())?;
            std::fs::write(dir.join("h_boundary.csv"), buf)?;
            let mut buf = Vec::new();
            write_h_csv(
                &mut buf,
                &points,
                &r.h_true,
                h,
                display_indices(points.len(), DISPLAY_NODES).into_iter(),
            )?;
            std::fs::write(dir.join("h_display.csv"), buf)?;
        }
        if let Some(sigma) = &r.sigma {
            let mut buf = Vec::new();
            write_sigma_csv(&mut buf, &prep.mesh.points, Some(&r.sigma_true), sigma)?;
            std::fs::write(dir.join("sigma.csv"), buf)?;
        }
    }
    if matrices {
        let mut buf = Vec::new();
        prep.blocks.dump(&mut buf)?;
        std::fs::write(dir.join("blocks.bin"), buf)?;
    }
    Ok(text)
}

/// Name of the per-run directory of a sweep cell.
pub fn cell_dir(delta: f64, seed: u64) -> String {
    format!("delta-{}-seed-{seed}", num(delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn numbers_are_toml_floats() {
        for v in [0.01, 1.0, 1e-7, 123456.5, -2.5e10] {
            let t: toml::Table = toml::from_str(&format!("v = {}", num(v))).unwrap();
            assert_eq!(t["v"].as_float(), Some(v));
        }
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn timing_lines_are_stripped() {
        let text = "[run]\nseed = 1\n#time measure = 0.5\n";
        assert_eq!(strip_timing(text), "[run]\nseed = 1\n");
    }

    #[test]
    fn h_csv_layout() {
        let pts = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
        let mut buf = Vec::new();
        write_h_csv(&mut buf, &pts, &[2.0, 3.0], &[2.5, 3.0], 0..2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,h_true,h_recovered,abs_error");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with("5.000000000000e-1"));
    }

    #[test]
    fn display_subset() {
        assert_eq!(display_indices(512, 32).len(), 32);
        assert_eq!(display_indices(512, 32)[1], 16);
        assert_eq!(display_indices(8, 32).len(), 8);
        assert_eq!(cell_dir(0.01, 7), "delta-0.01-seed-7");
    }
}
