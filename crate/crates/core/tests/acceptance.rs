//! One PASS/FAIL line per acceptance criterion. Failing criteria are
//! reported, not asserted; the process exits 0 unless the harness itself
//! breaks. `ACCEPTANCE_SEEDS` (default 10) sets the number of noise seeds
//! behind the medians.

use levi_eit::experiments::{
    case_heart_2d, case_pinched_ball_3d, prepare, run_single, PipelineSettings, Prepared, ReconstructionReport,
};
use levi_eit::linalg::median;
use levi_eit::report::{render_report, strip_timing};
use levi_eit::verify::{self, Check};
use std::time::Instant;

const DELTAS: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

use std::sync::Mutex;

static LINES: Mutex<Vec<(u8, String)>> = Mutex::new(Vec::new());

/// Record a criterion; the lines are printed again in order at the end.
fn line(n: u8, pass: bool, text: String) {
    let l = format!("criterion {n}: {} {text}", if pass { "PASS" } else { "FAIL" });
    println!("{l}");
    LINES.lock().unwrap().push((n, l));
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

struct Runs {
    reports: Vec<ReconstructionReport>,
    /// Longest preparation-plus-run time.
    worst_seconds: f64,
}

fn runs<const D: usize>(prep: &Prepared<D>, prep_seconds: f64, delta: f64, seeds: &[u64]) -> Runs {
    let mut reports = Vec::new();
    let mut worst: f64 = 0.0;
    for &s in seeds {
        let clock = Instant::now();
        let out = run_single(prep, delta, s);
        worst = worst.max(prep_seconds + clock.elapsed().as_secs_f64());
        match out.into_result() {
            Ok(r) => reports.push(r),
            Err(e) => println!("  run delta = {delta} seed = {s} failed: {e}"),
        }
    }
    Runs {
        reports,
        worst_seconds: worst,
    }
}

fn med(r: &Runs, f: fn(&ReconstructionReport) -> Option<f64>) -> f64 {
    let v: Vec<f64> = r.reports.iter().filter_map(f).collect();
    if v.is_empty() {
        f64::INFINITY
    } else {
        median(&v)
    }
}

/// Errors at `DELTAS` for one seed, reusing finished runs.
fn trend<const D: usize>(prep: &Prepared<D>, seed: u64, known: &[(f64, &Runs)]) -> Vec<(f64, f64)> {
    DELTAS
        .iter()
        .map(|&d| {
            let done = known
                .iter()
                .find(|(kd, _)| *kd == d)
                .and_then(|(_, r)| r.reports.iter().find(|x| x.seed == seed).cloned());
            let rep = done.or_else(|| run_single(prep, d, seed).into_result().ok());
            match rep {
                Some(r) => (r.re_h.unwrap_or(f64::INFINITY), r.re_sigma.unwrap_or(f64::INFINITY)),
                None => (f64::INFINITY, f64::INFINITY),
            }
        })
        .collect()
}

fn trend_ok(t: &[(f64, f64)]) -> (bool, bool) {
    let monotone = t.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
    let ordered = t.iter().all(|(h, s)| s > h);
    (monotone, ordered)
}

fn fmt_trend(t: &[(f64, f64)]) -> String {
    let h: Vec<String> = t.iter().map(|p| format!("{:.2e}", p.0)).collect();
    let s: Vec<String> = t.iter().map(|p| format!("{:.2e}", p.1)).collect();
    format!("h [{}] sigma [{}]", h.join(", "), s.join(", "))
}

fn suite_line(n: u8, checks: &[Check], extra: Option<(bool, String)>) {
    let mut pass = checks.iter().all(|c| c.pass);
    for c in checks {
        println!("  {}", c.line());
    }
    let mut text = format!("{}/{} checks", checks.iter().filter(|c| c.pass).count(), checks.len());
    if let Some((ok, msg)) = extra {
        pass &= ok;
        text.push_str(&format!(", {msg}"));
    }
    line(n, pass, text);
}

fn main() {
    // `cargo test -- --list` and filters from the harness
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let n_seeds: u64 = std::env::var("ACCEPTANCE_SEEDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let seeds: Vec<u64> = (1..=n_seeds).collect();
    println!("acceptance: medians over seeds 1..={n_seeds}");

    // 4, 5, 7, 8: suites without the pipeline
    let clock = Instant::now();
    let oracles = verify::oracle_suite();
    let t4 = clock.elapsed().as_secs_f64();
    suite_line(4, &oracles, Some((t4 <= 30.0, format!("{t4:.1} s (limit 30 s)"))));
    suite_line(5, &verify::micro_suite(), None);

    // 2D pipeline
    let clock = Instant::now();
    let prep2 = match prepare(case_heart_2d(), PipelineSettings::defaults(2)) {
        Ok(p) => p,
        Err(e) => {
            println!("2D preparation failed: {e}");
            std::process::exit(1);
        }
    };
    let p2 = clock.elapsed().as_secs_f64();
    let r01 = runs(&prep2, p2, 0.01, &seeds);
    let r1 = runs(&prep2, p2, 0.1, &seeds);
    let (h01, h1) = (med(&r01, |r| r.re_h), med(&r1, |r| r.re_h));
    let (s01, s1) = (med(&r01, |r| r.re_sigma), med(&r1, |r| r.re_sigma));
    let secs = r01.worst_seconds.max(r1.worst_seconds);
    let checks = [
        within(h01, 3e-4, 5e-3),
        within(h1, 2e-3, 3e-2),
        within(s01, 4e-3, 5e-2),
        within(s1, 7e-3, 8e-2),
        secs <= 60.0,
    ];
    line(
        1,
        checks.iter().all(|c| *c),
        format!(
            "RE_h(0.01) = {h01:.3e} [3e-4, 5e-3] {}; RE_h(0.1) = {h1:.3e} [2e-3, 3e-2] {}; \
             RE_sigma(0.01) = {s01:.3e} [4e-3, 5e-2] {}; RE_sigma(0.1) = {s1:.3e} [7e-3, 8e-2] {}; \
             slowest run {secs:.1} s (limit 60 s) {}",
            ok(checks[0]),
            ok(checks[1]),
            ok(checks[2]),
            ok(checks[3]),
            ok(checks[4])
        ),
    );

    let t2 = trend(&prep2, 1, &[(0.01, &r01), (0.1, &r1)]);

    let zero = run_single(&prep2, 0.0, 1).into_result();
    match zero {
        Ok(r) => {
            let (h, s, u) = (
                r.re_h.unwrap_or(f64::INFINITY),
                r.re_sigma.unwrap_or(f64::INFINITY),
                r.holdout_error.unwrap_or(f64::INFINITY),
            );
            let c = [h <= 5e-3, s <= 2e-2, u <= 5e-2];
            line(
                6,
                c.iter().all(|x| *x),
                format!(
                    "RE_h = {h:.3e} (<= 5e-3) {}; RE_sigma = {s:.3e} (<= 2e-2) {}; held-out u at {} points = {u:.3e} (<= 5e-2) {}",
                    ok(c[0]),
                    ok(c[1]),
                    r.settings.holdout,
                    ok(c[2])
                ),
            );
        }
        Err(e) => line(6, false, format!("run failed: {e}")),
    }

    suite_line(7, &verify::growth_suite(), None);
    suite_line(8, &verify::invariant_suite(1000, 1), None);

    // 9: identical reports apart from timing lines
    let a = run_single(&prep2, 0.01, 7);
    let b = run_single(&prep2, 0.01, 7);
    let (ta, tb) = (
        strip_timing(&render_report("", &prep2, &a, true)),
        strip_timing(&render_report("", &prep2, &b, true)),
    );
    let same_fields = a.report.h == b.report.h && a.report.sigma == b.report.sigma && a.report.pair == b.report.pair;
    line(
        9,
        ta == tb && same_fields,
        format!(
            "two runs at delta = 0.01 seed 7: reports {} ({} bytes)",
            if ta == tb { "identical" } else { "differ" },
            ta.len()
        ),
    );
    drop(prep2);

    // 3D pipeline
    let clock = Instant::now();
    let prep3 = match prepare(case_pinched_ball_3d(), PipelineSettings::defaults(3)) {
        Ok(p) => p,
        Err(e) => {
            println!("3D preparation failed: {e}");
            std::process::exit(1);
        }
    };
    let p3 = clock.elapsed().as_secs_f64();
    let q01 = runs(&prep3, p3, 0.01, &seeds);
    let (h3, s3) = (med(&q01, |r| r.re_h), med(&q01, |r| r.re_sigma));
    let secs3 = q01.worst_seconds;
    let c = [within(h3, 7e-4, 1e-2), within(s3, 1e-2, 1.2e-1), secs3 <= 900.0];
    line(
        2,
        c.iter().all(|x| *x),
        format!(
            "RE_h(0.01) = {h3:.3e} [7e-4, 1e-2] {}; RE_sigma(0.01) = {s3:.3e} [1e-2, 1.2e-1] {}; assembly {p3:.1} s, slowest run with assembly {secs3:.1} s (limit 900 s) {}",
            ok(c[0]),
            ok(c[1]),
            ok(c[2])
        ),
    );
    let t3 = trend(&prep3, 1, &[(0.01, &q01)]);

    let (m2, o2) = trend_ok(&t2);
    let (m3, o3) = trend_ok(&t3);
    line(
        3,
        m2 && o2 && m3 && o3,
        format!(
            "seed 1, delta {DELTAS:?}: heart2d monotone {} sigma > h {} ({}); pinched_ball3d monotone {} sigma > h {} ({})",
            ok(m2),
            ok(o2),
            fmt_trend(&t2),
            ok(m3),
            ok(o3),
            fmt_trend(&t3)
        ),
    );

    let mut lines = LINES.lock().unwrap().clone();
    lines.sort_by_key(|l| l.0);
    println!("\n== acceptance summary ==");
    for (_, l) in lines {
        println!("{l}");
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "out"
    }
}
