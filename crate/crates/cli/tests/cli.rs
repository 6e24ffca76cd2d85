use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
[case]
name = \"heart2d\"

[noise]
delta = [0.01]
seed = [3]

[grid]
resolution = 48
layer_count = 48
grid_factor = 4.0
colloc_rings = 4
colloc_angular = 24
error_rings = 6
error_angular = 32
holdout = 4
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levi-eit"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn reconstruct_writes_report_and_fields() {
    let dir = scratch("reconstruct");
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("out");
    let o = run(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let cell = out.join("delta-0.01-seed-3");
    for f in ["report.toml", "h_boundary.csv", "h_display.csv", "sigma.csv"] {
        assert!(cell.join(f).is_file(), "missing {f}");
    }
    assert!(!cell.join("blocks.bin").exists());
    let report: toml::Table = toml::from_str(&std::fs::read_to_string(cell.join("report.toml")).unwrap()).unwrap();
    assert_eq!(report["run"]["status"].as_str(), Some("ok"));
    assert!(report["errors"]["re_h"].as_float().unwrap().is_finite());
    let h = std::fs::read_to_string(cell.join("h_boundary.csv")).unwrap();
    assert!(h.starts_with("x,y,h_true,h_recovered,abs_error\n"));
    assert_eq!(h.lines().count(), 1 + 2 * 48);
    assert!(out.join("config.toml").is_file());
}

#[test]
fn reports_repeat_apart_from_timing() {
    let dir = scratch("repeat");
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("out{k}"));
        let o = run(&[
            "reconstruct",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let r = std::fs::read_to_string(out.join("delta-0.01-seed-3/report.toml")).unwrap();
        assert!(r.contains("#time "));
        let kept: Vec<String> = r
            .lines()
            .filter(|l| !l.starts_with("#time ") && !l.starts_with("dir = "))
            .map(String::from)
            .collect();
        reports.push(kept);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn overrides_reach_the_report() {
    let dir = scratch("override");
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("out");
    let o = run(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "regularization.beta=0.05",
        "--set",
        "output.matrices=true",
        "--seed",
        "5",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let cell = out.join("delta-0.01-seed-5");
    let r = std::fs::read_to_string(cell.join("report.toml")).unwrap();
    assert!(r.contains("beta = 0.05"));
    assert!(r.contains("beta_source = \"override\""));
    assert!(r.contains("beta_rule_used = false"));
    assert!(cell.join("blocks.bin").is_file());
}

#[test]
fn sweep_tabulates_medians() {
    let dir = scratch("sweep");
    let cfg = dir.join("small.toml");
    std::fs::write(
        &cfg,
        SMALL
            .replace("delta = [0.01]", "delta = [0.01, 0.1]")
            .replace("seed = [3]", "seed = [1, 2]"),
    )
    .unwrap();
    let out = dir.join("out");
    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "delta,re_h_median,re_sigma_median,runs");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.01,") && rows[1].ends_with(",2"));
    assert!(out.join("sweep.txt").is_file());
    assert!(out.join("delta-0.1-seed-2/report.toml").is_file());
}

#[test]
fn bad_values_name_the_key() {
    let o = run(&["reconstruct", "--set", "noise.delta=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("delta"), "{}", text(&o.stderr));

    let o = run(&["reconstruct", "--set", "grid.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("no_such_key"), "{}", text(&o.stderr));
}

#[test]
fn unreadable_config_is_an_error() {
    let o = run(&["reconstruct", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("cannot read"));
}
