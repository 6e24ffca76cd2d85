use clap::{Args, Parser, Subcommand};
use levi_eit::config::{parse_config, CaseChoice, Resolved};
use levi_eit::experiments::{prepare, run_single, ManufacturedCase, Prepared, RunOutcome};
use levi_eit::linalg::median;
use levi_eit::report::{cell_dir, num, write_run, TIME_PREFIX};
use levi_eit::verify;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Robin coefficient and conductivity reconstruction from noisy layer data.
#[derive(Parser)]
#[command(name = "levi-eit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One reconstruction per (delta, seed) in the config.
    Reconstruct(RunArgs),
    /// The delta x seed cross product, summarised as a table of median errors.
    Sweep(RunArgs),
    /// Oracle, micro-check and invariant suites.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set regularization.beta=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Single noise seed (overrides noise.seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &RunArgs, sweep: bool) -> Result<Resolved, String> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("noise.seed={s}"));
    }
    if let Some(o) = &args.out {
        overrides.push(format!("output.dir={:?}", o.display().to_string()));
    }
    parse_config(&text, &overrides)
        .and_then(|c| c.resolve(sweep))
        .map_err(|e| e.to_string())
}

struct Cell {
    delta: f64,
    seed: u64,
    re_h: Option<f64>,
    re_sigma: Option<f64>,
    error: Option<String>,
}

fn run_cells<const D: usize>(case: ManufacturedCase<D>, r: &Resolved, jobs: usize) -> Result<Vec<Cell>, String> {
    let clock = Instant::now();
    let prep: Prepared<D> = prepare(case, r.settings.clone()).map_err(|e| e.to_string())?;
    println!("{TIME_PREFIX}prepare = {:.3}", clock.elapsed().as_secs_f64());
    let echo = r.echo();
    let out = Path::new(&r.output.dir);
    let cells: Vec<(f64, u64)> = r
        .deltas
        .iter()
        .flat_map(|&d| r.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Cell>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(delta, seed)) = cells.get(i) else { break };
        let clock = Instant::now();
        let outcome: RunOutcome = run_single(&prep, delta, seed);
        let dir = out.join(cell_dir(delta, seed));
        let written = write_run(
            &dir,
            &echo,
            &prep,
            &outcome,
            r.output.fields,
            r.output.matrices,
            r.output.timing,
        );
        let mut error = outcome.error.as_ref().map(|e| e.to_string());
        if let Err(e) = written {
            error.get_or_insert(format!("writing {}: {e}", dir.display()));
        }
        let rep = &outcome.report;
        println!(
            "delta = {} seed = {seed}: re_h = {} re_sigma = {}{}",
            num(delta),
            rep.re_h.map(|v| format!("{v:.4e}")).unwrap_or("-".into()),
            rep.re_sigma.map(|v| format!("{v:.4e}")).unwrap_or("-".into()),
            error.as_ref().map(|e| format!(" ERROR {e}")).unwrap_or_default()
        );
        println!(
            "{TIME_PREFIX}run delta = {} seed = {seed}: {:.3}",
            num(delta),
            clock.elapsed().as_secs_f64()
        );
        results.lock().unwrap()[i] = Some(Cell {
            delta,
            seed,
            re_h: rep.re_h,
            re_sigma: rep.re_sigma,
            error,
        });
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(cells.len()) {
            s.spawn(work);
        }
    });
    Ok(results.into_inner().unwrap().into_iter().flatten().collect())
}

fn run_all(r: &Resolved, jobs: usize) -> Result<Vec<Cell>, String> {
    std::fs::create_dir_all(&r.output.dir).map_err(|e| format!("cannot create {}: {e}", r.output.dir))?;
    std::fs::write(Path::new(&r.output.dir).join("config.toml"), r.echo()).map_err(|e| e.to_string())?;
    match r.case.clone() {
        CaseChoice::Plane(c) => run_cells(c, r, jobs),
        CaseChoice::Space(c) => run_cells(c, r, jobs),
    }
}

fn fail_code(cells: &[Cell]) -> ExitCode {
    match cells.iter().find_map(|c| c.error.as_ref().map(|e| (c, e))) {
        Some((c, e)) => {
            eprintln!("error: delta = {} seed = {}: {e}", num(c.delta), c.seed);
            ExitCode::from(2)
        }
        None => ExitCode::SUCCESS,
    }
}

/// Rows RE_h and RE_sigma, one column per delta, medians over seeds.
fn sweep_table(r: &Resolved, cells: &[Cell]) -> (String, String) {
    let mut text = format!(
        "case {}, median over {} seed(s)\n{:<10}",
        r.case.name(),
        r.seeds.len(),
        "delta"
    );
    let mut csv = String::from("delta,re_h_median,re_sigma_median,runs\n");
    let mut rows = [String::from("RE_h"), String::from("RE_sigma")];
    rows.iter_mut().for_each(|s| *s = format!("{s:<10}"));
    for &d in &r.deltas {
        let of =
            |f: fn(&Cell) -> Option<f64>| -> Vec<f64> { cells.iter().filter(|c| c.delta == d).filter_map(f).collect() };
        let hs = of(|c| c.re_h);
        let ss = of(|c| c.re_sigma);
        let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { median(v) };
        let (mh, ms) = (med(&hs), med(&ss));
        text.push_str(&format!("{:>12}", num(d)));
        rows[0].push_str(&format!("{mh:>12.4e}"));
        rows[1].push_str(&format!("{ms:>12.4e}"));
        csv.push_str(&format!("{},{},{},{}\n", num(d), num(mh), num(ms), hs.len()));
    }
    text.push('\n');
    text.push_str(&rows.join("\n"));
    text.push('\n');
    (text, csv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Reconstruct(args) => {
            let r = match load(&args, false) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            println!("{}", r.echo().trim_end());
            println!();
            match run_all(&r, args.jobs) {
                Ok(cells) => fail_code(&cells),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Sweep(args) => {
            let r = match load(&args, true) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            println!("{}", r.echo().trim_end());
            println!();
            let cells = match run_all(&r, args.jobs) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let (text, csv) = sweep_table(&r, &cells);
            println!("\n{text}");
            let dir = Path::new(&r.output.dir);
            if let Err(e) =
                std::fs::write(dir.join("sweep.txt"), &text).and_then(|_| std::fs::write(dir.join("sweep.csv"), csv))
            {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            fail_code(&cells)
        }
        Command::Verify => {
            let checks = verify::run_all();
            let mut failed = 0;
            for c in &checks {
                println!("{}", c.line());
                if !c.pass && c.known.is_none() {
                    failed += 1;
                }
            }
            let known = checks.iter().filter(|c| !c.pass && c.known.is_some()).count();
            println!(
                "{} checks: {} passed, {} failed, {} known failure(s)",
                checks.len(),
                checks.len() - failed - known,
                failed,
                known
            );
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
