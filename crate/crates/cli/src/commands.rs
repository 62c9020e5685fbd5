//! The six subcommands. Each writes its artifacts into the output directory and returns the
//! list of files written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sgdrisk::exact_engine::{tail_streaming, StreamedTail};
use sgdrisk::mc_sim::{mc_paths, summarize};
use sgdrisk::numeric::{fmt17, json17};
use sgdrisk::report::{write_coordinates_csv, write_trajectory_csv};
use sgdrisk::{evolve_split, max_stable_lr, risk_report, FullProblem, McEstimate, RiskReport, TailParts, TailWindow};

use crate::config::{ExperimentConfig, GridPoint};
use crate::error::CliError;
use crate::validate::{is_hard_failure, run_suite, VerdictLine};

/// Shared state of one invocation.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    pub allow_unstable: bool,
    /// ISO-8601 timestamp; the only non-deterministic field in any artifact.
    pub generated_at: String,
}

impl Context {
    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        Ok((path.clone(), BufWriter::new(File::create(path)?)))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::other)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }

    fn points(&self, need_stable: bool) -> Result<Vec<GridPoint>, CliError> {
        let points = self.cfg.grid()?;
        if need_stable || !self.allow_unstable {
            if let Some(p) = points.iter().find(|p| !p.spec.is_stable()) {
                let limit = max_stable_lr(p.spec.spectrum(), p.spec.alpha()).unwrap_or(f64::INFINITY);
                let at = if p.label.is_empty() { String::new() } else { format!(" at grid point {}", p.label) };
                return Err(CliError::Unstable(format!(
                    "eta = {} exceeds the stable limit {}{at}; pass --allow-unstable to proceed where supported",
                    fmt17(p.spec.eta()),
                    fmt17(limit)
                )));
            }
        }
        Ok(points)
    }
}

/// Exact trajectory per grid point; `trajectory[_label].csv` plus optional per-coordinate dumps.
pub fn evolve(ctx: &Context, per_coordinate: bool) -> Result<Vec<PathBuf>, CliError> {
    let points = ctx.points(false)?;
    let trajs: Vec<_> = points.par_iter().map(|p| evolve_split(&p.spec, ctx.cfg.run.t)).collect();
    let mut files = Vec::new();
    if !ctx.cfg.output.wants("csv") {
        return Ok(files);
    }
    for (p, traj) in points.iter().zip(&trajs) {
        let (path, mut w) = ctx.create(&p.file_name("trajectory", "csv"))?;
        write_trajectory_csv(traj, &mut w)?;
        w.flush()?;
        files.push(path);
        if per_coordinate {
            let (path, mut w) = ctx.create(&p.file_name("coordinates", "csv"))?;
            write_coordinates_csv(traj, &mut w)?;
            w.flush()?;
            files.push(path);
        }
    }
    Ok(files)
}

#[derive(Serialize)]
struct BoundsFile<'a> {
    generated_at: &'a str,
    label: &'a str,
    #[serde(flatten)]
    report: &'a RiskReport,
}

/// Closed-form bounds next to the exact tail risk; always requires stability.
pub fn bounds(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let points = ctx.points(true)?;
    let reports: Vec<RiskReport> =
        points.par_iter().map(|p| risk_report(&p.spec, p.window)).collect::<Result<_, _>>()?;
    let mut files = Vec::new();
    if ctx.cfg.output.wants("json") {
        for (p, report) in points.iter().zip(&reports) {
            let file = BoundsFile { generated_at: &ctx.generated_at, label: &p.label, report };
            files.push(ctx.write_json(&p.file_name("bounds", "json"), &file)?);
        }
    }
    Ok(files)
}

#[derive(Serialize)]
struct TailRiskFile<'a> {
    generated_at: &'a str,
    label: &'a str,
    window: TailWindow,
    #[serde(serialize_with = "json17::serialize")]
    eta: f64,
    batch: usize,
    stable: bool,
    /// Includes the irreducible `sigma^2 / 2`.
    #[serde(serialize_with = "json17::serialize")]
    tail_risk_exact: f64,
    #[serde(serialize_with = "json17::serialize")]
    tail_excess_exact: f64,
    excess_parts: TailParts,
    /// Omitted (null) for unstable problems, where it is not a bound.
    unbanded_bound_excess: Option<TailParts>,
}

/// Exact tail-averaged risk per grid point, computed in `O(d)` memory.
pub fn tail_risk(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let points = ctx.points(false)?;
    let streamed: Vec<StreamedTail> = points.par_iter().map(|p| tail_streaming(&p.spec, p.window)).collect();
    let mut files = Vec::new();
    if ctx.cfg.output.wants("json") {
        for (p, st) in points.iter().zip(&streamed) {
            let stable = p.spec.is_stable();
            let excess = st.exact.total();
            let file = TailRiskFile {
                generated_at: &ctx.generated_at,
                label: &p.label,
                window: p.window,
                eta: p.spec.eta(),
                batch: p.spec.batch(),
                stable,
                tail_risk_exact: excess + 0.5 * p.spec.sigma2(),
                tail_excess_exact: excess,
                excess_parts: st.exact,
                unbanded_bound_excess: stable.then_some(st.unbanded_bound),
            };
            files.push(ctx.write_json(&p.file_name("tail_risk", "json"), &file)?);
        }
    }
    Ok(files)
}

#[derive(Serialize)]
struct McSummaryFile<'a> {
    generated_at: &'a str,
    label: &'a str,
    #[serde(flatten)]
    estimate: &'a McEstimate,
    base_seed: u64,
    steps: usize,
    window: TailWindow,
    #[serde(serialize_with = "json17::serialize")]
    exact_tail_excess: f64,
    /// `|mean - exact| / std_error`.
    #[serde(serialize_with = "json17::serialize")]
    z_score: f64,
}

/// Seeded Monte Carlo SGD per grid point. Paths run for `max(T, s + N)` steps.
pub fn mc(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let points = ctx.points(false)?;
    let run = &ctx.cfg.run;
    let mut files = Vec::new();
    for p in &points {
        let steps = run.t.max(p.window.end());
        let paths = mc_paths(&FullProblem::from_spec(&p.spec), run.n_seeds, steps, p.window, run.base_seed)?;
        if ctx.cfg.output.wants("csv") {
            let (path, mut w) = ctx.create(&p.file_name("mc_seeds", "csv"))?;
            writeln!(w, "seed,final_excess,tail_avg_excess")?;
            for o in &paths {
                writeln!(w, "{},{},{}", o.seed, fmt17(o.final_excess), fmt17(o.tail_avg_excess))?;
            }
            w.flush()?;
            files.push(path);
        }
        if ctx.cfg.output.wants("json") {
            let estimate = summarize(&paths);
            let exact = tail_streaming(&p.spec, p.window).exact.total();
            let file = McSummaryFile {
                generated_at: &ctx.generated_at,
                label: &p.label,
                estimate: &estimate,
                base_seed: run.base_seed,
                steps,
                window: p.window,
                exact_tail_excess: exact,
                z_score: (estimate.mean - exact).abs() / estimate.std_error,
            };
            files.push(ctx.write_json(&p.file_name("mc_summary", "json"), &file)?);
        }
    }
    Ok(files)
}

/// Runs the verification suite and writes `verdicts.jsonl`. Any failing hard check turns the
/// run into a verification failure naming the first one.
pub fn validate(ctx: &Context, inject_bug: bool) -> Result<Vec<PathBuf>, CliError> {
    let points = ctx.points(false)?;
    let records = run_suite(&ctx.cfg, &points, inject_bug)?;
    let (path, mut w) = ctx.create("verdicts.jsonl")?;
    for r in &records {
        serde_json::to_writer(&mut w, &VerdictLine::new(r, &ctx.generated_at)).map_err(std::io::Error::other)?;
        writeln!(w)?;
    }
    w.flush()?;
    if let Some(first) = records.iter().find(|r| is_hard_failure(r)) {
        let line = serde_json::to_string(&VerdictLine::new(first, &ctx.generated_at)).map_err(std::io::Error::other)?;
        let failed = records.iter().filter(|r| is_hard_failure(r)).count();
        return Err(CliError::Verification(format!("{failed} of {} checks failed; first: {line}", records.len())));
    }
    Ok(vec![path])
}

const SWEEP_HEADER: &str = "label,eta_fraction,eta,batch,s,N,stable,k_star,k_dagger,exact_tail_excess,bias_exact,\
variance_exact,bias_bound,variance_bound,upper_total,bias_lower,variance_lower,sandwich_holds";

/// One summary row per grid point in `sweep.csv`. Unstable points (with `--allow-unstable`)
/// keep their exact risk and leave the bound columns empty.
pub fn sweep(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let points = ctx.points(false)?;
    let rows: Vec<String> = points.par_iter().map(sweep_row).collect::<Result<_, _>>()?;
    if !ctx.cfg.output.wants("csv") {
        return Ok(Vec::new());
    }
    let (path, mut w) = ctx.create("sweep.csv")?;
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(vec![path])
}

fn sweep_row(p: &GridPoint) -> Result<String, CliError> {
    let spec = &p.spec;
    let th = spec.thresholds(p.window);
    let ef = p.eta_fraction.map(fmt17).unwrap_or_default();
    let head = format!(
        "{},{ef},{},{},{},{},{},{},{}",
        p.label,
        fmt17(spec.eta()),
        spec.batch(),
        p.window.s,
        p.window.n,
        spec.is_stable(),
        th.k_star,
        th.k_dagger
    );
    if spec.is_stable() {
        let r = risk_report(spec, p.window)?;
        Ok(format!(
            "{head},{},{},{},{},{},{},{},{},{}",
            fmt17(r.exact_tail_excess),
            fmt17(r.exact_excess.bias),
            fmt17(r.exact_excess.variance),
            fmt17(r.bias.total),
            fmt17(r.variance.total),
            fmt17(r.upper_total),
            fmt17(r.lower.bias_lb),
            fmt17(r.lower.variance_lb),
            r.sandwich_holds
        ))
    } else {
        let exact = tail_streaming(spec, p.window).exact;
        Ok(format!(
            "{head},{},{},{},,,,,,",
            fmt17(exact.total()),
            fmt17(exact.bias),
            fmt17(exact.variance)
        ))
    }
}

/// Output directory: `--out`, else `output.dir` under `SGDRISK_OUT_DIR` (or the working directory).
pub fn resolve_out_dir(cli_out: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    match cli_out {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os("SGDRISK_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
            root.join(&cfg.output.dir)
        }
    }
}
