//! Experiment configs: TOML file, `--section.key=value` overrides, and grid resolution.

use std::path::PathBuf;

use serde::Deserialize;
use sgdrisk::{ProblemConfig, ProblemSpec, TailWindow};

use crate::error::CliError;

/// Shipped default config, used when no `--config` is given.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Horizon of `evolve` and of Monte Carlo paths.
    #[serde(rename = "T")]
    pub t: usize,
    pub s: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_seeds: usize,
    pub base_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { t: 100, s: 0, n: 100, n_seeds: 1000, base_seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eta_fraction: Option<Vec<f64>>,
    pub batch: Option<Vec<usize>>,
    #[serde(rename = "N")]
    pub n: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Relative paths resolve against `SGDRISK_OUT_DIR` (or the working directory).
    pub dir: PathBuf,
    /// Any of `csv`, `json`. The verdict log is always written.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: vec!["csv".into(), "json".into()] }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

/// Tolerances and sizes used by the `validate` command.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Full-matrix checks are skipped above this dimension.
    pub oracle_max_dim: usize,
    pub oracle_steps: usize,
    pub iterate_steps: usize,
    pub isserlis_samples: usize,
    pub isserlis_tolerance: f64,
    /// Monte Carlo agreement threshold in standard errors.
    pub mc_z: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            oracle_max_dim: sgdrisk::oracles::ORACLE_MAX_DIM,
            oracle_steps: 100,
            iterate_steps: 200,
            isserlis_samples: 1_000_000,
            isserlis_tolerance: 0.05,
            mc_z: 3.0,
        }
    }
}

/// Splits `--section.key=value` arguments off `args`. Everything else is returned untouched.
pub fn extract_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    for arg in args {
        let parsed = arg.strip_prefix("--").and_then(|body| body.split_once('=')).filter(|(k, _)| k.contains('.'));
        match parsed {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| CliError::Config(format!("{key}: empty key")))?;
    let mut node = table;
    for (i, part) in parts.iter().enumerate() {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{}: not a table", parts[..=i].join("."))))?;
    }
    node.insert(leaf.to_string(), parse_override_value(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Parses `text` and applies the overrides in order.
    pub fn load(text: &str, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        // round-trip through text so that errors carry the offending key and line
        let merged = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg: ExperimentConfig = toml::from_str(&merged).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        if self.run.n == 0 {
            return bad("run.N", "must be at least 1");
        }
        if self.sweep.n.as_ref().is_some_and(|v| v.contains(&0)) {
            return bad("sweep.N", "entries must be at least 1");
        }
        if self.sweep.batch.as_ref().is_some_and(|v| v.contains(&0)) {
            return bad("sweep.batch", "entries must be positive");
        }
        if self.sweep.eta_fraction.as_ref().is_some_and(|v| v.iter().any(|f| !(f.is_finite() && *f > 0.0))) {
            return bad("sweep.eta_fraction", "entries must be positive");
        }
        for (field, list_empty) in [
            ("sweep.eta_fraction", self.sweep.eta_fraction.as_ref().is_some_and(Vec::is_empty)),
            ("sweep.batch", self.sweep.batch.as_ref().is_some_and(Vec::is_empty)),
            ("sweep.N", self.sweep.n.as_ref().is_some_and(Vec::is_empty)),
        ] {
            if list_empty {
                return bad(field, "must not be empty");
            }
        }
        if let Some(f) = self.output.formats.iter().find(|f| !matches!(f.as_str(), "csv" | "json")) {
            return Err(CliError::Config(format!("output.formats: unknown format `{f}`")));
        }
        if self.run.n_seeds < 2 {
            return bad("run.n_seeds", "must be at least 2");
        }
        if self.validate.isserlis_samples < sgdrisk::oracles::ISSERLIS_MIN_SAMPLES {
            return bad("validate.isserlis_samples", "must be at least 10000");
        }
        self.grid().map(|_| ())
    }

    /// Cartesian product of the sweep lists, in the order eta_fraction, batch, N.
    pub fn grid(&self) -> Result<Vec<GridPoint>, CliError> {
        let fractions: Vec<Option<f64>> = match &self.sweep.eta_fraction {
            Some(v) => v.iter().map(|f| Some(*f)).collect(),
            None => vec![None],
        };
        let batches: Vec<Option<usize>> = match &self.sweep.batch {
            Some(v) => v.iter().map(|b| Some(*b)).collect(),
            None => vec![None],
        };
        let ns: Vec<Option<usize>> = match &self.sweep.n {
            Some(v) => v.iter().map(|n| Some(*n)).collect(),
            None => vec![None],
        };
        let mut points = Vec::new();
        for ef in &fractions {
            for b in &batches {
                for n in &ns {
                    let mut problem = self.problem.clone();
                    let mut label = Vec::new();
                    if let Some(ef) = ef {
                        problem.eta = None;
                        problem.eta_fraction = Some(*ef);
                        label.push(format!("ef{ef}"));
                    }
                    if let Some(b) = b {
                        problem.batch = *b;
                        label.push(format!("b{b}"));
                    }
                    if let Some(n) = n {
                        label.push(format!("N{n}"));
                    }
                    let spec = problem.resolve().map_err(problem_error)?;
                    let window = TailWindow::new(self.run.s, n.unwrap_or(self.run.n))
                        .map_err(|e| CliError::Config(format!("run.N: {e}")))?;
                    points.push(GridPoint {
                        label: label.join("_"),
                        spec,
                        window,
                        eta_fraction: problem.eta_fraction,
                    });
                }
            }
        }
        Ok(points)
    }
}

fn problem_error(e: sgdrisk::Error) -> CliError {
    match e {
        sgdrisk::Error::InvalidArgument(msg) => CliError::Config(format!("problem.{msg}")),
        other => CliError::Config(format!("problem: {other}")),
    }
}

/// One resolved grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Empty when nothing is swept; otherwise e.g. `b4` or `ef0.5_b1_N100`.
    pub label: String,
    pub spec: ProblemSpec,
    pub window: TailWindow,
    pub eta_fraction: Option<f64>,
}

impl GridPoint {
    /// `stem.ext` or `stem_label.ext`.
    pub fn file_name(&self, stem: &str, ext: &str) -> String {
        if self.label.is_empty() {
            format!("{stem}.{ext}")
        } else {
            format!("{stem}_{}.{ext}", self.label)
        }
    }
}
