//! Problem representation in the eigenbasis of the input covariance.
//!
//! Everything downstream works with the eigenvalues `lambda` of `H`, the noise level,
//! the step size, the batch size and the squared eigen-coordinates of `w0 - w*`.
//! The rotation itself never appears outside the oracle module.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::compensated_sum;

/// Eigenvalues of the data covariance, sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    lambdas: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum from values that must already be descending and non-negative.
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(invalid("spectrum must have at least one eigenvalue"));
        }
        if let Some(bad) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(invalid(format!("eigenvalue {bad} is not a finite non-negative number")));
        }
        if lambdas.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("eigenvalues must be sorted in descending order"));
        }
        Ok(Spectrum { lambdas })
    }

    /// Sorts the values descending before validating them.
    pub fn from_unsorted(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.iter().any(|l| l.is_nan()) {
            return Err(invalid("eigenvalues must not be NaN"));
        }
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Self::new(lambdas)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn trace(&self) -> f64 {
        compensated_sum(self.lambdas.iter().copied())
    }

    /// Sum of squared eigenvalues over 0-based indices `from..`.
    pub fn tail_sum_sq(&self, from: usize) -> f64 {
        compensated_sum(self.lambdas.iter().skip(from).map(|l| l * l))
    }
}

/// Generators for synthetic spectra.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    /// `lambda_j = scale * j^(-exponent)` for `j = 1..=d`.
    PowerLaw { exponent: f64, scale: f64 },
    Uniform { value: f64 },
    Explicit(Vec<f64>),
}

pub fn make_spectrum(kind: &SpectrumKind, d: usize) -> Result<Spectrum> {
    if d == 0 {
        return Err(invalid("spectrum dimension d must be positive"));
    }
    match kind {
        SpectrumKind::PowerLaw { exponent, scale } => {
            if !(exponent.is_finite() && *exponent > 0.0) {
                return Err(invalid(format!("power-law exponent must be > 0, got {exponent}")));
            }
            if !(scale.is_finite() && *scale > 0.0) {
                return Err(invalid(format!("power-law scale must be > 0, got {scale}")));
            }
            Spectrum::new((1..=d).map(|j| scale * (j as f64).powf(-exponent)).collect())
        }
        SpectrumKind::Uniform { value } => {
            if !(value.is_finite() && *value >= 0.0) {
                return Err(invalid(format!("uniform value must be >= 0, got {value}")));
            }
            Spectrum::new(vec![*value; d])
        }
        SpectrumKind::Explicit(values) => {
            if values.len() != d {
                return Err(invalid(format!(
                    "explicit spectrum has {} values but d = {d}",
                    values.len()
                )));
            }
            Spectrum::from_unsorted(values.clone())
        }
    }
}

/// Largest step size satisfying `eta <= 1 / (lambda_max + alpha * tr(H))`.
pub fn max_stable_lr(spectrum: &Spectrum, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let denom = spectrum.lambda_max() + alpha * spectrum.trace();
    if denom <= 0.0 {
        return Err(Error::DegenerateProblem(
            "lambda_max + alpha * tr(H) is zero; every step size is stable".into(),
        ));
    }
    Ok(1.0 / denom)
}

/// Burn-in `s` and number of averaged iterates `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TailWindow {
    pub s: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl TailWindow {
    pub fn new(s: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("tail window N must be at least 1"));
        }
        Ok(TailWindow { s, n })
    }

    /// `s + N`, one past the last averaged iterate.
    pub fn end(&self) -> usize {
        self.s + self.n
    }

    /// Index of the last averaged iterate.
    pub fn last(&self) -> usize {
        self.s + self.n - 1
    }
}

/// Band thresholds, as 1-based counts of eigenvalues above each cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Thresholds {
    pub k_star: usize,
    pub k_dagger: usize,
}

/// `k_star = max{j : lambda_j >= 1/(eta N)}`, `k_dagger = max{j : lambda_j >= 1/(eta (s+N))}`.
/// Ties with the cutoff land in the head band.
pub fn thresholds(spectrum: &Spectrum, eta: f64, window: TailWindow) -> Thresholds {
    let count_above = |cutoff: f64| spectrum.lambdas().iter().take_while(|&&l| l >= cutoff).count();
    Thresholds {
        k_star: count_above(1.0 / (eta * window.n as f64)),
        k_dagger: count_above(1.0 / (eta * window.end() as f64)),
    }
}

/// A fully specified problem in the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    spectrum: Spectrum,
    sigma2: f64,
    eta: f64,
    batch: usize,
    alpha: f64,
    m0_bias: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(spectrum: Spectrum, sigma2: f64, eta: f64, batch: usize, m0_bias: Vec<f64>) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(invalid(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(invalid(format!("eta must be > 0, got {eta}")));
        }
        if batch == 0 {
            return Err(invalid("batch must be a positive integer"));
        }
        if m0_bias.len() != spectrum.dim() {
            return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: m0_bias.len() });
        }
        if let Some(bad) = m0_bias.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("m0_bias entries must be finite and >= 0, got {bad}")));
        }
        Ok(ProblemSpec { spectrum, sigma2, eta, batch, alpha: 2.0 / batch as f64, m0_bias })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn lambdas(&self) -> &[f64] {
        self.spectrum.lambdas()
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `2 / batch`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m0_bias(&self) -> &[f64] {
        &self.m0_bias
    }

    /// `eta * (lambda_max + alpha * tr(H)) <= 1`.
    pub fn is_stable(&self) -> bool {
        self.eta * (self.spectrum.lambda_max() + self.alpha * self.spectrum.trace()) <= 1.0
    }

    /// `1 - eta * alpha * tr(H)`, the denominator shared by every bound.
    pub fn stability_margin(&self) -> f64 {
        1.0 - self.eta * self.alpha * self.spectrum.trace()
    }

    pub fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            let limit = max_stable_lr(&self.spectrum, self.alpha).unwrap_or(f64::INFINITY);
            Err(Error::StabilityViolation { eta: self.eta, limit })
        }
    }

    pub fn thresholds(&self, window: TailWindow) -> Thresholds {
        thresholds(&self.spectrum, self.eta, window)
    }

    /// Same problem with a different noise level.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.spectrum.clone(), sigma2, self.eta, self.batch, self.m0_bias.clone())
    }

    /// Same problem with a different initial bias diagonal.
    pub fn with_m0_bias(&self, m0_bias: Vec<f64>) -> Result<Self> {
        Self::new(self.spectrum.clone(), self.sigma2, self.eta, self.batch, m0_bias)
    }

    pub fn with_batch(&self, batch: usize) -> Result<Self> {
        Self::new(self.spectrum.clone(), self.sigma2, self.eta, batch, self.m0_bias.clone())
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.spectrum.clone(), self.sigma2, eta, self.batch, self.m0_bias.clone())
    }
}

/// Spectrum block of a problem config: an inline list or a generator.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SpectrumConfig {
    Inline(Vec<f64>),
    Generated {
        kind: String,
        d: usize,
        #[serde(default)]
        params: SpectrumParams,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SpectrumParams {
    Values(Vec<f64>),
    Table {
        exponent: Option<f64>,
        scale: Option<f64>,
        value: Option<f64>,
        values: Option<Vec<f64>>,
    },
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams::Table { exponent: None, scale: None, value: None, values: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum M0Config {
    Explicit(Vec<f64>),
    /// All coordinates equal to `r^2 / d`.
    RankOneUniform { rank_one_uniform: f64 },
}

/// Problem block as read from a config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub sigma2: f64,
    pub eta: Option<f64>,
    pub eta_fraction: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub m0_bias: M0Config,
}

fn default_batch() -> usize {
    1
}

fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
    invalid(format!("{field}: {e}"))
}

impl SpectrumConfig {
    pub fn build(&self) -> Result<Spectrum> {
        match self {
            SpectrumConfig::Inline(values) => {
                Spectrum::from_unsorted(values.clone()).map_err(|e| field_err("spectrum", e))
            }
            SpectrumConfig::Generated { kind, d, params } => {
                let kind = match (kind.as_str(), params) {
                    ("power_law", SpectrumParams::Table { exponent, scale, .. }) => SpectrumKind::PowerLaw {
                        exponent: exponent.ok_or_else(|| field_err("spectrum.params.exponent", "missing"))?,
                        scale: scale.unwrap_or(1.0),
                    },
                    ("uniform", SpectrumParams::Table { value, .. }) => SpectrumKind::Uniform {
                        value: value.ok_or_else(|| field_err("spectrum.params.value", "missing"))?,
                    },
                    ("explicit", SpectrumParams::Values(v)) => SpectrumKind::Explicit(v.clone()),
                    ("explicit", SpectrumParams::Table { values: Some(v), .. }) => SpectrumKind::Explicit(v.clone()),
                    ("explicit", _) => return Err(field_err("spectrum.params", "explicit spectrum needs a list of values")),
                    ("power_law" | "uniform", _) => return Err(field_err("spectrum.params", "expected a table")),
                    (other, _) => return Err(field_err("spectrum.kind", format!("unknown kind `{other}`"))),
                };
                make_spectrum(&kind, *d).map_err(|e| field_err("spectrum", e))
            }
        }
    }
}

impl ProblemConfig {
    /// Resolves the config into a validated `ProblemSpec`. Errors name the offending field.
    pub fn resolve(&self) -> Result<ProblemSpec> {
        let spectrum = self.spectrum.build()?;
        let d = spectrum.dim();
        if self.batch == 0 {
            return Err(field_err("batch", "must be a positive integer"));
        }
        let alpha = 2.0 / self.batch as f64;
        let eta = match (self.eta, self.eta_fraction) {
            (Some(_), Some(_)) => return Err(field_err("eta", "give either eta or eta_fraction, not both")),
            (None, None) => return Err(field_err("eta", "one of eta or eta_fraction is required")),
            (Some(eta), None) => eta,
            (None, Some(frac)) => {
                if !(frac.is_finite() && frac > 0.0) {
                    return Err(field_err("eta_fraction", format!("must be > 0, got {frac}")));
                }
                frac * max_stable_lr(&spectrum, alpha).map_err(|e| field_err("eta_fraction", e))?
            }
        };
        let m0_bias = match &self.m0_bias {
            M0Config::Explicit(v) => v.clone(),
            M0Config::RankOneUniform { rank_one_uniform: r } => vec![r * r / d as f64; d],
        };
        if m0_bias.len() != d {
            return Err(field_err("m0_bias", format!("expected {d} entries, got {}", m0_bias.len())));
        }
        ProblemSpec::new(spectrum, self.sigma2, eta, self.batch, m0_bias).map_err(|e| {
            let field = match &e {
                Error::InvalidArgument(msg) if msg.starts_with("sigma2") => "sigma2",
                Error::InvalidArgument(msg) if msg.starts_with("eta") => "eta",
                _ => "m0_bias",
            };
            field_err(field, e)
        })
    }
}
