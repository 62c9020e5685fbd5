//! Seeded Monte Carlo SGD on Gaussian data, run directly in the eigenbasis (`H = Lambda`).
//!
//! Each seed owns an independent ChaCha8 stream: the key is fixed and the seed selects
//! the stream number, so distinct seeds never share keystream blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, json17};
use crate::problem::{ProblemSpec, Spectrum, TailWindow};

/// Identifier of the generator and stream layout, recorded alongside Monte Carlo output.
pub const RNG_ID: &str = "chacha8-rand_chacha0.9/key=sgdrisk-mc-v1/stream=seed";

const STREAM_KEY: [u8; 32] = *b"sgdrisk-mc-v1...................";

/// Independent generator for `seed`.
pub fn stream_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(STREAM_KEY);
    rng.set_stream(seed);
    rng
}

/// SGD problem with an explicit starting offset `w0 - w*` in eigen-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FullProblem {
    pub spectrum: Spectrum,
    pub w_delta0: Vec<f64>,
    pub sigma2: f64,
    pub eta: f64,
    pub batch: usize,
}

impl FullProblem {
    /// Starting offset with non-negative coordinates `sqrt(m0)`.
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        FullProblem {
            spectrum: spec.spectrum().clone(),
            w_delta0: spec.m0_bias().iter().map(|m| m.sqrt()).collect(),
            sigma2: spec.sigma2(),
            eta: spec.eta(),
            batch: spec.batch(),
        }
    }

    /// Same as `from_spec`, with coordinate `k` negated wherever `signs[k]` is true.
    pub fn with_signs(spec: &ProblemSpec, signs: &[bool]) -> Result<Self> {
        if signs.len() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), got: signs.len() });
        }
        let mut p = Self::from_spec(spec);
        for (w, &neg) in p.w_delta0.iter_mut().zip(signs) {
            if neg {
                *w = -*w;
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    fn validate(&self) -> Result<()> {
        if self.w_delta0.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: self.w_delta0.len() });
        }
        if self.batch == 0 {
            return Err(invalid("batch must be positive"));
        }
        if self.sigma2.is_nan() || self.sigma2 < 0.0 || self.eta.is_nan() || self.eta < 0.0 {
            return Err(invalid("sigma2 and eta must be non-negative"));
        }
        Ok(())
    }

    fn excess(&self, delta: &[f64]) -> f64 {
        0.5 * compensated_sum(self.spectrum.lambdas().iter().zip(delta).map(|(l, x)| l * x * x))
    }
}

/// Runs `steps` mini-batch updates, calling `visit(t, delta_t)` for `t = 0..=steps`.
fn run_path(problem: &FullProblem, seed: u64, steps: usize, mut visit: impl FnMut(usize, &[f64])) {
    let d = problem.dim();
    let sqrt_lam: Vec<f64> = problem.spectrum.lambdas().iter().map(|l| l.sqrt()).collect();
    let noise_sd = problem.sigma2.sqrt();
    let step = problem.eta / problem.batch as f64;
    let mut rng = stream_rng(seed);
    let mut delta = problem.w_delta0.clone();
    let mut grad = vec![0.0; d];
    let mut x = vec![0.0; d];
    visit(0, &delta);
    for t in 1..=steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for _ in 0..problem.batch {
            for (xk, s) in x.iter_mut().zip(&sqrt_lam) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xk = s * z;
            }
            let eps: f64 = StandardNormal.sample(&mut rng);
            // residual x^T delta + eps, gradient x (x^T delta + eps)
            let r = x.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() + noise_sd * eps;
            for (g, xk) in grad.iter_mut().zip(&x) {
                *g += xk * r;
            }
        }
        for (dk, g) in delta.iter_mut().zip(&grad) {
            *dk -= step * g;
        }
        visit(t, &delta);
    }
}

/// Excess risks of the last iterate and of the tail average for one sample path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    pub seed: u64,
    #[serde(serialize_with = "json17::serialize")]
    pub final_excess: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub tail_avg_excess: f64,
}

pub fn sgd_path(problem: &FullProblem, seed: u64, steps: usize, window: TailWindow) -> Result<PathOutcome> {
    problem.validate()?;
    if steps < window.end() {
        return Err(invalid(format!("T = {steps} is shorter than s + N = {}", window.end())));
    }
    let mut avg = vec![0.0; problem.dim()];
    let mut last = Vec::new();
    run_path(problem, seed, steps, |t, delta| {
        if t >= window.s && t <= window.last() {
            avg.iter_mut().zip(delta).for_each(|(a, x)| *a += x);
        }
        if t == steps {
            last = delta.to_vec();
        }
    });
    let inv_n = 1.0 / window.n as f64;
    avg.iter_mut().for_each(|a| *a *= inv_n);
    Ok(PathOutcome { seed, final_excess: problem.excess(&last), tail_avg_excess: problem.excess(&avg) })
}

/// Iterates `delta_t` for `t = 0..=steps`.
pub fn sgd_trace(problem: &FullProblem, seed: u64, steps: usize) -> Result<Vec<Vec<f64>>> {
    problem.validate()?;
    let mut out = Vec::with_capacity(steps + 1);
    run_path(problem, seed, steps, |_, delta| out.push(delta.to_vec()));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    #[serde(serialize_with = "json17::serialize")]
    pub mean: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub std_error: f64,
    pub n_seeds: usize,
    pub rng_id: &'static str,
}

/// Sample mean and standard error, reduced in the given order.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-seed outcomes for seeds `base_seed .. base_seed + n_seeds`, in seed order.
pub fn mc_paths(
    problem: &FullProblem,
    n_seeds: usize,
    steps: usize,
    window: TailWindow,
    base_seed: u64,
) -> Result<Vec<PathOutcome>> {
    (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| sgd_path(problem, base_seed + i, steps, window))
        .collect()
}

/// Monte Carlo estimate of the tail-averaged excess risk.
pub fn mc_estimate(
    problem: &FullProblem,
    n_seeds: usize,
    steps: usize,
    window: TailWindow,
    base_seed: u64,
) -> Result<McEstimate> {
    if n_seeds < 2 {
        return Err(invalid("n_seeds must be at least 2"));
    }
    let paths = mc_paths(problem, n_seeds, steps, window, base_seed)?;
    Ok(summarize(&paths))
}

pub fn summarize(paths: &[PathOutcome]) -> McEstimate {
    let vals: Vec<f64> = paths.iter().map(|p| p.tail_avg_excess).collect();
    let (mean, std_error) = mean_and_std_error(&vals);
    McEstimate { mean, std_error, n_seeds: paths.len(), rng_id: RNG_ID }
}

/// Per-time, per-coordinate Monte Carlo mean of `delta_t^2` and its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub n_seeds: usize,
}

pub fn coordinate_second_moments(
    problem: &FullProblem,
    n_seeds: usize,
    steps: usize,
    base_seed: u64,
) -> Result<SecondMoments> {
    if n_seeds < 2 {
        return Err(invalid("n_seeds must be at least 2"));
    }
    let traces: Vec<Vec<Vec<f64>>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| sgd_trace(problem, base_seed + i, steps))
        .collect::<Result<_>>()?;
    let d = problem.dim();
    let mut mean = vec![vec![0.0; d]; steps + 1];
    let mut std_error = vec![vec![0.0; d]; steps + 1];
    let mut column = vec![0.0; n_seeds];
    for t in 0..=steps {
        for k in 0..d {
            for (c, tr) in column.iter_mut().zip(&traces) {
                *c = tr[t][k] * tr[t][k];
            }
            let (m, se) = mean_and_std_error(&column);
            mean[t][k] = m;
            std_error[t][k] = se;
        }
    }
    Ok(SecondMoments { mean, std_error, n_seeds })
}
