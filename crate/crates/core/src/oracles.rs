//! Brute-force verifiers: the full `d x d` covariance recursion, the Gaussian fourth-moment
//! identity, elementwise operator dominance and the resolvent bound.
//!
//! These deliberately avoid the `O(d)` shortcuts of the exact engine: they build dense
//! matrices and solve dense systems so that agreement between the two routes means something.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::exact_engine::{build_operators, evolve_with, RecursionCoeffs};
use crate::mc_sim::stream_rng;
use crate::numeric::json17;
use crate::problem::{ProblemSpec, Spectrum};

/// Default dimension cap for oracle runs.
pub const ORACLE_MAX_DIM: usize = 64;

/// Relative PSD tolerance against the matrix norm.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub m: DMatrix<f64>,
    pub t: usize,
}

impl FullState {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid("state matrix must be square"));
        }
        Ok(FullState { m, t: 0 })
    }

    /// Rank-one start `delta0 delta0^T`.
    pub fn rank_one(delta0: &[f64]) -> Self {
        let v = DVector::from_column_slice(delta0);
        FullState { m: &v * v.transpose(), t: 0 }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().copied().collect()
    }
}

/// Outcome of a numeric certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    #[serde(serialize_with = "json17::serialize")]
    pub max_violation: f64,
}

impl Verdict {
    fn from_violation(max_violation: f64, tolerance: f64) -> Self {
        Verdict { holds: max_violation <= tolerance, max_violation }
    }
}

/// One step of `M' = M - eta M L - eta L M + eta^2 (1+1/b) L M L + (eta^2/b) tr(L M) L + (eta^2/b) sigma^2 L`.
pub fn full_matrix_step(state: &FullState, spec: &ProblemSpec) -> Result<FullState> {
    let d = spec.dim();
    if state.m.nrows() != d || state.m.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: state.m.nrows() });
    }
    let eta = spec.eta();
    let b = spec.batch() as f64;
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(spec.lambdas()));
    let m = &state.m;
    let lm = &lam * m;
    let ml = m * &lam;
    let lml = &lam * m * &lam;
    let tr = lm.trace();
    let next = m - lm.scale(eta) - ml.scale(eta)
        + lml.scale(eta * eta * (1.0 + 1.0 / b))
        + lam.scale(eta * eta / b * (tr + spec.sigma2()));
    // symmetrise away rounding asymmetry
    let next = (&next + next.transpose()).scale(0.5);
    Ok(FullState { m: next, t: state.t + 1 })
}

pub fn full_matrix_evolve(start: &FullState, spec: &ProblemSpec, steps: usize) -> Result<Vec<FullState>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    for t in 0..steps {
        let next = full_matrix_step(&out[t], spec)?;
        out.push(next);
    }
    Ok(out)
}

/// Smallest eigenvalue relative to the spectral norm (0 for the zero matrix).
pub fn min_relative_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if norm == 0.0 {
        return 0.0;
    }
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v)) / norm
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    min_relative_eigenvalue(m) >= -PSD_TOLERANCE
}

/// Random PSD matrix `G G^T / d` from the seeded stream.
pub fn random_psd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    (&g * g.transpose()).scale(1.0 / d as f64)
}

/// Largest per-coordinate relative gap between the full-matrix diagonal and the vector
/// recursion over `t = 0..=steps`. The vector side uses `coeffs`, which lets callers inject
/// a corrupted recursion as a negative control.
pub fn diagonal_equivalence(
    spec: &ProblemSpec,
    start: &FullState,
    steps: usize,
    coeffs: RecursionCoeffs,
    tolerance: f64,
) -> Result<Verdict> {
    let full = full_matrix_evolve(start, spec, steps)?;
    let start_diag = spec.with_m0_bias(start.diagonal())?;
    let vec_states = evolve_with(&start_diag, steps, coeffs);
    let mut worst = 0.0f64;
    for (f, v) in full.iter().zip(&vec_states) {
        for (a, b) in f.diagonal().iter().zip(&v.m) {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    Ok(Verdict::from_violation(worst, tolerance))
}

/// Perturbs the off-diagonal of `state` and reports the largest change in the diagonal of
/// the next state. Zero up to rounding when the diagonal closes on itself.
pub fn diagonal_closure(spec: &ProblemSpec, state: &FullState, seed: u64) -> Result<f64> {
    let d = spec.dim();
    let mut rng = stream_rng(seed);
    let mut perturbed = state.m.clone();
    for i in 0..d {
        for j in (i + 1)..d {
            let e: f64 = rng.random_range(-1.0..1.0);
            perturbed[(i, j)] += e;
            perturbed[(j, i)] += e;
        }
    }
    let a = full_matrix_step(state, spec)?;
    let b = full_matrix_step(&FullState { m: perturbed, t: state.t }, spec)?;
    let scale = a.m.diagonal().iter().fold(1e-300f64, |acc, v| acc.max(v.abs()));
    Ok(a.m
        .diagonal()
        .iter()
        .zip(b.m.diagonal().iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs() / scale)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsserlisResult {
    pub analytic: DMatrix<f64>,
    pub empirical: DMatrix<f64>,
    pub max_rel_err: f64,
}

/// Minimum number of samples accepted by `isserlis_check`.
pub const ISSERLIS_MIN_SAMPLES: usize = 10_000;

/// Compares `E[(x^T S x) x x^T]` for `x ~ N(0, Lambda)` against `2 L S L + tr(L S) L`.
/// Entry errors are scaled by `max(|analytic_ij|, 0.1 * max |analytic|)`.
pub fn isserlis_check(spectrum: &Spectrum, sigma: &DMatrix<f64>, n_samples: usize, seed: u64) -> Result<IsserlisResult> {
    let d = spectrum.dim();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
    }
    if (sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) || !is_psd(sigma) {
        return Err(invalid("Sigma must be symmetric positive semi-definite"));
    }
    if n_samples < ISSERLIS_MIN_SAMPLES {
        return Err(invalid(format!("n_samples must be at least {ISSERLIS_MIN_SAMPLES}")));
    }
    let h = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum.lambdas()));
    let analytic = (&h * sigma * &h).scale(2.0) + h.scale((&h * sigma).trace());

    let sqrt_lam: Vec<f64> = spectrum.lambdas().iter().map(|l| l.sqrt()).collect();
    let mut rng = stream_rng(seed);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let mut x = DVector::<f64>::zeros(d);
    for _ in 0..n_samples {
        for (k, s) in sqrt_lam.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[k] = s * z;
        }
        let q = (x.transpose() * sigma * &x)[(0, 0)];
        acc.ger(q, &x, &x, 1.0);
    }
    let empirical = acc.scale(1.0 / n_samples as f64);

    let floor = 0.1 * analytic.amax();
    let mut max_rel_err = 0.0f64;
    for (a, e) in analytic.iter().zip(empirical.iter()) {
        let scale = a.abs().max(floor);
        if scale > 0.0 {
            max_rel_err = max_rel_err.max((a - e).abs() / scale);
        } else if *e != 0.0 {
            max_rel_err = f64::INFINITY;
        }
    }
    Ok(IsserlisResult { analytic, empirical, max_rel_err })
}

/// Rounding allowance for the dominance comparisons, relative to entry magnitude. The
/// diagonals of `A_exact` and `B` coincide in exact arithmetic.
pub const DOMINANCE_REL_TOL: f64 = 1e-14;

/// Elementwise `D <= A_exact <= B`, plus `A_exact v <= B v` for 100 random non-negative `v`.
/// The violation is the largest positive excess of the smaller side, relative to magnitude.
pub fn dominance_check(spec: &ProblemSpec, seed: u64) -> Verdict {
    let ops = build_operators(spec);
    let n = spec.dim();
    let rel = |lo: f64, hi: f64| {
        let scale = lo.abs().max(hi.abs());
        if scale > 0.0 {
            (lo - hi).max(0.0) / scale
        } else {
            0.0
        }
    };
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max(rel(ops.a_exact[(i, j)], ops.b[(i, j)]));
            let d_ij = if i == j { ops.d[i] } else { 0.0 };
            worst = worst.max(rel(d_ij, ops.a_exact[(i, j)]));
        }
    }
    let mut rng = stream_rng(seed);
    for _ in 0..100 {
        let v = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let av = &ops.a_exact * &v;
        let bv = &ops.b * &v;
        for k in 0..n {
            worst = worst.max(rel(av[k], bv[k]));
        }
    }
    Verdict::from_violation(worst, DOMINANCE_REL_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: bool,
    pub max_violation: f64,
}

/// `(I - B)^{-1} lambda <= (1 / (eta (1 - eta alpha tr H))) 1` by a dense LU solve.
/// Coordinates with `lambda_k = 0` form an invariant block where `I - B` vanishes and the
/// right-hand side is zero; they are fixed at 0 and the solve runs on the remaining block.
pub fn resolvent_bound_check(spec: &ProblemSpec) -> Result<ResolventCheck> {
    let margin = spec.stability_margin();
    if margin <= 0.0 {
        return Err(Error::StabilityViolation {
            eta: spec.eta(),
            limit: crate::problem::max_stable_lr(spec.spectrum(), spec.alpha()).unwrap_or(f64::INFINITY),
        });
    }
    let ops = build_operators(spec);
    let support: Vec<usize> = (0..spec.dim()).filter(|&k| spec.lambdas()[k] > 0.0).collect();
    let mut lhs = vec![0.0; spec.dim()];
    if !support.is_empty() {
        let n = support.len();
        let sys = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (support[i], support[j]);
            (if a == b { 1.0 } else { 0.0 }) - ops.b[(a, b)]
        });
        let rhs_vec = DVector::from_fn(n, |i, _| spec.lambdas()[support[i]]);
        let sol = sys
            .lu()
            .solve(&rhs_vec)
            .ok_or_else(|| Error::StabilityViolation { eta: spec.eta(), limit: f64::NAN })?;
        for (i, &k) in support.iter().enumerate() {
            lhs[k] = sol[i];
        }
    }
    let bound = 1.0 / (spec.eta() * margin);
    let rhs = vec![bound; spec.dim()];
    let max_violation = lhs.iter().zip(&rhs).fold(0.0f64, |a, (l, r)| a.max(l - r));
    Ok(ResolventCheck { lhs, rhs, holds: max_violation <= 1e-12, max_violation })
}

/// One line of the verdict log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRecord {
    pub check: String,
    pub params_digest: String,
    pub holds: bool,
    #[serde(serialize_with = "json17::serialize")]
    pub max_violation: f64,
    pub seed: u64,
}

/// Short SHA-256 digest of a canonical parameter description.
pub fn params_digest(params: &str) -> String {
    let hash = Sha256::digest(params.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Canonical description of a problem spec, with floats in exact bit form.
pub fn spec_fingerprint(spec: &ProblemSpec) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{:016x}", x.to_bits())).collect::<Vec<_>>().join(",");
    format!(
        "lambda=[{}];sigma2={:016x};eta={:016x};batch={};m0=[{}]",
        join(spec.lambdas()),
        spec.sigma2().to_bits(),
        spec.eta().to_bits(),
        spec.batch(),
        join(spec.m0_bias())
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_engine::{step_m, StateVector};
    use approx::assert_relative_eq;

    fn spec(l: Vec<f64>, sigma2: f64, eta: f64, b: usize) -> ProblemSpec {
        let d = l.len();
        ProblemSpec::new(Spectrum::from_unsorted(l).unwrap(), sigma2, eta, b, vec![1.0; d]).unwrap()
    }

    #[test]
    fn zero_state_without_noise_is_fixed() {
        let s = spec(vec![1.0, 0.5], 0.0, 0.1, 1);
        let out = full_matrix_step(&FullState::new(DMatrix::zeros(2, 2)).unwrap(), &s).unwrap();
        assert_eq!(out.m, DMatrix::zeros(2, 2));
    }

    #[test]
    fn scalar_full_step_equals_vector_step() {
        for b in [1, 3] {
            let s = spec(vec![0.7], 0.4, 0.2, b);
            let full = full_matrix_step(&FullState::new(DMatrix::from_element(1, 1, 2.0)).unwrap(), &s).unwrap();
            let vec = step_m(&StateVector::new(vec![2.0], 0), &s).unwrap();
            assert_relative_eq!(full.m[(0, 0)], vec.m[0], max_relative = 1e-15);
        }
    }

    #[test]
    fn full_step_rejects_dimension_mismatch() {
        let s = spec(vec![1.0, 0.5], 0.0, 0.1, 1);
        assert!(full_matrix_step(&FullState::new(DMatrix::zeros(3, 3)).unwrap(), &s).is_err());
    }

    #[test]
    fn random_psd_start_tracks_vector_recursion() {
        let s = spec(vec![1.0, 0.6, 0.3, 0.1, 0.05], 0.2, 0.1, 2);
        let start = FullState::new(random_psd(5, 11)).unwrap();
        let v = diagonal_equivalence(&s, &start, 100, RecursionCoeffs::for_batch(2), 1e-10).unwrap();
        assert!(v.holds, "{v:?}");
    }

    #[test]
    fn corrupted_coefficients_are_detected() {
        let s = spec(vec![1.0, 0.6, 0.3], 0.2, 0.1, 1);
        let start = FullState::rank_one(&[1.0, 1.0, 1.0]);
        let mut bad = RecursionCoeffs::for_batch(1);
        bad.curvature *= 1.05;
        let v = diagonal_equivalence(&s, &start, 50, bad, 1e-10).unwrap();
        assert!(!v.holds);
    }

    #[test]
    fn off_diagonals_do_not_reach_the_diagonal() {
        let s = spec(vec![2.0, 1.0, 0.5, 0.1], 0.3, 0.05, 4);
        let st = FullState::new(random_psd(4, 3)).unwrap();
        assert!(diagonal_closure(&s, &st, 9).unwrap() <= 1e-14);
    }

    #[test]
    fn psd_is_preserved_along_stable_trajectory() {
        let s = spec(vec![1.0, 0.5, 0.25, 0.125], 0.1, 0.15, 1);
        assert!(s.is_stable());
        let states = full_matrix_evolve(&FullState::new(random_psd(4, 5)).unwrap(), &s, 200).unwrap();
        assert!(states.iter().all(|st| is_psd(&st.m)));
    }

    #[test]
    fn isserlis_scalar_and_zero() {
        let sp = Spectrum::new(vec![1.0]).unwrap();
        let r = isserlis_check(&sp, &DMatrix::from_element(1, 1, 1.0), 10_000, 0).unwrap();
        assert_eq!(r.analytic[(0, 0)], 3.0);
        let sp = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let r = isserlis_check(&sp, &DMatrix::zeros(2, 2), 10_000, 0).unwrap();
        assert_eq!(r.analytic, DMatrix::zeros(2, 2));
        assert_eq!(r.empirical, DMatrix::zeros(2, 2));
    }

    #[test]
    fn isserlis_rejects_bad_input() {
        let sp = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(isserlis_check(&sp, &not_psd, 10_000, 0).is_err());
        assert!(isserlis_check(&sp, &DMatrix::identity(2, 2), 100, 0).is_err());
    }

    #[test]
    fn dominance_holds_and_is_trivial_at_tiny_step() {
        for b in [1, 2, 4, 8, 64] {
            let s = spec(vec![1.0, 0.5, 0.2], 0.0, 0.1, b);
            assert!(dominance_check(&s, 1).holds);
        }
        let tiny = spec(vec![1.0, 0.5], 0.0, 1e-300, 1);
        let v = dominance_check(&tiny, 2);
        assert!(v.holds);
    }

    #[test]
    fn resolvent_scalar_example() {
        let s = spec(vec![1.0], 0.0, 0.1, 1);
        let r = resolvent_bound_check(&s).unwrap();
        assert_relative_eq!(r.lhs[0], 1.0 / 0.17, max_relative = 1e-13);
        assert_relative_eq!(r.rhs[0], 12.5, max_relative = 1e-15);
        assert!(r.holds);
    }

    #[test]
    fn resolvent_zero_spectrum() {
        let s = spec(vec![0.0, 0.0], 0.0, 0.1, 1);
        let r = resolvent_bound_check(&s).unwrap();
        assert_eq!(r.lhs, vec![0.0, 0.0]);
        assert!(r.holds);
    }

    #[test]
    fn resolvent_refuses_nonpositive_margin() {
        let s = spec(vec![1.0, 1.0], 0.0, 0.3, 1);
        assert!(resolvent_bound_check(&s).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = spec(vec![1.0, 0.5], 0.1, 0.1, 1);
        let b = a.with_sigma2(0.2).unwrap();
        assert_eq!(params_digest(&spec_fingerprint(&a)), params_digest(&spec_fingerprint(&a)));
        assert_ne!(params_digest(&spec_fingerprint(&a)), params_digest(&spec_fingerprint(&b)));
        assert_eq!(params_digest("x").len(), 16);
    }
}
