//! Exact evolution of the eigenbasis diagonal `m_t` of the iterate covariance.
//!
//! For batch size `b` the diagonal obeys the closed recursion
//!
//! ```text
//! m' = [I - 2 eta Lambda + eta^2 (1 + 1/b) Lambda^2 + (eta^2 / b) lambda lambda^T] m + (eta^2 / b) sigma^2 lambda
//! ```
//!
//! which costs `O(d)` per step because the rank-one part only needs `<lambda, m>`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, dot, geometric_tail, powu};
use crate::problem::{ProblemSpec, TailWindow};

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub m: Vec<f64>,
    pub t: usize,
}

impl StateVector {
    pub fn new(m: Vec<f64>, t: usize) -> Self {
        StateVector { m, t }
    }

    pub fn zeros(d: usize) -> Self {
        StateVector { m: vec![0.0; d], t: 0 }
    }
}

/// Bias track (`sigma^2 = 0`, started at `m0`) and variance track (started at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub bias: StateVector,
    pub variance: StateVector,
}

impl SplitState {
    pub fn t(&self) -> usize {
        self.bias.t
    }

    pub fn total(&self) -> Vec<f64> {
        self.bias.m.iter().zip(&self.variance.m).map(|(a, b)| a + b).collect()
    }
}

/// Coefficients of the batch-dependent recursion. Exposed so that verification runs can
/// feed a deliberately corrupted recursion into the equivalence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionCoeffs {
    /// Multiplies `eta^2 Lambda^2`: `1 + 1/b`.
    pub curvature: f64,
    /// Multiplies `eta^2 lambda lambda^T`: `1/b`.
    pub coupling: f64,
    /// Multiplies `eta^2 sigma^2 lambda`: `1/b`.
    pub noise: f64,
}

impl RecursionCoeffs {
    pub fn for_batch(batch: usize) -> Self {
        let inv_b = 1.0 / batch as f64;
        RecursionCoeffs { curvature: 1.0 + inv_b, coupling: inv_b, noise: inv_b }
    }
}

/// Precomputed per-coordinate factors for repeated stepping.
#[derive(Debug, Clone)]
struct Stepper<'a> {
    lambdas: &'a [f64],
    diag: Vec<f64>,
    coupling: f64,
    noise: f64,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a ProblemSpec, coeffs: RecursionCoeffs, sigma2: f64) -> Self {
        let eta = spec.eta();
        let eta2 = eta * eta;
        // (1 - eta l)^2 + eta^2 (c - 1) l^2 == 1 - 2 eta l + c eta^2 l^2
        let diag = spec
            .lambdas()
            .iter()
            .map(|&l| {
                let q = 1.0 - eta * l;
                q * q + (coeffs.curvature - 1.0) * eta2 * l * l
            })
            .collect();
        Stepper {
            lambdas: spec.lambdas(),
            diag,
            coupling: coeffs.coupling * eta2,
            noise: coeffs.noise * eta2 * sigma2,
        }
    }

    fn step(&self, m: &[f64], out: &mut [f64]) {
        let shared = self.coupling * dot(self.lambdas, m) + self.noise;
        for ((o, (&mk, &ck)), &lk) in out.iter_mut().zip(m.iter().zip(&self.diag)).zip(self.lambdas) {
            *o = ck * mk + shared * lk;
        }
    }
}

fn check_dim(m: &[f64], spec: &ProblemSpec) -> Result<()> {
    if m.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: m.len() });
    }
    Ok(())
}

/// One step of the exact diagonal recursion.
pub fn step_m(m: &StateVector, spec: &ProblemSpec) -> Result<StateVector> {
    step_m_with(m, spec, RecursionCoeffs::for_batch(spec.batch()))
}

pub fn step_m_with(m: &StateVector, spec: &ProblemSpec, coeffs: RecursionCoeffs) -> Result<StateVector> {
    check_dim(&m.m, spec)?;
    let stepper = Stepper::new(spec, coeffs, spec.sigma2());
    let mut out = vec![0.0; spec.dim()];
    stepper.step(&m.m, &mut out);
    Ok(StateVector { m: out, t: m.t + 1 })
}

/// Unsplit evolution of `m_t` from `m0_bias` with the full noise, `t = 0..=steps`.
pub fn evolve(spec: &ProblemSpec, steps: usize) -> Vec<StateVector> {
    evolve_with(spec, steps, RecursionCoeffs::for_batch(spec.batch()))
}

pub fn evolve_with(spec: &ProblemSpec, steps: usize, coeffs: RecursionCoeffs) -> Vec<StateVector> {
    let stepper = Stepper::new(spec, coeffs, spec.sigma2());
    let mut states = Vec::with_capacity(steps + 1);
    states.push(StateVector::new(spec.m0_bias().to_vec(), 0));
    for t in 0..steps {
        let mut next = vec![0.0; spec.dim()];
        stepper.step(&states[t].m, &mut next);
        states.push(StateVector::new(next, t + 1));
    }
    states
}

/// Dense record of the bias and variance tracks for `t = 0..=T`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    spec: ProblemSpec,
    states: Vec<SplitState>,
}

impl Trajectory {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn states(&self) -> &[SplitState] {
        &self.states
    }

    /// Largest time index held.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    fn require(&self, window: TailWindow) -> Result<()> {
        if window.last() > self.horizon() {
            return Err(Error::TrajectoryTooShort { available: self.horizon(), needed: window.last() });
        }
        Ok(())
    }
}

pub fn evolve_split(spec: &ProblemSpec, steps: usize) -> Trajectory {
    let coeffs = RecursionCoeffs::for_batch(spec.batch());
    let bias_step = Stepper::new(spec, coeffs, 0.0);
    let var_step = Stepper::new(spec, coeffs, spec.sigma2());
    let d = spec.dim();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(SplitState {
        bias: StateVector::new(spec.m0_bias().to_vec(), 0),
        variance: StateVector::zeros(d),
    });
    for t in 0..steps {
        let prev = &states[t];
        let mut bias = vec![0.0; d];
        let mut var = vec![0.0; d];
        bias_step.step(&prev.bias.m, &mut bias);
        var_step.step(&prev.variance.m, &mut var);
        states.push(SplitState {
            bias: StateVector::new(bias, t + 1),
            variance: StateVector::new(var, t + 1),
        });
    }
    Trajectory { spec: spec.clone(), states }
}

/// Excess risk `<lambda, m> / 2`.
pub fn excess_risk(m: &[f64], spec: &ProblemSpec) -> Result<f64> {
    check_dim(m, spec)?;
    Ok(0.5 * dot(spec.lambdas(), m))
}

/// Population risk `<lambda, m> / 2 + sigma^2 / 2`.
pub fn risk_of_m(m: &StateVector, spec: &ProblemSpec) -> Result<f64> {
    Ok(excess_risk(&m.m, spec)? + 0.5 * spec.sigma2())
}

/// Tail-averaged excess risk split by track, or the corresponding upper-bound expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailParts {
    #[serde(serialize_with = "crate::numeric::json17::serialize")]
    pub bias: f64,
    #[serde(serialize_with = "crate::numeric::json17::serialize")]
    pub variance: f64,
}

impl TailParts {
    pub fn total(&self) -> f64 {
        self.bias + self.variance
    }
}

/// Accumulates the exact averaged-iterate risk weights and the upper-bound weights
/// as states inside the window stream past.
struct TailAccumulator<'a> {
    spec: &'a ProblemSpec,
    window: TailWindow,
    // per coordinate: sum_i m_i^k (1 + 2 g_k(s+N-1-i))
    exact_bias: Vec<f64>,
    exact_var: Vec<f64>,
    // per coordinate: sum_i m_i^k
    sum_bias: Vec<f64>,
    sum_var: Vec<f64>,
}

impl<'a> TailAccumulator<'a> {
    fn new(spec: &'a ProblemSpec, window: TailWindow) -> Self {
        let d = spec.dim();
        TailAccumulator {
            spec,
            window,
            exact_bias: vec![0.0; d],
            exact_var: vec![0.0; d],
            sum_bias: vec![0.0; d],
            sum_var: vec![0.0; d],
        }
    }

    fn push(&mut self, t: usize, bias: &[f64], var: &[f64]) {
        if t < self.window.s || t > self.window.last() {
            return;
        }
        let lag = (self.window.last() - t) as u64;
        let eta = self.spec.eta();
        for (k, &l) in self.spec.lambdas().iter().enumerate() {
            let w = 1.0 + 2.0 * geometric_tail(eta * l, lag);
            self.exact_bias[k] += bias[k] * w;
            self.exact_var[k] += var[k] * w;
            self.sum_bias[k] += bias[k];
            self.sum_var[k] += var[k];
        }
    }

    fn exact(&self) -> TailParts {
        let n = self.window.n as f64;
        let scale = 1.0 / (2.0 * n * n);
        let lam = self.spec.lambdas();
        TailParts {
            bias: scale * dot(lam, &self.exact_bias),
            variance: scale * dot(lam, &self.exact_var),
        }
    }

    fn unbanded_bound(&self) -> TailParts {
        let n = self.window.n as f64;
        let eta = self.spec.eta();
        let weights: Vec<f64> =
            self.spec.lambdas().iter().map(|&l| 1.0 - powu(1.0 - eta * l, self.window.n as u64)).collect();
        let scale = 1.0 / (eta * n * n);
        TailParts {
            bias: scale * dot(&self.sum_bias, &weights),
            variance: scale * dot(&self.sum_var, &weights),
        }
    }
}

fn accumulate(traj: &Trajectory, window: TailWindow) -> Result<TailAccumulator<'_>> {
    traj.require(window)?;
    let mut acc = TailAccumulator::new(&traj.spec, window);
    for st in &traj.states[window.s..=window.last()] {
        acc.push(st.t(), &st.bias.m, &st.variance.m);
    }
    Ok(acc)
}

/// Exact excess risk of the tail average, split into bias and variance contributions.
pub fn tail_excess_exact(traj: &Trajectory, window: TailWindow) -> Result<TailParts> {
    Ok(accumulate(traj, window)?.exact())
}

/// Exact risk of the tail-averaged iterate `(1/N) sum_{i=s}^{s+N-1} w_i`, including `sigma^2 / 2`.
pub fn tail_risk_exact(traj: &Trajectory, window: TailWindow) -> Result<f64> {
    Ok(tail_excess_exact(traj, window)?.total() + 0.5 * traj.spec.sigma2())
}

/// `(1/(eta N^2)) <sum_i m_i, 1 - (1 - eta lambda)^N>` split by track.
pub fn tail_excess_unbanded_bound(traj: &Trajectory, window: TailWindow) -> Result<TailParts> {
    traj.spec.require_stable()?;
    Ok(accumulate(traj, window)?.unbanded_bound())
}

pub fn tail_risk_unbanded_bound(traj: &Trajectory, window: TailWindow) -> Result<f64> {
    Ok(tail_excess_unbanded_bound(traj, window)?.total() + 0.5 * traj.spec.sigma2())
}

/// Both tail quantities computed in `O(d)` memory without materialising the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreamedTail {
    pub exact: TailParts,
    pub unbanded_bound: TailParts,
}

pub fn tail_streaming(spec: &ProblemSpec, window: TailWindow) -> StreamedTail {
    let coeffs = RecursionCoeffs::for_batch(spec.batch());
    let bias_step = Stepper::new(spec, coeffs, 0.0);
    let var_step = Stepper::new(spec, coeffs, spec.sigma2());
    let d = spec.dim();
    let mut bias = spec.m0_bias().to_vec();
    let mut var = vec![0.0; d];
    let mut next_b = vec![0.0; d];
    let mut next_v = vec![0.0; d];
    let mut acc = TailAccumulator::new(spec, window);
    for t in 0..=window.last() {
        acc.push(t, &bias, &var);
        if t == window.last() {
            break;
        }
        bias_step.step(&bias, &mut next_b);
        var_step.step(&var, &mut next_v);
        std::mem::swap(&mut bias, &mut next_b);
        std::mem::swap(&mut var, &mut next_v);
    }
    StreamedTail { exact: acc.exact(), unbanded_bound: acc.unbanded_bound() }
}

/// Exact, bounding and diagonal transition operators.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperators {
    /// Batch-`b` transition of the noiseless recursion.
    pub a_exact: DMatrix<f64>,
    /// `(I - eta Lambda)^2 + alpha eta^2 lambda lambda^T`.
    pub b: DMatrix<f64>,
    /// Diagonal of `(I - eta Lambda)^2`.
    pub d: DVector<f64>,
}

impl TransitionOperators {
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }
}

pub fn build_operators(spec: &ProblemSpec) -> TransitionOperators {
    let n = spec.dim();
    let eta = spec.eta();
    let eta2 = eta * eta;
    let b = spec.batch() as f64;
    let lam = DVector::from_column_slice(spec.lambdas());
    let outer = &lam * lam.transpose();
    let d = lam.map(|l| (1.0 - eta * l).powi(2));
    let mut a_exact = outer.scale(eta2 / b);
    let mut bound = outer.scale(spec.alpha() * eta2);
    for i in 0..n {
        let l = lam[i];
        a_exact[(i, i)] += 1.0 - 2.0 * eta * l + eta2 * (1.0 + 1.0 / b) * l * l;
        bound[(i, i)] += d[i];
    }
    TransitionOperators { a_exact, b: bound, d }
}

/// Stationary variance diagonal `(eta^2 sigma^2 / b) (I - A_exact)^{-1} lambda`, solved through
/// the diagonal-plus-rank-one structure. Coordinates with `lambda_k = 0` receive no noise and stay 0.
pub fn variance_fixed_point(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let eta = spec.eta();
    let eta2 = eta * eta;
    let inv_b = 1.0 / spec.batch() as f64;
    let lam = spec.lambdas();
    // I - A = diag(delta) - c lambda lambda^T
    let c = eta2 * inv_b;
    let mut delta_inv_lam = vec![0.0; lam.len()];
    for (k, &l) in lam.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let delta = 2.0 * eta * l - eta2 * (1.0 + inv_b) * l * l;
        if delta <= 0.0 {
            return Err(Error::StabilityViolation {
                eta,
                limit: crate::problem::max_stable_lr(spec.spectrum(), spec.alpha()).unwrap_or(f64::INFINITY),
            });
        }
        delta_inv_lam[k] = l / delta;
    }
    let denom = 1.0 - c * dot(lam, &delta_inv_lam);
    if denom <= 0.0 {
        return Err(Error::Singular("I - A_exact is not invertible on the support of lambda".into()));
    }
    let scale = eta2 * spec.sigma2() * inv_b / denom;
    Ok(delta_inv_lam.iter().map(|v| scale * v).collect())
}

/// `<lambda, m_bar_inf>`, twice the stationary variance excess risk.
pub fn variance_fixed_point_excess(spec: &ProblemSpec) -> Result<f64> {
    let m = variance_fixed_point(spec)?;
    Ok(compensated_sum(spec.lambdas().iter().zip(&m).map(|(l, v)| l * v)))
}

/// Validates that a state vector has the problem's dimension and non-negative entries.
pub fn validate_state(m: &StateVector, spec: &ProblemSpec) -> Result<()> {
    check_dim(&m.m, spec)?;
    if m.m.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(invalid("state entries must be non-negative"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Spectrum;
    use approx::assert_relative_eq;

    fn scalar_spec(eta: f64, sigma2: f64, m0: f64) -> ProblemSpec {
        ProblemSpec::new(Spectrum::new(vec![1.0]).unwrap(), sigma2, eta, 1, vec![m0]).unwrap()
    }

    #[test]
    fn scalar_step_matches_hand_evaluation() {
        let spec = scalar_spec(0.1, 0.0, 1.0);
        let out = step_m(&StateVector::new(vec![1.0], 0), &spec).unwrap();
        assert_relative_eq!(out.m[0], 0.83, epsilon = 1e-15);
        assert_eq!(out.t, 1);
    }

    #[test]
    fn zero_is_fixed_without_noise() {
        let spec = ProblemSpec::new(Spectrum::new(vec![3.0, 1.0]).unwrap(), 0.0, 0.05, 2, vec![0.0; 2]).unwrap();
        let out = step_m(&StateVector::zeros(2), &spec).unwrap();
        assert_eq!(out.m, vec![0.0, 0.0]);
    }

    #[test]
    fn noise_injection_term() {
        let spec = scalar_spec(0.1, 1.0, 0.0);
        let out = step_m(&StateVector::zeros(1), &spec).unwrap();
        assert_relative_eq!(out.m[0], 0.01, epsilon = 1e-17);
    }

    #[test]
    fn step_rejects_dimension_mismatch() {
        let spec = scalar_spec(0.1, 0.0, 1.0);
        assert!(matches!(
            step_m(&StateVector::zeros(2), &spec),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn risk_examples() {
        let spec = ProblemSpec::new(Spectrum::new(vec![4.0, 3.0]).unwrap(), 0.0, 0.01, 1, vec![0.0; 2]).unwrap();
        // lambda sorted descending, so m pairs as (4, 2), (3, 1): <(4,3),(2,1)>/2 = 5.5
        assert_relative_eq!(risk_of_m(&StateVector::new(vec![2.0, 1.0], 0), &spec).unwrap(), 5.5);
        let noisy = spec.with_sigma2(1.0).unwrap();
        assert_relative_eq!(risk_of_m(&StateVector::zeros(2), &noisy).unwrap(), 0.5);
    }

    #[test]
    fn split_trajectory_initial_state_and_noiseless_variance() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.5]).unwrap(), 0.0, 0.1, 1, vec![1.0, 2.0]).unwrap();
        let traj = evolve_split(&spec, 0);
        assert_eq!(traj.states().len(), 1);
        assert_eq!(traj.states()[0].bias.m, vec![1.0, 2.0]);
        assert_eq!(traj.states()[0].variance.m, vec![0.0, 0.0]);
        let traj = evolve_split(&spec, 30);
        assert!(traj.states().iter().all(|s| s.variance.m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn operators_scalar_and_pair() {
        let ops = build_operators(&scalar_spec(0.1, 0.0, 1.0));
        assert_relative_eq!(ops.a_exact[(0, 0)], 0.83, epsilon = 1e-15);
        assert_relative_eq!(ops.b[(0, 0)], 0.83, epsilon = 1e-15);
        assert_relative_eq!(ops.d[0], 0.81, epsilon = 1e-15);

        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 1.0]).unwrap(), 0.0, 0.1, 1, vec![0.0; 2]).unwrap();
        let ops = build_operators(&spec);
        assert_relative_eq!(ops.a_exact[(0, 1)], 0.01, epsilon = 1e-16);
        assert_relative_eq!(ops.b[(1, 0)], 0.02, epsilon = 1e-16);
    }

    #[test]
    fn operators_at_vanishing_step_are_identity() {
        let spec = ProblemSpec::new(Spectrum::new(vec![2.0, 1.0, 0.5]).unwrap(), 0.0, 1e-300, 3, vec![0.0; 3])
            .unwrap();
        let ops = build_operators(&spec);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(ops.a_exact, id);
        assert_eq!(ops.b, id);
        assert_eq!(ops.d_matrix(), id);
    }

    #[test]
    fn dense_operator_agrees_with_step() {
        let spec = ProblemSpec::new(Spectrum::new(vec![2.0, 0.7, 0.1]).unwrap(), 0.0, 0.05, 3, vec![1.0, 0.3, 2.0])
            .unwrap();
        let ops = build_operators(&spec);
        let m = DVector::from_column_slice(spec.m0_bias());
        let dense = &ops.a_exact * m;
        let fast = step_m(&StateVector::new(spec.m0_bias().to_vec(), 0), &spec).unwrap();
        for k in 0..3 {
            assert_relative_eq!(dense[k], fast.m[k], max_relative = 1e-14);
        }
    }

    #[test]
    fn single_iterate_window_is_pointwise_risk() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.25]).unwrap(), 0.3, 0.1, 1, vec![1.0, 4.0]).unwrap();
        let traj = evolve_split(&spec, 10);
        for s in 0..=10 {
            let w = TailWindow::new(s, 1).unwrap();
            let st = &traj.states()[s];
            let pointwise = risk_of_m(&StateVector::new(st.total(), s), &spec).unwrap();
            assert_relative_eq!(tail_risk_exact(&traj, w).unwrap(), pointwise, max_relative = 1e-15);
        }
    }

    #[test]
    fn tail_risk_at_optimum_without_noise_is_zero() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.25]).unwrap(), 0.0, 0.1, 1, vec![0.0; 2]).unwrap();
        let traj = evolve_split(&spec, 20);
        assert_eq!(tail_risk_exact(&traj, TailWindow::new(5, 10).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn tail_risk_requires_long_enough_trajectory() {
        let spec = scalar_spec(0.1, 0.0, 1.0);
        let traj = evolve_split(&spec, 5);
        assert!(matches!(
            tail_risk_exact(&traj, TailWindow::new(3, 4).unwrap()),
            Err(Error::TrajectoryTooShort { available: 5, needed: 6 })
        ));
        assert!(tail_risk_exact(&traj, TailWindow::new(2, 4).unwrap()).is_ok());
    }

    #[test]
    fn unbanded_bound_scalar_example() {
        let spec = scalar_spec(0.1, 0.0, 1.0);
        let traj = evolve_split(&spec, 1);
        let b = tail_risk_unbanded_bound(&traj, TailWindow::new(0, 1).unwrap()).unwrap();
        assert_relative_eq!(b, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn unbanded_bound_with_empty_state_is_noise_floor() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.25]).unwrap(), 0.4, 0.1, 1, vec![0.0; 2]).unwrap();
        let traj = evolve_split(&spec.with_sigma2(0.0).unwrap(), 10);
        let traj = Trajectory { spec: spec.clone(), states: traj.states };
        assert_relative_eq!(tail_risk_unbanded_bound(&traj, TailWindow::new(2, 5).unwrap()).unwrap(), 0.2);
    }

    #[test]
    fn unbanded_bound_refuses_unstable_spec() {
        let spec = scalar_spec(0.5, 0.0, 1.0);
        let traj = evolve_split(&spec, 3);
        assert!(matches!(
            tail_risk_unbanded_bound(&traj, TailWindow::new(0, 2).unwrap()),
            Err(Error::StabilityViolation { .. })
        ));
    }

    #[test]
    fn streaming_matches_dense_trajectory() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.3, 0.0]).unwrap(), 0.2, 0.2, 2, vec![1.0, 0.5, 3.0])
            .unwrap();
        let w = TailWindow::new(7, 13).unwrap();
        let traj = evolve_split(&spec, w.last());
        let streamed = tail_streaming(&spec, w);
        let exact = tail_excess_exact(&traj, w).unwrap();
        let bound = tail_excess_unbanded_bound(&traj, w).unwrap();
        assert_relative_eq!(streamed.exact.bias, exact.bias, max_relative = 1e-14);
        assert_relative_eq!(streamed.exact.variance, exact.variance, max_relative = 1e-14);
        assert_relative_eq!(streamed.unbanded_bound.total(), bound.total(), max_relative = 1e-14);
    }

    #[test]
    fn variance_fixed_point_matches_long_run() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.5, 0.2, 0.0]).unwrap(), 1.0, 0.1, 2, vec![0.0; 4])
            .unwrap();
        let fp = variance_fixed_point(&spec).unwrap();
        let last = evolve(&spec, 4000).pop().unwrap();
        for (a, b) in fp.iter().zip(&last.m) {
            assert_relative_eq!(*a, *b, max_relative = 1e-10, epsilon = 1e-300);
        }
        assert_eq!(fp[3], 0.0);
    }

    #[test]
    fn variance_limit_scalar() {
        // d=1, lambda=1, eta=0.1, b=1: m = 0.83 m + 0.01 -> 0.01 / 0.17
        let fp = variance_fixed_point(&scalar_spec(0.1, 1.0, 0.0)).unwrap();
        assert_relative_eq!(fp[0], 0.01 / 0.17, max_relative = 1e-14);
    }

    #[test]
    fn validate_state_rejects_negative_entries() {
        let spec = scalar_spec(0.1, 0.0, 1.0);
        assert!(validate_state(&StateVector::new(vec![-1.0], 0), &spec).is_err());
        assert!(validate_state(&StateVector::new(vec![1.0], 0), &spec).is_ok());
    }
}
