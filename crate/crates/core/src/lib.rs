//! Exact expected-risk trajectories, closed-form bounds and Monte Carlo certification for
//! constant-step-size SGD on Gaussian linear regression.
//!
//! The whole problem is expressed in the eigenbasis of the input covariance `H`. The risk
//! only depends on the diagonal `m_t` of the rotated iterate covariance, and that diagonal
//! obeys a closed `O(d)` recursion ([`exact_engine`]). The [`bounds`] module evaluates the
//! closed-form bias and variance bounds for tail-averaged iterates; [`mc_sim`] and
//! [`oracles`] provide independent checks of both.

pub mod bounds;
pub mod error;
pub mod exact_engine;
pub mod fixtures;
pub mod mc_sim;
pub mod numeric;
pub mod oracles;
pub mod problem;
pub mod report;

pub use bounds::{
    bias_iterate_bound, bias_risk_bound, ct_sum_check, lower_bound_diagnostic, mass_drop_check,
    variance_iterate_bound, variance_risk_bound, BiasBoundReport, LowerBoundReport, SideBySide,
    VarianceBoundReport,
};
pub use error::{Error, Result};
pub use exact_engine::{
    build_operators, evolve, evolve_split, excess_risk, risk_of_m, step_m, tail_risk_exact,
    tail_risk_unbanded_bound, tail_streaming, RecursionCoeffs, SplitState, StateVector, TailParts,
    Trajectory, TransitionOperators,
};
pub use mc_sim::{mc_estimate, sgd_path, FullProblem, McEstimate, PathOutcome};
pub use problem::{
    make_spectrum, max_stable_lr, thresholds, ProblemConfig, ProblemSpec, Spectrum, SpectrumKind,
    TailWindow, Thresholds,
};
pub use report::{risk_report, RiskReport};
