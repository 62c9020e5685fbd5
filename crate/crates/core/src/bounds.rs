//! Closed-form bias and variance bounds for tail-averaged constant-step SGD,
//! the per-iterate bounds, the auxiliary sum bounds and the lower-bound diagnostic.
//!
//! All norms of `w0 - w*` are evaluated from the squared eigen-coordinates `m0`:
//! `||(I - eta Lambda)^s (w0 - w*)||^2_{M}` becomes `sum_j (1 - eta lambda_j)^{2s} m0_j M_jj`.
//! Band indices are 1-based counts, so "j <= k" means the first `k` eigenvalues.

use serde::Serialize;

use crate::error::Result;
use crate::exact_engine::evolve_split;
use crate::numeric::{compensated_sum, json17, powu};
use crate::problem::{ProblemSpec, TailWindow, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBoundReport {
    /// `(1/(eta^2 N^2)) ||(I - eta Lambda)^s (w0 - w*)||^2` over the inverse head band.
    #[serde(serialize_with = "json17::serialize")]
    pub term_head: f64,
    /// `4 ||(I - eta Lambda)^s (w0 - w*)||^2` over the `Lambda`-weighted tail band.
    #[serde(serialize_with = "json17::serialize")]
    pub term_tail: f64,
    /// The coupling term proportional to `alpha`.
    #[serde(serialize_with = "json17::serialize")]
    pub term_cross: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub total: f64,
    /// `||w0 - w*||^2` over the identity head band, inside `term_cross`.
    #[serde(serialize_with = "json17::serialize")]
    pub cross_identity_mass: f64,
    /// `2 (s+N) eta ||w0 - w*||^2` over the `Lambda`-weighted tail band, inside `term_cross`.
    #[serde(serialize_with = "json17::serialize")]
    pub cross_tail_mass: f64,
    pub k_star: usize,
    pub k_dagger: usize,
    pub stable: bool,
}

impl BiasBoundReport {
    /// Share of the coupling term carried by the identity-norm head mass, which has no
    /// counterpart in the lower bound.
    pub fn identity_share_of_cross(&self) -> f64 {
        let mass = self.cross_identity_mass + self.cross_tail_mass;
        if mass > 0.0 {
            self.cross_identity_mass / mass
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceBoundReport {
    #[serde(serialize_with = "json17::serialize")]
    pub band_head: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub band_mid: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub band_tail: f64,
    /// `1 / (1 - eta alpha tr(H))`.
    #[serde(serialize_with = "json17::serialize")]
    pub prefactor: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub total: f64,
    pub k_star: usize,
    pub k_dagger: usize,
    pub stable: bool,
}

/// Lower-bound expressions evaluated with every suppressed constant set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundReport {
    #[serde(serialize_with = "json17::serialize")]
    pub bias_lb: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub variance_lb: f64,
    pub diagnostic_only: bool,
    pub k_star: usize,
    pub k_dagger: usize,
    pub stable: bool,
}

/// `sum_{j in range} f(j)` with compensation.
fn band_sum(range: std::ops::Range<usize>, f: impl Fn(usize) -> f64) -> f64 {
    compensated_sum(range.map(f))
}

pub fn bias_risk_bound(spec: &ProblemSpec, window: TailWindow) -> Result<BiasBoundReport> {
    spec.require_stable()?;
    let Thresholds { k_star, k_dagger } = spec.thresholds(window);
    let lam = spec.lambdas();
    let m0 = spec.m0_bias();
    let d = spec.dim();
    let eta = spec.eta();
    let n = window.n as f64;
    let s = window.s as u64;
    let omega = |j: usize| powu(1.0 - eta * lam[j], 2 * s) * m0[j];

    let head_inv = band_sum(0..k_star, |j| {
        // lambda_j >= 1/(eta N) > 0 inside the head band
        debug_assert!(lam[j] > 0.0);
        omega(j) / lam[j]
    });
    let term_head = head_inv / (eta * eta * n * n);
    let term_tail = 4.0 * band_sum(k_star..d, |j| omega(j) * lam[j]);

    let cross_identity_mass = band_sum(0..k_star, |j| m0[j]);
    let cross_tail_mass = 2.0 * window.end() as f64 * eta * band_sum(k_star..d, |j| m0[j] * lam[j]);
    let spread = (k_star as f64 + 4.0 * eta * eta * n * n * spec.spectrum().tail_sum_sq(k_star)) / n;
    let term_cross = spec.alpha() * (cross_identity_mass + cross_tail_mass)
        / (eta * n * spec.stability_margin())
        * spread;

    Ok(BiasBoundReport {
        term_head,
        term_tail,
        term_cross,
        total: term_head + term_tail + term_cross,
        cross_identity_mass,
        cross_tail_mass,
        k_star,
        k_dagger,
        stable: true,
    })
}

pub fn variance_risk_bound(spec: &ProblemSpec, window: TailWindow) -> Result<VarianceBoundReport> {
    spec.require_stable()?;
    let Thresholds { k_star, k_dagger } = spec.thresholds(window);
    let lam = spec.lambdas();
    let eta = spec.eta();
    let sigma2 = spec.sigma2();
    let band_head = sigma2 * k_star as f64 / window.n as f64;
    let band_mid = 4.0 * eta * sigma2 * band_sum(k_star..k_dagger, |j| lam[j]);
    let band_tail = 16.0 * eta * eta * window.end() as f64 * sigma2 * band_sum(k_dagger..spec.dim(), |j| lam[j]);
    let prefactor = 1.0 / spec.stability_margin();
    Ok(VarianceBoundReport {
        band_head,
        band_mid,
        band_tail,
        prefactor,
        total: prefactor * (band_head + band_mid + band_tail),
        k_star,
        k_dagger,
        stable: true,
    })
}

/// `D^t m0 + (alpha eta <m0, 1 - (1 - eta lambda)^{2t}> / (1 - eta alpha tr H)) lambda`.
pub fn bias_iterate_bound(spec: &ProblemSpec, t: usize) -> Result<Vec<f64>> {
    spec.require_stable()?;
    let eta = spec.eta();
    let lam = spec.lambdas();
    let m0 = spec.m0_bias();
    let decay: Vec<f64> = lam.iter().map(|&l| powu(1.0 - eta * l, 2 * t as u64)).collect();
    let drop = compensated_sum(m0.iter().zip(&decay).map(|(m, q)| m * (1.0 - q)));
    let coef = spec.alpha() * eta * drop / spec.stability_margin();
    Ok(m0.iter().zip(&decay).zip(lam).map(|((m, q), l)| q * m + coef * l).collect())
}

/// `(eta sigma^2 / (1 - eta alpha tr H)) (1 - (1 - eta lambda)^{2t})`.
pub fn variance_iterate_bound(spec: &ProblemSpec, t: usize) -> Result<Vec<f64>> {
    spec.require_stable()?;
    let eta = spec.eta();
    let scale = eta * spec.sigma2() / spec.stability_margin();
    Ok(spec.lambdas().iter().map(|&l| scale * (1.0 - powu(1.0 - eta * l, 2 * t as u64))).collect())
}

/// Both sides of a numeric inequality certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideBySide {
    #[serde(serialize_with = "json17::serialize")]
    pub lhs: f64,
    #[serde(serialize_with = "json17::serialize")]
    pub rhs: f64,
}

impl SideBySide {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }

    pub fn violation(&self) -> f64 {
        (self.lhs - self.rhs).max(0.0)
    }
}

/// `sum_{t=0}^{k-1} c_t` against `alpha eta (s_0 - s_k) / (1 - eta alpha tr H)`, where
/// `c_t = alpha eta^2 <lambda, m_bias_{t-1}>`, `c_0 = 0` and `s_t = <m_bias_t, 1>`.
pub fn ct_sum_check(spec: &ProblemSpec, k: usize) -> Result<SideBySide> {
    spec.require_stable()?;
    let bias_only = spec.with_sigma2(0.0)?;
    let traj = evolve_split(&bias_only, k);
    let lam = spec.lambdas();
    let eta = spec.eta();
    let alpha = spec.alpha();
    let lhs = compensated_sum(
        (1..k).map(|t| alpha * eta * eta * crate::numeric::dot(lam, &traj.states()[t - 1].bias.m)),
    );
    let mass = |t: usize| compensated_sum(traj.states()[t].bias.m.iter().copied());
    let rhs = alpha * eta * (mass(0) - mass(k)) / spec.stability_margin();
    Ok(SideBySide { lhs, rhs })
}

/// `s_0 - s_t` against `<m0, 1 - (1 - eta lambda)^{2t}>`.
pub fn mass_drop_check(spec: &ProblemSpec, t: usize) -> Result<SideBySide> {
    spec.require_stable()?;
    let bias_only = spec.with_sigma2(0.0)?;
    let traj = evolve_split(&bias_only, t);
    let m0 = spec.m0_bias();
    let mt = &traj.states()[t].bias.m;
    let lhs = compensated_sum(m0.iter().zip(mt).map(|(a, b)| a - b));
    let eta = spec.eta();
    let rhs = compensated_sum(
        m0.iter().zip(spec.lambdas()).map(|(m, &l)| m * (1.0 - powu(1.0 - eta * l, 2 * t as u64))),
    );
    Ok(SideBySide { lhs, rhs })
}

pub fn lower_bound_diagnostic(spec: &ProblemSpec, window: TailWindow) -> Result<LowerBoundReport> {
    spec.require_stable()?;
    let Thresholds { k_star, k_dagger } = spec.thresholds(window);
    let lam = spec.lambdas();
    let m0 = spec.m0_bias();
    let d = spec.dim();
    let eta = spec.eta();
    let n = window.n as f64;
    let s = window.s as u64;
    let omega = |j: usize| powu(1.0 - eta * lam[j], 2 * s) * m0[j];

    let head = band_sum(0..k_star, |j| omega(j) / lam[j]) / (eta * eta * n * n);
    let tail = band_sum(k_star..d, |j| omega(j) * lam[j]);
    let slow_mass = band_sum(k_dagger..d, |j| m0[j] * lam[j]);
    let spread = k_star as f64 / n + n * eta * eta * spec.spectrum().tail_sum_sq(k_star);
    let bias_lb = head + tail + slow_mass * spread;

    let sigma2 = spec.sigma2();
    let variance_lb = sigma2
        * (k_star as f64 / n
            + eta * band_sum(k_star..k_dagger, |j| lam[j])
            + window.end() as f64 * eta * eta * spec.spectrum().tail_sum_sq(k_dagger));

    Ok(LowerBoundReport { bias_lb, variance_lb, diagnostic_only: true, k_star, k_dagger, stable: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::problem::Spectrum;
    use approx::assert_relative_eq;

    fn scalar(eta: f64, sigma2: f64, m0: f64) -> ProblemSpec {
        ProblemSpec::new(Spectrum::new(vec![1.0]).unwrap(), sigma2, eta, 1, vec![m0]).unwrap()
    }

    fn w(s: usize, n: usize) -> TailWindow {
        TailWindow::new(s, n).unwrap()
    }

    #[test]
    fn bias_bound_vanishes_at_optimum() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.1]).unwrap(), 1.0, 0.05, 1, vec![0.0; 2]).unwrap();
        let r = bias_risk_bound(&spec, w(3, 10)).unwrap();
        assert_eq!((r.term_head, r.term_tail, r.term_cross, r.total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn bias_bound_scalar_below_head_cutoff() {
        // 1/(eta N) = 20 > lambda = 1, so the only eigenvalue sits in the tail band.
        let r = bias_risk_bound(&scalar(0.05, 0.0, 1.0), w(0, 1)).unwrap();
        assert_eq!(r.k_star, 0);
        assert_eq!(r.term_head, 0.0);
        assert_relative_eq!(r.term_tail, 4.0, max_relative = 1e-15);
        // alpha (0 + 2 * 1 * 0.05 * 1) / (0.05 * 1 * 0.9) * (0 + 4 * 0.0025 * 1) / 1
        assert_relative_eq!(r.term_cross, 2.0 * 0.1 / 0.045 * 0.01, max_relative = 1e-14);
    }

    #[test]
    fn bias_bound_scalar_in_head_band() {
        // N = 20 puts lambda = 1 exactly on the head cutoff 1/(eta N) = 1.
        let r = bias_risk_bound(&scalar(0.05, 0.0, 1.0), w(0, 20)).unwrap();
        assert_eq!(r.k_star, 1);
        assert_relative_eq!(r.term_head, 1.0, max_relative = 1e-14);
        assert_eq!(r.term_tail, 0.0);
        // alpha * 1 / (0.05 * 20 * 0.9) * 1 / 20
        assert_relative_eq!(r.term_cross, 2.0 / 0.9 / 20.0, max_relative = 1e-14);
        assert_eq!(r.total, r.term_head + r.term_tail + r.term_cross);
    }

    #[test]
    fn variance_bound_examples() {
        let spec = scalar(0.05, 1.0, 0.0);
        let r = variance_risk_bound(&spec, w(0, 100)).unwrap();
        assert_eq!((r.k_star, r.k_dagger), (1, 1));
        assert_relative_eq!(r.total, 0.01 / 0.9, max_relative = 1e-14);
        assert_eq!(r.total, r.prefactor * (r.band_head + r.band_mid + r.band_tail));
        let quiet = variance_risk_bound(&spec.with_sigma2(0.0).unwrap(), w(0, 100)).unwrap();
        assert_eq!(quiet.total, 0.0);
    }

    #[test]
    fn bounds_refuse_unstable_specs() {
        let spec = scalar(0.5, 1.0, 1.0);
        assert!(matches!(bias_risk_bound(&spec, w(0, 1)), Err(Error::StabilityViolation { .. })));
        assert!(matches!(variance_risk_bound(&spec, w(0, 1)), Err(Error::StabilityViolation { .. })));
        assert!(bias_iterate_bound(&spec, 3).is_err());
        assert!(variance_iterate_bound(&spec, 3).is_err());
        assert!(ct_sum_check(&spec, 3).is_err());
        assert!(lower_bound_diagnostic(&spec, w(0, 1)).is_err());
    }

    #[test]
    fn iterate_bounds_at_time_zero() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.3]).unwrap(), 1.0, 0.1, 1, vec![2.0, 5.0]).unwrap();
        assert_eq!(bias_iterate_bound(&spec, 0).unwrap(), vec![2.0, 5.0]);
        assert_eq!(variance_iterate_bound(&spec, 0).unwrap(), vec![0.0, 0.0]);
        let zero = spec.with_m0_bias(vec![0.0, 0.0]).unwrap();
        assert_eq!(bias_iterate_bound(&zero, 17).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn variance_iterate_bound_limit() {
        let v = variance_iterate_bound(&scalar(0.1, 1.0, 0.0), 10_000).unwrap();
        assert_relative_eq!(v[0], 0.125, max_relative = 1e-14);
    }

    #[test]
    fn ct_sum_trivial_cases() {
        let zero = scalar(0.1, 0.0, 0.0);
        assert_eq!(ct_sum_check(&zero, 5).unwrap(), SideBySide { lhs: 0.0, rhs: 0.0 });
        let one = ct_sum_check(&scalar(0.1, 0.0, 1.0), 1).unwrap();
        assert_eq!(one.lhs, 0.0);
        assert!(one.holds(0.0));
    }

    #[test]
    fn lower_bound_examples() {
        let r = lower_bound_diagnostic(&scalar(0.05, 0.0, 0.0), w(0, 100)).unwrap();
        assert_eq!((r.bias_lb, r.variance_lb), (0.0, 0.0));
        assert!(r.diagnostic_only);
        let r = lower_bound_diagnostic(&scalar(0.05, 1.0, 0.0), w(0, 100)).unwrap();
        assert_relative_eq!(r.variance_lb, 0.01, max_relative = 1e-15);
    }

    #[test]
    fn variance_bound_linear_in_noise_and_monotone_in_burn_in() {
        let spec = ProblemSpec::new(
            Spectrum::new((1..=20).map(|j| 1.0 / j as f64).collect()).unwrap(),
            1.0,
            0.02,
            1,
            vec![0.0; 20],
        )
        .unwrap();
        let base = variance_risk_bound(&spec, w(10, 50)).unwrap().total;
        let triple = variance_risk_bound(&spec.with_sigma2(3.0).unwrap(), w(10, 50)).unwrap().total;
        assert_relative_eq!(triple, 3.0 * base, max_relative = 1e-14);
        // Non-decreasing in s while the band split stays put; moving an eigenvalue from
        // the tail band into the middle band lowers its coefficient.
        let mut prev: Option<(usize, f64)> = None;
        for s in (0..2000).step_by(10) {
            let r = variance_risk_bound(&spec, w(s, 50)).unwrap();
            if let Some((k, v)) = prev {
                if k == r.k_dagger {
                    assert!(r.total >= v);
                }
            }
            prev = Some((r.k_dagger, r.total));
        }
    }

    #[test]
    fn report_json_has_named_fields() {
        let r = variance_risk_bound(&scalar(0.05, 1.0, 0.0), w(0, 100)).unwrap();
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        for key in ["band_head", "band_mid", "band_tail", "prefactor", "total", "k_star", "k_dagger", "stable"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
