//! Aggregate risk reports and the trajectory CSV format.

use std::io::{self, Write};

use serde::Serialize;

use crate::bounds::{bias_risk_bound, lower_bound_diagnostic, variance_risk_bound};
use crate::bounds::{BiasBoundReport, LowerBoundReport, VarianceBoundReport};
use crate::error::Result;
use crate::exact_engine::{excess_risk, tail_streaming, TailParts, Trajectory};
use crate::numeric::{fmt17, json17};
use crate::problem::{ProblemSpec, TailWindow, Thresholds};

/// Exact tail-averaged risk next to every closed-form bound for one problem and window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub window: TailWindow,
    #[serde(serialize_with = "json17::serialize")]
    pub eta: f64,
    pub batch: usize,
    pub thresholds: Thresholds,
    pub stable: bool,
    pub bias: BiasBoundReport,
    pub variance: VarianceBoundReport,
    pub lower: LowerBoundReport,
    /// Exact tail-averaged excess risk, split by track.
    pub exact_excess: TailParts,
    #[serde(serialize_with = "json17::serialize")]
    pub exact_tail_excess: f64,
    /// `(1/(eta N^2)) <sum m_i, 1 - (1 - eta lambda)^N>` before any banding.
    pub unbanded_tail_bound: TailParts,
    #[serde(serialize_with = "json17::serialize")]
    pub upper_total: f64,
    /// `exact_tail_excess <= upper_total`.
    pub sandwich_holds: bool,
}

/// Evaluates the bounds and the exact tail risk (streamed, `O(d)` memory).
pub fn risk_report(spec: &ProblemSpec, window: TailWindow) -> Result<RiskReport> {
    let bias = bias_risk_bound(spec, window)?;
    let variance = variance_risk_bound(spec, window)?;
    let lower = lower_bound_diagnostic(spec, window)?;
    let streamed = tail_streaming(spec, window);
    let exact_tail_excess = streamed.exact.total();
    let upper_total = bias.total + variance.total;
    Ok(RiskReport {
        window,
        eta: spec.eta(),
        batch: spec.batch(),
        thresholds: spec.thresholds(window),
        stable: spec.is_stable(),
        bias,
        variance,
        lower,
        exact_excess: streamed.exact,
        exact_tail_excess,
        unbanded_tail_bound: streamed.unbanded_bound,
        upper_total,
        sandwich_holds: exact_tail_excess <= upper_total + 1e-12,
    })
}

/// Writes `t,excess_risk,bias_excess,variance_excess`, one row per stored time.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: &mut W) -> io::Result<()> {
    let spec = traj.spec();
    writeln!(out, "t,excess_risk,bias_excess,variance_excess")?;
    for st in traj.states() {
        let bias = excess_risk(&st.bias.m, spec).map_err(io::Error::other)?;
        let var = excess_risk(&st.variance.m, spec).map_err(io::Error::other)?;
        writeln!(out, "{},{},{},{}", st.t(), fmt17(bias + var), fmt17(bias), fmt17(var))?;
    }
    Ok(())
}

/// Writes `t,k,m_bias,m_var` for every stored time and coordinate.
pub fn write_coordinates_csv<W: Write>(traj: &Trajectory, out: &mut W) -> io::Result<()> {
    writeln!(out, "t,k,m_bias,m_var")?;
    for st in traj.states() {
        for (k, (b, v)) in st.bias.m.iter().zip(&st.variance.m).enumerate() {
            writeln!(out, "{},{},{},{}", st.t(), k, fmt17(*b), fmt17(*v))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_engine::evolve_split;
    use crate::problem::Spectrum;

    #[test]
    fn trajectory_csv_has_one_row_per_time() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0]).unwrap(), 0.0, 0.1, 1, vec![1.0]).unwrap();
        let traj = evolve_split(&spec, 10);
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[0], "t,excess_risk,bias_excess,variance_excess");
        assert_eq!(lines[1], "0,5.0000000000000000e-1,5.0000000000000000e-1,0.0000000000000000e0");
    }

    #[test]
    fn coordinate_csv_rows() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.5]).unwrap(), 1.0, 0.1, 1, vec![1.0, 2.0]).unwrap();
        let traj = evolve_split(&spec, 3);
        let mut buf = Vec::new();
        write_coordinates_csv(&traj, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * 2);
    }

    #[test]
    fn report_for_trivial_problem_is_zero() {
        let spec = ProblemSpec::new(Spectrum::new(vec![1.0, 0.5]).unwrap(), 0.0, 0.1, 1, vec![0.0; 2]).unwrap();
        let r = risk_report(&spec, TailWindow::new(2, 5).unwrap()).unwrap();
        assert_eq!((r.bias.total, r.variance.total, r.exact_tail_excess), (0.0, 0.0, 0.0));
        assert!(r.sandwich_holds);
    }
}
