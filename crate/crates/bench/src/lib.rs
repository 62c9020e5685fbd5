//! Fixed problem instances for the criterion benchmarks.

use sgdrisk::fixtures::power_law_spec;
use sgdrisk::{ProblemSpec, TailWindow};

/// Dimensions swept by the per-step benchmarks.
pub const DIMS: [usize; 3] = [64, 1024, 16384];

/// Power law `lambda_k = k^{-1}` at half the stable step size, unit noise and unit initial mass.
pub fn power_law(d: usize) -> ProblemSpec {
    power_law_spec(d, 1.0, 0.5, 1, 1.0, 1.0)
}

pub fn window(s: usize, n: usize) -> TailWindow {
    TailWindow::new(s, n).expect("n >= 1")
}
