//! Seeded generators for random stable problems, shared by the test suites, the
//! verification command and the benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mc_sim::stream_rng;
use crate::problem::{make_spectrum, max_stable_lr, ProblemSpec, Spectrum, SpectrumKind};

/// Spectrum families drawn by [`random_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumFamily {
    PowerLaw,
    Random,
}

/// Power law with exponent in `[0.5, 2]` and scale in `[0.5, 2]`, or i.i.d. uniform `(0, 1]` values.
pub fn random_spectrum(rng: &mut ChaCha8Rng, d: usize, family: SpectrumFamily) -> Spectrum {
    match family {
        SpectrumFamily::PowerLaw => {
            let exponent = rng.random_range(0.5..=2.0);
            let scale = rng.random_range(0.5..=2.0);
            make_spectrum(&SpectrumKind::PowerLaw { exponent, scale }, d).expect("valid power law")
        }
        SpectrumFamily::Random => {
            let values = (0..d).map(|_| 1.0 - rng.random_range(0.0..1.0)).collect();
            Spectrum::from_unsorted(values).expect("positive values")
        }
    }
}

/// Stable spec with `eta = fraction * max_stable_lr`, `fraction` drawn from `(0.1, 1]`.
pub fn random_stable_spec(rng: &mut ChaCha8Rng, dims: &[usize], batches: &[usize]) -> ProblemSpec {
    let d = *dims.choose(rng).expect("non-empty dims");
    let batch = *batches.choose(rng).expect("non-empty batches");
    let family = if rng.random_bool(0.5) { SpectrumFamily::PowerLaw } else { SpectrumFamily::Random };
    let spectrum = random_spectrum(rng, d, family);
    let fraction = 1.0 - rng.random_range(0.0..0.9);
    let eta = fraction * max_stable_lr(&spectrum, 2.0 / batch as f64).expect("positive spectrum");
    let sigma2 = rng.random_range(0.0..1.0);
    let m0 = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    ProblemSpec::new(spectrum, sigma2, eta, batch, m0).expect("valid spec")
}

/// `count` random stable specs from the stream selected by `seed`.
pub fn random_stable_specs(seed: u64, count: usize, dims: &[usize], batches: &[usize]) -> Vec<ProblemSpec> {
    let mut rng = stream_rng(seed);
    (0..count).map(|_| random_stable_spec(&mut rng, dims, batches)).collect()
}

/// Power-law spec with `eta = eta_fraction * max_stable_lr` and uniform initial mass `r^2 / d`.
pub fn power_law_spec(
    d: usize,
    exponent: f64,
    eta_fraction: f64,
    batch: usize,
    sigma2: f64,
    r: f64,
) -> ProblemSpec {
    let spectrum = make_spectrum(&SpectrumKind::PowerLaw { exponent, scale: 1.0 }, d).expect("valid power law");
    let eta = eta_fraction * max_stable_lr(&spectrum, 2.0 / batch as f64).expect("positive spectrum");
    ProblemSpec::new(spectrum, sigma2, eta, batch, vec![r * r / d as f64; d]).expect("valid spec")
}
