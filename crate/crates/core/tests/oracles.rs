use nalgebra::DMatrix;
use sgdrisk::fixtures::random_stable_specs;
use sgdrisk::oracles::{diagonal_closure, dominance_check, isserlis_check, random_psd, resolvent_bound_check, FullState};
use sgdrisk::Spectrum;

#[test]
fn operator_dominance_on_random_specs() {
    for (i, spec) in random_stable_specs(31, 40, &[1, 3, 10, 32], &[1, 2, 8]).iter().enumerate() {
        let v = dominance_check(spec, i as u64);
        assert!(v.holds, "spec {i}: {}", v.max_violation);
    }
}

#[test]
fn resolvent_bound_on_random_specs() {
    for spec in random_stable_specs(32, 40, &[1, 3, 10, 32], &[1, 2, 8]) {
        let r = resolvent_bound_check(&spec).unwrap();
        assert!(r.holds, "{}", r.max_violation);
        assert!(r.lhs.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn diagonal_is_closed_under_off_diagonal_perturbation() {
    for (i, spec) in random_stable_specs(33, 10, &[2, 6], &[1, 4]).iter().enumerate() {
        let state = FullState::new(random_psd(spec.dim(), i as u64)).unwrap();
        assert!(diagonal_closure(spec, &state, 77).unwrap() <= 1e-13);
    }
}

#[test]
fn fourth_moment_identity_error_shrinks_with_samples() {
    let spectrum = Spectrum::new(vec![1.0, 0.5, 0.25]).unwrap();
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 2.0, -0.2, 0.1, -0.2, 0.5]);
    let err = |n: usize| -> f64 {
        (0..4u64).map(|r| isserlis_check(&spectrum, &sigma, n, r).unwrap().max_rel_err).sum::<f64>() / 4.0
    };
    let (small, large) = (err(10_000), err(1_000_000));
    assert!(large <= 0.05, "{large}");
    assert!(large < small);
}

#[test]
fn fourth_moment_rejects_bad_inputs() {
    let spectrum = Spectrum::new(vec![1.0, 0.5]).unwrap();
    let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(isserlis_check(&spectrum, &not_psd, 10_000, 0).is_err());
    assert!(isserlis_check(&spectrum, &DMatrix::identity(2, 2), 10, 0).is_err());
}
