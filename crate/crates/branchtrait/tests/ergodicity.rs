use branchtrait::branching_sim::{tagged_branch_chain, ChildChoice, DivisionRate, Fragmentation, ModelSpec};
use branchtrait::ergodicity::*;
use branchtrait::numerics::{ks_two_sample, ks_two_sample_threshold, mean_and_std_error};
use branchtrait::sde_flow::{Coefficient, DiffusionBounds, DiffusionSpec, Domain};
use branchtrait::seed::stream;

fn ou(b: f64) -> ModelSpec {
    ModelSpec::new(DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0), DivisionRate::constant(b), Fragmentation::uniform(0.1))
        .with_bounds(DiffusionBounds { growth: 1.0, radius: 0.5, sigma_min: 1.0, sigma_max: 1.0 })
}

#[test]
fn ou_drift_bound_holds_on_the_grid() {
    let xs: Vec<f64> = (-3..=3).map(f64::from).collect();
    let report = verify_drift_mc(&ou(1.0), &xs, 4000, 1e-2, &mut stream(11, &[])).unwrap();
    assert_eq!(report.points.len(), 7);
    assert_eq!(report.violations, 0, "{report:?}");
}

#[test]
fn frozen_trait_second_moment_is_exact() {
    let spec = ModelSpec::new(
        DiffusionSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), Domain::FullLine),
        DivisionRate::constant(2.0),
        Fragmentation::uniform(0.2),
    )
    .with_bounds(DiffusionBounds { growth: 0.0, radius: 0.0, sigma_min: 0.0, sigma_max: 0.0 });
    let m = (0.04 - 0.2 + 1.0) / 3.0;
    let report = verify_drift_mc(&spec, &[-2.0, 0.5, 3.0], 20_000, 1e-2, &mut stream(12, &[])).unwrap();
    assert!((report.v1 - m).abs() < 1e-12 && report.v2 == 0.0);
    for p in &report.points {
        let exact = m * p.x * p.x;
        assert!((p.mean - exact).abs() <= 3.0 * p.std_error, "{p:?}");
        assert!(!p.violation);
    }
}

#[test]
fn small_rate_b_to_zero_limit_is_the_gaussian_integral() {
    let erf = statrs::function::erf::erf(3.0 / std::f64::consts::SQRT_2);
    let lambda = ou_minorisation_lambda(1.0, 1.0, 1e-9, 0.1, 3.0).unwrap();
    assert!((lambda - erf).abs() < 1e-7, "{lambda} vs {erf}");
    assert!((erf - 0.9973).abs() < 5e-5);
}

#[test]
fn minorisation_mass_exceeds_half_for_a_small_rate() {
    assert!(ou_minorisation_lambda(1.0, 1.0, 0.05, 0.1, 3.0).unwrap() > 0.5);
}

#[test]
fn frozen_witness_gives_rate_below_half() {
    // found by the certificate grid search for beta = sigma = 1, b = 0.05, eps = 0.1
    let (w, lambda0, eta) = (5458.623407724533, 0.025238550646293448, 0.02);
    let spec = ModelSpec::new(DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0), DivisionRate::constant(0.05), Fragmentation::uniform(0.1))
        .with_bounds(DiffusionBounds { growth: 1.0, radius: 0.1, sigma_min: 1.0, sigma_max: 1.0 });
    let c = drift_constants(&spec).unwrap();
    assert!(c.v1 <= 1.0 / 3.0);
    let lambda = ou_minorisation_lambda(1.0, 1.0, 0.05, 0.1, w).unwrap();
    let r = ou_rho_bound(lambda, c.v1, c.v2, w, lambda0, eta).unwrap();
    assert!(r.below_half && r.rho < 0.5, "{r:?}");

    let cert = ou_certificate(1.0, 1.0, 0.05, 0.1, 0.1).unwrap();
    assert!(cert.below_half && cert.rho <= r.rho + 1e-12);
    let json = serde_json::to_string(&cert).unwrap();
    let back: ErgodicityCertificate = serde_json::from_str(&json).unwrap();
    assert_eq!(back, cert);
}

#[test]
fn invariant_samples_agree_across_seeds() {
    let spec = ou(1.0);
    let opts = InvariantOptions { burn_in: 50, thin: 5 };
    let a = empirical_invariant(&spec, 0.0, 2000, 1e-2, opts, &mut stream(21, &[])).unwrap();
    let b = empirical_invariant(&spec, 0.0, 2000, 1e-2, opts, &mut stream(22, &[])).unwrap();
    assert_eq!(a.len(), 2000);
    let d = ks_two_sample(&a, &b);
    assert!(d < ks_two_sample_threshold(a.len(), b.len()), "KS {d}");

    let c = drift_constants(&spec).unwrap();
    let squares: Vec<f64> = a.iter().map(|y| y * y).collect();
    let (m2, se) = mean_and_std_error(&squares);
    assert!(m2 <= c.v2 / (1.0 - c.v1) + 3.0 * se, "{m2}");
}

#[test]
fn bounded_test_function_decays_geometrically() {
    let spec = ou(1.0);
    let rho = ou_certificate(1.0, 1.0, 1.0, 0.1, 0.5).unwrap().rho;
    assert!(rho < 1.0);
    let reps = 4000;
    let mut at = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..reps {
        let y = tagged_branch_chain(&spec, 3.0, 8, 1e-2, ChildChoice::Random, &mut stream(31, &[k])).unwrap();
        for (slot, m) in at.iter_mut().zip([2, 4, 8]) {
            slot.push(y[m].tanh());
        }
    }
    // the stationary law is symmetric, so the stationary mean of tanh is zero
    let stats: Vec<(f64, f64)> = at.iter().map(|v| mean_and_std_error(v)).collect();
    for (gap, pair) in [2, 4].iter().zip(stats.windows(2)) {
        let (d0, d1, se) = (pair[0].0.abs(), pair[1].0.abs(), pair[1].1);
        assert!(d1 <= rho.powi(*gap) * d0 + 3.0 * se, "{d0} -> {d1}");
    }
}
