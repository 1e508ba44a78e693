use branchtrait::branching_sim::{DivisionRate, Fragmentation, ModelSpec};
use branchtrait::numerics::{adaptive_simpson, GaussLegendre};
use branchtrait::sde_flow::{simulate_path, DiffusionSpec};
use branchtrait::seed::stream;
use branchtrait::transition_kernel::*;

/// Resolvent of reflected Brownian motion with drift r and volatility s on
/// [0, l] from the two Neumann solutions of (1/2) s^2 f'' + r f' = theta f.
fn green(r: f64, s: f64, l: f64, theta: f64, x: f64, u: f64) -> f64 {
    let s2 = s * s;
    let d = (r * r + 2.0 * s2 * theta).sqrt();
    let (l1, l2) = ((-r + d) / s2, (-r - d) / s2);
    let psi1 = |v: f64| l2 * (l1 * v).exp() - l1 * (l2 * v).exp();
    let dpsi1 = |v: f64| l1 * l2 * ((l1 * v).exp() - (l2 * v).exp());
    let psi2 = |v: f64| l2 * (l1 * (v - l)).exp() - l1 * (l2 * (v - l)).exp();
    let dpsi2 = |v: f64| l1 * l2 * ((l1 * (v - l)).exp() - (l2 * (v - l)).exp());
    let w = psi1(u) * dpsi2(u) - dpsi1(u) * psi2(u);
    -2.0 / (s2 * w) * psi1(x.min(u)) * psi2(x.max(u))
}

fn green_q(r: f64, s: f64, l: f64, eps: f64, theta: f64, x: f64, y: f64) -> f64 {
    let (lo, hi) = (y / (1.0 - eps), (y / eps).min(l));
    if y <= 0.0 || lo >= hi {
        return 0.0;
    }
    let f = |u: f64| green(r, s, l, theta, x, u) / u;
    let integral = if x > lo && x < hi {
        adaptive_simpson(f, lo, x, 1e-12) + adaptive_simpson(f, x, hi, 1e-12)
    } else {
        adaptive_simpson(f, lo, hi, 1e-12)
    };
    theta / (1.0 - 2.0 * eps) * integral
}

const PROBES: [(f64, f64); 9] = [
    (0.25, 0.2),
    (0.25, 0.4),
    (0.25, 0.6),
    (0.5, 0.2),
    (0.5, 0.4),
    (0.5, 0.6),
    (0.75, 0.2),
    (0.75, 0.4),
    (0.75, 0.6),
];

#[test]
fn spectral_q_matches_closed_form_resolvent() {
    for &(r, s, l, eps) in &[(-0.5, 1.0, 1.0, 0.1), (0.0, 1.0, 1.0, 1e-4), (0.7, 1.3, 2.0, 0.2), (-1.5, 0.8, 1.0, 0.05)] {
        let table = SpectralTable::new(SpectralParams::new(r, s, l, eps)).unwrap();
        for &theta in &[0.5, 2.0, 15.0] {
            for &(x, y) in &PROBES {
                let (x, y) = (x * l, y * l);
                let got = table.q_and_grad(theta, x, y).unwrap();
                let want = green_q(r, s, l, eps, theta, x, y);
                assert!((got.q - want).abs() <= 1e-8 * want.max(1.0), "r={r} theta={theta} ({x},{y}): {} vs {want}", got.q);
                assert!(!got.tail_warning && !got.clamped);
            }
        }
    }
}

#[test]
fn resolvent_series_matches_closed_form() {
    let p = SpectralParams::new(-0.5, 1.0, 1.0, 0.1);
    for &(x, u) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1), (0.0, 1.0)] {
        let got = spectral_resolvent(&p, 2.0, x, u).unwrap();
        let want = green(-0.5, 1.0, 1.0, 2.0, x, u);
        assert!((got - want).abs() < 1e-9, "({x},{u}): {got} vs {want}");
    }
}

#[test]
fn source_variant_disagrees_with_the_resolvent_unless_driftless() {
    let src = SpectralParams::new(-0.5, 1.0, 1.0, 0.1).with_stationary(StationaryVariant::Source);
    let table = SpectralTable::new(src).unwrap();
    let got = table.q_and_grad(2.0, 0.25, 0.4).unwrap().q;
    let want = green_q(-0.5, 1.0, 1.0, 0.1, 2.0, 0.25, 0.4);
    assert!((got - want).abs() > 1e-2, "{got} vs {want}");
    let flat = SpectralTable::new(SpectralParams::new(0.0, 1.0, 1.0, 0.1).with_stationary(StationaryVariant::Source)).unwrap();
    let got = flat.q_and_grad(2.0, 0.25, 0.4).unwrap().q;
    assert!((got - green_q(0.0, 1.0, 1.0, 0.1, 2.0, 0.25, 0.4)).abs() < 1e-8);
}

#[test]
fn gradient_matches_central_differences() {
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, 1.0, 0.1)).unwrap();
    let (theta, h) = (2.0, 1e-4);
    for &(x, y) in &PROBES {
        let g = table.q_and_grad(theta, x, y).unwrap().dq_dtheta;
        let fd = (table.q_and_grad(theta + h, x, y).unwrap().q - table.q_and_grad(theta - h, x, y).unwrap().q) / (2.0 * h);
        assert!(((g - fd) / fd).abs() <= 1e-3, "({x},{y}): {g} vs {fd}");
    }
}

#[test]
fn derivative_positive_at_the_proof_point() {
    // the window [2 eps x, 2 (1 - eps) x] must be narrow around x, i.e. eps near 1/2
    let eps = 0.45;
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, 1.0, eps)).unwrap();
    for &x in &[0.2, 0.5, 0.8] {
        let y = 2.0 * eps * (1.0 - eps) * x;
        for &theta in &[0.5, 2.0, 15.0] {
            assert!(table.q_and_grad(theta, x, y).unwrap().dq_dtheta > 0.0, "x={x} theta={theta}");
        }
    }
}

#[test]
fn partial_sums_are_cauchy() {
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, 1.0, 0.1).with_terms(400)).unwrap();
    for &(x, y) in &PROBES {
        let a = table.q_and_grad_truncated(2.0, x, y, 200).unwrap();
        let b = table.q_and_grad_truncated(2.0, x, y, 400).unwrap();
        assert!((a.q - b.q).abs() < 1e-8, "({x},{y})");
        assert!((a.dq_dtheta - b.dq_dtheta).abs() < 1e-8, "({x},{y})");
    }
}

/// Pieces of [0, (1-eps) L] on which y -> q(x, y) is smooth.
fn y_pieces(eps: f64, l: f64, x: f64) -> Vec<f64> {
    let mut cuts = vec![0.0, eps * x, (1.0 - eps) * x, eps * l, (1.0 - eps) * l];
    cuts.retain(|&c| (0.0..=(1.0 - eps) * l).contains(&c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

#[test]
fn spectral_q_is_a_density_in_y() {
    let (eps, l) = (0.1, 1.0);
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, l, eps)).unwrap();
    for &x in &[0.0, 0.3, 0.8, 1.0] {
        let cuts = y_pieces(eps, l, x);
        let total: f64 = cuts
            .windows(2)
            .map(|w| adaptive_simpson(|y| table.q_and_grad(2.0, x, y).unwrap().q, w[0], w[1], 1e-10))
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "x={x}: {total}");
    }
}

#[test]
fn spectral_q_bounded_on_the_interior() {
    let (eps, l) = (0.1, 1.0);
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, l, eps)).unwrap();
    let eta = 0.05;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..=20 {
        for j in 1..=20 {
            let x = i as f64 / 20.0;
            let y = ((1.0 - eps) * l - eta) * j as f64 / 20.0;
            let q = table.q_and_grad(2.0, x, y).unwrap().q;
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    assert!(lo > 1e-6 && hi < 1e6, "[{lo}, {hi}]");
    // and zero beyond the support
    assert_eq!(table.q_and_grad(2.0, 0.5, 0.91).unwrap().q, 0.0);
}

#[test]
fn rates_are_identifiable_from_q() {
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, 1.0, 0.1)).unwrap();
    for &(t1, t2) in &[(1.9, 2.0), (2.0, 2.05), (14.0, 15.0)] {
        let gap = PROBES
            .iter()
            .map(|&(x, y)| (table.q_and_grad(t1, x, y).unwrap().q - table.q_and_grad(t2, x, y).unwrap().q).abs())
            .fold(0.0, f64::max);
        assert!(gap > 0.0);
    }
}

#[test]
fn spectral_density_matches_reflected_euler_histogram() {
    let (r, l, t, x0, dt) = (-0.5, 1.0, 0.5, 0.3, 1e-3);
    let spec = DiffusionSpec::reflected_brownian(r, 1.0, l);
    let bins = 20;
    let mut counts = vec![0usize; bins];
    let paths = 1_000_000;
    for p in 0..paths {
        let path = simulate_path(&spec, x0, t, dt, &mut stream(77, &[p])).unwrap();
        let end = *path.values.last().unwrap();
        counts[((end / l * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let width = l / bins as f64;
    let l1 = |variant: StationaryVariant| -> f64 {
        let params = SpectralParams::new(r, 1.0, l, 0.1).with_stationary(variant);
        (0..bins)
            .map(|b| {
                let mass = GaussLegendre::new(8)
                    .integrate(|z| spectral_density_reflected(&params, t, x0, z).unwrap().value, b as f64 * width, (b + 1) as f64 * width);
                (counts[b] as f64 / paths as f64 - mass).abs()
            })
            .sum()
    };
    let target = l1(StationaryVariant::Target);
    let source = l1(StationaryVariant::Source);
    assert!(target < 0.02, "target L1 {target}");
    assert!(source > 0.02, "source L1 {source}");
}

fn reflected_model() -> ModelSpec {
    ModelSpec::new(DiffusionSpec::reflected_brownian(-0.5, 1.0, 1.0), DivisionRate::constant(2.0), Fragmentation::uniform(0.1))
}

#[test]
fn mc_q_integrates_to_one() {
    let spec = reflected_model();
    let (eps, l, x) = (0.1, 1.0, 0.4);
    let rule = GaussLegendre::new(16);
    let cuts = y_pieces(eps, l, x);
    let nodes: Vec<(f64, f64)> = cuts.windows(2).flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>()).collect();
    let ys: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let row = mc_transition_row(&spec, x, &ys, &McOptions::new(400, 1e-3), &mut stream(3, &[])).unwrap();
    let total: f64 = row.iter().zip(&nodes).map(|(e, n)| e.value * n.1).sum();
    let se: f64 = row.iter().zip(&nodes).map(|(e, n)| e.std_error * n.1).sum();
    assert!((total - 1.0).abs() <= 3.0 * se, "{total} ({se})");
}

#[test]
fn mc_q_agrees_with_spectral_q() {
    let spec = reflected_model();
    let table = SpectralTable::new(SpectralParams::new(-0.5, 1.0, 1.0, 0.1)).unwrap();
    let opts = McOptions::new(2000, 5e-4);
    for x in [0.25, 0.5, 0.75] {
        let ys = [0.2, 0.4, 0.6];
        let row = mc_transition_row(&spec, x, &ys, &opts, &mut stream(5, &[(x * 100.0) as u64])).unwrap();
        for (e, &y) in row.iter().zip(&ys) {
            let q = table.q_and_grad(2.0, x, y).unwrap().q;
            assert!((e.value - q).abs() <= 3.0 * e.std_error, "({x},{y}): {} +- {} vs {q}", e.value, e.std_error);
        }
    }
}

#[test]
fn mc_q_agrees_with_the_ou_oracle() {
    let (beta, sigma, b, eps) = (1.0, 1.0, 2.0, 0.1);
    let spec = ModelSpec::new(DiffusionSpec::ornstein_uhlenbeck(beta, sigma), DivisionRate::constant(b), Fragmentation::uniform(eps));
    let opts = McOptions::new(4000, 1e-3);
    for x in [-0.5, 0.3, 1.0] {
        let ys = [-0.4, 0.1, 0.5];
        let row = mc_transition_row(&spec, x, &ys, &opts, &mut stream(8, &[])).unwrap();
        for (e, &y) in row.iter().zip(&ys) {
            let want = ou_q_oracle(beta, sigma, b, eps, x, y).unwrap();
            // quadrature error of the oracle is below 1e-8
            assert!((e.value - want).abs() <= 3.0 * (e.std_error + 1e-8), "({x},{y}): {} +- {} vs {want}", e.value, e.std_error);
        }
    }
}

#[test]
fn ou_oracle_is_normalised_and_symmetric_from_zero() {
    let (beta, sigma, b, eps) = (1.0, 1.0, 1.0, 0.1);
    let q = |x: f64, y: f64| ou_q_oracle(beta, sigma, b, eps, x, y).unwrap();
    for x in [0.0, 0.5] {
        // kinks at eps x and (1 - eps) x; the tails beyond |y| = 8 are negligible
        let mut cuts = vec![-8.0, 0.0, 8.0, eps * x, (1.0 - eps) * x];
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let total: f64 = cuts.windows(2).map(|w| adaptive_simpson(|y| q(x, y), w[0], w[1], 1e-7)).sum();
        assert!((total - 1.0).abs() < 1e-4, "x={x}: {total}");
    }
    for y in [0.1, 0.4, 1.3] {
        assert!((q(0.0, y) - q(0.0, -y)).abs() < 1e-9 * q(0.0, y));
    }
}

#[test]
fn pair_density_marginals_recover_q() {
    let spec = reflected_model();
    let (eps, l, x): (f64, f64, f64) = (0.1, 1.0, 0.6);
    let opts = McOptions::new(1500, 1e-3);
    let rule = GaussLegendre::new(16);
    for y in [0.15, 0.3, 0.45, 0.6] {
        // p(x, y, w) and p(x, w, y) are both supported on the same w-range
        let (lo, hi) = (eps / (1.0 - eps) * y, ((1.0 - eps) / eps * y).min(l - y));
        let mut total = 0.0;
        let mut se = 0.0;
        for (w, wt) in rule.mapped(lo, hi) {
            let a = mc_full_transition(&spec, x, y, w, &opts, &mut stream(21, &[])).unwrap();
            let b = mc_full_transition(&spec, x, w, y, &opts, &mut stream(21, &[])).unwrap();
            total += 0.5 * wt * (a.value + b.value);
            se += 0.5 * wt * (a.std_error + b.std_error);
        }
        let q = mc_transition_density(&spec, x, y, &opts, &mut stream(21, &[])).unwrap();
        assert!((total - q.value).abs() <= 3.0 * (se + q.std_error), "y={y}: {total} vs {}", q.value);
    }
}

#[test]
fn pair_density_symmetry_for_uniform_fragmentation() {
    let spec = reflected_model();
    let opts = McOptions::new(300, 2e-3);
    for (y1, y2) in [(0.1, 0.3), (0.25, 0.4), (0.05, 0.05)] {
        let a = mc_full_transition(&spec, 0.5, y1, y2, &opts, &mut stream(4, &[])).unwrap();
        let b = mc_full_transition(&spec, 0.5, y2, y1, &opts, &mut stream(4, &[])).unwrap();
        assert_eq!(a.value * (y1 + y2), b.value * (y1 + y2));
    }
}
