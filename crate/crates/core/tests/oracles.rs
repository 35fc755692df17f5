//! Monte Carlo and closed-form cross-checks of the library's numerics.

use attribution_core::analysis::{
    build_hetero_collapse, build_pvm_tight_pair, collapse_credit, fm_equilibrium, fm_foc_direct,
    optimal_threshold_search, threshold_objective, worstcase_bruteforce, ThresholdSearchSpec,
};
use attribution_core::dist::{
    make_exponential, make_fm_family, make_linear, make_piecewise_uniform, make_tabulated, make_uniform, max_dist, DistProfile,
    TimeDist,
};
use attribution_core::equilibrium::{solve_lcm_equilibrium, solve_symmetric_ne, verify_lcm_ne_quadrature, verify_ne};
use attribution_core::mech::{check_feasibility, compute_priors, Lcm, Mechanism, Pvm, TreeMechanism};
use attribution_core::metrics::{
    evaluate, fairness_mc, gamma_closed, lcm_homog_bounds, pvm_homog_accuracy, tree_accuracy_lower,
};
use attribution_core::sim::stream_rng;
use rand::RngCore;

fn ks_distance(d: &TimeDist, mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = d.cdf(x);
            f64::max((f - k as f64 / m).abs(), ((k + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn inverse_transform_samples_pass_ks() {
    let m = 20_000;
    // 0.1% critical value of the one-sample KS statistic
    let crit = 1.95 / (m as f64).sqrt();
    let fams = [
        make_uniform(-3.0, -1.0).unwrap(),
        make_linear(),
        make_fm_family(10.0).unwrap(),
        make_exponential(2.0, 0.0).unwrap(),
        make_piecewise_uniform(&[(-2.0, -1.0, 0.7), (-0.5, 0.0, 0.3)]).unwrap(),
    ];
    for (k, d) in fams.iter().enumerate() {
        let mut rng = stream_rng(11, k as u64);
        let xs: Vec<f64> = (0..m).map(|_| d.sample(&mut rng)).collect();
        let ks = ks_distance(d, xs);
        assert!(ks < crit, "family {k}: KS {ks} >= {crit}");
    }
}

#[test]
fn max_dist_matches_sampled_maximum() {
    let profile = DistProfile::new(vec![
        make_uniform(-1.0, 0.0).unwrap(),
        make_linear(),
        make_fm_family(3.0).unwrap(),
        make_piecewise_uniform(&[(-2.0, -1.5, 0.5), (-0.4, -0.1, 0.5)]).unwrap(),
    ])
    .unwrap();
    let m = max_dist(&profile, 0).unwrap();
    let n = 100_000;
    let mut rng = stream_rng(5, 0);
    let mut t = vec![0.0; 4];
    let maxima: Vec<f64> = (0..n)
        .map(|_| {
            profile.sample_into(&mut rng, &mut t);
            t[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    for q in [-1.0, -0.5, -0.3, -0.2, -0.1, -0.05] {
        let emp = maxima.iter().filter(|&&x| x <= q).count() as f64 / n as f64;
        let exact = m.cdf(q);
        let se = (exact * (1.0 - exact) / n as f64).sqrt().max(1.0 / n as f64);
        assert!((emp - exact).abs() <= 3.0 * se, "q={q}: {emp} vs {exact} (se {se})");
    }
}

fn hetero(n: usize) -> DistProfile {
    let pool = [
        make_uniform(-1.0, 0.0).unwrap(),
        make_linear(),
        make_fm_family(4.0).unwrap(),
        make_uniform(-2.0, -0.3).unwrap(),
        make_exponential(1.5, 0.0).unwrap(),
    ];
    DistProfile::new(pool.iter().cycle().take(n).cloned().collect()).unwrap()
}

#[test]
fn priors_match_sampled_argmax_frequency() {
    let profile = hetero(4);
    let beta = compute_priors(&profile).unwrap();
    let n = 200_000;
    let mut counts = [0usize; 4];
    let mut rng = stream_rng(3, 0);
    let mut t = vec![0.0; 4];
    for _ in 0..n {
        profile.sample_into(&mut rng, &mut t);
        let (k, _) = attribution_core::sim::argmax(&t);
        counts[k] += 1;
    }
    for i in 0..4 {
        let freq = counts[i] as f64 / n as f64;
        let se = (beta[i] * (1.0 - beta[i]) / n as f64).sqrt();
        assert!((freq - beta[i]).abs() <= 3.0 * se, "platform {i}: {freq} vs {}", beta[i]);
    }
}

#[test]
fn tree_equals_pvm_for_two_platforms() {
    let profile = hetero(2);
    let pvm = Pvm::new(&profile).unwrap();
    let tree = TreeMechanism::new(&profile).unwrap();
    let mut rng = stream_rng(8, 0);
    for _ in 0..5000 {
        let r: Vec<f64> = (0..2).map(|_| -1.2 + 1.4 * (rng.next_u64() as f64 / u64::MAX as f64)).collect();
        let a = pvm.allocate(&r, &mut rng);
        let b = tree.allocate(&r, &mut rng);
        for k in 0..2 {
            assert!((a.credits[k] - b.credits[k]).abs() < 1e-12, "{r:?}: {:?} vs {:?}", a.credits, b.credits);
        }
    }
}

#[test]
fn truthful_credit_equals_prior() {
    for n in [3, 5] {
        let profile = hetero(n);
        let priors = compute_priors(&profile).unwrap();
        let pvm = Pvm::new(&profile).unwrap();
        let tree = TreeMechanism::new(&profile).unwrap();
        let zero = vec![0.0; n];
        for mech in [&pvm as &dyn Mechanism, &tree] {
            let ev = evaluate(mech, &profile, &priors, &zero, 200_000, 17).unwrap();
            for (i, &(mean, se)) in ev.credit.iter().enumerate() {
                assert!(
                    (mean - priors[i]).abs() <= 3.0 * se + 1e-12,
                    "{} n={n} platform {i}: {mean} vs {} (se {se})",
                    mech.name(),
                    priors[i]
                );
            }
        }
    }
}

#[test]
fn pvm_fairness_is_one() {
    for profile in [hetero(3), DistProfile::homogeneous(make_linear(), 4).unwrap()] {
        let pvm = Pvm::new(&profile).unwrap();
        let f = fairness_mc(&pvm, &profile, &vec![0.0; profile.n()], 200_000, 2).unwrap();
        assert!((f.value - 1.0).abs() <= 3.0 * f.stderr, "{} ± {}", f.value, f.stderr);
    }
}

#[test]
fn pvm_accuracy_is_distribution_free() {
    for d in [make_uniform(-1.0, 0.0).unwrap(), make_fm_family(2.0).unwrap()] {
        for n in 2..=4 {
            let profile = DistProfile::homogeneous(d.clone(), n).unwrap();
            let pvm = Pvm::new(&profile).unwrap();
            let acc = attribution_core::metrics::accuracy_mc(&pvm, &profile, &vec![0.0; n], 200_000, 4).unwrap();
            let exact = pvm_homog_accuracy(n);
            assert!((acc.value - exact).abs() <= 3.0 * acc.stderr, "n={n}: {} vs {exact}", acc.value);
        }
    }
}

#[test]
fn tree_beats_its_lower_bound() {
    for n in [3, 4, 5] {
        let profile = hetero(n);
        let tree = TreeMechanism::new(&profile).unwrap();
        let acc = attribution_core::metrics::accuracy_mc(&tree, &profile, &vec![0.0; n], 100_000, 6).unwrap();
        assert!(acc.value >= tree_accuracy_lower(n) - 3.0 * acc.stderr);
    }
}

#[test]
fn bounds_order() {
    for n in 2..=12 {
        let b = lcm_homog_bounds(n);
        assert!(b.lower < b.upper);
        assert!(b.lower < pvm_homog_accuracy(n));
    }
    // (1 - 1/n)(1/n)^{1/(n-1)} at n = 2 is 1/4
    assert!((pvm_homog_accuracy(2) - 0.75).abs() < 1e-15);
}

#[test]
fn linear_family_equilibrium() {
    let f = make_linear();
    let profile = DistProfile::homogeneous(f.clone(), 2).unwrap();
    let eq = solve_lcm_equilibrium(&profile).unwrap();
    let g = gamma_closed();
    assert!(eq.verified);
    assert!((eq.delays[0] - g).abs() < 1e-6);
    // certified equilibrium also survives the paired Monte Carlo check
    let mc = verify_ne(&Lcm, &profile, &eq.delays, 20_000, 1).unwrap();
    assert!(mc.verified, "{mc:?}");
    let acc = attribution_core::metrics::accuracy_mc(&Lcm, &profile, &eq.delays, 200_000, 9).unwrap();
    let floor = f.cdf(-eq.delays[0]).powi(2);
    assert!((floor - (1.0 - g * g).powi(2)).abs() < 1e-9);
    assert!(acc.value >= floor - 3.0 * acc.stderr, "{} < {floor}", acc.value);
    assert!(f.cdf(-eq.delays[0]) >= 2.0 - 2f64.sqrt());
}

#[test]
fn truthful_play_is_not_an_lcm_equilibrium() {
    let profile = DistProfile::homogeneous(make_linear(), 2).unwrap();
    let q = verify_lcm_ne_quadrature(&profile, &[0.0, 0.0]).unwrap();
    assert!(!q.verified);
    let mc = verify_ne(&Lcm, &profile, &[0.0, 0.0], 20_000, 1).unwrap();
    assert!(!mc.verified);
    assert!(mc.max_gain > 0.05);
}

#[test]
fn symmetric_root_beats_general_floor() {
    for n in 2..=5 {
        let f = make_linear();
        let eq = solve_symmetric_ne(&f, n).unwrap();
        let nf = n as f64;
        let floor = 1.0 - (1.0 / nf).powf(1.0 / (nf - 1.0));
        assert!(f.cdf(-eq.delays[0]) > floor, "n={n}");
    }
}

#[test]
fn symmetric_root_ignores_empty_left_tail() {
    // mass only on [-5, 0] with density sin-shaped and vanishing at both ends;
    // the law's support runs to -10 where h is identically zero
    let grid: Vec<f64> = (0..=2000).map(|k| -10.0 + k as f64 * 0.005).collect();
    let cdf: Vec<f64> = grid
        .iter()
        .map(|&t| if t <= -5.0 { 0.0 } else { (1.0 - (std::f64::consts::PI * (t + 5.0) / 5.0).cos()) / 2.0 })
        .collect();
    let f = make_tabulated(grid, cdf).unwrap();
    let eq = solve_symmetric_ne(&f, 2).unwrap();
    let tau = eq.delays[0];
    assert!(tau > 0.0 && tau < 5.0, "{tau}");
    let profile = DistProfile::homogeneous(f, 2).unwrap();
    assert!(verify_lcm_ne_quadrature(&profile, &eq.delays).unwrap().verified);
}

#[test]
fn fm_sweep_agrees_with_direct_foc() {
    let mut prev = f64::INFINITY;
    for m in [5.0, 10.0, 20.0] {
        let (_, big_f) = fm_equilibrium(m).unwrap();
        let direct = fm_foc_direct(m).unwrap();
        assert!((big_f - direct).abs() < 1e-8, "M={m}: {big_f} vs {direct}");
        assert!(big_f < prev && big_f >= 2.0 - 2f64.sqrt() - 1e-9);
        prev = big_f;
    }
    let (_, f20) = fm_equilibrium(20.0).unwrap();
    assert!((0.566..=0.606).contains(&f20));
    assert!(make_fm_family(20.0).unwrap().check_invariants().is_ok());
}

#[test]
fn collapse_instance() {
    let inst = build_hetero_collapse(0.1, 2).unwrap();
    let delays = inst.certified_delays.clone().expect("certified");
    let priors = compute_priors(&inst.profile).unwrap();
    assert_eq!(priors[0], 0.0);
    let ev = evaluate(&Lcm, &inst.profile, &priors, &delays, 200_000, 3).unwrap();
    let e1 = collapse_credit(0.1, 2);
    assert!((ev.credit[0].0 - e1).abs() <= 3.0 * ev.credit[0].1);
    assert!(ev.accuracy.value <= 1.0 - e1 + 3.0 * ev.accuracy.stderr);
    assert!(ev.fairness.value <= (1.0 - e1) + 3.0 * ev.fairness.stderr);
}

#[test]
fn tight_pair_priors_and_accuracy() {
    let inst = build_pvm_tight_pair();
    let priors = compute_priors(&inst.profile).unwrap();
    // platform 2 carries the 4/9 prior in this orientation
    assert!((priors[0] - 5.0 / 9.0).abs() < 1e-9, "{priors:?}");
    assert!((priors[1] - 4.0 / 9.0).abs() < 1e-9, "{priors:?}");
    let pvm = Pvm::new(&inst.profile).unwrap();
    let acc = attribution_core::metrics::accuracy_mc(&pvm, &inst.profile, &[0.0, 0.0], 500_000, 21).unwrap();
    assert!((acc.value - 19.0 / 27.0).abs() <= 3.0 * acc.stderr, "{} ± {}", acc.value, acc.stderr);
    let thetas: Vec<f64> = (0..2).map(|i| pvm.table().threshold(0b11, i).unwrap().alpha).collect();
    let obj = threshold_objective(&inst.profile, &thetas).unwrap();
    assert!((obj - 19.0 / 27.0).abs() < 1e-7, "{obj}");
}

#[test]
fn bruteforce_feasible_set_stays_below_reduced_optimum() {
    let best = worstcase_bruteforce(91, 3);
    assert!(best.misattribution <= 8.0 / 27.0 + 1e-3, "{best:?}");
    assert!(best.misattribution > 8.0 / 27.0 - 0.01, "{best:?}");
}

#[test]
fn threshold_search_uniform() {
    let spec = ThresholdSearchSpec::default();
    let two = optimal_threshold_search(&DistProfile::homogeneous(make_uniform(-1.0, 0.0).unwrap(), 2).unwrap(), &spec)
        .unwrap();
    assert!(two.thetas.iter().all(|t| (t + 0.5).abs() < 1e-6), "{:?}", two.thetas);
    assert!((two.objective - 0.75).abs() < 1e-6);
    let three =
        optimal_threshold_search(&DistProfile::homogeneous(make_uniform(-1.0, 0.0).unwrap(), 3).unwrap(), &spec)
            .unwrap();
    let th = (1.0f64 / 3.0).sqrt() - 1.0;
    assert!(three.thetas.iter().all(|t| (t - th).abs() < 1e-6), "{:?}", three.thetas);
    assert!((three.objective - pvm_homog_accuracy(3)).abs() < 1e-6);
    assert!(three.constraint_residual.abs() < 1e-8);
}

/// Pays every eligible report in full; breaks the budget.
struct PayEveryone;

impl Mechanism for PayEveryone {
    fn name(&self) -> &str {
        "pay-everyone"
    }

    fn allocate_into(&self, reports: &[f64], _rng: &mut dyn RngCore, credits: &mut [f64]) -> Option<u64> {
        for (x, &r) in credits.iter_mut().zip(reports) {
            *x = if r <= 0.0 { 1.0 } else { 0.0 };
        }
        None
    }
}

#[test]
fn feasibility_check_catches_overpaying_mechanism() {
    let profile = DistProfile::homogeneous(make_uniform(-1.0, 0.0).unwrap(), 3).unwrap();
    let bad = check_feasibility(&PayEveryone, &profile, &[0.0; 3], 10_000, 0).unwrap();
    assert!(!bad.passed());
    assert!(bad.mean_total > 2.9);
    let pvm = Pvm::new(&profile).unwrap();
    let good = check_feasibility(&pvm, &profile, &[0.0; 3], 100_000, 0).unwrap();
    assert!(good.passed());
    assert!((good.mean_total - 1.0).abs() <= 3.0 * good.stderr_total);
}

#[test]
fn mc_runs_are_reproducible() {
    let profile = hetero(3);
    let pvm = Pvm::new(&profile).unwrap();
    let a = attribution_core::metrics::accuracy_mc(&pvm, &profile, &[0.0; 3], 30_000, 77).unwrap();
    let b = attribution_core::metrics::accuracy_mc(&pvm, &profile, &[0.0; 3], 30_000, 77).unwrap();
    assert_eq!(a, b);
    let u1 = attribution_core::equilibrium::expected_utility(&Lcm, &profile, &[0.1, 0.0, 0.2], 1, 20_000, 5).unwrap();
    let u2 = attribution_core::equilibrium::expected_utility(&Lcm, &profile, &[0.1, 0.0, 0.2], 1, 20_000, 5).unwrap();
    assert_eq!(u1, u2);
}
