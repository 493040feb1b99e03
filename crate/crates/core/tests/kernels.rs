use approx::assert_relative_eq;
use disckern::cmp::{cmp_moments, cmp_normalizer_with};
use disckern::*;
use proptest::prelude::*;

fn poisson_pmf(rate: f64, z: u64) -> f64 {
    let mut ln = -rate;
    for k in 1..=z {
        ln += (rate / k as f64).ln();
    }
    ln.exp()
}

fn any_kernel() -> impl Strategy<Value = (KernelFamily, u64, f64)> {
    prop_oneof![
        (0u64..=60, 0.01f64..10.0).prop_map(|(x, h)| (KernelFamily::Dirac, x, h)),
        (0u64..=60, 0.001f64..0.999).prop_map(|(x, h)| (KernelFamily::Binomial, x, h)),
        (0u64..=60, 0.01f64..3.0).prop_map(|(x, h)| (KernelFamily::CoMPoisson, x, h)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn masses_sum_to_one_within_tail((family, x, h) in any_kernel()) {
        let spec = KernelSpec::new(family);
        let eval = spec.eval(x, h).unwrap();
        prop_assert!(eval.tail_bound <= spec.policy.eps_tail);
        prop_assert!(eval.support.contains(&x));
        prop_assert!(eval.probabilities.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let total = eval.total_mass();
        prop_assert!(total <= 1.0 + 1e-12 && total >= 1.0 - eval.tail_bound - 1e-12, "{}", total);
    }

    #[test]
    fn cmp_mass_is_finite(x in 0u64..=100, h in 0.01f64..5.0, z in 0u64..400) {
        let p = cmp_pmf(x, h, z).unwrap();
        prop_assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }
}

#[test]
fn dirac_hand_values() {
    assert_eq!(dirac_kernel_pmf(3, 3), 1.0);
    assert_eq!(dirac_kernel_pmf(3, 2), 0.0);
    assert_eq!(dirac_kernel_pmf(0, 7), 0.0);
    let spec = KernelSpec::new(KernelFamily::Dirac);
    assert_eq!(kernel_mean_variance(&spec, 5, 0.7).unwrap(), (5.0, 0.0));
    assert_eq!(spec.eval(5, 0.7).unwrap().tail_bound, 0.0);
}

#[test]
fn binomial_hand_values() {
    assert_relative_eq!(
        binomial_kernel_pmf(0, 0.1, 0).unwrap(),
        0.9,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        binomial_kernel_pmf(1, 0.5, 2).unwrap(),
        0.5625,
        max_relative = 1e-14
    );
    assert_relative_eq!(
        binomial_kernel_pmf(1, 0.5, 0).unwrap(),
        0.0625,
        max_relative = 1e-14
    );
    assert_eq!(binomial_kernel_pmf(1, 0.5, 3).unwrap(), 0.0);
    assert_eq!(binomial_kernel_pmf(1, 0.5, -1).unwrap(), 0.0);
    for h in [0.0, 1.0, 1.5, -0.2, f64::NAN] {
        assert!(binomial_kernel_pmf(2, h, 1).is_err(), "h = {h}");
    }
}

#[test]
fn binomial_moments_by_direct_summation() {
    // B(5, 4.3/5) summed by hand.
    let (p, trials) = (4.3f64 / 5.0, 5u32);
    let mut mean = 0.0;
    let mut second = 0.0;
    for z in 0..=trials {
        let choose = (1..=z).fold(1.0, |c, k| c * (trials - k + 1) as f64 / k as f64);
        let mass = choose * p.powi(z as i32) * (1.0 - p).powi((trials - z) as i32);
        mean += z as f64 * mass;
        second += (z * z) as f64 * mass;
    }
    let var = second - mean * mean;
    let (m, v) = kernel_mean_variance(&KernelSpec::new(KernelFamily::Binomial), 4, 0.3).unwrap();
    assert!((m - mean).abs() < 1e-12 && (m - 4.3).abs() < 1e-12);
    assert!((v - var).abs() < 1e-12 && (v - 0.602).abs() < 1e-12);
}

#[test]
fn cmp_hand_values() {
    assert_relative_eq!(
        cmp_pmf(2, 1.0, 0).unwrap(),
        (-2f64).exp(),
        max_relative = 1e-12
    );
    assert_eq!(cmp_pmf(0, 0.5, 0).unwrap(), 1.0);
    assert_eq!(cmp_pmf(0, 0.5, 3).unwrap(), 0.0);
    assert_relative_eq!(cmp_variance(5, 1.0).unwrap(), 5.0, max_relative = 1e-9);
    assert_eq!(cmp_variance(0, 0.5).unwrap(), 0.0);
    assert_relative_eq!(
        cmp_variance_asymptote(5, 1.0).unwrap(),
        5.0,
        max_relative = 1e-9
    );
    assert_eq!(cmp_variance_asymptote(0, 0.2).unwrap(), 0.0);
    let (m, v) = kernel_mean_variance(&KernelSpec::new(KernelFamily::CoMPoisson), 2, 1.0).unwrap();
    assert!((m - 2.0).abs() < 1e-10 && (v - 2.0).abs() < 1e-8);
}

// Reference values from a 40-digit evaluation of the same series.
#[test]
fn cmp_extended_precision_references() {
    assert!((cmp_pmf(5, 0.1, 5).unwrap() - 0.538_840_679_052_362_8).abs() < 1e-10);
    assert!((cmp_variance(10, 0.1).unwrap() - 1.045_799_213_283_175_7).abs() < 1e-8);
    let d = cmp_normalizer_with(4.0, 2.0, 200).unwrap().value();
    assert!((d - 11.301_921_95).abs() < 1e-7);
}

// Independent solve: plain bisection on ln(lambda) with directly summed terms.
fn oracle_cmp_pmf(x: u64, nu: f64, z: u64) -> f64 {
    let ln_fact: Vec<f64> = (0..300u64)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let terms = |s: f64| -> Vec<f64> {
        let logs: Vec<f64> = (0..300).map(|k| k as f64 * s - nu * ln_fact[k]).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        logs.iter().map(|l| (l - top).exp()).collect()
    };
    let mean = |s: f64| {
        let t = terms(s);
        let total: f64 = t.iter().sum();
        t.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / total
    };
    let (mut lo, mut hi) = (-50.0, nu * ((x + 5) as f64).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < x as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = terms(0.5 * (lo + hi));
    t[z as usize] / t.iter().sum::<f64>()
}

#[test]
fn cmp_matches_bisection_oracle() {
    for (x, h) in [(5u64, 0.1), (1, 0.5), (12, 0.25), (3, 2.0), (20, 0.05)] {
        for z in 0..=40 {
            let got = cmp_pmf(x, h, z).unwrap();
            let want = oracle_cmp_pmf(x, 1.0 / h, z);
            assert!(
                (got - want).abs() < 1e-10,
                "x={x} h={h} z={z}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn poisson_reduction_at_unit_bandwidth() {
    for x in 0..=20u64 {
        for z in 0..=80u64 {
            let d = (cmp_pmf(x, 1.0, z).unwrap() - poisson_pmf(x as f64, z)).abs();
            assert!(d < 1e-10, "x={x} z={z}: {d}");
        }
    }
}

#[test]
fn cmp_mean_identity() {
    let policy = NumericPolicy::default();
    for x in 0..=20u64 {
        for h in [1.0, 0.5, 0.2, 0.1, 0.05] {
            let mean: f64 = (0..=x * 10 + 100)
                .map(|z| z as f64 * cmp_pmf(x, h, z).unwrap())
                .sum();
            assert!(
                (mean - x as f64).abs() <= policy.eps_solve,
                "x={x} h={h}: {mean}"
            );
        }
    }
}

#[test]
fn cmp_variance_asymptote_bound() {
    let policy = NumericPolicy::default();
    for x in [5u64, 10, 20] {
        for h in [0.1, 0.05, 0.02] {
            let lambda_h = (h * solve_lambda(x, 1.0 / h, &policy).unwrap().log_lambda).exp();
            let gap = (cmp_variance(x, h).unwrap() - cmp_variance_asymptote(x, h).unwrap()).abs();
            assert!(gap <= 2.0 / lambda_h, "x={x} h={h}: {gap}");
            assert_relative_eq!(
                cmp_variance_asymptote(x, h).unwrap(),
                h * lambda_h,
                max_relative = 1e-12
            );
        }
    }
}

#[test]
fn cmp_underdispersed_below_unit_bandwidth() {
    for x in 1..=20u64 {
        for h in [0.9, 0.5, 0.1, 0.02] {
            let v = cmp_variance(x, h).unwrap();
            assert!(v > 0.0 && v < x as f64, "x={x} h={h}: {v}");
        }
    }
}

#[test]
fn variance_is_lambda_times_mean_derivative() {
    let policy = NumericPolicy::default();
    for (x, h) in [(10u64, 0.1), (3, 0.5), (7, 1.0), (15, 0.2), (2, 2.0)] {
        let p = solve_lambda(x, 1.0 / h, &policy).unwrap();
        let step = 1e-5f64;
        // lambda (1 +- step) in log space.
        let up = cmp_moments(p.log_lambda + (1.0 + step).ln(), p.nu, p.truncation_z_max).unwrap();
        let down = cmp_moments(p.log_lambda + (1.0 - step).ln(), p.nu, p.truncation_z_max).unwrap();
        let fd = (up.mean - down.mean) / (2.0 * step);
        let var = cmp_variance(x, h).unwrap();
        assert_relative_eq!(var, fd, max_relative = 1e-6);
    }
}

#[test]
fn log_normalizer_expansion() {
    assert_eq!(log_normalizer_asymptotic(3.0, 1.0).unwrap(), 3.0);
    let rel = |lambda: f64| {
        let exact = cmp_normalizer(lambda, 2.0).unwrap().log_value;
        (log_normalizer_asymptotic(lambda, 2.0).unwrap() - exact).abs() / exact.abs()
    };
    let errs: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|&l| rel(l)).collect();
    assert!(errs[0] < 1e-3);
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn memo_does_not_change_results() {
    let policy = NumericPolicy::default();
    let cached = solve_lambda(9, 4.0, &policy).unwrap();
    let again = solve_lambda(9, 4.0, &policy).unwrap();
    let fresh = disckern::cmp::solve_lambda_uncached(9, 4.0, &policy).unwrap();
    assert_eq!(cached, again);
    assert_eq!(cached, fresh);
}

#[test]
fn probe_dirac_is_zero() {
    let r = assumption_probe(
        &KernelSpec::new(KernelFamily::Dirac),
        0..=20,
        &[0.5, 0.1, 0.01],
    )
    .unwrap();
    assert_eq!(r.sup_mean_dev, vec![0.0; 3]);
    assert_eq!(r.sup_var, vec![0.0; 3]);
    assert_eq!(r.delta_estimate, 0.0);
}

#[test]
fn probe_binomial_is_first_order() {
    let spec = KernelSpec::new(KernelFamily::Binomial);
    for m in [5u64, 20, 50] {
        let r = assumption_probe(&spec, 0..=m, &[0.5, 0.1, 0.01]).unwrap();
        let limit = m as f64 / (m as f64 + 1.0);
        assert!(
            (r.delta_estimate - limit).abs() < 1e-6,
            "M={m}: {}",
            r.delta_estimate
        );
        assert!(r.delta_estimate < 1.0);
    }
}

#[test]
fn probe_cmp_is_second_order() {
    let spec = KernelSpec::new(KernelFamily::CoMPoisson);
    let r = assumption_probe(&spec, 0..=10, &[0.2, 0.1, 0.05]).unwrap();
    assert!(r.sup_mean_dev.iter().all(|&d| d <= spec.policy.eps_solve));
    assert!(r.sup_var.windows(2).all(|w| w[1] < w[0]));
    let slope = r.rate_exponents.var.unwrap();
    assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
    assert!((0.0..1.0).contains(&r.delta_estimate));
}
