use disckern::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{oracle_cv, oracle_mass};

const FAMILIES: [KernelFamily; 3] = [
    KernelFamily::Dirac,
    KernelFamily::Binomial,
    KernelFamily::CoMPoisson,
];

fn bandwidth_for(family: KernelFamily, unit: f64) -> f64 {
    match family {
        KernelFamily::Binomial => 0.01 + 0.98 * unit,
        _ => 0.02 + 2.0 * unit,
    }
}

fn counts() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..40, 1..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_times_constant_is_raw(values in counts(), f in 0usize..3, u in 0.0f64..1.0) {
        let family = FAMILIES[f];
        let h = bandwidth_for(family, u);
        let spec = KernelSpec::new(family);
        let sample = CountSample::new(values).unwrap();
        let est = normalized_estimate(&sample, &spec, h).unwrap();
        let c = est.normalizer;
        for ((x, raw), (y, norm)) in est.raw.iter().zip(est.normalized.iter()) {
            prop_assert_eq!(x, y);
            prop_assert_eq!(norm.to_bits(), (raw / c).to_bits());
            prop_assert!((norm * c - raw).abs() <= raw * f64::EPSILON);
        }
        let total = est.normalized.total();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirac_reduces_to_frequencies(values in counts(), h in 0.01f64..5.0) {
        let sample = CountSample::new(values).unwrap();
        let est = normalized_estimate(&sample, &KernelSpec::new(KernelFamily::Dirac), h).unwrap();
        prop_assert_eq!(est.normalizer, 1.0);
        let naive = naive_estimate(&sample);
        for x in 0..=sample.max() {
            prop_assert_eq!(est.normalized.get(x), naive.get(x));
        }
        prop_assert_eq!(ise_empirical(&est.normalized, &naive), 0.0);
    }

    #[test]
    fn enlarging_support_is_monotone(values in counts(), f in 1usize..3, u in 0.0f64..1.0, extra in 1u64..40) {
        let family = FAMILIES[f];
        let h = bandwidth_for(family, u);
        let spec = KernelSpec::new(family);
        let sample = CountSample::new(values).unwrap();
        let base = eval_support(&sample, &spec, h, spec.policy.eps_tail).unwrap();
        let wide = base.extended_to(base.max() + extra);
        let c0 = normalized_estimate_on(&sample, &spec, h, &base).unwrap().normalizer;
        let c1 = normalized_estimate_on(&sample, &spec, h, &wide).unwrap().normalizer;
        prop_assert!(c1 >= c0);
        prop_assert!(c1 - c0 <= base.tail_bound + 1e-15, "{} vs bound {}", c1 - c0, base.tail_bound);
    }

    #[test]
    fn selection_ignores_orderings(values in prop::collection::vec(0u64..30, 2..15), f in 0usize..3, seed in any::<u64>()) {
        let family = FAMILIES[f];
        let spec = KernelSpec::new(family);
        let grid = vec![0.05, 0.2, 0.5, 0.9, 1.7];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled_grid = grid.clone();
        shuffled_grid.shuffle(&mut rng);
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut rng);
        let a = select_bandwidth(&CountSample::new(values).unwrap(), &spec, &grid).unwrap();
        let b = select_bandwidth(&CountSample::new(shuffled).unwrap(), &spec, &shuffled_grid).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn cv_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..50 {
        let n = rng.random_range(2..=20);
        let top = rng.random_range(1..=30u64);
        let sample: Vec<u64> = (0..n).map(|_| rng.random_range(0..=top)).collect();
        let s = CountSample::new(sample.clone()).unwrap();
        for family in FAMILIES {
            let h = bandwidth_for(family, rng.random::<f64>());
            let spec = KernelSpec::new(family);
            let support = eval_support(&s, &spec, h, spec.policy.eps_tail).unwrap();
            let want = oracle_cv(family, &sample, h, &support.points);
            let got = cv_score(&s, &spec, h).unwrap();
            assert!(
                (got - want).abs() < 1e-12,
                "trial {trial} {family} h={h}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn cv_hand_cases() {
    let dirac = KernelSpec::new(KernelFamily::Dirac);
    let v = cv_score(&CountSample::new(vec![0, 0, 1]).unwrap(), &dirac, 0.3).unwrap();
    assert!((v + 1.0 / 9.0).abs() < 1e-15);

    let binom = KernelSpec::new(KernelFamily::Binomial);
    let s = CountSample::new(vec![0, 1, 2, 3]).unwrap();
    let support = eval_support(&s, &binom, 0.5, 1e-8).unwrap();
    let want = oracle_cv(KernelFamily::Binomial, &[0, 1, 2, 3], 0.5, &support.points);
    assert!((cv_score(&s, &binom, 0.5).unwrap() - want).abs() < 1e-12);

    for family in FAMILIES {
        let spec = KernelSpec::new(family);
        let s = CountSample::new(vec![4, 4]).unwrap();
        let support = eval_support(&s, &spec, 0.3, 1e-8).unwrap();
        let want = oracle_cv(family, &[4, 4], 0.3, &support.points);
        assert!((cv_score(&s, &spec, 0.3).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn selection_is_the_argmin_of_independent_scores() {
    let s = CountSample::new(vec![2, 5, 5, 7, 1, 0, 3, 9]).unwrap();
    for family in [KernelFamily::Binomial, KernelFamily::CoMPoisson] {
        let spec = KernelSpec::new(family);
        let grid = [0.1, 0.2, 0.4];
        let scores: Vec<f64> = grid
            .iter()
            .map(|&h| cv_score(&s, &spec, h).unwrap())
            .collect();
        let best = (0..3)
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        let r = select_bandwidth(&s, &spec, &grid).unwrap();
        assert_eq!(r.h_cv, grid[best]);
        assert_eq!(r.score_at_h, scores[best]);
    }
}

#[test]
fn loo_uses_raw_kernel_average() {
    let s = CountSample::new(vec![3, 1, 4, 1, 5]).unwrap();
    for family in FAMILIES {
        let spec = KernelSpec::new(family);
        for i in 0..5 {
            let xi = s.values()[i];
            let want: f64 = s
                .values()
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != i)
                .map(|(_, &xl)| oracle_mass(family, xi, 0.4, xl))
                .sum::<f64>()
                / 4.0;
            assert!((loo_estimate(&s, &spec, 0.4, i).unwrap() - want).abs() < 1e-14);
        }
    }
}

#[test]
fn naive_and_ise_hand_cases() {
    let f0 = naive_estimate(&CountSample::new(vec![2, 2, 5]).unwrap());
    assert_eq!(
        f0.iter().collect::<Vec<_>>(),
        vec![(2, 2.0 / 3.0), (5, 1.0 / 3.0)]
    );
    let one = Pmf::from_pairs([(0, 1.0)]).unwrap();
    let other = Pmf::from_pairs([(1, 1.0)]).unwrap();
    assert_eq!(ise_empirical(&one, &other), 2.0);
    let a = Pmf::from_pairs([(0, 0.6), (1, 0.4)]).unwrap();
    let b = Pmf::from_pairs([(0, 0.5), (1, 0.5)]).unwrap();
    assert!((ise_empirical(&a, &b) - 0.02).abs() < 1e-15);
}

#[test]
fn single_observation_is_allowed_for_estimation() {
    let s = CountSample::new(vec![7]).unwrap();
    for family in FAMILIES {
        let est = normalized_estimate(&s, &KernelSpec::new(family), 0.3).unwrap();
        assert!((est.normalized.total() - 1.0).abs() < 1e-12);
    }
}
