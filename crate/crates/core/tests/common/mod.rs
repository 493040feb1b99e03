//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use disckern::{cmp_pmf, KernelFamily};

// Binomial kernel written out from its definition.
pub fn binomial_mass(x: u64, h: f64, z: u64) -> f64 {
    let trials = x + 1;
    if z > trials {
        return 0.0;
    }
    let p = (x as f64 + h) / trials as f64;
    let choose = (1..=z).fold(1.0, |c, k| c * (trials - k + 1) as f64 / k as f64);
    choose * p.powi(z as i32) * (1.0 - p).powi((trials - z) as i32)
}

pub fn oracle_mass(family: KernelFamily, x: u64, h: f64, z: u64) -> f64 {
    match family {
        KernelFamily::Dirac => (x == z) as u8 as f64,
        KernelFamily::Binomial => binomial_mass(x, h, z),
        KernelFamily::CoMPoisson => cmp_pmf(x, h, z).unwrap(),
    }
}

// The two displayed sums, term by term.
pub fn oracle_cv(family: KernelFamily, sample: &[u64], h: f64, support: &[u64]) -> f64 {
    let n = sample.len() as f64;
    let raw: Vec<f64> = support
        .iter()
        .map(|&x| {
            sample
                .iter()
                .map(|&xi| oracle_mass(family, x, h, xi))
                .sum::<f64>()
                / n
        })
        .collect();
    let c: f64 = raw.iter().sum();
    let quadratic: f64 = raw.iter().map(|r| (r / c) * (r / c)).sum();
    let mut loo = 0.0;
    for (i, &xi) in sample.iter().enumerate() {
        let mut s = 0.0;
        for (l, &xl) in sample.iter().enumerate() {
            if l != i {
                s += oracle_mass(family, xi, h, xl);
            }
        }
        loo += s / (n - 1.0);
    }
    quadratic - 2.0 / n * loo
}
