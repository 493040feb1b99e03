//! Count-data scenarios and the Monte Carlo harness for `C_n`, the ISE and
//! the limiting distribution of `sqrt(n) (f^_n(x) - f(x))`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandwidth::{default_grid, select_bandwidth};
use crate::error::{Error, Result};
use crate::estimator::{eval_support, normalized_estimate_on, EstimateResult};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::numeric::{ks_statistic, ln_factorial, mean_sd};
use crate::pmf::CountSample;

/// Mass beyond the scenario quantile that the ISE sum may neglect.
const ISE_QUANTILE_TAIL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
    C,
    D,
    Custom,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioId::A => "A",
            ScenarioId::B => "B",
            ScenarioId::C => "C",
            ScenarioId::D => "D",
            ScenarioId::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonComponent {
    pub weight: f64,
    pub rate: f64,
}

/// A finite Poisson mixture, optionally zero-inflated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub components: Vec<PoissonComponent>,
    pub zero_inflation: f64,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::a()),
            "B" => Ok(Scenario::b()),
            "C" => Ok(Scenario::c()),
            "D" => Ok(Scenario::d()),
            other => Err(Error::InvalidParameter(format!(
                "unknown scenario `{other}`"
            ))),
        }
    }
}

impl Scenario {
    /// Poisson(8).
    pub fn a() -> Self {
        Self::builtin(ScenarioId::A, &[(1.0, 8.0)], 0.0)
    }

    /// 0.7 delta_0 + 0.3 Poisson(10).
    pub fn b() -> Self {
        Self::builtin(ScenarioId::B, &[(0.3, 10.0)], 0.7)
    }

    /// 0.4 Poisson(0.5) + 0.6 Poisson(8).
    pub fn c() -> Self {
        Self::builtin(ScenarioId::C, &[(0.4, 0.5), (0.6, 8.0)], 0.0)
    }

    /// 0.6 Poisson(10) + 0.2 Poisson(22) + 0.2 Poisson(50).
    pub fn d() -> Self {
        Self::builtin(ScenarioId::D, &[(0.6, 10.0), (0.2, 22.0), (0.2, 50.0)], 0.0)
    }

    fn builtin(id: ScenarioId, parts: &[(f64, f64)], zero_inflation: f64) -> Self {
        Self {
            id,
            components: parts
                .iter()
                .map(|&(weight, rate)| PoissonComponent { weight, rate })
                .collect(),
            zero_inflation,
        }
    }

    /// A user-defined mixture; weights (with the zero-inflation weight) must
    /// sum to one.
    pub fn custom(components: Vec<PoissonComponent>, zero_inflation: f64) -> Result<Self> {
        let s = Self {
            id: ScenarioId::Custom,
            components,
            zero_inflation,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |w: f64| (0.0..=1.0).contains(&w);
        if !in_unit(self.zero_inflation) {
            return Err(Error::InvalidParameter(
                "zero-inflation weight outside [0, 1]".into(),
            ));
        }
        for c in &self.components {
            if !in_unit(c.weight) || !(c.rate > 0.0 && c.rate.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "invalid mixture component (weight {}, rate {})",
                    c.weight, c.rate
                )));
            }
        }
        let total = self.zero_inflation + self.components.iter().map(|c| c.weight).sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Smallest `q` whose upper tail mass `P(X > q)` is at most `eps`.
    pub fn upper_quantile(&self, eps: f64) -> u64 {
        let mut cdf = 0.0;
        let mut x = 0;
        loop {
            cdf += scenario_pmf(self, x);
            if 1.0 - cdf <= eps || x > 100_000 {
                return x;
            }
            x += 1;
        }
    }
}

/// Exact mixture pmf with log-space Poisson terms.
pub fn scenario_pmf(scenario: &Scenario, x: u64) -> f64 {
    let poisson = |rate: f64| (x as f64 * rate.ln() - rate - ln_factorial(x)).exp();
    let mixture: f64 = scenario
        .components
        .iter()
        .map(|c| c.weight * poisson(c.rate))
        .sum();
    if x == 0 {
        scenario.zero_inflation + mixture
    } else {
        mixture
    }
}

fn poisson_by_inversion<R: Rng>(rng: &mut R, rate: f64) -> u64 {
    let u: f64 = rng.random();
    let mut p = (-rate).exp();
    let mut cdf = p;
    let mut k = 0u64;
    // The cap only guards against u landing above the rounded total mass.
    let cap = (rate + 40.0 * rate.sqrt() + 100.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
    }
    k
}

/// `n` draws: a mixture component chosen by its weight, then Poisson by
/// sequential inversion. Fully determined by `seed`.
pub fn scenario_sample(scenario: &Scenario, n: usize, seed: u64) -> Result<CountSample> {
    scenario.validate()?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = scenario.zero_inflation;
            if u < acc {
                return 0;
            }
            let mut rate = scenario.components.last().map(|c| c.rate).unwrap_or(0.0);
            for c in &scenario.components {
                acc += c.weight;
                if u < acc {
                    rate = c.rate;
                    break;
                }
            }
            if rate > 0.0 {
                poisson_by_inversion(&mut rng, rate)
            } else {
                0
            }
        })
        .collect();
    CountSample::new(values)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` under `master`.
pub fn replication_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}

/// How each replication picks its bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum BandwidthRule {
    /// Cross-validation over a grid; an empty grid means the family default.
    Cv {
        grid: Vec<f64>,
    },
    Fixed {
        h: f64,
    },
    /// `h_n = 1 / (sqrt(n) ln n)`.
    SqrtNLogN,
}

impl BandwidthRule {
    pub fn sqrt_n_log_n(n: usize) -> f64 {
        let n = n as f64;
        1.0 / (n.sqrt() * n.ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub scenario: Scenario,
    pub kernel: KernelSpec,
    pub n: usize,
    pub n_sim: usize,
    pub bandwidth_rule: BandwidthRule,
    pub master_seed: u64,
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n == 0 || self.n_sim == 0 {
            return Err(Error::InvalidParameter(
                "n and n_sim must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub h: f64,
    pub c_n: f64,
    pub ise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: ScenarioId,
    pub kernel: KernelFamily,
    pub n: usize,
    pub n_sim: usize,
    pub master_seed: u64,
    pub bandwidth_rule: BandwidthRule,
    pub c_hat_mean: f64,
    pub c_hat_sd: f64,
    pub ise_mean: f64,
    pub ise_sd: f64,
    pub per_replication: Vec<ReplicationRecord>,
}

impl McReport {
    pub const CSV_HEADER: &'static str = "scenario,n,kernel,c_hat_mean,c_hat_sd,ise_mean,ise_sd";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{:?}",
            self.scenario,
            self.n,
            self.kernel,
            self.c_hat_mean,
            self.c_hat_sd,
            self.ise_mean,
            self.ise_sd
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn bandwidth_for(config: &McConfig, sample: &CountSample) -> Result<f64> {
    match &config.bandwidth_rule {
        BandwidthRule::Fixed { h } => Ok(*h),
        BandwidthRule::SqrtNLogN => {
            let h = BandwidthRule::sqrt_n_log_n(sample.n());
            if h.is_finite() && h > 0.0 {
                Ok(h)
            } else {
                Err(Error::InvalidParameter(format!(
                    "1/(sqrt(n) ln n) is undefined for n = {}",
                    sample.n()
                )))
            }
        }
        BandwidthRule::Cv { grid } => {
            let default;
            let grid = if grid.is_empty() {
                default = default_grid(config.kernel.family);
                &default
            } else {
                grid
            };
            Ok(select_bandwidth(sample, &config.kernel, grid)?.h_cv)
        }
    }
}

/// Estimate on the certified support, extended to the scenario's
/// `1 - 1e-10` quantile.
fn replicate_estimate(config: &McConfig, seed: u64, upto: u64) -> Result<(f64, EstimateResult)> {
    let sample = scenario_sample(&config.scenario, config.n, seed)?;
    let h = bandwidth_for(config, &sample)?;
    let support =
        eval_support(&sample, &config.kernel, h, config.kernel.policy.eps_tail)?.extended_to(upto);
    let est = normalized_estimate_on(&sample, &config.kernel, h, &support)?;
    Ok((h, est))
}

fn run_replications<T, F>(config: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..config.n_sim)
        .into_par_iter()
        .map(|t| {
            let seed = replication_seed(config.master_seed, t);
            f(t, seed).map_err(|e| Error::Replication {
                index: t,
                seed,
                source: Box::new(e),
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Monte Carlo estimates of `C_n` and the ISE of `f^_n`.
///
/// Replications run in parallel; aggregation follows replication order, so
/// the report does not depend on the number of worker threads.
pub fn monte_carlo(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let upto = config.scenario.upper_quantile(ISE_QUANTILE_TAIL);
    let records = run_replications(config, |index, seed| {
        let (h, est) = replicate_estimate(config, seed, upto)?;
        let ise = crate::numeric::compensated_sum(est.normalized.iter().map(|(x, p)| {
            let d = p - scenario_pmf(&config.scenario, x);
            d * d
        }));
        Ok(ReplicationRecord {
            index,
            seed,
            h,
            c_n: est.normalizer,
            ise,
        })
    })?;
    let c: Vec<f64> = records.iter().map(|r| r.c_n).collect();
    let ise: Vec<f64> = records.iter().map(|r| r.ise).collect();
    let (c_hat_mean, c_hat_sd) = mean_sd(&c);
    let (ise_mean, ise_sd) = mean_sd(&ise);
    Ok(McReport {
        scenario: config.scenario.id,
        kernel: config.kernel.family,
        n: config.n,
        n_sim: config.n_sim,
        master_seed: config.master_seed,
        bandwidth_rule: config.bandwidth_rule.clone(),
        c_hat_mean,
        c_hat_sd,
        ise_mean,
        ise_sd,
        per_replication: records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub scenario: ScenarioId,
    pub kernel: KernelFamily,
    pub n: usize,
    pub n_sim: usize,
    pub master_seed: u64,
    pub bandwidth: f64,
    pub target_x: u64,
    pub target_pmf: f64,
    /// `sqrt(n) (f^_n(x) - f(x))`, one per replication.
    pub deviations: Vec<f64>,
    pub sample_mean: f64,
    pub sample_sd: f64,
    /// `sqrt(f(x) (1 - f(x)))`.
    pub theoretical_sd: f64,
    /// Kolmogorov-Smirnov distance to `N(0, theoretical_sd^2)`.
    pub ks_statistic: f64,
}

#[derive(Serialize)]
struct NormalitySummary<'a> {
    scenario: ScenarioId,
    kernel: KernelFamily,
    n: usize,
    n_sim: usize,
    master_seed: u64,
    bandwidth: f64,
    target_x: u64,
    target_pmf: f64,
    sample_mean: f64,
    sample_sd: f64,
    theoretical_sd: f64,
    ks_statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    deviations: Option<&'a [f64]>,
}

impl NormalityReport {
    pub fn deviations_csv(&self) -> String {
        let mut out = String::from("deviation\n");
        for d in &self.deviations {
            let _ = writeln!(out, "{d:?}");
        }
        out
    }

    /// JSON summary; `with_deviations` also embeds the raw deviations.
    pub fn to_json(&self, with_deviations: bool) -> String {
        let summary = NormalitySummary {
            scenario: self.scenario,
            kernel: self.kernel,
            n: self.n,
            n_sim: self.n_sim,
            master_seed: self.master_seed,
            bandwidth: self.bandwidth,
            target_x: self.target_x,
            target_pmf: self.target_pmf,
            sample_mean: self.sample_mean,
            sample_sd: self.sample_sd,
            theoretical_sd: self.theoretical_sd,
            ks_statistic: self.ks_statistic,
            deviations: with_deviations.then_some(self.deviations.as_slice()),
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }
}

/// Replicated `sqrt(n) (f^_n(x) - f(x))` under a fixed or `1/(sqrt(n) ln n)`
/// bandwidth, compared with its centered normal limit of variance
/// `f(x) (1 - f(x))`.
pub fn normality_experiment(config: &McConfig, target_x: u64) -> Result<NormalityReport> {
    config.validate()?;
    let f = scenario_pmf(&config.scenario, target_x);
    if f <= 0.0 {
        return Err(Error::ZeroTargetMass(target_x));
    }
    if f >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "scenario is degenerate at x = {target_x}"
        )));
    }
    let h = match config.bandwidth_rule {
        BandwidthRule::Fixed { h } => h,
        BandwidthRule::SqrtNLogN => BandwidthRule::sqrt_n_log_n(config.n),
        BandwidthRule::Cv { .. } => {
            return Err(Error::InvalidParameter(
                "the normality experiment takes a fixed or 1/(sqrt(n) ln n) bandwidth".into(),
            ))
        }
    };
    config.kernel.check_bandwidth(h)?;
    let upto = config
        .scenario
        .upper_quantile(ISE_QUANTILE_TAIL)
        .max(target_x);
    let root_n = (config.n as f64).sqrt();
    let deviations = run_replications(config, |_, seed| {
        let (_, est) = replicate_estimate(config, seed, upto)?;
        Ok(root_n * (est.normalized.get(target_x) - f))
    })?;
    let (sample_mean, sample_sd) = mean_sd(&deviations);
    let theoretical_sd = (f * (1.0 - f)).sqrt();
    let normal =
        Normal::new(0.0, theoretical_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let ks = ks_statistic(&deviations, |v| normal.cdf(v));
    Ok(NormalityReport {
        scenario: config.scenario.id,
        kernel: config.kernel.family,
        n: config.n,
        n_sim: config.n_sim,
        master_seed: config.master_seed,
        bandwidth: h,
        target_x,
        target_pmf: f,
        deviations,
        sample_mean,
        sample_sd,
        theoretical_sd,
        ks_statistic: ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_hand_values() {
        // 8^6 e^-8 / 6!
        let direct = 8f64.powi(6) * (-8f64).exp() / 720.0;
        assert!((scenario_pmf(&Scenario::a(), 6) - direct).abs() < 1e-15);
        assert!((scenario_pmf(&Scenario::a(), 6) - 0.122138).abs() < 1e-6);
        let b0 = 0.7 + 0.3 * (-10f64).exp();
        assert!((scenario_pmf(&Scenario::b(), 0) - b0).abs() < 1e-15);
        assert!((b0 - 0.7000136).abs() < 1e-7);
    }

    #[test]
    fn scenarios_sum_to_one() {
        for s in [Scenario::a(), Scenario::b(), Scenario::c(), Scenario::d()] {
            let total: f64 = (0..=400).map(|x| scenario_pmf(&s, x)).sum();
            assert!((total - 1.0).abs() < 1e-12, "{:?}: {total}", s.id);
        }
    }

    #[test]
    fn custom_scenario_validation() {
        let ok = Scenario::custom(
            vec![PoissonComponent {
                weight: 0.5,
                rate: 2.0,
            }],
            0.5,
        );
        assert!(ok.is_ok());
        let bad = Scenario::custom(
            vec![PoissonComponent {
                weight: 0.5,
                rate: 2.0,
            }],
            0.2,
        );
        assert!(bad.is_err());
        let bad = Scenario::custom(
            vec![PoissonComponent {
                weight: 1.0,
                rate: 0.0,
            }],
            0.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = scenario_sample(&Scenario::d(), 50, 9).unwrap();
        let b = scenario_sample(&Scenario::d(), 50, 9).unwrap();
        let c = scenario_sample(&Scenario::d(), 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(scenario_sample(&Scenario::a(), 0, 1).is_err());
    }

    #[test]
    fn replication_seeds_differ() {
        let seeds: std::collections::HashSet<u64> =
            (0..1000).map(|t| replication_seed(42, t)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(replication_seed(1, 0), replication_seed(2, 0));
    }

    #[test]
    fn quantile_covers_mass() {
        let s = Scenario::d();
        let q = s.upper_quantile(1e-10);
        let beyond: f64 = (q + 1..400).map(|x| scenario_pmf(&s, x)).sum();
        assert!(beyond <= 1e-10);
        assert!(q > 50);
    }

    #[test]
    fn normality_refuses_zero_mass() {
        let scenario = Scenario::custom(
            vec![PoissonComponent {
                weight: 1.0,
                rate: 3.0,
            }],
            0.0,
        )
        .unwrap();
        let config = McConfig {
            scenario,
            kernel: KernelSpec::new(KernelFamily::Dirac),
            n: 10,
            n_sim: 2,
            bandwidth_rule: BandwidthRule::Fixed { h: 0.1 },
            master_seed: 1,
        };
        // Poisson(3) has mass everywhere; point 0 is fine.
        assert!(normality_experiment(&config, 0).is_ok());
        let cv = McConfig {
            bandwidth_rule: BandwidthRule::Cv { grid: vec![] },
            ..config
        };
        assert!(normality_experiment(&cv, 0).is_err());
    }
}
