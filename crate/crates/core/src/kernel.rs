//! Discrete associated kernels and probes of their small-bandwidth behaviour.
//!
//! A discrete associated kernel `K_{x,h}` is a pmf on a count support `S_x`
//! containing the target `x`, whose mean tends to `x` and whose variance tends
//! to some `delta` in `[0, 1)` as `h -> 0`. Kernels with `delta = 0` are called
//! second-order, the others first-order.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cmp::{solve_lambda, CmpParams};
use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, neville, ols_slope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "dirac")]
    Dirac,
    #[serde(rename = "binomial")]
    Binomial,
    #[serde(rename = "cmp")]
    CoMPoisson,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Dirac => "dirac",
            KernelFamily::Binomial => "binomial",
            KernelFamily::CoMPoisson => "cmp",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirac" | "naive" => Ok(KernelFamily::Dirac),
            "binomial" | "b" => Ok(KernelFamily::Binomial),
            "cmp" | "compoisson" | "com-poisson" => Ok(KernelFamily::CoMPoisson),
            other => Err(Error::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Tolerances for truncated sums and the CoM-Poisson rate solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    /// Largest mass allowed outside a truncated support.
    pub eps_tail: f64,
    /// Allowed deviation of the CoM-Poisson kernel mean from its target.
    pub eps_solve: f64,
    /// Hard cap on any truncated support.
    pub max_support: u64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            eps_tail: 1e-8,
            eps_solve: 1e-10,
            max_support: 1_000_000,
        }
    }
}

/// Kernel family plus the numeric policy used to evaluate it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub policy: NumericPolicy,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        Self {
            family,
            policy: NumericPolicy::default(),
        }
    }

    pub fn with_policy(family: KernelFamily, policy: NumericPolicy) -> Result<Self> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(policy.eps_tail >= 0.0 && policy.eps_tail.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eps_tail must be a finite non-negative real, got {}",
                policy.eps_tail
            )));
        }
        if !positive(policy.eps_solve) {
            return Err(Error::InvalidParameter(format!(
                "eps_solve must be a positive finite real, got {}",
                policy.eps_solve
            )));
        }
        if family == KernelFamily::CoMPoisson && !positive(policy.eps_tail) {
            return Err(Error::InvalidParameter(
                "the CoM-Poisson kernel needs a strictly positive eps_tail".into(),
            ));
        }
        if policy.max_support == 0 {
            return Err(Error::InvalidParameter(
                "max_support must be positive".into(),
            ));
        }
        Ok(Self { family, policy })
    }

    /// Whether `h` is a valid bandwidth for this family.
    pub fn admits(&self, h: f64) -> bool {
        match self.family {
            KernelFamily::Binomial => h > 0.0 && h < 1.0,
            KernelFamily::Dirac | KernelFamily::CoMPoisson => h > 0.0 && h.is_finite(),
        }
    }

    pub fn check_bandwidth(&self, h: f64) -> Result<()> {
        if self.admits(h) {
            Ok(())
        } else {
            Err(Error::InvalidBandwidth {
                family: self.family.name(),
                h,
            })
        }
    }

    /// Fixes target and bandwidth, solving whatever the family needs once.
    pub fn prepare(&self, x: u64, h: f64) -> Result<PreparedKernel> {
        self.check_bandwidth(h)?;
        Ok(match self.family {
            KernelFamily::Dirac => PreparedKernel::Dirac { x },
            KernelFamily::Binomial => {
                let denom = x as f64 + 1.0;
                PreparedKernel::Binomial {
                    trials: x + 1,
                    ln_p: ((x as f64 + h) / denom).ln(),
                    ln_q: ((1.0 - h) / denom).ln(),
                }
            }
            KernelFamily::CoMPoisson => {
                PreparedKernel::CoMPoisson(solve_lambda(x, 1.0 / h, &self.policy)?)
            }
        })
    }

    /// `K_{x,h}(z)`.
    pub fn pmf(&self, x: u64, h: f64, z: u64) -> Result<f64> {
        Ok(self.prepare(x, h)?.mass(z))
    }

    /// The kernel pmf on its (possibly truncated) support.
    pub fn eval(&self, x: u64, h: f64) -> Result<KernelEval> {
        let kernel = self.prepare(x, h)?;
        let (support, tail_bound): (Vec<u64>, f64) = match &kernel {
            PreparedKernel::Dirac { x } => (vec![*x], 0.0),
            PreparedKernel::Binomial { trials, .. } => ((0..=*trials).collect(), 0.0),
            PreparedKernel::CoMPoisson(p) => {
                if p.tail_bound > self.policy.eps_tail {
                    return Err(Error::Truncation {
                        z_max: p.truncation_z_max,
                    });
                }
                ((0..p.terms_used).collect(), p.tail_bound)
            }
        };
        let probabilities = support.iter().map(|&z| kernel.mass(z)).collect();
        Ok(KernelEval {
            target: x,
            bandwidth: h,
            support,
            probabilities,
            tail_bound,
        })
    }
}

/// A kernel with target and bandwidth fixed, ready for repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreparedKernel {
    Dirac { x: u64 },
    Binomial { trials: u64, ln_p: f64, ln_q: f64 },
    CoMPoisson(CmpParams),
}

impl PreparedKernel {
    /// Kernel mass at `z`; zero off the support.
    pub fn mass(&self, z: u64) -> f64 {
        match *self {
            PreparedKernel::Dirac { x } => {
                if z == x {
                    1.0
                } else {
                    0.0
                }
            }
            PreparedKernel::Binomial { trials, ln_p, ln_q } => {
                if z > trials {
                    return 0.0;
                }
                let ln_choose = ln_factorial(trials) - ln_factorial(z) - ln_factorial(trials - z);
                (ln_choose + z as f64 * ln_p + (trials - z) as f64 * ln_q).exp()
            }
            PreparedKernel::CoMPoisson(ref p) => p.pmf(z),
        }
    }
}

/// Naive kernel: the indicator of `z = x`.
pub fn dirac_kernel_pmf(x: u64, z: u64) -> f64 {
    PreparedKernel::Dirac { x }.mass(z)
}

/// Binomial kernel: the `B(x + 1, (x + h)/(x + 1))` mass at `z`, for `h` in `(0, 1)`.
pub fn binomial_kernel_pmf(x: u64, h: f64, z: i64) -> Result<f64> {
    let kernel = KernelSpec::new(KernelFamily::Binomial).prepare(x, h)?;
    Ok(if z < 0 { 0.0 } else { kernel.mass(z as u64) })
}

/// A kernel evaluated on its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEval {
    pub target: u64,
    pub bandwidth: f64,
    pub support: Vec<u64>,
    pub probabilities: Vec<f64>,
    /// Mass excluded by truncating the support.
    pub tail_bound: f64,
}

impl KernelEval {
    pub fn total_mass(&self) -> f64 {
        crate::numeric::compensated_sum(self.probabilities.iter().copied())
    }

    /// Mean and variance by direct summation over the support.
    pub fn moments(&self) -> (f64, f64) {
        let total = self.total_mass();
        let mean = crate::numeric::compensated_sum(
            self.support
                .iter()
                .zip(&self.probabilities)
                .map(|(&z, &p)| z as f64 * p),
        ) / total;
        let var =
            crate::numeric::compensated_sum(self.support.iter().zip(&self.probabilities).map(
                |(&z, &p)| {
                    let d = z as f64 - mean;
                    d * d * p
                },
            )) / total;
        (mean, var)
    }
}

/// Mean and variance of `Z_{x,h}` by summation over the kernel support.
pub fn kernel_mean_variance(spec: &KernelSpec, x: u64, h: f64) -> Result<(f64, f64)> {
    Ok(spec.eval(x, h)?.moments())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExponents {
    pub mean_dev: Option<f64>,
    pub var: Option<f64>,
}

/// Small-bandwidth behaviour of a kernel over a finite range of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub family: KernelFamily,
    pub targets: (u64, u64),
    pub h_values: Vec<f64>,
    /// `sup_x |E Z_{x,h} - x|` for each `h`.
    pub sup_mean_dev: Vec<f64>,
    /// `sup_x Var Z_{x,h}` for each `h`.
    pub sup_var: Vec<f64>,
    /// `per_target_var[i][j]`: variance at `h_values[i]` for the `j`-th target.
    pub per_target_var: Vec<Vec<f64>>,
    pub per_target_mean_dev: Vec<Vec<f64>>,
    /// Limit of `sup_var` as `h -> 0`, extrapolated.
    pub delta_estimate: f64,
    pub rate_exponents: RateExponents,
}

/// Probe the kernel's mean and variance as `h` decreases, uniformly over
/// `targets`.
///
/// `delta_estimate` is the value at `h = 0` of the polynomial through the
/// three smallest `(h, sup_var)` pairs, clamped at zero. Rate exponents are
/// least-squares slopes of `ln sup` against `ln h`, skipping exact zeros.
pub fn assumption_probe(
    spec: &KernelSpec,
    targets: RangeInclusive<u64>,
    h_values: &[f64],
) -> Result<ProbeReport> {
    if h_values.is_empty() {
        return Err(Error::InvalidParameter("no bandwidths to probe".into()));
    }
    if h_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "probe bandwidths must be strictly decreasing".into(),
        ));
    }
    if targets.is_empty() {
        return Err(Error::InvalidParameter("empty target range".into()));
    }
    let mut per_target_var = Vec::with_capacity(h_values.len());
    let mut per_target_mean_dev = Vec::with_capacity(h_values.len());
    for &h in h_values {
        let mut vars = Vec::new();
        let mut devs = Vec::new();
        for x in targets.clone() {
            let (mean, var) = kernel_mean_variance(spec, x, h)?;
            devs.push((mean - x as f64).abs());
            vars.push(var);
        }
        per_target_var.push(vars);
        per_target_mean_dev.push(devs);
    }
    let sup = |rows: &Vec<Vec<f64>>| -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .collect()
    };
    let sup_var = sup(&per_target_var);
    let sup_mean_dev = sup(&per_target_mean_dev);

    let k = h_values.len().min(3);
    let tail = h_values.len() - k;
    let delta_estimate = neville(&h_values[tail..], &sup_var[tail..], 0.0).max(0.0);

    let slope = |ys: &[f64]| {
        let (lx, ly): (Vec<f64>, Vec<f64>) = h_values
            .iter()
            .zip(ys)
            .filter(|(_, &y)| y > 0.0)
            .map(|(&h, &y)| (h.ln(), y.ln()))
            .unzip();
        ols_slope(&lx, &ly)
    };

    Ok(ProbeReport {
        family: spec.family,
        targets: (*targets.start(), *targets.end()),
        h_values: h_values.to_vec(),
        rate_exponents: RateExponents {
            mean_dev: slope(&sup_mean_dev),
            var: slope(&sup_var),
        },
        sup_mean_dev,
        sup_var,
        per_target_var,
        per_target_mean_dev,
        delta_estimate,
    })
}
