//! Raw and normalized kernel estimators, the naive estimator and the
//! empirical ISE against it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec, PreparedKernel};
use crate::numeric::compensated_sum;
use crate::pmf::{CountSample, Pmf};

/// The range `{0, ..., M}` on which estimates are evaluated, with a bound on
/// the raw-estimator mass beyond `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSupport {
    pub points: Vec<u64>,
    pub tail_bound: f64,
}

impl EvalSupport {
    pub fn max(&self) -> u64 {
        self.points.last().copied().unwrap_or(0)
    }

    /// `{0, ..., max(M, upto)}` with the same tail bound.
    pub fn extended_to(&self, upto: u64) -> EvalSupport {
        let top = self.max().max(upto);
        EvalSupport {
            points: (0..=top).collect(),
            tail_bound: self.tail_bound,
        }
    }
}

/// Output of [`normalized_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    /// `f~_n` on the evaluation support.
    pub raw: Pmf,
    /// `C_n`, the total mass of `raw`.
    pub normalizer: f64,
    /// `f^_n = f~_n / C_n`.
    pub normalized: Pmf,
    pub bandwidth: f64,
    pub eval_support: Vec<u64>,
    pub support_tail_bound: f64,
}

fn column_sum(kernel: &PreparedKernel, counts: &[(u64, usize)]) -> f64 {
    counts.iter().map(|&(v, c)| c as f64 * kernel.mass(v)).sum()
}

/// Smallest `{0, ..., M}` with `M > max(sample)` for which the raw estimator
/// mass beyond `M` is certified below `eps`.
///
/// Past the sample maximum the column masses `f~_n(x)` are scanned until they
/// decrease with non-increasing ratios `r`; the tail then sits under the
/// geometric bound `f~_n(M) r / (1 - r)`. The Dirac kernel puts no mass past
/// the sample maximum.
pub fn eval_support(
    sample: &CountSample,
    spec: &KernelSpec,
    h: f64,
    eps: f64,
) -> Result<EvalSupport> {
    spec.check_bandwidth(h)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "support tolerance must be positive, got {eps}"
        )));
    }
    let max = sample.max();
    if spec.family == KernelFamily::Dirac {
        return Ok(EvalSupport {
            points: (0..=max).collect(),
            tail_bound: 0.0,
        });
    }
    let counts = sample.counts();
    let n = sample.n() as f64;
    let limit = spec.policy.max_support.max(max + 1);
    let mut prev = column_sum(&spec.prepare(max, h)?, &counts) / n;
    let mut prev_ratio = f64::INFINITY;
    for x in max + 1..=limit {
        let g = column_sum(&spec.prepare(x, h)?, &counts) / n;
        if g == 0.0 {
            return Ok(EvalSupport {
                points: (0..=x).collect(),
                tail_bound: 0.0,
            });
        }
        let ratio = g / prev;
        if ratio < 1.0 && ratio <= prev_ratio {
            let bound = g * ratio / (1.0 - ratio);
            if bound < eps {
                return Ok(EvalSupport {
                    points: (0..=x).collect(),
                    tail_bound: bound,
                });
            }
        }
        prev = g;
        prev_ratio = ratio;
    }
    Err(Error::SupportCertification {
        eps,
        max_support: limit,
    })
}

/// `n f~_n(x) = sum_i K_{x,h}(X_i)` for each support point, summed over
/// distinct observed values in increasing order.
fn kernel_sums(
    sample: &CountSample,
    spec: &KernelSpec,
    h: f64,
    support: &[u64],
) -> Result<Vec<f64>> {
    let counts = sample.counts();
    support
        .iter()
        .map(|&x| Ok(column_sum(&spec.prepare(x, h)?, &counts)))
        .collect()
}

fn check_support(support: &[u64]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::InvalidParameter(
            "evaluation support is empty".into(),
        ));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "evaluation support must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `f~_n(x) = (1/n) sum_i K_{x,h}(X_i)` on `support`.
pub fn raw_estimate(
    sample: &CountSample,
    spec: &KernelSpec,
    h: f64,
    support: &[u64],
) -> Result<Pmf> {
    check_support(support)?;
    let n = sample.n() as f64;
    let sums = kernel_sums(sample, spec, h, support)?;
    Pmf::new(support.to_vec(), sums.iter().map(|s| s / n).collect(), 0.0)
}

/// `C_n = sum_x f~_n(x)`.
pub fn normalizing_constant(raw: &Pmf) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("raw estimate is empty".into()));
    }
    let c = raw.total();
    if c > 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(Error::DegenerateNormalizer(c))
    }
}

/// Normalized estimate on the certified support for `spec.policy.eps_tail`.
pub fn normalized_estimate(
    sample: &CountSample,
    spec: &KernelSpec,
    h: f64,
) -> Result<EstimateResult> {
    let support = eval_support(sample, spec, h, spec.policy.eps_tail)?;
    normalized_estimate_on(sample, spec, h, &support)
}

/// Normalized estimate on a caller-chosen support.
///
/// `C_n` is accumulated from the un-scaled column sums `n f~_n(x)` and then
/// divided by `n`, so that it is exactly 1 for the Dirac kernel.
pub fn normalized_estimate_on(
    sample: &CountSample,
    spec: &KernelSpec,
    h: f64,
    support: &EvalSupport,
) -> Result<EstimateResult> {
    check_support(&support.points)?;
    let n = sample.n() as f64;
    let sums = kernel_sums(sample, spec, h, &support.points)?;
    let normalizer = compensated_sum(sums.iter().copied()) / n;
    if !(normalizer > 0.0 && normalizer.is_finite()) {
        return Err(Error::DegenerateNormalizer(normalizer));
    }
    let raw_probs: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let normalized_probs: Vec<f64> = raw_probs.iter().map(|r| r / normalizer).collect();
    Ok(EstimateResult {
        raw: Pmf::new(support.points.clone(), raw_probs, support.tail_bound)?,
        normalized: Pmf::new(
            support.points.clone(),
            normalized_probs,
            support.tail_bound / normalizer,
        )?,
        normalizer,
        bandwidth: h,
        eval_support: support.points.clone(),
        support_tail_bound: support.tail_bound,
    })
}

/// Relative frequencies of the observed values.
pub fn naive_estimate(sample: &CountSample) -> Pmf {
    let n = sample.n() as f64;
    let (support, probs) = sample
        .counts()
        .into_iter()
        .map(|(v, c)| (v, c as f64 / n))
        .unzip();
    Pmf {
        support,
        probs,
        tail_bound: 0.0,
    }
}

/// `sum_x (fhat(x) - f0(x))^2` over the union of both supports.
pub fn ise_empirical(fhat: &Pmf, f0: &Pmf) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut terms = Vec::with_capacity(fhat.len() + f0.len());
    while i < fhat.len() || j < f0.len() {
        let a = fhat.support.get(i).copied();
        let b = f0.support.get(j).copied();
        let d = match (a, b) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
                fhat.probs[i - 1] - f0.probs[j - 1]
            }
            (Some(x), Some(y)) if x < y => {
                i += 1;
                fhat.probs[i - 1]
            }
            (Some(_), None) => {
                i += 1;
                fhat.probs[i - 1]
            }
            _ => {
                j += 1;
                f0.probs[j - 1]
            }
        };
        terms.push(d * d);
    }
    compensated_sum(terms)
}
