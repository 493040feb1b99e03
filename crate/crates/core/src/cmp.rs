//! Mean-parametrized CoM-Poisson kernel.
//!
//! For a target `x` and dispersion `nu = 1/h` the kernel is
//!
//! ```text
//! K(z) = lambda^z / (z!)^nu / D(lambda, nu),   D(lambda, nu) = sum_z lambda^z / (z!)^nu
//! ```
//!
//! with `lambda = lambda(x, nu)` the unique root of `sum_z lambda^z / (z!)^nu (z - x) = 0`,
//! so that the kernel mean is exactly `x`. Everything here works with
//! `s = ln(lambda)`: for small bandwidths `lambda` is of order `(x + 1/2)^nu`,
//! far outside the range of `f64` once `nu` reaches a few hundred.

use dashmap::DashMap;
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::NumericPolicy;
use crate::numeric::{ln_factorial, LogSumExp};

/// Term-to-partial-sum ratio below which a series term counts as negligible.
const NEGLIGIBLE_RATIO: f64 = 1e-16;
/// Consecutive negligible terms required before the series is cut.
const NEGLIGIBLE_RUN: u32 = 3;
const MAX_BRACKET_STEPS: u32 = 200;
const MAX_SOLVER_STEPS: u32 = 400;

/// A truncated series value held in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub log_value: f64,
    pub terms_used: u64,
    /// Bound on the omitted tail, relative to the returned value.
    pub tail_bound: f64,
}

impl SeriesValue {
    /// The series value itself; `+inf` when it exceeds the `f64` range.
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// Normalizer and first two moments of the CoM-Poisson law at a given rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmpMoments {
    pub log_normalizer: f64,
    pub mean: f64,
    pub variance: f64,
    pub terms_used: u64,
    pub tail_bound: f64,
}

/// Solved kernel parameters for one `(x, nu)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmpParams {
    /// `lambda(x, nu)`; may be `+inf` when only `log_lambda` is representable.
    pub lambda: f64,
    pub log_lambda: f64,
    pub nu: f64,
    pub mu: f64,
    pub truncation_z_max: u64,
    pub tail_bound: f64,
    pub log_normalizer: f64,
    /// Mean of the induced pmf (within `eps_solve` of `mu`).
    pub mean: f64,
    pub variance: f64,
    pub terms_used: u64,
}

impl CmpParams {
    /// Kernel mass at `z`, evaluated in log space.
    pub fn pmf(&self, z: u64) -> f64 {
        if self.log_lambda == f64::NEG_INFINITY {
            return if z == 0 { 1.0 } else { 0.0 };
        }
        (z as f64 * self.log_lambda - self.nu * ln_factorial(z) - self.log_normalizer).exp()
    }

    fn point_mass_at_zero(nu: f64, z_max: u64) -> Self {
        Self {
            lambda: 0.0,
            log_lambda: f64::NEG_INFINITY,
            nu,
            mu: 0.0,
            truncation_z_max: z_max,
            tail_bound: 0.0,
            log_normalizer: 0.0,
            mean: 0.0,
            variance: 0.0,
            terms_used: 1,
        }
    }
}

#[inline]
fn log_term(z: u64, log_lambda: f64, nu: f64) -> f64 {
    z as f64 * log_lambda - nu * ln_factorial(z)
}

/// Log terms `z ln(lambda) - nu ln(z!)` from `z = 0` up to the cut point, the
/// log of their sum and the relative tail bound.
///
/// The series is cut once, past the mode, three consecutive terms are below
/// `1e-16` of the partial sum. Past the mode the term ratios
/// `lambda / (z+1)^nu` decrease, so the remainder is dominated by a geometric
/// series in the next ratio.
fn log_terms(log_lambda: f64, nu: f64, z_max: u64) -> Result<(Vec<f64>, f64, f64)> {
    if log_lambda == f64::NEG_INFINITY {
        return Ok((vec![0.0], 0.0, 0.0));
    }
    let ln_negligible = NEGLIGIBLE_RATIO.ln();
    let mut terms = Vec::new();
    let mut acc = LogSumExp::new();
    let mut run = 0;
    for z in 0..=z_max {
        let lt = log_term(z, log_lambda, nu);
        if !lt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite CoM-Poisson term at z = {z} (ln lambda = {log_lambda}, nu = {nu})"
            )));
        }
        acc.push(lt);
        terms.push(lt);
        let log_next_ratio = log_lambda - nu * ((z + 1) as f64).ln();
        let partial = acc.value();
        if log_next_ratio < 0.0 && lt - partial < ln_negligible {
            run += 1;
        } else {
            run = 0;
        }
        if run >= NEGLIGIBLE_RUN {
            let r = log_next_ratio.exp();
            let tail = (lt - partial).exp() * r / (1.0 - r);
            return Ok((terms, partial, tail));
        }
    }
    Err(Error::Truncation { z_max })
}

/// Normalizer, mean and central variance of the CoM-Poisson law with rate
/// `exp(log_lambda)` and dispersion `nu`.
pub fn cmp_moments(log_lambda: f64, nu: f64, z_max: u64) -> Result<CmpMoments> {
    check_nu(nu)?;
    if log_lambda.is_nan() || log_lambda == f64::INFINITY {
        return Err(Error::InvalidParameter(format!(
            "ln lambda must be finite or -inf, got {log_lambda}"
        )));
    }
    let (terms, _, tail_bound) = log_terms(log_lambda, nu, z_max)?;
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = terms.iter().map(|&lt| (lt - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mean = weights
        .iter()
        .enumerate()
        .map(|(z, w)| z as f64 * w)
        .sum::<f64>()
        / total;
    let variance = weights
        .iter()
        .enumerate()
        .map(|(z, w)| {
            let d = z as f64 - mean;
            d * d * w
        })
        .sum::<f64>()
        / total;
    Ok(CmpMoments {
        log_normalizer: top + total.ln(),
        mean,
        variance,
        terms_used: terms.len() as u64,
        tail_bound,
    })
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "dispersion nu must be positive and finite, got {nu}"
        )))
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth { family: "cmp", h })
    }
}

/// `D(lambda, nu) = sum_z lambda^z / (z!)^nu`, summed in log space.
pub fn cmp_normalizer(lambda: f64, nu: f64) -> Result<SeriesValue> {
    cmp_normalizer_with(lambda, nu, NumericPolicy::default().max_support)
}

/// [`cmp_normalizer`] with an explicit cap on the number of terms.
pub fn cmp_normalizer_with(lambda: f64, nu: f64, z_max: u64) -> Result<SeriesValue> {
    check_nu(nu)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be non-negative and finite, got {lambda}"
        )));
    }
    let (terms, log_value, tail_bound) = log_terms(lambda.ln(), nu, z_max)?;
    Ok(SeriesValue {
        log_value,
        terms_used: terms.len() as u64,
        tail_bound,
    })
}

/// Default cap on the summation range for target `x`:
/// `10 (x + 10) max(1, nu^{-1/2})`, limited by the policy's support bound.
pub fn default_z_max(x: u64, nu: f64, policy: &NumericPolicy) -> u64 {
    let scale = (1.0 / nu.sqrt()).max(1.0);
    let raw = (10.0 * (x as f64 + 10.0) * scale).ceil();
    if raw >= policy.max_support as f64 {
        policy.max_support
    } else {
        raw as u64
    }
}

type MemoKey = (u64, u64, u64, u64);

static LAMBDA_MEMO: Lazy<DashMap<MemoKey, CmpParams>> = Lazy::new(DashMap::new);

/// Number of memoized `(x, nu)` solutions.
pub fn lambda_memo_len() -> usize {
    LAMBDA_MEMO.len()
}

pub fn clear_lambda_memo() {
    LAMBDA_MEMO.clear();
}

/// Solve for `lambda(x, nu)` so that the kernel mean equals `x` within
/// `policy.eps_solve`. Results are memoized per `(x, nu, policy)`.
pub fn solve_lambda(x: u64, nu: f64, policy: &NumericPolicy) -> Result<CmpParams> {
    check_nu(nu)?;
    let z_max = default_z_max(x, nu, policy);
    let key = (x, nu.to_bits(), policy.eps_solve.to_bits(), z_max);
    if let Some(hit) = LAMBDA_MEMO.get(&key) {
        return Ok(*hit);
    }
    let params = solve_lambda_uncached(x, nu, policy)?;
    Ok(*LAMBDA_MEMO.entry(key).or_insert(params))
}

/// [`solve_lambda`] without the memo table.
///
/// The mean `m(s)` is strictly increasing in `s = ln(lambda)` with
/// `dm/ds = Var`, so the root is bracketed by stepping outward from
/// `nu ln(x + 1/2)` and then located by Newton steps safeguarded with
/// bisection.
pub fn solve_lambda_uncached(x: u64, nu: f64, policy: &NumericPolicy) -> Result<CmpParams> {
    check_nu(nu)?;
    let z_max = default_z_max(x, nu, policy);
    if x == 0 {
        return Ok(CmpParams::point_mass_at_zero(nu, z_max));
    }
    let target = x as f64;
    let tol = policy.eps_solve;
    let goal = tol / 8.0;
    let eval = |s: f64| cmp_moments(s, nu, z_max);
    let finish = |s: f64, m: CmpMoments| {
        let lambda = s.exp();
        CmpParams {
            lambda,
            log_lambda: s,
            nu,
            mu: target,
            truncation_z_max: z_max,
            tail_bound: m.tail_bound,
            log_normalizer: m.log_normalizer,
            mean: m.mean,
            variance: m.variance,
            terms_used: m.terms_used,
        }
    };

    let s0 = nu * (target + 0.5).ln();
    let m0 = eval(s0)?;
    if (m0.mean - target).abs() <= goal {
        return Ok(finish(s0, m0));
    }

    // Bracket [lo, hi] with m(lo) < x < m(hi).
    let mut step = (nu / (target + 1.0)).max(1e-3);
    let (mut lo, mut hi);
    let best;
    if m0.mean < target {
        lo = s0;
        hi = s0 + step;
        let mut steps = 0;
        loop {
            let m = eval(hi)?;
            if (m.mean - target).abs() <= goal {
                return Ok(finish(hi, m));
            }
            if m.mean > target {
                best = (hi, m);
                break;
            }
            lo = hi;
            step *= 2.0;
            hi += step;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
                return Err(Error::Bracket { x, nu });
            }
        }
    } else {
        hi = s0;
        lo = s0 - step;
        let mut steps = 0;
        loop {
            let m = eval(lo)?;
            if (m.mean - target).abs() <= goal {
                return Ok(finish(lo, m));
            }
            if m.mean < target {
                best = (lo, m);
                break;
            }
            hi = lo;
            step *= 2.0;
            lo -= step;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || !lo.is_finite() {
                return Err(Error::Bracket { x, nu });
            }
        }
    }

    let (mut s, mut m) = best;
    for _ in 0..MAX_SOLVER_STEPS {
        let f = m.mean - target;
        if f.abs() <= goal {
            return Ok(finish(s, m));
        }
        if f < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Bracket exhausted at f64 resolution.
            break;
        }
        let newton = s - f / m.variance;
        s = if m.variance > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            mid
        };
        m = eval(s)?;
    }
    let residual = m.mean - target;
    if residual.abs() <= tol {
        Ok(finish(s, m))
    } else {
        Err(Error::SolverStalled { x, nu, residual })
    }
}

/// CoM-Poisson kernel mass `K_{x,h}(z)` with `nu = 1/h`.
pub fn cmp_pmf(x: u64, h: f64, z: u64) -> Result<f64> {
    check_bandwidth(h)?;
    Ok(solve_lambda(x, 1.0 / h, &NumericPolicy::default())?.pmf(z))
}

/// Exact kernel variance by truncated summation.
pub fn cmp_variance(x: u64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    Ok(solve_lambda(x, 1.0 / h, &NumericPolicy::default())?.variance)
}

/// Leading term `h lambda(x, 1/h)^h` of the small-bandwidth variance.
pub fn cmp_variance_asymptote(x: u64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if x == 0 {
        return Ok(0.0);
    }
    let params = solve_lambda(x, 1.0 / h, &NumericPolicy::default())?;
    Ok(h * (h * params.log_lambda).exp())
}

/// Large-`lambda^{1/nu}` expansion of `ln D(lambda, nu)`:
///
/// ```text
/// nu L - (nu-1)/(2 nu) ln(lambda) - ln((2 pi)^{(nu-1)/2} sqrt(nu))
///      + (nu^2-1)/(24 nu) L^{-1} + (nu^2-1)/(48 nu^2) L^{-2},    L = lambda^{1/nu}
/// ```
pub fn log_normalizer_asymptotic(lambda: f64, nu: f64) -> Result<f64> {
    check_nu(nu)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let ln_lambda = lambda.ln();
    let root = lambda.powf(1.0 / nu);
    let nu2m1 = nu * nu - 1.0;
    let constant = 0.5 * (nu - 1.0) * (2.0 * std::f64::consts::PI).ln() + 0.5 * nu.ln();
    Ok(nu * root - (nu - 1.0) / (2.0 * nu) * ln_lambda - constant
        + nu2m1 / (24.0 * nu) / root
        + nu2m1 / (48.0 * nu * nu) / (root * root))
}
