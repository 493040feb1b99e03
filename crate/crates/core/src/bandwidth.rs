//! Leave-one-out cross-validation of the bandwidth.
//!
//! The score minimized over `h` is
//!
//! ```text
//! CV(h) = sum_x f^_n(x)^2 - (2/n) sum_i f_{n,h,-i}(X_i),
//! f_{n,h,-i}(X_i) = (1/(n-1)) sum_{l != i} K_{X_i,h}(X_l)
//! ```
//!
//! where the first term uses the normalized estimate on the certified
//! evaluation support and the leave-one-out values are raw kernel averages.
//! [`CvVariant::Normalized`] divides each leave-one-out value by its own
//! leave-one-out normalizer instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::eval_support;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::numeric::compensated_sum;
use crate::pmf::CountSample;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvVariant {
    /// Normalized quadratic term, raw leave-one-out term.
    #[default]
    Literal,
    /// Both terms normalized.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub h: f64,
    /// `None` for inadmissible points.
    pub score: Option<f64>,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub h_cv: f64,
    pub score_at_h: f64,
    pub variant: CvVariant,
    /// Sorted by increasing `h`.
    pub grid: Vec<GridPoint>,
}

impl CvResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cv result serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,score,admissible\n");
        for p in &self.grid {
            let score = p.score.map(|s| format!("{s:?}")).unwrap_or_default();
            out.push_str(&format!("{:?},{},{}\n", p.h, score, p.admissible));
        }
        out
    }
}

fn require_pair(sample: &CountSample) -> Result<()> {
    if sample.n() < 2 {
        Err(Error::SampleTooSmall(sample.n()))
    } else {
        Ok(())
    }
}

/// `(1/(n-1)) sum_{l != i} K_{X_i,h}(X_l)` for the `i`-th observation
/// (0-based).
pub fn loo_estimate(sample: &CountSample, spec: &KernelSpec, h: f64, i: usize) -> Result<f64> {
    require_pair(sample)?;
    let values = sample.values();
    let xi = *values.get(i).ok_or_else(|| {
        Error::InvalidParameter(format!("index {i} out of range for n = {}", values.len()))
    })?;
    let kernel = spec.prepare(xi, h)?;
    let sum = compensated_sum(
        values
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != i)
            .map(|(_, &xl)| kernel.mass(xl)),
    );
    Ok(sum / (values.len() - 1) as f64)
}

/// Cross-validation score with the default (literal) variant.
pub fn cv_score(sample: &CountSample, spec: &KernelSpec, h: f64) -> Result<f64> {
    cv_score_with(sample, spec, h, CvVariant::Literal)
}

pub fn cv_score_with(
    sample: &CountSample,
    spec: &KernelSpec,
    h: f64,
    variant: CvVariant,
) -> Result<f64> {
    require_pair(sample)?;
    spec.check_bandwidth(h)?;
    let support = eval_support(sample, spec, h, spec.policy.eps_tail)?;
    let counts = sample.counts();
    let n = sample.n() as f64;

    // sums[x] = sum_l K_{x,h}(X_l); col[j] = sum_x K_{x,h}(v_j); diag[j] = K_{v_j,h}(v_j).
    let mut sums = Vec::with_capacity(support.points.len());
    let mut col = vec![0.0; counts.len()];
    let mut diag = vec![0.0; counts.len()];
    for &x in &support.points {
        let kernel = spec.prepare(x, h)?;
        let mut s = 0.0;
        for (j, &(v, c)) in counts.iter().enumerate() {
            let m = kernel.mass(v);
            s += c as f64 * m;
            col[j] += m;
            if v == x {
                diag[j] = m;
            }
        }
        sums.push(s);
    }
    let total = compensated_sum(sums.iter().copied());
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateNormalizer(total / n));
    }
    // f^_n(x) = sums[x] / total.
    let quadratic = compensated_sum(sums.iter().map(|s| {
        let f = s / total;
        f * f
    }));
    let loo = compensated_sum(counts.iter().enumerate().map(|(j, &(v, c))| {
        let raw = (sums[v as usize] - diag[j]) / (n - 1.0);
        let value = match variant {
            CvVariant::Literal => raw,
            CvVariant::Normalized => raw / ((total - col[j]) / (n - 1.0)),
        };
        c as f64 * value
    }));
    Ok(quadratic - 2.0 / n * loo)
}

/// 40 log-spaced bandwidths: `[1e-3, 0.999]` for the binomial kernel and
/// `[1e-3, 3]` otherwise.
pub fn default_grid(family: KernelFamily) -> Vec<f64> {
    let hi: f64 = match family {
        KernelFamily::Binomial => 0.999,
        _ => 3.0,
    };
    log_grid(1e-3, hi, 40)
}

pub fn log_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..size)
                .map(|k| match k {
                    0 => lo,
                    _ if k == size - 1 => hi,
                    _ => (a + (b - a) * k as f64 / (size - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

pub fn select_bandwidth(sample: &CountSample, spec: &KernelSpec, grid: &[f64]) -> Result<CvResult> {
    select_bandwidth_with(sample, spec, grid, CvVariant::Literal)
}

/// Grid-search minimizer of the CV score. Inadmissible grid points are kept
/// in the result with `admissible = false`; ties go to the smaller `h`.
pub fn select_bandwidth_with(
    sample: &CountSample,
    spec: &KernelSpec,
    grid: &[f64],
    variant: CvVariant,
) -> Result<CvResult> {
    require_pair(sample)?;
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty bandwidth grid".into()));
    }
    let mut hs = grid.to_vec();
    hs.sort_by(|a, b| a.total_cmp(b));
    hs.dedup();
    let scored: Vec<Result<GridPoint>> = hs
        .par_iter()
        .map(|&h| {
            if !spec.admits(h) {
                return Ok(GridPoint {
                    h,
                    score: None,
                    admissible: false,
                });
            }
            Ok(GridPoint {
                h,
                score: Some(cv_score_with(sample, spec, h, variant)?),
                admissible: true,
            })
        })
        .collect();
    let points = scored.into_iter().collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .filter_map(|p| p.score.map(|s| (p.h, s)))
        .fold(None::<(f64, f64)>, |acc, (h, s)| match acc {
            Some((_, bs)) if bs <= s => acc,
            _ => Some((h, s)),
        })
        .ok_or(Error::NoAdmissibleBandwidth)?;
    Ok(CvResult {
        h_cv: best.0,
        score_at_h: best.1,
        variant,
        grid: points,
    })
}
