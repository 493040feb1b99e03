//! Nonparametric estimation of probability mass functions on count data with
//! normalized discrete associated kernels.
//!
//! Given counts `X_1, ..., X_n`, a discrete associated kernel `K_{x,h}` yields
//! the raw estimate
//!
//! ```text
//! f~_n(x) = (1/n) * sum_i K_{x,h}(X_i)
//! ```
//!
//! whose total mass `C_n = sum_x f~_n(x)` is generally not 1. The normalized
//! estimate is `f^_n(x) = f~_n(x) / C_n`.
//!
//! Three kernels are provided: the Dirac (naive) kernel, the first-order
//! binomial kernel and the second-order mean-parametrized CoM-Poisson kernel.
//! Around them sit leave-one-out cross-validation for the bandwidth and a
//! Monte Carlo harness for the convergence behaviour of `C_n` and `f^_n`.
//!
//! ```
//! use disckern::{normalized_estimate, CountSample, KernelFamily, KernelSpec};
//!
//! let sample = CountSample::new(vec![0, 0, 1]).unwrap();
//! let spec = KernelSpec::new(KernelFamily::Dirac);
//! let est = normalized_estimate(&sample, &spec, 0.1).unwrap();
//! assert_eq!(est.normalizer, 1.0);
//! assert_eq!(est.normalized.get(0), 2.0 / 3.0);
//! ```

pub mod bandwidth;
pub mod cmp;
mod error;
pub mod estimator;
pub mod kernel;
pub mod numeric;
pub mod pmf;
pub mod simulation;

pub use bandwidth::{
    cv_score, cv_score_with, default_grid, loo_estimate, select_bandwidth, select_bandwidth_with,
    CvResult, CvVariant, GridPoint,
};
pub use cmp::{
    cmp_normalizer, cmp_pmf, cmp_variance, cmp_variance_asymptote, log_normalizer_asymptotic,
    solve_lambda, CmpParams, SeriesValue,
};
pub use error::{Error, Result};
pub use estimator::{
    eval_support, ise_empirical, naive_estimate, normalized_estimate, normalized_estimate_on,
    normalizing_constant, raw_estimate, EstimateResult, EvalSupport,
};
pub use kernel::{
    assumption_probe, binomial_kernel_pmf, dirac_kernel_pmf, kernel_mean_variance, KernelEval,
    KernelFamily, KernelSpec, NumericPolicy, PreparedKernel, ProbeReport,
};
pub use pmf::{CountSample, Pmf};
pub use simulation::{
    monte_carlo, normality_experiment, replication_seed, scenario_pmf, scenario_sample,
    BandwidthRule, McConfig, McReport, NormalityReport, PoissonComponent, ReplicationRecord,
    Scenario, ScenarioId,
};

/// Master seed used by the simulation harness and the CLI when none is given.
pub const DEFAULT_SEED: u64 = 42;
