//! Count samples and finitely supported probability mass functions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An i.i.d. sample of non-negative counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct CountSample {
    values: Vec<u64>,
}

impl CountSample {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn max(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Distinct observed values with their multiplicities, in increasing order.
    pub fn counts(&self) -> Vec<(u64, usize)> {
        let mut map = BTreeMap::new();
        for &v in &self.values {
            *map.entry(v).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }

    /// One value per line, the format accepted by the CLI ingester.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 3);
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }
}

impl TryFrom<Vec<u64>> for CountSample {
    type Error = Error;

    fn try_from(values: Vec<u64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<CountSample> for Vec<u64> {
    fn from(s: CountSample) -> Self {
        s.values
    }
}

/// Probabilities on a strictly increasing list of support points, plus the
/// mass known to lie outside that list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub support: Vec<u64>,
    pub probs: Vec<f64>,
    pub tail_bound: f64,
}

impl Pmf {
    pub fn new(support: Vec<u64>, probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::InvalidParameter(format!(
                "support has {} points but {} probabilities were given",
                support.len(),
                probs.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "pmf support must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            support,
            probs,
            tail_bound,
        })
    }

    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I) -> Result<Self> {
        let (support, probs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Self::new(support, probs, 0.0)
    }

    /// Mass at `x`, zero off the stored support.
    pub fn get(&self, x: u64) -> f64 {
        match self.support.binary_search(&x) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn total(&self) -> f64 {
        crate::numeric::compensated_sum(self.probs.iter().copied())
    }

    /// `x,probability` rows under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,probability\n");
        for (x, p) in self.iter() {
            let _ = writeln!(out, "{x},{p:?}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pmf serializes")
    }
}
