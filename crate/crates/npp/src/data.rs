//! Sufficient statistics for i.i.d. normal datasets with known variance.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sufficient statistics `(n, ybar, sigma2)` of one i.i.d. normal dataset
/// with known sampling variance.
///
/// All models in this crate depend on the data only through these three
/// numbers, so raw observations are never required.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalSummary", into = "RawNormalSummary")]
pub struct NormalSummary {
    n: u64,
    ybar: f64,
    sigma2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNormalSummary {
    n: u64,
    ybar: f64,
    sigma2: f64,
}

impl TryFrom<RawNormalSummary> for NormalSummary {
    type Error = crate::Error;
    fn try_from(raw: RawNormalSummary) -> Result<Self> {
        NormalSummary::new(raw.n, raw.ybar, raw.sigma2)
    }
}

impl From<NormalSummary> for RawNormalSummary {
    fn from(s: NormalSummary) -> Self {
        RawNormalSummary { n: s.n, ybar: s.ybar, sigma2: s.sigma2 }
    }
}

impl NormalSummary {
    pub fn new(n: u64, ybar: f64, sigma2: f64) -> Result<Self> {
        if n < 1 {
            return Err(invalid("sample size n must be at least 1"));
        }
        if !ybar.is_finite() {
            return Err(invalid("sample mean ybar must be finite"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(invalid(format!("variance sigma2 must be positive and finite, got {sigma2}")));
        }
        Ok(NormalSummary { n, ybar, sigma2 })
    }

    /// Summarize raw observations under a known variance.
    pub fn from_raw(data: &[f64], sigma2: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(invalid("cannot summarize an empty dataset"));
        }
        let ybar = data.iter().sum::<f64>() / data.len() as f64;
        NormalSummary::new(data.len() as u64, ybar, sigma2)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn ybar(&self) -> f64 {
        self.ybar
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Full-data precision `n / sigma2`.
    pub fn precision(&self) -> f64 {
        self.n as f64 / self.sigma2
    }

    /// Precision-weighted mean contribution `n * ybar / sigma2`.
    pub fn weighted_mean(&self) -> f64 {
        self.precision() * self.ybar
    }
}

/// A current dataset together with `K >= 1` historical datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStudySet", into = "RawStudySet")]
pub struct StudySet {
    current: NormalSummary,
    historical: Vec<NormalSummary>,
}

#[derive(Serialize, Deserialize)]
struct RawStudySet {
    current: NormalSummary,
    historical: Vec<NormalSummary>,
}

impl TryFrom<RawStudySet> for StudySet {
    type Error = crate::Error;
    fn try_from(raw: RawStudySet) -> Result<Self> {
        StudySet::new(raw.current, raw.historical)
    }
}

impl From<StudySet> for RawStudySet {
    fn from(s: StudySet) -> Self {
        RawStudySet { current: s.current, historical: s.historical }
    }
}

impl StudySet {
    pub fn new(current: NormalSummary, historical: Vec<NormalSummary>) -> Result<Self> {
        if historical.is_empty() {
            return Err(invalid("a StudySet requires at least one historical dataset"));
        }
        Ok(StudySet { current, historical })
    }

    pub fn current(&self) -> &NormalSummary {
        &self.current
    }

    pub fn historical(&self) -> &[NormalSummary] {
        &self.historical
    }

    /// Number of historical datasets K.
    pub fn k(&self) -> usize {
        self.historical.len()
    }

    /// A copy with the historical datasets permuted according to `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.historical.len() {
            return Err(invalid("permutation length must equal K"));
        }
        let mut hist = Vec::with_capacity(order.len());
        for &i in order {
            let s = self
                .historical
                .get(i)
                .ok_or_else(|| invalid(format!("permutation index {i} out of range")))?;
            hist.push(*s);
        }
        StudySet::new(self.current, hist)
    }
}
