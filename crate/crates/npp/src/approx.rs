//! Normal approximation of two-arm binary trial outcomes on the log-odds
//! scale, packaged so the normal-data machinery applies directly.

use serde::{Deserialize, Serialize};

use crate::data::NormalSummary;
use crate::error::{invalid, Result};

/// Responder counts for a two-arm (treatment/control) binary trial.
///
/// Zero cells are rejected at construction: the log-odds-ratio approximation
/// is undefined there (see [`log_or_from_counts`] for the opt-in continuity
/// correction).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCounts", into = "RawCounts")]
pub struct TwoArmBinomialSummary {
    n_t: u64,
    y_t: u64,
    n_c: u64,
    y_c: u64,
}

#[derive(Serialize, Deserialize)]
struct RawCounts {
    n_t: u64,
    y_t: u64,
    n_c: u64,
    y_c: u64,
}

impl TryFrom<RawCounts> for TwoArmBinomialSummary {
    type Error = crate::Error;
    fn try_from(raw: RawCounts) -> Result<Self> {
        TwoArmBinomialSummary::new(raw.n_t, raw.y_t, raw.n_c, raw.y_c)
    }
}

impl From<TwoArmBinomialSummary> for RawCounts {
    fn from(t: TwoArmBinomialSummary) -> Self {
        RawCounts { n_t: t.n_t, y_t: t.y_t, n_c: t.n_c, y_c: t.y_c }
    }
}

impl TwoArmBinomialSummary {
    pub fn new(n_t: u64, y_t: u64, n_c: u64, y_c: u64) -> Result<Self> {
        if n_t == 0 || n_c == 0 {
            return Err(invalid("both arms need at least one patient"));
        }
        if y_t == 0 || y_t >= n_t || y_c == 0 || y_c >= n_c {
            return Err(invalid(
                "each arm needs at least one responder and one non-responder (zero cell); \
                 use log_or_from_counts with the continuity correction for boundary counts",
            ));
        }
        Ok(TwoArmBinomialSummary { n_t, y_t, n_c, y_c })
    }

    pub fn n_t(&self) -> u64 {
        self.n_t
    }

    pub fn y_t(&self) -> u64 {
        self.y_t
    }

    pub fn n_c(&self) -> u64 {
        self.n_c
    }

    pub fn y_c(&self) -> u64 {
        self.y_c
    }

    /// Swap the treatment and control arms.
    pub fn swapped(&self) -> Self {
        TwoArmBinomialSummary { n_t: self.n_c, y_t: self.y_c, n_c: self.n_t, y_c: self.y_t }
    }
}

/// A log-odds-ratio point estimate with its asymptotic variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogOrApprox {
    pub theta_hat: f64,
    pub var_hat: f64,
}

impl LogOrApprox {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("LogOrApprox serialization cannot fail")
    }
}

/// Log odds ratio and asymptotic variance
/// `1/(n_t p_t) + 1/(n_t(1-p_t)) + 1/(n_c p_c) + 1/(n_c(1-p_c))`.
pub fn log_or(trial: &TwoArmBinomialSummary) -> Result<LogOrApprox> {
    let (n_t, y_t) = (trial.n_t as f64, trial.y_t as f64);
    let (n_c, y_c) = (trial.n_c as f64, trial.y_c as f64);
    let p_t = y_t / n_t;
    let p_c = y_c / n_c;
    let theta_hat = (p_t / (1.0 - p_t)).ln() - (p_c / (1.0 - p_c)).ln();
    let var_hat = 1.0 / y_t + 1.0 / (n_t - y_t) + 1.0 / y_c + 1.0 / (n_c - y_c);
    Ok(LogOrApprox { theta_hat, var_hat })
}

/// Log odds ratio from raw counts, with an optional +0.5 continuity
/// correction applied to all four cells. Without the correction, zero cells
/// are an error.
pub fn log_or_from_counts(
    n_t: u64,
    y_t: u64,
    n_c: u64,
    y_c: u64,
    continuity_correction: bool,
) -> Result<LogOrApprox> {
    if !continuity_correction {
        return log_or(&TwoArmBinomialSummary::new(n_t, y_t, n_c, y_c)?);
    }
    if n_t == 0 || n_c == 0 || y_t > n_t || y_c > n_c {
        return Err(invalid("counts must satisfy 0 <= y <= n with n >= 1 in both arms"));
    }
    let (a, b) = (y_t as f64 + 0.5, (n_t - y_t) as f64 + 0.5);
    let (c, d) = (y_c as f64 + 0.5, (n_c - y_c) as f64 + 0.5);
    Ok(LogOrApprox {
        theta_hat: (a / b).ln() - (c / d).ln(),
        var_hat: 1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d,
    })
}

/// Package the approximation as a sample-size-one normal dataset with known
/// variance, ready for every discounting/variance formula with `n0 = 1`.
pub fn to_normal_summary(approx: &LogOrApprox) -> Result<NormalSummary> {
    NormalSummary::new(1, approx.theta_hat, approx.var_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn symmetric_trial_has_zero_log_or() {
        let t = TwoArmBinomialSummary::new(100, 50, 100, 50).unwrap();
        let a = log_or(&t).unwrap();
        assert!(a.theta_hat.abs() < 1e-15);
        assert!((a.var_hat - 0.08).abs() < 1e-15);
    }

    #[test]
    fn known_counts_match_formula() {
        let t = TwoArmBinomialSummary::new(50, 30, 50, 20).unwrap();
        let a = log_or(&t).unwrap();
        assert!((a.theta_hat - 2.25f64.ln()).abs() < 1e-12, "theta = {}", a.theta_hat);
        assert!((a.var_hat - 1.0 / 6.0).abs() < 1e-12, "var = {}", a.var_hat);
    }

    #[test]
    fn zero_cells_error_names_escape_hatch() {
        let err = TwoArmBinomialSummary::new(50, 0, 50, 20).unwrap_err().to_string();
        assert!(err.contains("continuity"), "{err}");
        // The escape hatch itself works.
        let a = log_or_from_counts(50, 0, 50, 20, true).unwrap();
        assert!(a.theta_hat.is_finite() && a.var_hat > 0.0);
        assert!(log_or_from_counts(50, 0, 50, 20, false).is_err());
    }

    #[test]
    fn antisymmetry_under_arm_swap() {
        let t = TwoArmBinomialSummary::new(37, 21, 53, 17).unwrap();
        let a = log_or(&t).unwrap();
        let b = log_or(&t.swapped()).unwrap();
        assert!((a.theta_hat + b.theta_hat).abs() < 1e-15);
        assert!((a.var_hat - b.var_hat).abs() < 1e-15);
    }

    #[test]
    fn variance_lower_bound_and_minimum_at_half() {
        // var >= 1/n_t + 1/n_c... hmm: var = 1/(n p) + 1/(n(1-p)) >= 4/n per arm.
        for &(n_t, y_t, n_c, y_c) in &[(40u64, 10u64, 60u64, 30u64), (100, 99, 100, 1)] {
            let t = TwoArmBinomialSummary::new(n_t, y_t, n_c, y_c).unwrap();
            let a = log_or(&t).unwrap();
            assert!(a.var_hat >= 4.0 / n_t as f64 + 4.0 / n_c as f64 - 1e-12);
        }
        let balanced = log_or(&TwoArmBinomialSummary::new(100, 50, 100, 50).unwrap()).unwrap();
        let skewed = log_or(&TwoArmBinomialSummary::new(100, 80, 100, 50).unwrap()).unwrap();
        assert!(balanced.var_hat < skewed.var_hat);
    }

    #[test]
    fn to_normal_summary_maps_fields() {
        let a = LogOrApprox { theta_hat: 0.0, var_hat: 0.08 };
        let s = to_normal_summary(&a).unwrap();
        assert_eq!(s.n(), 1);
        assert!(s.ybar().abs() < 1e-15);
        assert!((s.sigma2() - 0.08).abs() < 1e-15);
        // With n0 = 1 the single-dataset map is 1/(2v/var + 1).
        let f = crate::transform::f_single(0.04, &s).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_parametric_bootstrap() {
        // 10^6 replicates at true p_t = 0.6, p_c = 0.4 with 300 per arm.
        use rand_distr::Distribution;
        let (n, p_t, p_c) = (300u64, 0.6, 0.4);
        let mut rng = rand::rngs::StdRng::seed_from_u64(2718);
        let bin_t = rand_distr::Binomial::new(n, p_t).unwrap();
        let bin_c = rand_distr::Binomial::new(n, p_c).unwrap();
        let reps = 1_000_000;
        let mut thetas = Vec::with_capacity(reps);
        for _ in 0..reps {
            let y_t = bin_t.sample(&mut rng).clamp(1, n - 1);
            let y_c = bin_c.sample(&mut rng).clamp(1, n - 1);
            let t = TwoArmBinomialSummary::new(n, y_t, n, y_c).unwrap();
            thetas.push(log_or(&t).unwrap().theta_hat);
        }
        let mean = thetas.iter().sum::<f64>() / reps as f64;
        let var = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let asym = log_or(&TwoArmBinomialSummary::new(
            n,
            (n as f64 * p_t).round() as u64,
            n,
            (n as f64 * p_c).round() as u64,
        )
        .unwrap())
        .unwrap()
        .var_hat;
        let rel = (var - asym).abs() / asym;
        assert!(rel < 0.05, "bootstrap var {var} vs asymptotic {asym} (rel {rel})");
    }
}
