//! Parametric and tabulated prior densities on `(0, 1)` or `(0, inf)`.

use rand::{Rng, RngExt};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Result};
use crate::grid::DensityGrid;

/// Support of a univariate prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    /// The unit interval `(0, 1)`.
    Unit,
    /// The positive half line `(0, inf)`.
    Positive,
}

/// A univariate prior density, parametric or tabulated on a grid.
///
/// Log-densities are evaluated directly in log space so extreme shape
/// parameters do not underflow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorSpec {
    Beta { alpha: f64, beta: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Uniform01,
    HalfNormal { scale: f64 },
    Tabulated { grid: DensityGrid, support: Support },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Beta { alpha, beta } => {
                if !(alpha > &0.0) || !(beta > &0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return Err(invalid(format!("Beta parameters must be positive, got ({alpha}, {beta})")));
                }
            }
            PriorSpec::InverseGamma { shape, scale } => {
                if !(shape > &0.0) || !(scale > &0.0) || !shape.is_finite() || !scale.is_finite() {
                    return Err(invalid(format!(
                        "InverseGamma parameters must be positive, got ({shape}, {scale})"
                    )));
                }
            }
            PriorSpec::Uniform01 => {}
            PriorSpec::HalfNormal { scale } => {
                if !(scale > &0.0) || !scale.is_finite() {
                    return Err(invalid(format!("HalfNormal scale must be positive, got {scale}")));
                }
            }
            PriorSpec::Tabulated { grid, support } => {
                if !grid.is_normalized() {
                    return Err(invalid("tabulated prior grids must be normalized"));
                }
                if !(grid.points()[0] >= 0.0) {
                    return Err(invalid("tabulated prior support must be nonnegative"));
                }
                if *support == Support::Unit && *grid.points().last().unwrap() > 1.0 {
                    return Err(invalid("tabulated prior on (0, 1) has points above 1"));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> Support {
        match self {
            PriorSpec::Beta { .. } | PriorSpec::Uniform01 => Support::Unit,
            PriorSpec::InverseGamma { .. } | PriorSpec::HalfNormal { .. } => Support::Positive,
            PriorSpec::Tabulated { support, .. } => *support,
        }
    }

    /// Log density at `x`; `-inf` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            PriorSpec::Beta { alpha, beta } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta(*alpha, *beta)
            }
            PriorSpec::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(*shape) - (shape + 1.0) * x.ln() - scale / x
            }
            PriorSpec::Uniform01 => {
                if x <= 0.0 || x >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            PriorSpec::HalfNormal { scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                0.5 * (2.0 / std::f64::consts::PI).ln() - scale.ln() - 0.5 * (x / scale) * (x / scale)
            }
            PriorSpec::Tabulated { grid, .. } => {
                let d = grid.interpolate(x);
                if d > 0.0 {
                    d.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Cumulative distribution function at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PriorSpec::Beta { alpha, beta } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(*alpha, *beta, x)
                }
            }
            PriorSpec::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let t = scale / x;
                    if t <= 1e-300 {
                        // x far in the right tail (or infinite).
                        1.0
                    } else if t > 1e8 * (shape + 1.0) {
                        0.0
                    } else {
                        1.0 - gamma_lr(*shape, t)
                    }
                }
            }
            PriorSpec::Uniform01 => x.clamp(0.0, 1.0),
            PriorSpec::HalfNormal { scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    erf(x / (scale * std::f64::consts::SQRT_2))
                }
            }
            PriorSpec::Tabulated { grid, .. } => {
                let pts = grid.points();
                if x <= pts[0] {
                    return 0.0;
                }
                if x >= *pts.last().unwrap() {
                    return 1.0;
                }
                let cdf = grid.cdf();
                let total = *cdf.last().unwrap();
                let idx = pts.partition_point(|&p| p < x).clamp(1, pts.len() - 1);
                let (x0, x1) = (pts[idx - 1], pts[idx]);
                let frac = (x - x0) / (x1 - x0);
                ((cdf[idx - 1] + frac * (cdf[idx] - cdf[idx - 1])) / total).clamp(0.0, 1.0)
            }
        }
    }

    /// Quantile by bisection on the CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0 < p && p < 1.0) {
            return Err(invalid(format!("quantile level must be in (0, 1), got {p}")));
        }
        let (mut lo, mut hi) = match self.support() {
            Support::Unit => (0.0, 1.0),
            Support::Positive => {
                let mut hi = 1.0;
                while self.cdf(hi) < p && hi < 1e300 {
                    hi *= 10.0;
                }
                (0.0, hi)
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PriorSpec::Beta { alpha, beta } => {
                rand_distr::Beta::new(*alpha, *beta).expect("validated").sample(rng)
            }
            PriorSpec::InverseGamma { shape, scale } => {
                // 1/V ~ Gamma(shape, rate = scale).
                let g = rand_distr::Gamma::new(*shape, 1.0 / scale).expect("validated").sample(rng);
                1.0 / g
            }
            PriorSpec::Uniform01 => rng.random::<f64>(),
            PriorSpec::HalfNormal { scale } => {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                z.abs() * scale
            }
            PriorSpec::Tabulated { grid, .. } => grid
                .sample_many(rng, 1)
                .expect("validated tabulated prior")[0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_density_integrates_to_one() {
        let prior = PriorSpec::Beta { alpha: 2.0, beta: 2.0 };
        let gl = crate::quad::GaussLegendre::new(64);
        let mass = gl.integrate(0.0, 1.0, |x| prior.log_density(x).exp());
        assert!((mass - 1.0).abs() < 1e-12, "mass = {mass}");
    }

    #[test]
    fn inverse_gamma_density_matches_moments() {
        // IG(3, 10) has mean 5 and variance 25.
        let prior = PriorSpec::InverseGamma { shape: 3.0, scale: 10.0 };
        let grid = DensityGrid::log_spaced_from_fn(1e-4, 1e5, 20001, |v| prior.log_density(v).exp())
            .unwrap();
        let mass = grid.mass();
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
        let mean = grid.mean();
        assert!((mean - 5.0).abs() < 1e-3, "mean = {mean}");
        let var = grid.variance();
        assert!((var - 25.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn inverse_gamma_cdf_median() {
        // For IG(1, d) the CDF is exp(-d/x); the median is d/ln 2.
        let prior = PriorSpec::InverseGamma { shape: 1.0, scale: 0.01 };
        let med = prior.quantile(0.5).unwrap();
        assert!((med - 0.01 / std::f64::consts::LN_2).abs() < 1e-8, "median = {med}");
    }

    #[test]
    fn half_normal_cdf_and_mass() {
        let prior = PriorSpec::HalfNormal { scale: 2.0 };
        assert!((prior.cdf(1e12) - 1.0).abs() < 1e-12);
        let gl = crate::quad::GaussLegendre::new(128);
        let mass = gl.integrate(0.0, 30.0, |x| prior.log_density(x).exp());
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(PriorSpec::Beta { alpha: 0.0, beta: 1.0 }.validate().is_err());
        assert!(PriorSpec::InverseGamma { shape: 1.0, scale: -1.0 }.validate().is_err());
        assert!(PriorSpec::HalfNormal { scale: 0.0 }.validate().is_err());
        assert!(PriorSpec::Uniform01.validate().is_ok());
    }

    #[test]
    fn sampling_matches_cdf() {
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let prior = PriorSpec::Beta { alpha: 2.0, beta: 5.0 };
        let n = 20_000;
        let below: usize = (0..n).map(|_| prior.sample(&mut rng)).filter(|&x| x < 0.25).count();
        let want = prior.cdf(0.25);
        let got = below as f64 / n as f64;
        assert!((got - want).abs() < 0.01, "got {got} want {want}");
    }

    #[test]
    fn serde_tagged_round_trip() {
        let prior = PriorSpec::InverseGamma { shape: 3.0, scale: 10.0 };
        let json = serde_json::to_string(&prior).unwrap();
        assert!(json.contains("inverse_gamma"), "{json}");
        let back: PriorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(prior, back);
    }
}
