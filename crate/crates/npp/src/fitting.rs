//! Parametric approximations of induced priors: the KL-closest inverse
//! gamma to a tabulated v-density and the maximum-likelihood beta for
//! discounting-parameter samples.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, numerical, Result};
use crate::grid::DensityGrid;
use crate::special::trigamma;

/// A fitted inverse-gamma approximation and its achieved divergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgFit {
    pub shape: f64,
    pub scale: f64,
    pub kl: f64,
}

/// A fitted beta distribution and the attained log likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub alpha: f64,
    pub beta: f64,
    pub loglik: f64,
}

/// Trapezoid moments of the target density needed by the inverse-gamma fit,
/// with edge diagnostics that refuse targets whose `E[1/v]` or `E[log v]`
/// depends on the truncation.
fn ig_moments(target: &DensityGrid) -> Result<(f64, f64)> {
    if !target.is_normalized() {
        return Err(invalid("the fit target must be a normalized density grid"));
    }
    let pts = target.points();
    if pts[0] <= 0.0 {
        return Err(invalid("the fit target must be supported on (0, inf)"));
    }
    let dens = target.density();
    let peak = dens.iter().cloned().fold(0.0, f64::max);

    // Local log-log slope at the support edges. E[1/v] diverges when the
    // density does not vanish fast enough at 0; normalizability and E[log v]
    // require decay beyond 1/v on the right.
    let first = dens.iter().position(|&d| d > 1e-12 * peak).unwrap_or(0);
    let last = dens.iter().rposition(|&d| d > 1e-12 * peak).unwrap_or(dens.len() - 1);
    if last <= first + 8 {
        return Err(invalid("the fit target is concentrated on too few grid points"));
    }
    if first == 0 {
        let span = (first + 4).min(last);
        let slope = (dens[span].ln() - dens[first].ln()) / (pts[span].ln() - pts[first].ln());
        if slope < 0.05 {
            return Err(numerical(format!(
                "E[1/v] diverges: density behaves like v^{slope:.2} at the left edge"
            )));
        }
    }
    if last == dens.len() - 1 {
        let span = last.saturating_sub(4).max(first);
        let slope = (dens[last].ln() - dens[span].ln()) / (pts[last].ln() - pts[span].ln());
        if slope > -1.05 {
            return Err(numerical(format!(
                "E[log v] diverges: density behaves like v^{slope:.2} at the right edge"
            )));
        }
    }

    let e_inv = target.expectation(|v| 1.0 / v);
    let e_log = target.expectation(|v| v.ln());
    if !e_inv.is_finite() || !e_log.is_finite() {
        return Err(numerical("non-finite moments of the fit target"));
    }
    Ok((e_inv, e_log))
}

/// Inverse-gamma density that minimizes `KL(target || IG(shape, scale))`.
///
/// The inverse gamma is an exponential family with sufficient statistics
/// `(log v, 1/v)`, so the optimum is moment matching:
/// `E[1/v] = shape/scale` and `E[log v] = log scale - digamma(shape)`.
/// The shape is found by Newton iteration on the digamma equation.
pub fn fit_ig_kl(target: &DensityGrid) -> Result<IgFit> {
    let (e_inv, e_log) = ig_moments(target)?;
    fit_ig_from_moments(target, e_inv, e_log)
}

/// Moment-matching fit on the grid exactly as tabulated, skipping the tail
/// diagnostics. For overlay plots of truncated targets whose exact moments
/// may not exist; the fit then depends on the truncation.
pub fn fit_ig_kl_truncated(target: &DensityGrid) -> Result<IgFit> {
    if !target.is_normalized() {
        return Err(invalid("the fit target must be a normalized density grid"));
    }
    if target.points()[0] <= 0.0 {
        return Err(invalid("the fit target must be supported on (0, inf)"));
    }
    let e_inv = target.expectation(|v| 1.0 / v);
    let e_log = target.expectation(|v| v.ln());
    fit_ig_from_moments(target, e_inv, e_log)
}

fn fit_ig_from_moments(target: &DensityGrid, e_inv: f64, e_log: f64) -> Result<IgFit> {
    // g(c) = log c - digamma(c) - s with s = log E[1/v] + E[log v] >= 0.
    let s = e_inv.ln() + e_log;
    if !(s > 0.0) {
        return Err(numerical("degenerate fit target: log E[1/v] + E[log v] is not positive"));
    }
    // log c - digamma(c) ~ 1/(2c) for large c.
    let mut c = (0.5 / s).clamp(1e-3, 1e6);
    let mut converged = false;
    for _ in 0..200 {
        let g = c.ln() - digamma(c) - s;
        let dg = 1.0 / c - trigamma(c);
        let step = g / dg;
        let mut c_new = c - step;
        if !(c_new > 0.0) {
            c_new = c / 2.0;
        }
        c = c_new;
        if step.abs() < 1e-10 * c.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(numerical("Newton iteration for the inverse-gamma shape did not converge"));
    }
    let d = c / e_inv;
    let kl = kl_divergence(target, |v| {
        c * d.ln() - ln_gamma(c) - (c + 1.0) * v.ln() - d / v
    })?;
    Ok(IgFit { shape: c, scale: d, kl })
}

/// Maximum-likelihood beta fit to samples strictly inside `(0, 1)`.
///
/// Newton iteration on the digamma score equations, started from the
/// method-of-moments estimate.
pub fn fit_beta_mle(samples: &[f64]) -> Result<BetaFit> {
    if samples.len() < 100 {
        return Err(invalid(format!("beta fitting needs at least 100 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let mut sum = 0.0;
    let mut sum_log = 0.0;
    let mut sum_log1m = 0.0;
    for &x in samples {
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid(format!(
                "beta fitting requires samples strictly inside (0, 1), got {x}; clip or resample"
            )));
        }
        sum += x;
        sum_log += x.ln();
        sum_log1m += (-x).ln_1p();
    }
    let mean = sum / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 1e-14) {
        return Err(invalid("degenerate sample variance; cannot fit a beta distribution"));
    }
    let mean_log = sum_log / n;
    let mean_log1m = sum_log1m / n;

    // Method-of-moments start.
    let scale0 = (mean * (1.0 - mean) / var - 1.0).max(1e-3);
    let mut alpha = (mean * scale0).max(1e-3);
    let mut beta = ((1.0 - mean) * scale0).max(1e-3);

    let mut converged = false;
    for _ in 0..500 {
        let psi_ab = digamma(alpha + beta);
        let g1 = psi_ab - digamma(alpha) + mean_log;
        let g2 = psi_ab - digamma(beta) + mean_log1m;
        let t_ab = trigamma(alpha + beta);
        let h11 = t_ab - trigamma(alpha);
        let h22 = t_ab - trigamma(beta);
        let h12 = t_ab;
        let det = h11 * h22 - h12 * h12;
        if det.abs() < 1e-300 {
            return Err(numerical("singular Hessian in the beta fit"));
        }
        let da = (g1 * h22 - g2 * h12) / det;
        let db = (g2 * h11 - g1 * h12) / det;
        let mut step = 1.0;
        while alpha - step * da <= 0.0 || beta - step * db <= 0.0 {
            step *= 0.5;
            if step < 1e-12 {
                return Err(numerical("beta fit stepped out of the parameter space"));
            }
        }
        alpha -= step * da;
        beta -= step * db;
        if (g1 * g1 + g2 * g2).sqrt() < 1e-8 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(numerical("Newton iteration for the beta fit did not converge"));
    }
    let loglik = n
        * ((alpha - 1.0) * mean_log + (beta - 1.0) * mean_log1m
            + ln_gamma(alpha + beta)
            - ln_gamma(alpha)
            - ln_gamma(beta));
    Ok(BetaFit { alpha, beta, loglik })
}

/// Trapezoid Kullback-Leibler divergence of a tabulated density from a
/// log-density given as a closure on the same support.
pub fn kl_divergence(p: &DensityGrid, log_q: impl Fn(f64) -> f64) -> Result<f64> {
    if !p.is_normalized() {
        return Err(invalid("KL divergence requires a normalized tabulated density"));
    }
    let mut vals = Vec::with_capacity(p.len());
    for (&x, &d) in p.points().iter().zip(p.density()) {
        if d > 1e-300 {
            let lq = log_q(x);
            if !lq.is_finite() {
                return Err(invalid(format!(
                    "the approximating density vanishes at x = {x} where the target is positive"
                )));
            }
            vals.push(d * (d.ln() - lq));
        } else {
            vals.push(0.0);
        }
    }
    let kl = crate::quad::trapezoid(p.points(), &vals);
    // Trapezoid discretization can push an exact-match KL a hair below zero.
    if kl < -5e-5 {
        return Err(numerical(format!("KL divergence came out negative: {kl}")));
    }
    Ok(kl.max(0.0))
}
