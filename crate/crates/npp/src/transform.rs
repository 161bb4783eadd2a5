//! Mappings between the BHM heterogeneity variance `v` and power-prior
//! discounting parameters.
//!
//! For a single historical dataset the map is `a0 = f(v) = 1/(2 v n0/s0^2 + 1)`
//! and a prior on one side induces a prior on the other through an exact
//! change of variables. For `K` historical datasets the global parameter
//! `a0 = f(v)` lives in `(1/(1+K), 1)`, each dataset's exponent is
//! `h_k(v) = c_k(v) a0` with `c_k = (1 + n0k v / s0k^2)^{-1}`, and the prior
//! correspondence picks up the data-dependent factors `Q` and `R` computed by
//! [`bridge_quantities`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::NormalSummary;
use crate::error::{invalid, numerical, Error, Result};
use crate::grid::DensityGrid;
use crate::prior::{PriorSpec, Support};

/// Default number of points for induced-prior grids.
pub const DEFAULT_GRID_POINTS: usize = 2049;
/// Smallest v covered by induced-prior grids.
pub const V_GRID_MIN: f64 = 1e-12;
/// Cap for the automatic vmax search.
pub const VMAX_CAP: f64 = 1e6;
/// Relative tail mass at which the automatic vmax search stops.
pub const TAIL_TARGET: f64 = 1e-8;
/// Relative tail mass beyond which a truncated grid is rejected.
pub const TAIL_REJECT: f64 = 1e-6;

/// `a0 = f(v)` for one historical dataset.
pub fn f_single(v: f64, hist: &NormalSummary) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(invalid(format!("v must be nonnegative, got {v}")));
    }
    Ok(1.0 / (2.0 * v * hist.precision() + 1.0))
}

/// Inverse of [`f_single`]: `v = s0^2 (1 - a0) / (2 n0 a0)`.
pub fn f_single_inv(a0: f64, hist: &NormalSummary) -> Result<f64> {
    if !(a0 > 0.0 && a0 <= 1.0) {
        return Err(invalid(format!("a0 must be in (0, 1], got {a0}")));
    }
    Ok((1.0 - a0) / (2.0 * a0 * hist.precision()))
}

/// `|df/dv|` for the single-dataset map.
pub fn f_single_jacobian(v: f64, hist: &NormalSummary) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(invalid(format!("v must be nonnegative, got {v}")));
    }
    let r = hist.precision();
    let denom = 2.0 * v * r + 1.0;
    Ok(2.0 * r / (denom * denom))
}

fn check_hist(hist: &[NormalSummary]) -> Result<()> {
    if hist.is_empty() {
        return Err(invalid("at least one historical dataset is required"));
    }
    Ok(())
}

/// Global discounting parameter `a0 = f(v)` for `K` historical datasets.
///
/// Strictly decreasing from 1 at `v = 0` to `1/(1+K)` as `v -> inf`.
pub fn f_multi(v: f64, hist: &[NormalSummary]) -> Result<f64> {
    check_hist(hist)?;
    if !(v >= 0.0) {
        return Err(invalid(format!("v must be nonnegative, got {v}")));
    }
    // r_k / (r_k + 1/v) written as r_k v / (1 + r_k v) to stay finite at v = 0.
    let sum: f64 = hist
        .iter()
        .map(|h| {
            let rv = h.precision() * v;
            rv / (1.0 + rv)
        })
        .sum();
    Ok(1.0 / (1.0 + sum))
}

/// Attainable range `(1/(1+K), 1)` of [`f_multi`].
pub fn f_multi_range(hist: &[NormalSummary]) -> (f64, f64) {
    (1.0 / (1.0 + hist.len() as f64), 1.0)
}

/// Numerical inverse of [`f_multi`] by bracketed bisection/secant iteration.
///
/// The bracket starts at `[1e-12, 1]` and grows geometrically; the root is
/// polished until `|f(v) - a0| < 1e-13`.
pub fn f_multi_inv(a0: f64, hist: &[NormalSummary]) -> Result<f64> {
    check_hist(hist)?;
    let (lo_a, hi_a) = f_multi_range(hist);
    if !(a0 > lo_a && a0 < hi_a) {
        return Err(invalid(format!(
            "a0 = {a0} is outside the attainable range ({lo_a}, {hi_a}) for K = {}",
            hist.len()
        )));
    }
    let mut vlo = 1e-12;
    while f_multi(vlo, hist)? < a0 {
        vlo /= 16.0;
        if vlo < 1e-290 {
            return Err(numerical(format!("failed to bracket f_multi inverse at a0 = {a0}")));
        }
    }
    let mut vhi = 1.0;
    while f_multi(vhi, hist)? > a0 {
        vhi *= 16.0;
        if vhi > 1e290 {
            return Err(numerical(format!("failed to bracket f_multi inverse at a0 = {a0}")));
        }
    }
    // Bisection with a secant acceleration step; f is smooth and strictly
    // decreasing so the bracket always contracts.
    let mut flo = f_multi(vlo, hist)? - a0;
    let mut v = 0.5 * (vlo + vhi);
    for _ in 0..300 {
        let fv = f_multi(v, hist)? - a0;
        if fv.abs() < 1e-13 {
            return Ok(v);
        }
        if (fv > 0.0) == (flo > 0.0) {
            vlo = v;
            flo = fv;
        } else {
            vhi = v;
        }
        // Secant proposal on log v keeps the iteration scale-free.
        let mid = (vlo.ln() + vhi.ln()) * 0.5;
        v = mid.exp();
    }
    let fv = f_multi(v, hist)? - a0;
    if fv.abs() < 1e-11 {
        Ok(v)
    } else {
        Err(numerical(format!("f_multi inverse did not converge at a0 = {a0} (residual {fv:.3e})")))
    }
}

/// Dataset-specific exponents `h_k(v) = c_k(v) f(v)`.
pub fn h_weights(v: f64, hist: &[NormalSummary]) -> Result<Vec<f64>> {
    check_hist(hist)?;
    if !(v >= 0.0) {
        return Err(invalid(format!("v must be nonnegative, got {v}")));
    }
    let a0 = f_multi(v, hist)?;
    Ok(hist.iter().map(|h| a0 / (1.0 + h.precision() * v)).collect())
}

/// Derivative `dh_k/dv` (negative; h_k is strictly decreasing).
pub fn h_weight_derivative(v: f64, k: usize, hist: &[NormalSummary]) -> Result<f64> {
    check_hist(hist)?;
    if k >= hist.len() {
        return Err(invalid(format!("dataset index {k} out of range for K = {}", hist.len())));
    }
    let b = bridge_quantities(v, hist)?;
    let r_k = hist[k].precision();
    let c_k = b.c_k[k];
    // h_k = c_k f; c_k' = -r_k c_k^2; f' = -|df/dv|.
    Ok(-r_k * c_k * c_k * b.a0 - c_k * b.jacobian)
}

/// Every quantity appearing in the multi-dataset prior correspondence,
/// evaluated at one `v > 0`.
#[derive(Clone, Debug)]
pub struct BridgeQuantities {
    pub v: f64,
    /// Global discounting parameter `f(v)`.
    pub a0: f64,
    /// Shrinkage ratios `c_k = (1 + n0k v / s0k^2)^{-1} = N_k / v`.
    pub c_k: Vec<f64>,
    /// `N_k = (n0k/s0k^2 + 1/v)^{-1}`.
    pub n_k: Vec<f64>,
    /// `C = sum_k n0k N_k / (v s0k^2)`.
    pub big_c: f64,
    /// `Y_k = n0k ybar0k / s0k^2`.
    pub y_k: Vec<f64>,
    /// `A = (1+K)/v - sum_k N_k / v^2` (always positive).
    pub big_a: f64,
    /// `log Q(f(v))`.
    pub log_q: f64,
    /// `log R(v)`.
    pub log_r: f64,
    /// `|df/dv|`.
    pub jacobian: f64,
}

impl BridgeQuantities {
    pub fn q(&self) -> f64 {
        self.log_q.exp()
    }

    pub fn r(&self) -> f64 {
        self.log_r.exp()
    }
}

/// Evaluate the Q/R factors, the Jacobian, and their ingredients at `v`.
pub fn bridge_quantities(v: f64, hist: &[NormalSummary]) -> Result<BridgeQuantities> {
    check_hist(hist)?;
    if !(v > 0.0) {
        return Err(invalid(format!("bridge quantities require v > 0, got {v}")));
    }
    let k = hist.len() as f64;
    let a0 = f_multi(v, hist)?;
    let c_k: Vec<f64> = hist.iter().map(|h| 1.0 / (1.0 + h.precision() * v)).collect();
    let n_k: Vec<f64> = c_k.iter().map(|c| c * v).collect();
    let y_k: Vec<f64> = hist.iter().map(NormalSummary::weighted_mean).collect();
    let big_c: f64 = hist.iter().zip(&c_k).map(|(h, c)| h.precision() * c).sum();
    let big_a = (1.0 + k) / v - n_k.iter().sum::<f64>() / (v * v);

    let sum_cy: f64 = c_k.iter().zip(&y_k).map(|(c, y)| c * y).sum();
    let log_q = 0.5 * (a0 * big_c).ln() - a0 / (2.0 * big_c) * sum_cy * sum_cy;

    let sum_yn: f64 = y_k.iter().zip(&n_k).map(|(y, n)| y * n).sum();
    let sum_y2n: f64 = y_k.iter().zip(&n_k).map(|(y, n)| y * y * n).sum();
    let v2a = v * v * big_a;
    let log_r = -(k + 1.0) / 2.0 * v.ln() + 0.5 * n_k.iter().map(|n| n.ln()).sum::<f64>()
        - 0.5 * big_a.ln()
        + sum_yn * sum_yn / (2.0 * v2a)
        + 0.5 * sum_y2n;

    // |df/dv| = f^2 sum_k r_k (r_k + 1/v)^{-2} v^{-2} = f^2 sum_k r_k c_k^2.
    let jacobian = a0 * a0 * hist.iter().zip(&c_k).map(|(h, c)| h.precision() * c * c).sum::<f64>();

    if !(big_a > 0.0) || !log_q.is_finite() || !log_r.is_finite() || !jacobian.is_finite() {
        return Err(numerical(format!("bridge quantities degenerate at v = {v}")));
    }
    Ok(BridgeQuantities { v, a0, c_k, n_k, big_c, y_k, big_a, log_q, log_r, jacobian })
}

/// Which parameterization an induced prior lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    OnV,
    OnA0,
}

/// A prior obtained by pushing a source prior through the variance /
/// discounting correspondence.
///
/// Carries both a normalized tabulation (for serialization, sampling, and
/// plotting) and enough information to evaluate the underlying closed form
/// exactly at any point of the support.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InducedPrior {
    side: Side,
    density: DensityGrid,
    source: PriorSpec,
    hist: Vec<NormalSummary>,
    data_dependent: bool,
    log_norm: f64,
}

impl InducedPrior {
    pub fn side(&self) -> Side {
        self.side
    }

    /// Normalized tabulation on the truncated support.
    pub fn density(&self) -> &DensityGrid {
        &self.density
    }

    pub fn source(&self) -> &PriorSpec {
        &self.source
    }

    pub fn data_dependent(&self) -> bool {
        self.data_dependent
    }

    /// Exact log density (normalized over the tabulated support).
    pub fn log_density(&self, x: f64) -> f64 {
        let pts = self.density.points();
        if x < pts[0] || x > *pts.last().unwrap() {
            return f64::NEG_INFINITY;
        }
        self.log_density_unnorm(x) - self.log_norm
    }

    /// Exact log density up to the truncation normalizer.
    pub fn log_density_unnorm(&self, x: f64) -> f64 {
        match self.side {
            Side::OnV => log_induced_v_unnorm(x, &self.source, &self.hist),
            Side::OnA0 => log_induced_a0_unnorm(x, &self.source, &self.hist[0]),
        }
    }

    /// Inverse-CDF draw from the tabulated density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.density.sample_many(rng, 1).expect("induced prior grid is normalized")[0]
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        self.density.sample_many(rng, count).expect("induced prior grid is normalized")
    }
}

/// Unnormalized log density of the prior induced on `v` by `prior_a0`.
///
/// Single dataset: `|df/dv| pi(f(v))`, which is the exact pushforward.
/// Multiple datasets: `Q(f(v)) |df/dv| pi(f(v)) / R(v)`, which is
/// data-dependent and not a pushforward.
pub(crate) fn log_induced_v_unnorm(v: f64, prior_a0: &PriorSpec, hist: &[NormalSummary]) -> f64 {
    if !(v > 0.0) {
        return f64::NEG_INFINITY;
    }
    if hist.len() == 1 {
        let r = hist[0].precision();
        let a0 = 1.0 / (2.0 * v * r + 1.0);
        (2.0 * r).ln() - 2.0 * (2.0 * v * r + 1.0).ln() + prior_a0.log_density(a0)
    } else {
        match bridge_quantities(v, hist) {
            Ok(b) => b.log_q + b.jacobian.ln() + prior_a0.log_density(b.a0) - b.log_r,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Unnormalized log density of the prior induced on `a0` by `prior_v`
/// (single dataset): `pi_v(f^{-1}(a0)) |dv/da0|`.
pub(crate) fn log_induced_a0_unnorm(a0: f64, prior_v: &PriorSpec, hist: &NormalSummary) -> f64 {
    if !(a0 > 0.0 && a0 < 1.0) {
        return f64::NEG_INFINITY;
    }
    let gamma = 1.0 / (2.0 * hist.precision());
    let v = gamma * (1.0 - a0) / a0;
    prior_v.log_density(v) + (gamma / (a0 * a0)).ln()
}

/// Estimate the relative mass of an unnormalized density beyond `vmax` by
/// probing the decay rate on `[vmax, 64 vmax]` and extrapolating the local
/// power law. `log_peak` and `mass_shifted` describe the tabulated part.
///
/// Returns `inf` when the probed slope indicates a non-integrable tail.
fn tail_mass_beyond(
    logdens: &impl Fn(f64) -> f64,
    vmax: f64,
    log_peak: f64,
    mass_shifted: f64,
) -> f64 {
    let probes: Vec<f64> = (0..7).map(|i| vmax * (1u64 << i) as f64).collect();
    let lp: Vec<f64> = probes.iter().map(|&v| logdens(v) - log_peak).collect();
    if lp.iter().all(|l| *l < -700.0) {
        // The density already underflowed relative to the peak.
        return 0.0;
    }
    // Most conservative (least negative) slope among the outer pairs.
    let mut slope = f64::NEG_INFINITY;
    for i in 4..7 {
        let s = (lp[i] - lp[i - 1]) / (probes[i].ln() - probes[i - 1].ln());
        slope = slope.max(s);
    }
    if !slope.is_finite() || slope >= -1.05 {
        return f64::INFINITY;
    }
    // integral_{64 vmax}^{inf} p(x) dx ~ p(64 vmax) 64 vmax / (-slope - 1),
    // plus the strip between vmax and 64 vmax.
    let strip = crate::quad::trapezoid(
        &probes.iter().map(|v| v.ln()).collect::<Vec<_>>(),
        &probes.iter().zip(&lp).map(|(&v, &l)| v * l.exp()).collect::<Vec<_>>(),
    );
    let beyond = lp[6].exp() * probes[6] / (-slope - 1.0);
    (strip.max(0.0) + beyond) / mass_shifted
}

struct VGridSpec {
    vmax_explicit: Option<f64>,
    points: usize,
}

/// Tabulate an unnormalized log density on a log-spaced v-grid, choosing vmax
/// automatically unless given, and rejecting truncations that lose mass.
fn build_v_grid(
    logdens: impl Fn(f64) -> f64,
    spec: VGridSpec,
) -> Result<(DensityGrid, f64)> {
    // (points, shifted density, log peak, shifted mass, relative tail mass)
    type Assessment = (Vec<f64>, Vec<f64>, f64, f64, f64);
    let points = spec.points.max(64);
    let assess = |vmax: f64| -> Result<Assessment> {
        let (llo, lhi) = (V_GRID_MIN.ln(), vmax.ln());
        let step = (lhi - llo) / (points - 1) as f64;
        let pts: Vec<f64> = (0..points).map(|i| (llo + step * i as f64).exp()).collect();
        let logd: Vec<f64> = pts.iter().map(|&v| logdens(v)).collect();
        let peak = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(numerical("induced prior is zero or undefined on the whole grid"));
        }
        let dens: Vec<f64> = logd.iter().map(|l| (l - peak).exp()).collect();
        let mass = crate::quad::trapezoid(&pts, &dens);
        if !(mass > 0.0) {
            return Err(numerical("induced prior has zero mass on the grid"));
        }
        let tail = tail_mass_beyond(&logdens, vmax, peak, mass);
        Ok((pts, dens, peak, mass, tail))
    };

    let mut vmax = spec.vmax_explicit.unwrap_or(1.0);
    loop {
        let (pts, dens, peak, mass, tail) = assess(vmax)?;
        let done = spec.vmax_explicit.is_some() || tail <= TAIL_TARGET || vmax >= VMAX_CAP;
        if done {
            if tail > TAIL_REJECT {
                return Err(Error::TailMass { mass: tail, vmax, tol: TAIL_REJECT });
            }
            // log of the true normalizer of the unnormalized closed form.
            let log_norm = mass.ln() + peak;
            let density: Vec<f64> = dens.iter().map(|d| d / mass).collect();
            let grid = DensityGrid::new(pts, density)?.normalize()?;
            return Ok((grid, log_norm));
        }
        vmax = (vmax * 8.0).min(VMAX_CAP);
    }
}

/// Prior induced on `v` by a prior on `a0` for a single historical dataset.
///
/// This is the exact change-of-variables pushforward of `prior_a0` through
/// `v = f^{-1}(a0)`; it does not depend on the historical data beyond
/// `n0 / s0^2`.
pub fn induce_prior_v_single(
    prior_a0: &PriorSpec,
    hist: &NormalSummary,
    vmax: Option<f64>,
) -> Result<InducedPrior> {
    induce_prior_v_single_with_points(prior_a0, hist, vmax, DEFAULT_GRID_POINTS)
}

pub fn induce_prior_v_single_with_points(
    prior_a0: &PriorSpec,
    hist: &NormalSummary,
    vmax: Option<f64>,
    points: usize,
) -> Result<InducedPrior> {
    prior_a0.validate()?;
    if prior_a0.support() != Support::Unit {
        return Err(invalid("the a0 prior must be supported on (0, 1)"));
    }
    let hist_vec = vec![*hist];
    let (density, log_norm) = build_v_grid(
        |v| log_induced_v_unnorm(v, prior_a0, &hist_vec),
        VGridSpec { vmax_explicit: vmax, points },
    )?;
    Ok(InducedPrior {
        side: Side::OnV,
        density,
        source: prior_a0.clone(),
        hist: hist_vec,
        data_dependent: false,
        log_norm,
    })
}

/// Prior induced on `v` by a prior on the global `a0` for `K` historical
/// datasets, via the `Q`/`R` correspondence. Data-dependent through the
/// historical means.
pub fn induce_prior_v_multi(
    prior_a0: &PriorSpec,
    hist: &[NormalSummary],
    vmax: Option<f64>,
) -> Result<InducedPrior> {
    induce_prior_v_multi_with_points(prior_a0, hist, vmax, DEFAULT_GRID_POINTS)
}

pub fn induce_prior_v_multi_with_points(
    prior_a0: &PriorSpec,
    hist: &[NormalSummary],
    vmax: Option<f64>,
    points: usize,
) -> Result<InducedPrior> {
    check_hist(hist)?;
    prior_a0.validate()?;
    if prior_a0.support() != Support::Unit {
        return Err(invalid("the a0 prior must be supported on (0, 1)"));
    }
    let hist_vec = hist.to_vec();
    let (density, log_norm) = build_v_grid(
        |v| log_induced_v_unnorm(v, prior_a0, &hist_vec),
        VGridSpec { vmax_explicit: vmax, points },
    )?;
    Ok(InducedPrior {
        side: Side::OnV,
        density,
        source: prior_a0.clone(),
        hist: hist_vec,
        data_dependent: hist.len() > 1,
        log_norm,
    })
}

/// Prior induced on `a0` by a prior on `v` for a single historical dataset:
/// `pi(a0) = pi_v(f^{-1}(a0)) s0^2 / (2 n0 a0^2)`.
///
/// The grid is logit-spaced in `a0`, which resolves spikes at both endpoints
/// (they correspond to the v-prior's tails).
pub fn induce_prior_a0_single(prior_v: &PriorSpec, hist: &NormalSummary) -> Result<InducedPrior> {
    induce_prior_a0_single_with_points(prior_v, hist, DEFAULT_GRID_POINTS)
}

pub fn induce_prior_a0_single_with_points(
    prior_v: &PriorSpec,
    hist: &NormalSummary,
    points: usize,
) -> Result<InducedPrior> {
    prior_v.validate()?;
    if prior_v.support() != Support::Positive {
        return Err(invalid("the v prior must be supported on (0, inf)"));
    }
    let points = points.max(64);
    let gamma = 1.0 / (2.0 * hist.precision());
    // Map the v-prior's extreme quantiles into a0 and extend, so essentially
    // all pushforward mass lands on the grid.
    let v_lo = prior_v.quantile(1e-12)?.max(1e-300).min(gamma * 1e-10);
    let v_hi = prior_v.quantile(1.0 - 1e-12)?.max(gamma * 1e10);
    let a_lo = gamma / (gamma + v_hi);
    let a_hi = gamma / (gamma + v_lo.max(gamma * 1e-13));
    let (t_lo, t_hi) = ((a_lo / (1.0 - a_lo)).ln(), (a_hi / (1.0 - a_hi)).ln());
    let step = (t_hi - t_lo) / (points - 1) as f64;
    let pts: Vec<f64> = (0..points)
        .map(|i| {
            let t = t_lo + step * i as f64;
            1.0 / (1.0 + (-t).exp())
        })
        .collect();
    let logd: Vec<f64> = pts.iter().map(|&a| log_induced_a0_unnorm(a, prior_v, hist)).collect();
    let max = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(numerical("induced a0 prior vanished on the whole grid"));
    }
    let dens: Vec<f64> = logd.iter().map(|l| (l - max).exp()).collect();
    let mass = crate::quad::trapezoid(&pts, &dens);
    // The pushforward of a normalized prior is normalized; a large deficit
    // means the grid cannot resolve where the mass went.
    let registered = mass * max.exp();
    if !(registered > 0.999 && registered < 1.001) {
        return Err(Error::TailMass {
            mass: (1.0 - registered).abs(),
            vmax: v_hi,
            tol: 1e-3,
        });
    }
    let log_norm = mass.ln() + max;
    let density = DensityGrid::new(pts, dens.iter().map(|d| d / mass).collect())?.normalize()?;
    Ok(InducedPrior {
        side: Side::OnA0,
        density,
        source: prior_v.clone(),
        hist: vec![*hist],
        data_dependent: false,
        log_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;
    use rand::SeedableRng;

    fn hist(n: u64, ybar: f64, s2: f64) -> NormalSummary {
        NormalSummary::new(n, ybar, s2).unwrap()
    }

    #[test]
    fn f_single_known_values() {
        let h = hist(10, 0.0, 1.0);
        assert!((f_single(0.0, &h).unwrap() - 1.0).abs() < 1e-15);
        // 2 v n0 / s0^2 = 1 forces a0 = 1/2.
        assert!((f_single(0.05, &h).unwrap() - 0.5).abs() < 1e-15);
        let h2 = hist(20, 0.0, 0.3);
        let got = f_single(0.1, &h2).unwrap();
        assert!((got - 3.0 / 43.0).abs() < 1e-15, "got {got}");
        assert!(f_single(-0.1, &h).is_err());
    }

    #[test]
    fn f_single_inverse_round_trip() {
        let h = hist(10, 0.0, 1.0);
        assert!((f_single_inv(1.0, &h).unwrap()).abs() < 1e-15);
        assert!((f_single_inv(0.5, &h).unwrap() - 0.05).abs() < 1e-15);
        let h2 = hist(20, 0.0, 0.3);
        assert!((f_single_inv(0.1, &h2).unwrap() - 0.0675).abs() < 1e-15);
        for &a0 in &[1e-6, 0.01, 0.3, 0.7, 0.999, 1.0] {
            let v = f_single_inv(a0, &h2).unwrap();
            assert!((f_single(v, &h2).unwrap() - a0).abs() < 1e-12, "a0 = {a0}");
        }
        assert!(f_single_inv(0.0, &h).is_err());
        assert!(f_single_inv(1.5, &h).is_err());
    }

    #[test]
    fn f_single_strictly_decreasing() {
        let h = hist(20, 0.0, 0.3);
        let mut prev = f_single(0.0, &h).unwrap();
        for i in 1..10_000 {
            let v = i as f64 * 1e-3;
            let cur = f_single(v, &h).unwrap();
            assert!(cur < prev, "not decreasing at v = {v}");
            prev = cur;
        }
    }

    #[test]
    fn f_multi_limits_and_k1_value() {
        let hs = [hist(20, 1.0, 1.0), hist(30, 2.0, 1.0)];
        assert!((f_multi(0.0, &hs).unwrap() - 1.0).abs() < 1e-15);
        assert!((f_multi(1e12, &hs).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        // K = 1: f_multi = (r v + 1) / (2 r v + 1).
        let h1 = [hist(10, 0.0, 1.0)];
        assert!((f_multi(0.05, &h1).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn h_weights_values_and_monotonicity() {
        let hs = [hist(20, 1.0, 1.0), hist(30, 2.0, 1.0)];
        let w0 = h_weights(0.0, &hs).unwrap();
        assert!(w0.iter().all(|&w| (w - 1.0).abs() < 1e-15));

        // v = 0.05: c = (1/2, 2/5), a0 = 10/21, h = (5/21, 4/21).
        let a0 = f_multi(0.05, &hs).unwrap();
        assert!((a0 - 10.0 / 21.0).abs() < 1e-14, "a0 = {a0}");
        let w = h_weights(0.05, &hs).unwrap();
        assert!((w[0] - 5.0 / 21.0).abs() < 1e-14, "w0 = {}", w[0]);
        assert!((w[1] - 4.0 / 21.0).abs() < 1e-14, "w1 = {}", w[1]);

        // Equal variances: the larger dataset is discounted more.
        assert!(w[1] < w[0]);

        let mut prev = w0;
        for i in 1..1000 {
            let v = i as f64 * 0.01;
            let cur = h_weights(v, &hs).unwrap();
            for (c, p) in cur.iter().zip(&prev) {
                assert!(c < p, "h_k not decreasing at v = {v}");
                assert!(*c > 0.0 && *c < 1.0);
            }
            prev = cur;
        }
    }

    #[test]
    fn k1_reduction_h1_equals_f_single() {
        let h = [hist(20, 1.5, 0.3)];
        for i in 0..1000 {
            let v = 1e-6 * 10f64.powf(i as f64 * 9.0 / 999.0);
            let a = h_weights(v, &h).unwrap()[0];
            let b = f_single(v, &h[0]).unwrap();
            assert!((a - b).abs() < 1e-12, "v = {v}: {a} vs {b}");
        }
    }

    #[test]
    fn f_multi_inv_round_trips() {
        let hs = [hist(20, 1.0, 0.5), hist(30, 2.0, 1.0), hist(50, 3.0, 1.5)];
        let a0 = f_multi(0.05, &hs).unwrap();
        let v = f_multi_inv(a0, &hs).unwrap();
        assert!((v - 0.05).abs() < 1e-10, "v = {v}");
        for &target in &[0.26, 0.5, 0.9, 0.9999] {
            let v = f_multi_inv(target, &hs).unwrap();
            assert!((f_multi(v, &hs).unwrap() - target).abs() < 1e-13);
        }
        let err = f_multi_inv(0.1, &hs).unwrap_err();
        assert!(err.to_string().contains("0.25"), "error should name the range: {err}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let hs = [hist(20, 1.0, 0.5), hist(30, 2.0, 1.0), hist(50, 3.0, 1.5)];
        for i in 0..200 {
            let v = 1e-4 * 10f64.powf(i as f64 * 5.0 / 199.0);
            let b = bridge_quantities(v, &hs).unwrap();
            let h = 1e-6 * v.max(1e-2);
            let fd = (f_multi(v + h, &hs).unwrap() - f_multi(v - h, &hs).unwrap()) / (2.0 * h);
            let rel = (b.jacobian - fd.abs()) / fd.abs();
            assert!(rel.abs() < 1e-6, "v = {v}: rel = {rel}");
        }
    }

    #[test]
    fn bridge_specializes_for_k1() {
        // K = 1: A = 2/v - N1/v^2 and C = n0 N1 / (v s0^2).
        let hs = [hist(20, 1.5, 0.3)];
        let v = 0.07;
        let b = bridge_quantities(v, &hs).unwrap();
        let n1 = 1.0 / (hs[0].precision() + 1.0 / v);
        assert!((b.n_k[0] - n1).abs() < 1e-15);
        assert!((b.big_a - (2.0 / v - n1 / (v * v))).abs() < 1e-9);
        assert!((b.big_c - hs[0].precision() * n1 / v).abs() < 1e-12);
        assert!(b.big_a > 0.0);
    }

    #[test]
    fn bridge_log_q_log_r_against_direct_arithmetic() {
        // The Q and R factors evaluated by independent scripted arithmetic
        // at a K = 3 setting, v = 0.2.
        let hs = [hist(20, 1.0, 0.5), hist(30, 2.0, 1.0), hist(50, 3.0, 1.5)];
        let v = 0.2;
        let r: Vec<f64> = vec![40.0, 30.0, 100.0 / 3.0];
        let n: Vec<f64> = r.iter().map(|ri| 1.0 / (ri + 5.0)).collect();
        let y = [40.0 * 1.0, 30.0 * 2.0, (100.0 / 3.0) * 3.0];
        let c: Vec<f64> = n.iter().map(|nk| nk / v).collect();
        let a0 = 1.0 / (1.0 + r.iter().zip(&n).map(|(ri, ni)| ri * ni).sum::<f64>());
        let big_c: f64 = r.iter().zip(&c).map(|(ri, ci)| ri * ci).sum();
        let sum_cy: f64 = c.iter().zip(&y).map(|(ci, yi)| ci * yi).sum();
        let log_q = 0.5 * (a0 * big_c).ln() - a0 * sum_cy * sum_cy / (2.0 * big_c);
        let big_a = 4.0 / v - n.iter().sum::<f64>() / (v * v);
        let sum_yn: f64 = y.iter().zip(&n).map(|(yi, ni)| yi * ni).sum();
        let log_r = -2.0 * v.ln() + 0.5 * n.iter().map(|ni| ni.ln()).sum::<f64>() - 0.5 * big_a.ln()
            + sum_yn * sum_yn / (2.0 * v * v * big_a)
            + 0.5 * y.iter().zip(&n).map(|(yi, ni)| yi * yi * ni).sum::<f64>();

        let b = bridge_quantities(v, &hs).unwrap();
        assert!((b.log_q - log_q).abs() < 1e-10, "{} vs {log_q}", b.log_q);
        assert!((b.log_r - log_r).abs() < 1e-10, "{} vs {log_r}", b.log_r);
    }

    #[test]
    fn uniform_pushforward_has_closed_form() {
        // Uniform(0,1) on a0 with n0 = 10, s0^2 = 1 induces 20 (1 + 20 v)^{-2}.
        let h = hist(10, 0.0, 1.0);
        let ind = induce_prior_v_single(&PriorSpec::Uniform01, &h, Some(1e5)).unwrap();
        for &v in &[1e-6f64, 1e-3, 0.05, 0.5, 3.0, 50.0] {
            let want = (20.0 / (1.0 + 20.0 * v).powi(2)).ln();
            let got = ind.log_density(v);
            assert!((got - want).abs() < 2e-4, "v = {v}: {got} vs {want}");
        }
        // Grid density agrees with the closed form too.
        let grid = ind.density();
        let mid = grid.points()[grid.len() / 2];
        let want = 20.0 / (1.0 + 20.0 * mid).powi(2);
        assert!((grid.interpolate(mid) - want).abs() / want < 1e-3);
    }

    #[test]
    fn narrow_beta_concentrates_near_mapped_point() {
        let h = hist(10, 0.0, 1.0);
        let a_star = 0.3;
        let prior = PriorSpec::Beta { alpha: 3000.0 * a_star, beta: 3000.0 * (1.0 - a_star) };
        let ind = induce_prior_v_single(&prior, &h, None).unwrap();
        let v_star = f_single_inv(a_star, &h).unwrap();
        let mode = {
            let g = ind.density();
            let i = g
                .density()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            g.points()[i]
        };
        assert!((mode - v_star).abs() / v_star < 0.05, "mode {mode} vs v* {v_star}");
    }

    #[test]
    fn pushforward_sampling_oracle_single_v() {
        // Sample a0 ~ Beta(2,2), map through f^{-1}, and compare with the
        // grid-based induced prior.
        let h = hist(20, 0.0, 0.3);
        let prior = PriorSpec::Beta { alpha: 2.0, beta: 2.0 };
        let ind = induce_prior_v_single(&prior, &h, None).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        let direct: Vec<f64> =
            (0..100_000).map(|_| f_single_inv(prior.sample(&mut rng), &h).unwrap()).collect();
        let from_grid = ind.sample_many(&mut rng, 100_000);
        let d = ks_two_sample(&direct, &from_grid).unwrap();
        assert!(d < 0.01, "KS = {d}");
    }

    #[test]
    fn induced_a0_from_ig_concentrates_near_zero() {
        // IG(3, 10) on v discourages borrowing: the induced a0 density is
        // concentrated near zero. The exact threshold comes from the Monte
        // Carlo pushforward oracle below; at n0 = 20, s0^2 = 1 more than 99%
        // of the mass sits below a0 = 0.1.
        let h = hist(20, 0.0, 1.0);
        let prior = PriorSpec::InverseGamma { shape: 3.0, scale: 10.0 };
        let ind = induce_prior_a0_single(&prior, &h).unwrap();
        let grid = ind.density();
        let mass_below = |t: f64| {
            let cdf = grid.cdf();
            let total = *cdf.last().unwrap();
            let idx = grid.points().partition_point(|&a| a < t);
            cdf[idx.min(cdf.len() - 1)] / total
        };

        // Monte Carlo pushforward oracle for the same tail probability.
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let direct: Vec<f64> =
            (0..100_000).map(|_| f_single(prior.sample(&mut rng), &h).unwrap()).collect();
        let mc_below = direct.iter().filter(|&&a| a < 0.1).count() as f64 / 1e5;

        let below = mass_below(0.1);
        assert!((below - mc_below).abs() < 0.01, "grid {below} vs MC {mc_below}");
        assert!(below > 0.99, "mass below 0.1 = {below}");

        // Full-distribution sampling oracle.
        let from_grid = ind.sample_many(&mut rng, 100_000);
        let d = ks_two_sample(&direct, &from_grid).unwrap();
        assert!(d < 0.01, "KS = {d}");
    }

    #[test]
    fn induced_a0_from_tiny_v_prior_concentrates_at_one() {
        let h = hist(1, 0.0, 1.0);
        let prior = PriorSpec::HalfNormal { scale: 1e-4 };
        let ind = induce_prior_a0_single(&prior, &h).unwrap();
        let grid = ind.density();
        let cdf = grid.cdf();
        let total = *cdf.last().unwrap();
        let idx = grid.points().partition_point(|&a| a < 0.99);
        let above = 1.0 - cdf[idx.min(cdf.len() - 1)] / total;
        assert!(above > 0.99, "mass above 0.99 = {above}");
    }

    #[test]
    fn induced_a0_sampling_oracle_ig31() {
        let h = hist(1, 0.0, 1.0);
        let prior = PriorSpec::InverseGamma { shape: 3.0, scale: 1.0 };
        let ind = induce_prior_a0_single(&prior, &h).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(123);
        let direct: Vec<f64> =
            (0..100_000).map(|_| f_single(prior.sample(&mut rng), &h).unwrap()).collect();
        let from_grid = ind.sample_many(&mut rng, 100_000);
        let d = ks_two_sample(&direct, &from_grid).unwrap();
        assert!(d < 0.01, "KS = {d}");
    }

    #[test]
    fn multi_induced_k1_matches_single_condition() {
        // With one historical dataset the Q/R correspondence reduces to the
        // single-dataset relation: the normalized densities agree.
        let h = vec![hist(20, 1.5, 0.3)];
        let prior = PriorSpec::Beta { alpha: 2.0, beta: 2.0 };
        let single = induce_prior_v_single(&prior, &h[0], Some(100.0)).unwrap();
        let multi = induce_prior_v_multi(&prior, &h, Some(100.0)).unwrap();
        let (gs, gm) = (single.density(), multi.density());
        let sup = gs.sup_distance(gm).unwrap();
        let peak = gs.density().iter().cloned().fold(0.0, f64::max);
        assert!(sup / peak < 1e-8, "sup = {sup}, peak = {peak}");
    }

    #[test]
    fn multi_induced_symmetric_under_swap() {
        let prior = PriorSpec::Uniform01;
        let h1 = vec![hist(25, 0.8, 1.0), hist(25, -0.3, 2.0)];
        let h2 = vec![h1[1], h1[0]];
        let a = induce_prior_v_multi(&prior, &h1, Some(1e8)).unwrap();
        let b = induce_prior_v_multi(&prior, &h2, Some(1e8)).unwrap();
        let sup = a.density().sup_distance(b.density()).unwrap();
        assert!(sup < 1e-12, "sup = {sup}");
    }

    #[test]
    fn multi_induced_k3_tail_is_rejected() {
        // For K = 3 the induced prior decays like 1/v: not normalizable, so
        // the truncated-grid constructor must refuse.
        let hs = vec![hist(20, 1.0, 0.5), hist(30, 2.0, 1.0), hist(50, 3.0, 1.5)];
        let err = induce_prior_v_multi(&PriorSpec::Beta { alpha: 2.0, beta: 2.0 }, &hs, None);
        assert!(matches!(err, Err(Error::TailMass { .. })), "expected tail rejection, got {err:?}");
    }

    #[test]
    fn vmax_too_small_is_rejected() {
        let h = hist(10, 0.0, 1.0);
        let err = induce_prior_v_single(&PriorSpec::Uniform01, &h, Some(0.5));
        assert!(matches!(err, Err(Error::TailMass { .. })));
    }
}
