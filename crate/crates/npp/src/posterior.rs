//! Exact conditional posteriors and deterministic quadrature marginals for
//! the NPP, iNPP, BNPP, and BHM.
//!
//! Given fixed discounting weights the posterior of the main effect is an
//! exact normal, so every marginal here is a one- or two-dimensional mixture
//! of normals computed by Gauss-Legendre quadrature over the discounting
//! (or heterogeneity-variance) parameter. The BHM routes integrate over
//! `u = f(v)`, which maps the positive half line onto a finite interval and
//! makes the change-of-variables Jacobian cancel for induced priors.
//!
//! Two algebraically independent evaluation paths are kept deliberately
//! separate: power-prior marginals go through the discounted-likelihood
//! normalizer, while hierarchical marginals go through the `R`-factor and the
//! raw hierarchical precision algebra. Their agreement is a functional test
//! of the variance/discounting correspondence, not a tautology of shared
//! code.

use serde::{Deserialize, Serialize};

use crate::data::{NormalSummary, StudySet};
use crate::error::{invalid, numerical, Result};
use crate::grid::DensityGrid;
use crate::prior::{PriorSpec, Support};
use crate::quad::{composite_points_on, GaussLegendre};
use crate::transform::{
    bridge_quantities, f_multi, f_multi_inv, f_multi_range, h_weight_derivative, h_weights,
    InducedPrior, Side,
};

/// Node counts and grid resolution for the quadrature marginals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Gauss-Legendre nodes for one-dimensional marginalization.
    pub nodes: usize,
    /// Per-dimension nodes for the two-dimensional iNPP tensor rule.
    pub nodes_2d: usize,
    /// Number of points in returned density grids.
    pub grid_points: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { nodes: 512, nodes_2d: 192, grid_points: 1025 }
    }
}

/// Relative density change allowed between a quadrature rule and its
/// node-doubled refinement.
const CONVERGENCE_TOL: f64 = 1e-8;

/// Prior tail mass allowed to fall outside the quadrature's v-coverage.
const PRIOR_TAIL_TOL: f64 = 1e-6;

/// One discounting weight per historical dataset, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightAssignment(Vec<f64>);

impl WeightAssignment {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weight assignment must be nonempty"));
        }
        for &w in &weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid(format!("discounting weights must lie in [0, 1], got {w}")));
            }
        }
        Ok(WeightAssignment(weights))
    }

    /// `K` copies of the same weight.
    pub fn constant(k: usize, value: f64) -> Result<Self> {
        WeightAssignment::new(vec![value; k.max(1)])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

/// The exact normal posterior of the main effect given fixed weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPosterior {
    pub mu_p: f64,
    pub sigma2_p: f64,
}

impl ConditionalPosterior {
    pub fn sd(&self) -> f64 {
        self.sigma2_p.sqrt()
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        let z = theta - self.mu_p;
        (-0.5 * z * z / self.sigma2_p).exp() / (2.0 * std::f64::consts::PI * self.sigma2_p).sqrt()
    }

    /// Tabulate the normal density on an explicit grid.
    pub fn tabulate(&self, points: &[f64]) -> Result<DensityGrid> {
        DensityGrid::new(points.to_vec(), points.iter().map(|&t| self.pdf(t)).collect())?
            .normalize()
    }
}

/// Posterior of the main effect given fixed discounting weights:
/// precision `n/s^2 + sum_k w_k n0k/s0k^2`, precision-weighted mean.
pub fn conditional_theta(study: &StudySet, w: &WeightAssignment) -> Result<ConditionalPosterior> {
    if w.weights().len() != study.k() {
        return Err(invalid(format!(
            "expected {} weights, got {}",
            study.k(),
            w.weights().len()
        )));
    }
    Ok(conditional_theta_unchecked(study, w.weights()))
}

fn conditional_theta_unchecked(study: &StudySet, weights: &[f64]) -> ConditionalPosterior {
    let mut prec = study.current().precision();
    let mut num = study.current().weighted_mean();
    for (h, &w) in study.historical().iter().zip(weights) {
        prec += w * h.precision();
        num += w * h.weighted_mean();
    }
    ConditionalPosterior { mu_p: num / prec, sigma2_p: 1.0 / prec }
}

/// The weight-dependent part of the normalized-power-prior constant.
///
/// Only the parts that survive the cancellation of the historical
/// sum-of-squares terms are kept: `log_c = -0.5 log S + T^2 / (2 S)` with
/// `S = sum_k w_k n0k/s0k^2` and `T = sum_k w_k n0k ybar0k / s0k^2`; `m = T/S`
/// is the precision-weighted historical mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NppNormalizer {
    pub log_c: f64,
    pub m: f64,
}

/// Evaluate the retained normalizing-constant factors for given weights.
pub fn npp_normalizer(hist: &[NormalSummary], w: &WeightAssignment) -> Result<NppNormalizer> {
    if w.weights().len() != hist.len() {
        return Err(invalid(format!("expected {} weights, got {}", hist.len(), w.weights().len())));
    }
    let (s, t) = discount_sums(hist, w.weights());
    if !(s > 0.0) {
        return Err(invalid("the normalizing constant requires at least one positive weight"));
    }
    Ok(NppNormalizer { log_c: -0.5 * s.ln() + t * t / (2.0 * s), m: t / s })
}

fn discount_sums(hist: &[NormalSummary], weights: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    let mut t = 0.0;
    for (h, &w) in hist.iter().zip(weights) {
        s += w * h.precision();
        t += w * h.weighted_mean();
    }
    (s, t)
}

/// One quadrature node of a normal-mixture marginal.
#[derive(Clone, Copy, Debug)]
struct MixtureNode {
    logw: f64,
    mu: f64,
    sigma2: f64,
}

/// `0.5 log S - T^2/(2S)`: the discounted-likelihood factor left after the
/// normalizing constant cancels. `-inf` when all weights vanish.
fn discount_factor(hist: &[NormalSummary], weights: &[f64]) -> f64 {
    let (s, t) = discount_sums(hist, weights);
    if s > 0.0 {
        0.5 * s.ln() - t * t / (2.0 * s)
    } else {
        f64::NEG_INFINITY
    }
}

/// `log sigma_p + mu_p^2 / (2 sigma_p^2)` for the given conditional.
fn gaussian_factor(cond: &ConditionalPosterior) -> f64 {
    0.5 * cond.sigma2_p.ln() + cond.mu_p * cond.mu_p / (2.0 * cond.sigma2_p)
}

/// Power-prior node: discounted-likelihood factor plus Gaussian factor.
fn npp_node(study: &StudySet, weights: &[f64]) -> MixtureNode {
    let cond = conditional_theta_unchecked(study, weights);
    MixtureNode {
        logw: discount_factor(study.historical(), weights) + gaussian_factor(&cond),
        mu: cond.mu_p,
        sigma2: cond.sigma2_p,
    }
}

/// Default grid for main-effect marginals: the conditional means under no
/// borrowing and full borrowing, padded by six no-borrowing standard
/// deviations.
pub fn theta_grid(study: &StudySet, points: usize) -> Result<Vec<f64>> {
    let k = study.k();
    let none = conditional_theta_unchecked(study, &vec![0.0; k]);
    let full = conditional_theta_unchecked(study, &vec![1.0; k]);
    let pad = 6.0 * none.sd();
    let lo = none.mu_p.min(full.mu_p) - pad;
    let hi = none.mu_p.max(full.mu_p) + pad;
    if points < 2 {
        return Err(invalid("theta grid needs at least two points"));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// Accumulate a normal mixture onto a grid and normalize.
fn accumulate(nodes: &[(f64, MixtureNode)], grid: &[f64]) -> Result<DensityGrid> {
    let max = nodes
        .iter()
        .map(|(_, n)| n.logw)
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(numerical("all quadrature nodes have zero weight"));
    }
    let mut dens = vec![0.0; grid.len()];
    for (qw, node) in nodes {
        let w = qw * (node.logw - max).exp();
        if !(w > 0.0) {
            continue;
        }
        let inv2 = 0.5 / node.sigma2;
        let norm = w / (2.0 * std::f64::consts::PI * node.sigma2).sqrt();
        for (d, &t) in dens.iter_mut().zip(grid) {
            let z = t - node.mu;
            *d += norm * (-z * z * inv2).exp();
        }
    }
    if dens.iter().any(|d| !d.is_finite()) {
        return Err(numerical("non-finite density during quadrature accumulation"));
    }
    DensityGrid::new(grid.to_vec(), dens)?.normalize()
}

/// Run a node-count-indexed quadrature at `n` and `2n` nodes and insist the
/// normalized densities agree to [`CONVERGENCE_TOL`] relative to the peak.
fn with_node_doubling(
    nodes: usize,
    grid: &[f64],
    build: impl Fn(usize) -> Result<Vec<(f64, MixtureNode)>>,
) -> Result<DensityGrid> {
    let coarse = accumulate(&build(nodes)?, grid)?;
    let fine = accumulate(&build(nodes * 2)?, grid)?;
    let sup = coarse.sup_distance(&fine)?;
    let peak = fine.density().iter().cloned().fold(0.0, f64::max);
    if sup > CONVERGENCE_TOL * peak {
        return Err(numerical(format!(
            "quadrature not converged: node doubling changed the density by {:.3e} (tolerance {:.1e})",
            sup / peak,
            CONVERGENCE_TOL
        )));
    }
    Ok(fine)
}

/// Marginal posterior of the main effect under the single-dataset NPP.
pub fn marginal_theta_npp_single(
    study: &StudySet,
    prior_a0: &PriorSpec,
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    require_k(study, 1)?;
    require_unit_prior(prior_a0)?;
    let grid = theta_grid(study, settings.grid_points)?;
    with_node_doubling(settings.nodes, &grid, |n| {
        Ok(composite_points_on(0.0, 1.0, n)
            .into_iter()
            .map(|(u, qw)| {
                let mut node = npp_node(study, &[u]);
                node.logw += prior_a0.log_density(u);
                (qw, node)
            })
            .collect())
    })
}

/// Marginal posterior of the discounting parameter under the single-dataset
/// NPP, tabulated on `(0, 1)`.
pub fn marginal_a0_npp_single(
    study: &StudySet,
    prior_a0: &PriorSpec,
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    require_k(study, 1)?;
    require_unit_prior(prior_a0)?;
    let points = settings.grid_points.max(64);
    let eps = 1e-9;
    let step = (1.0 - 2.0 * eps) / (points - 1) as f64;
    let pts: Vec<f64> = (0..points).map(|i| eps + step * i as f64).collect();
    let logd: Vec<f64> = pts
        .iter()
        .map(|&a| {
            let node = npp_node(study, &[a]);
            node.logw + prior_a0.log_density(a)
        })
        .collect();
    finish_log_grid(pts, logd)
}

fn finish_log_grid(pts: Vec<f64>, logd: Vec<f64>) -> Result<DensityGrid> {
    let max = logd.iter().cloned().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(numerical("density vanished on the whole grid"));
    }
    let dens: Vec<f64> = logd.iter().map(|l| (l - max).exp()).collect();
    DensityGrid::new(pts, dens)?.normalize()
}

/// A prior for the BHM heterogeneity variance.
#[derive(Clone, Debug)]
pub enum VPrior {
    /// A parametric or tabulated prior on `(0, inf)`.
    Spec(PriorSpec),
    /// A grid-backed induced prior from [`crate::transform::induce_prior_v_single`]
    /// or [`crate::transform::induce_prior_v_multi`].
    Induced(InducedPrior),
    /// The exact (possibly unnormalizable) prior induced on `v` by a prior on
    /// the discounting side, evaluated pointwise through the correspondence.
    /// This is the form to use when the induced prior's tail defeats a
    /// truncated grid.
    InducedFromA0(PriorSpec),
}

impl VPrior {
    fn validate(&self) -> Result<()> {
        match self {
            VPrior::Spec(p) => {
                p.validate()?;
                if p.support() != Support::Positive {
                    return Err(invalid("the v prior must be supported on (0, inf)"));
                }
                Ok(())
            }
            VPrior::Induced(ip) => {
                if ip.side() != Side::OnV {
                    return Err(invalid("induced prior is on the a0 side, expected the v side"));
                }
                Ok(())
            }
            VPrior::InducedFromA0(p) => {
                p.validate()?;
                if p.support() != Support::Unit {
                    return Err(invalid("the a0-side source prior must be supported on (0, 1)"));
                }
                Ok(())
            }
        }
    }

    /// Log prior density up to an additive constant.
    pub fn log_density_unnorm(&self, v: f64, hist: &[NormalSummary]) -> f64 {
        match self {
            VPrior::Spec(p) => p.log_density(v),
            VPrior::Induced(ip) => ip.log_density_unnorm(v),
            VPrior::InducedFromA0(p) => crate::transform::log_induced_v_unnorm(v, p, hist),
        }
    }

    /// Prior mass outside `[v_lo, v_hi]`, for coverage diagnostics.
    fn mass_outside(&self, v_lo: f64, v_hi: f64, hist: &[NormalSummary]) -> f64 {
        match self {
            VPrior::Spec(p) => p.cdf(v_lo) + (1.0 - p.cdf(v_hi)),
            VPrior::Induced(ip) => {
                let g = ip.density();
                let cdf = g.cdf();
                let total = *cdf.last().unwrap();
                let at = |x: f64| -> f64 {
                    let pts = g.points();
                    if x <= pts[0] {
                        return 0.0;
                    }
                    if x >= *pts.last().unwrap() {
                        return 1.0;
                    }
                    let i = pts.partition_point(|&p| p < x).clamp(1, pts.len() - 1);
                    let frac = (x - pts[i - 1]) / (pts[i] - pts[i - 1]);
                    (cdf[i - 1] + frac * (cdf[i] - cdf[i - 1])) / total
                };
                at(v_lo) + (1.0 - at(v_hi))
            }
            VPrior::InducedFromA0(p) => {
                // Source mass inside the attainable range but outside the
                // covered image [f(v_hi), f(v_lo)]. Mass below 1/(1+K) is
                // structurally unattainable, not escaping.
                let (range_lo, range_hi) =
                    if hist.len() == 1 { (0.0, 1.0) } else { f_multi_range(hist) };
                let a_lo = if hist.len() == 1 {
                    crate::transform::f_single(v_hi, &hist[0]).unwrap_or(range_lo)
                } else {
                    f_multi(v_hi, hist).unwrap_or(range_lo)
                };
                let a_hi = if hist.len() == 1 {
                    crate::transform::f_single(v_lo, &hist[0]).unwrap_or(range_hi)
                } else {
                    f_multi(v_lo, hist).unwrap_or(range_hi)
                };
                (p.cdf(a_lo) - p.cdf(range_lo)).max(0.0)
                    + (p.cdf(range_hi) - p.cdf(a_hi)).max(0.0)
            }
        }
    }
}


impl VPrior {
    /// Whether integration should run on the `u = f(v)` side (exact for
    /// priors defined through the correspondence) or on adaptive log-v
    /// panels (robust for arbitrary parametric concentration).
    fn prefers_u_side(&self) -> bool {
        matches!(self, VPrior::InducedFromA0(_))
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            VPrior::Spec(ps) => ps.quantile(p),
            VPrior::Induced(ip) => ip.density().quantile(p),
            VPrior::InducedFromA0(_) => Err(invalid("no direct v-quantile for a0-side priors")),
        }
    }
}

/// Gauss-Legendre nodes on log-v panels sized to the prior's own scale, so
/// that sharply concentrated priors are resolved wherever they sit on
/// `(0, inf)`. Returned weights include the `dv` factor.
fn v_panel_nodes(prior: &VPrior, total_nodes: usize) -> Result<Vec<(f64, f64)>> {
    let lo = prior.quantile(1e-9)?.max(1e-290);
    let hi = prior.quantile(1.0 - 1e-9)?.max(lo * 1.0001);
    let core_lo = prior.quantile(1e-3)?.max(lo);
    let core_hi = prior.quantile(1.0 - 1e-3)?.min(hi);
    let core_width = (core_hi.ln() - core_lo.ln()).max(1e-6);
    let width = (core_width / 6.0).min(1.15);
    let (t0, t1) = (lo.ln(), hi.ln());
    let panels = (((t1 - t0) / width).ceil() as usize).clamp(1, 512);
    let per = (total_nodes / panels).clamp(6, 256);
    let gl = GaussLegendre::new(per);
    let step = (t1 - t0) / panels as f64;
    let mut out = Vec::with_capacity(panels * per);
    for i in 0..panels {
        let a = t0 + step * i as f64;
        for (t, w) in gl.points_on(a, a + step) {
            let v = t.exp();
            out.push((v, w * v));
        }
    }
    Ok(out)
}

/// Marginal posterior of the main effect under the single-dataset BHM with
/// flat hyperprior on the common mean.
///
/// The integral over `v` is mapped to `u = f(v)` on `(0, 1)` before
/// Gauss-Legendre quadrature.
pub fn marginal_theta_bhm_single(
    study: &StudySet,
    prior_v: &VPrior,
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    require_k(study, 1)?;
    prior_v.validate()?;
    let hist = study.historical();
    let h0 = hist[0];
    let gamma = 1.0 / (2.0 * h0.precision());
    let y = h0.weighted_mean();
    let grid = theta_grid(study, settings.grid_points)?;

    // pi(v) a0^{1/2} exp{v a0 Y^2} sigma_p exp{mu_p^2/(2 sigma_p^2)} at one v.
    let node_at = |v: f64, u: f64| -> MixtureNode {
        let cond = conditional_theta_unchecked(study, &[u]);
        let logw = prior_v.log_density_unnorm(v, hist) + 0.5 * u.ln() + v * u * y * y
            + gaussian_factor(&cond);
        MixtureNode { logw, mu: cond.mu_p, sigma2: cond.sigma2_p }
    };

    if prior_v.prefers_u_side() {
        check_v_coverage(prior_v, hist, settings.nodes * 2, &|u| gamma * (1.0 - u) / u)?;
        with_node_doubling(settings.nodes, &grid, |n| {
            Ok(composite_points_on(0.0, 1.0, n)
                .into_iter()
                .map(|(u, qw)| {
                    let v = gamma * (1.0 - u) / u;
                    let mut node = node_at(v, u);
                    node.logw += gamma.ln() - 2.0 * u.ln(); // |dv/du|
                    (qw, node)
                })
                .collect())
        })
    } else {
        with_node_doubling(settings.nodes, &grid, |n| {
            v_panel_nodes(prior_v, n)?
                .into_iter()
                .map(|(v, qw)| {
                    let u = crate::transform::f_single(v, &h0)?;
                    Ok((qw, node_at(v, u)))
                })
                .collect()
        })
    }
}

/// Marginal posterior of the main effect under the multi-dataset BHM with
/// flat hyperprior on the common mean.
///
/// Integrates over `u = f(v)` on the attainable range; the integrand uses
/// the raw hierarchical algebra (`R`, `A`, and the marginal normal obtained
/// by integrating out the study means and the common mean).
pub fn marginal_theta_bhm_multi(
    study: &StudySet,
    prior_v: &VPrior,
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    prior_v.validate()?;
    let hist = study.historical();
    let (a_min, a_max) = f_multi_range(hist);
    let grid = theta_grid(study, settings.grid_points)?;

    if prior_v.prefers_u_side() {
        check_v_coverage(prior_v, hist, settings.nodes * 2, &|u| {
            f_multi_inv(u, hist).unwrap_or(f64::INFINITY)
        })?;
        with_node_doubling(settings.nodes, &grid, |n| {
            composite_points_on(a_min, a_max, n)
                .into_iter()
                .map(|(u, qw)| {
                    let v = f_multi_inv(u, hist)?;
                    let b = bridge_quantities(v, hist)?;
                    let mut node = bhm_multi_kernel(study, v, &b);
                    node.logw += prior_v.log_density_unnorm(v, hist) - b.jacobian.ln();
                    Ok((qw, node))
                })
                .collect()
        })
    } else {
        with_node_doubling(settings.nodes, &grid, |n| {
            v_panel_nodes(prior_v, n)?
                .into_iter()
                .map(|(v, qw)| {
                    let b = bridge_quantities(v, hist)?;
                    let mut node = bhm_multi_kernel(study, v, &b);
                    node.logw += prior_v.log_density_unnorm(v, hist);
                    Ok((qw, node))
                })
                .collect()
        })
    }
}

/// BHM integrand at one `v` (prior and Jacobian excluded), through the raw
/// hierarchical precision algebra.
fn bhm_multi_kernel(
    study: &StudySet,
    v: f64,
    b: &crate::transform::BridgeQuantities,
) -> MixtureNode {
    let v2a = v * v * b.big_a;
    let prec_b = study.current().precision() + 1.0 / v - 1.0 / v2a;
    let sum_yn: f64 = b.y_k.iter().zip(&b.n_k).map(|(y, n)| y * n).sum();
    let mu_b = (study.current().weighted_mean() + sum_yn / v2a) / prec_b;
    let logw = b.log_r - 0.5 * prec_b.ln() + 0.5 * mu_b * mu_b * prec_b;
    MixtureNode { logw, mu: mu_b, sigma2: 1.0 / prec_b }
}

/// Prior specification for the BNPP: either directly on the global
/// discounting parameter or on the matched heterogeneity variance.
#[derive(Clone, Debug)]
pub enum BnppPrior {
    OnA0(PriorSpec),
    OnV(VPrior),
}

/// Marginal posterior of the main effect under the BNPP.
///
/// With a prior on the global `a0` this is a single Gauss-Legendre pass over
/// the attainable range `(1/(1+K), 1)`; each node carries the deterministic
/// per-dataset weights `h_k`. With a prior on `v` the same kernel is driven
/// through the correspondence (`R`-factor times the `h_k`-weighted normal).
pub fn marginal_theta_bnpp(
    study: &StudySet,
    prior: &BnppPrior,
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    let hist = study.historical();
    let (a_min, a_max) = f_multi_range(hist);
    let grid = theta_grid(study, settings.grid_points)?;

    match prior {
        BnppPrior::OnA0(p) => {
            require_unit_prior(p)?;
            with_node_doubling(settings.nodes, &grid, |n| {
                composite_points_on(a_min, a_max, n)
                    .into_iter()
                    .map(|(u, qw)| {
                        let v = f_multi_inv(u, hist)?;
                        let weights = h_weights(v, hist)?;
                        let mut node = npp_node(study, &weights);
                        node.logw += p.log_density(u);
                        Ok((qw, node))
                    })
                    .collect()
            })
        }
        BnppPrior::OnV(vp) => {
            vp.validate()?;
            // pi(v) R(v) sigma_p exp{mu_p^2/(2 sigma_p^2)} with h_k weights.
            let node_at = |v: f64| -> Result<MixtureNode> {
                let b = bridge_quantities(v, hist)?;
                let weights = h_weights(v, hist)?;
                let cond = conditional_theta_unchecked(study, &weights);
                let logw =
                    vp.log_density_unnorm(v, hist) + b.log_r + gaussian_factor(&cond);
                Ok(MixtureNode { logw, mu: cond.mu_p, sigma2: cond.sigma2_p })
            };
            if vp.prefers_u_side() {
                check_v_coverage(vp, hist, settings.nodes * 2, &|u| {
                    f_multi_inv(u, hist).unwrap_or(f64::INFINITY)
                })?;
                with_node_doubling(settings.nodes, &grid, |n| {
                    composite_points_on(a_min, a_max, n)
                        .into_iter()
                        .map(|(u, qw)| {
                            let v = f_multi_inv(u, hist)?;
                            let b = bridge_quantities(v, hist)?;
                            let mut node = node_at(v)?;
                            node.logw -= b.jacobian.ln();
                            Ok((qw, node))
                        })
                        .collect()
                })
            } else {
                with_node_doubling(settings.nodes, &grid, |n| {
                    v_panel_nodes(vp, n)?.into_iter().map(|(v, qw)| Ok((qw, node_at(v)?))).collect()
                })
            }
        }
    }
}

/// Marginal posterior of the main effect under the iNPP with independent
/// priors on each dataset's discounting parameter.
///
/// `K = 1` coincides with the single-dataset NPP; `K = 2` uses a tensor
/// Gauss-Legendre rule; `K >= 3` must go through the sampler.
pub fn marginal_theta_inpp(
    study: &StudySet,
    priors_a0: &[PriorSpec],
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    check_inpp_priors(study, priors_a0)?;
    match study.k() {
        1 => marginal_theta_npp_single(study, &priors_a0[0], settings),
        2 => {
            let grid = theta_grid(study, settings.grid_points)?;
            with_node_doubling(settings.nodes_2d, &grid, |n| {
                let pts = composite_points_on(0.0, 1.0, n);
                let mut nodes = Vec::with_capacity(pts.len() * pts.len());
                for &(u1, w1) in &pts {
                    let lp1 = priors_a0[0].log_density(u1);
                    for &(u2, w2) in &pts {
                        let mut node = npp_node(study, &[u1, u2]);
                        node.logw += lp1 + priors_a0[1].log_density(u2);
                        nodes.push((w1 * w2, node));
                    }
                }
                Ok(nodes)
            })
        }
        k => Err(invalid(format!(
            "deterministic iNPP marginalization supports K <= 2; K = {k} requires the \
             Metropolis-within-Gibbs sampler (mcmc::mwg_inpp)"
        ))),
    }
}

/// Which model's discounting-parameter marginals to compute.
#[derive(Clone, Debug)]
pub enum A0kModel {
    Bnpp(BnppPrior),
    Inpp(Vec<PriorSpec>),
}

/// Marginal posteriors of each dataset's discounting parameter.
///
/// BNPP: the v-posterior is computed by one-dimensional quadrature with the
/// main effect integrated out, then pushed through `a0k = h_k(v)` with the
/// `h_k` Jacobian. iNPP (`K <= 2`): tensor-grid marginalization.
pub fn marginal_a0k(
    study: &StudySet,
    model: &A0kModel,
    settings: &QuadratureSettings,
) -> Result<Vec<DensityGrid>> {
    match model {
        A0kModel::Bnpp(prior) => marginal_a0k_bnpp(study, prior, settings),
        A0kModel::Inpp(priors) => marginal_a0k_inpp(study, priors, settings),
    }
}

/// Collapsed (theta-integrated) BNPP posterior log density at `v`, in the
/// v-parameterization. For a0-side priors this includes the
/// change-of-variables factor `|df/dv|`; it is the target of the BNPP
/// sampler's variance step.
pub(crate) fn bnpp_log_collapsed_v(study: &StudySet, prior: &BnppPrior, v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let hist = study.historical();
    let b = bridge_quantities(v, hist)?;
    let weights = h_weights(v, hist)?;
    let cond = conditional_theta_unchecked(study, &weights);
    Ok(match prior {
        BnppPrior::OnA0(p) => {
            p.log_density(b.a0)
                + b.jacobian.ln()
                + discount_factor(hist, &weights)
                + gaussian_factor(&cond)
        }
        BnppPrior::OnV(vp) => {
            vp.log_density_unnorm(v, hist) + b.log_r + gaussian_factor(&cond)
        }
    })
}

/// Collapsed (theta-integrated) BNPP posterior log density in `u = f(v)`.
pub(crate) fn bnpp_log_posterior_u(study: &StudySet, prior: &BnppPrior, u: f64) -> Result<f64> {
    let hist = study.historical();
    let v = f_multi_inv(u, hist)?;
    let weights = h_weights(v, hist)?;
    let cond = conditional_theta_unchecked(study, &weights);
    Ok(match prior {
        BnppPrior::OnA0(p) => {
            discount_factor(hist, &weights) + gaussian_factor(&cond) + p.log_density(u)
        }
        BnppPrior::OnV(vp) => {
            let b = bridge_quantities(v, hist)?;
            vp.log_density_unnorm(v, hist) - b.jacobian.ln() + b.log_r + gaussian_factor(&cond)
        }
    })
}

fn marginal_a0k_bnpp(
    study: &StudySet,
    prior: &BnppPrior,
    settings: &QuadratureSettings,
) -> Result<Vec<DensityGrid>> {
    match prior {
        BnppPrior::OnA0(p) => require_unit_prior(p)?,
        BnppPrior::OnV(vp) => vp.validate()?,
    }
    let hist = study.historical();
    let points = settings.grid_points.max(64);
    let eps = 1e-6;
    let step = (1.0 - 2.0 * eps) / (points - 1) as f64;
    let mut out = Vec::with_capacity(hist.len());
    for k in 0..hist.len() {
        let pts: Vec<f64> = (0..points).map(|i| eps + step * i as f64).collect();
        let mut logd = Vec::with_capacity(points);
        for &a in &pts {
            let v = invert_h_k(a, k, hist)?;
            let u = f_multi(v, hist)?;
            // p_{a0k}(a) = p_u(f(v)) |df/dv| / |dh_k/dv|
            let lp = bnpp_log_posterior_u(study, prior, u)?;
            let b = bridge_quantities(v, hist)?;
            let dh = h_weight_derivative(v, k, hist)?.abs();
            logd.push(lp + b.jacobian.ln() - dh.ln());
        }
        out.push(finish_log_grid(pts, logd)?);
    }
    Ok(out)
}

/// Invert the strictly decreasing map `v -> h_k(v)` by bracketed bisection
/// on `log v`.
fn invert_h_k(a: f64, k: usize, hist: &[NormalSummary]) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("a0k must be in (0, 1), got {a}")));
    }
    let h_at = |v: f64| -> Result<f64> { Ok(h_weights(v, hist)?[k]) };
    let mut lo = 1e-14;
    while h_at(lo)? < a {
        lo /= 16.0;
        if lo < 1e-290 {
            return Err(numerical(format!("failed to bracket h_k inverse at a = {a}")));
        }
    }
    let mut hi = 1.0;
    while h_at(hi)? > a {
        hi *= 16.0;
        if hi > 1e290 {
            return Err(numerical(format!("failed to bracket h_k inverse at a = {a}")));
        }
    }
    let mut v = (0.5 * (lo.ln() + hi.ln())).exp();
    for _ in 0..200 {
        let hv = h_at(v)?;
        if (hv - a).abs() < 1e-13 {
            return Ok(v);
        }
        if hv > a {
            lo = v;
        } else {
            hi = v;
        }
        v = (0.5 * (lo.ln() + hi.ln())).exp();
    }
    Ok(v)
}

fn marginal_a0k_inpp(
    study: &StudySet,
    priors_a0: &[PriorSpec],
    settings: &QuadratureSettings,
) -> Result<Vec<DensityGrid>> {
    check_inpp_priors(study, priors_a0)?;
    match study.k() {
        1 => Ok(vec![marginal_a0_npp_single(study, &priors_a0[0], settings)?]),
        2 => {
            let points = settings.grid_points.max(64);
            let eps = 1e-9;
            let step = (1.0 - 2.0 * eps) / (points - 1) as f64;
            let quad_pts = composite_points_on(0.0, 1.0, settings.nodes_2d.max(128));
            let mut out = Vec::with_capacity(2);
            for k in 0..2 {
                let other = 1 - k;
                let pts: Vec<f64> = (0..points).map(|i| eps + step * i as f64).collect();
                let logd: Vec<f64> = pts
                    .iter()
                    .map(|&a| {
                        // Integrate the collapsed kernel over the other weight.
                        let terms: Vec<f64> = quad_pts
                            .iter()
                            .map(|&(u, qw)| {
                                let weights = if k == 0 { [a, u] } else { [u, a] };
                                let node = npp_node(study, &weights);
                                node.logw + priors_a0[other].log_density(u) + qw.ln()
                            })
                            .collect();
                        log_sum_exp(&terms) + priors_a0[k].log_density(a)
                    })
                    .collect();
                out.push(finish_log_grid(pts, logd)?);
            }
            Ok(out)
        }
        k => Err(invalid(format!(
            "deterministic iNPP marginalization supports K <= 2; K = {k} requires the \
             Metropolis-within-Gibbs sampler (mcmc::mwg_inpp)"
        ))),
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Posterior under a fixed common discounting weight (`a0 = 0`: no borrowing;
/// `a0 = 1`: full pooling of the historical data), tabulated on the shared
/// grid so it can be compared with the adaptive models.
pub fn reference_posterior(
    study: &StudySet,
    weight: f64,
    settings: &QuadratureSettings,
) -> Result<DensityGrid> {
    let w = WeightAssignment::constant(study.k(), weight)?;
    let cond = conditional_theta(study, &w)?;
    cond.tabulate(&theta_grid(study, settings.grid_points)?)
}

fn require_k(study: &StudySet, k: usize) -> Result<()> {
    if study.k() != k {
        return Err(invalid(format!("this operation requires K = {k}, got K = {}", study.k())));
    }
    Ok(())
}

fn require_unit_prior(prior: &PriorSpec) -> Result<()> {
    prior.validate()?;
    if prior.support() != Support::Unit {
        return Err(invalid("the discounting prior must be supported on (0, 1)"));
    }
    Ok(())
}

fn check_inpp_priors(study: &StudySet, priors: &[PriorSpec]) -> Result<()> {
    if priors.len() != study.k() {
        return Err(invalid(format!("expected {} priors, got {}", study.k(), priors.len())));
    }
    for p in priors {
        require_unit_prior(p)?;
    }
    Ok(())
}

/// Reject priors whose mass is not covered by the quadrature's v-range.
fn check_v_coverage(
    prior_v: &VPrior,
    hist: &[NormalSummary],
    nodes: usize,
    v_of_u: &dyn Fn(f64) -> f64,
) -> Result<()> {
    // Innermost composite nodes define the covered u-range.
    let (a_min, a_max) = if hist.len() == 1 { (0.0, 1.0) } else { f_multi_range(hist) };
    let pts = composite_points_on(a_min, a_max, nodes);
    let u_first = pts.first().unwrap().0;
    let u_last = pts.last().unwrap().0;
    let (v_hi, v_lo) = (v_of_u(u_first), v_of_u(u_last));
    let outside = prior_v.mass_outside(v_lo, v_hi, hist);
    if outside > PRIOR_TAIL_TOL {
        return Err(numerical(format!(
            "prior mass {outside:.3e} lies outside the v-range [{v_lo:.3e}, {v_hi:.3e}] covered \
             by the quadrature (tolerance {PRIOR_TAIL_TOL:.1e})"
        )));
    }
    Ok(())
}
