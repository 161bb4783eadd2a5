//! Sampling-based inference: Gibbs for the BHM, Metropolis-within-Gibbs for
//! the BNPP and iNPP, a Bernoulli-likelihood BHM for binary outcomes, and
//! chain diagnostics.
//!
//! The samplers are a stochastic cross-check of the quadrature engine and
//! the only inference path for the iNPP with three or more historical
//! datasets. All randomness flows from one seed through per-chain
//! substreams; identical configuration gives bit-identical draws. Chains run
//! sequentially and updates within a chain are strictly ordered.

use rand::{Rng, RngExt, SeedableRng};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::approx::TwoArmBinomialSummary;
use crate::data::{NormalSummary, StudySet};
use crate::error::{invalid, numerical, Result};
use crate::posterior::{BnppPrior, VPrior};
use crate::prior::PriorSpec;
use crate::transform::{f_multi, h_weights};

/// Chain layout, seed, and proposal adaptation targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Initial random-walk proposal scale (adapted during burn-in).
    pub proposal_scale: f64,
    /// Acceptance rate targeted by the burn-in adaptation.
    pub target_accept: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::four_by_10k(20240817)
    }
}

impl SamplerConfig {
    /// 4 chains x 10,000 iterations with 5,000 burn-in.
    pub fn four_by_10k(seed: u64) -> Self {
        SamplerConfig {
            chains: 4,
            iterations: 10_000,
            burn_in: 5_000,
            seed,
            proposal_scale: 1.0,
            target_accept: 0.44,
        }
    }

    /// 4 chains x 8,000 iterations with 4,000 burn-in.
    pub fn four_by_8k(seed: u64) -> Self {
        SamplerConfig { iterations: 8_000, burn_in: 4_000, ..SamplerConfig::four_by_10k(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(invalid("at least two chains are required"));
        }
        if !(self.burn_in > 0 && self.burn_in < self.iterations) {
            return Err(invalid("need 0 < burn_in < iterations"));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(invalid("proposal scale must be positive"));
        }
        if !(0.1..=0.6).contains(&self.target_accept) {
            return Err(invalid("target acceptance rate must lie in [0.1, 0.6]"));
        }
        Ok(())
    }
}

/// Per-parameter convergence diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub ess: f64,
    pub split_rhat: f64,
    pub mcse: f64,
}

/// Draws from one sampler run: per-parameter chains-by-iterations matrices
/// (burn-in included), plus diagnostics computed on the retained draws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSet {
    names: Vec<String>,
    draws: Vec<Vec<Vec<f64>>>,
    burn_in: usize,
    seed: u64,
    diagnostics: Vec<ParamDiagnostics>,
    warnings: Vec<String>,
}

impl ChainSet {
    fn assemble(
        names: Vec<String>,
        draws: Vec<Vec<Vec<f64>>>,
        burn_in: usize,
        seed: u64,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let mut diags = Vec::with_capacity(names.len());
        for chains in &draws {
            let kept: Vec<Vec<f64>> = chains.iter().map(|c| c[burn_in..].to_vec()).collect();
            diags.push(diagnostics(&kept)?);
        }
        Ok(ChainSet { names, draws, burn_in, seed, diagnostics: diags, warnings })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| invalid(format!("no parameter named {name:?} in this chain set")))
    }

    /// Full chains-by-iterations matrix, burn-in included.
    pub fn draws(&self, name: &str) -> Result<&Vec<Vec<f64>>> {
        Ok(&self.draws[self.index_of(name)?])
    }

    /// Post-burn-in draws flattened across chains.
    pub fn kept(&self, name: &str) -> Result<Vec<f64>> {
        let chains = self.draws(name)?;
        let mut out = Vec::with_capacity(chains.len() * (chains[0].len() - self.burn_in));
        for c in chains {
            out.extend_from_slice(&c[self.burn_in..]);
        }
        Ok(out)
    }

    pub fn diagnostics_for(&self, name: &str) -> Result<ParamDiagnostics> {
        Ok(self.diagnostics[self.index_of(name)?])
    }

    pub fn all_diagnostics(&self) -> impl Iterator<Item = (&str, ParamDiagnostics)> {
        self.names.iter().map(|n| n.as_str()).zip(self.diagnostics.iter().copied())
    }

    /// Long-format CSV: `chain,iteration,parameter,value` (burn-in included).
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("chain,iteration,parameter,value\n");
        for (name, chains) in self.names.iter().zip(&self.draws) {
            for (ci, chain) in chains.iter().enumerate() {
                for (it, v) in chain.iter().enumerate() {
                    out.push_str(&format!("{ci},{it},{name},{v:.16e}\n"));
                }
            }
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic per-chain substream.
fn chain_rng(seed: u64, chain: usize) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(splitmix64(seed ^ splitmix64(chain as u64 + 1)))
}

fn draw_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    mean + sd * z
}

/// Inverse-gamma draw via the reciprocal gamma.
fn draw_inverse_gamma<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    let g = rand_distr::Gamma::new(shape, 1.0 / scale)
        .map_err(|e| numerical(format!("bad inverse-gamma parameters: {e}")))?
        .sample(rng);
    let v = 1.0 / g;
    if !(v > 0.0) || !v.is_finite() {
        return Err(numerical(format!("non-positive heterogeneity variance draw: {v}")));
    }
    Ok(v)
}

/// Random-walk Metropolis proposal scale with Robbins-Monro adaptation,
/// frozen after burn-in so the chain keeps detailed balance.
struct AdaptiveScale {
    log_scale: f64,
    target: f64,
    step: f64,
    accepts: u64,
    proposals: u64,
}

impl AdaptiveScale {
    fn new(scale: f64, target: f64) -> Self {
        AdaptiveScale { log_scale: scale.ln(), target, step: 0.0, accepts: 0, proposals: 0 }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

/// One random-walk Metropolis step on an unconstrained coordinate. Returns
/// the new state, its log density, and whether the proposal was accepted.
fn rw_step<R: Rng>(
    rng: &mut R,
    x: f64,
    logf_x: f64,
    logf: &mut impl FnMut(f64) -> f64,
    scale: &mut AdaptiveScale,
    adapting: bool,
) -> (f64, f64, bool) {
    let prop = draw_normal(rng, x, scale.scale());
    let logf_prop = logf(prop);
    let log_ratio = logf_prop - logf_x;
    let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    scale.proposals += 1;
    if adapting {
        scale.step += 1.0;
        scale.log_scale += (accept_prob - scale.target) / scale.step.powf(0.6);
        scale.log_scale = scale.log_scale.clamp(-20.0, 20.0);
    }
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        scale.accepts += 1;
        (prop, logf_prop, true)
    } else {
        (x, logf_x, false)
    }
}

/// Slice sampler on one coordinate (stepping-out and shrinkage).
fn slice_step<R: Rng>(
    rng: &mut R,
    x0: f64,
    logf: &mut impl FnMut(f64) -> f64,
    width: f64,
) -> Result<f64> {
    let logf_x0 = logf(x0);
    if !logf_x0.is_finite() {
        return Err(numerical("slice sampler started outside the support"));
    }
    let e: f64 = rng.random::<f64>();
    let y = logf_x0 + e.ln();
    let u: f64 = rng.random();
    let mut lo = x0 - width * u;
    let mut hi = lo + width;
    for _ in 0..200 {
        if logf(lo) <= y {
            break;
        }
        lo -= width;
    }
    for _ in 0..200 {
        if logf(hi) <= y {
            break;
        }
        hi += width;
    }
    for _ in 0..200 {
        let cand = lo + (hi - lo) * rng.random::<f64>();
        if logf(cand) > y {
            return Ok(cand);
        }
        if cand < x0 {
            lo = cand;
        } else {
            hi = cand;
        }
    }
    Err(numerical("slice sampler failed to find an acceptable point"))
}

/// How the heterogeneity-variance full conditional is drawn: conjugate
/// inverse-gamma when the prior allows it, slice sampling on `log v`
/// otherwise.
enum VStep<'a> {
    Conjugate { shape: f64, scale: f64 },
    Slice(&'a VPrior),
}

impl VStep<'_> {
    fn from_prior(prior: &VPrior, dim: f64) -> VStep<'_> {
        match prior {
            VPrior::Spec(PriorSpec::InverseGamma { shape, scale }) => {
                VStep::Conjugate { shape: shape + dim / 2.0, scale: *scale }
            }
            other => VStep::Slice(other),
        }
    }

    fn draw<R: Rng>(
        &self,
        rng: &mut R,
        v: f64,
        dim: f64,
        sum_sq: f64,
        hist: &[NormalSummary],
    ) -> Result<f64> {
        match self {
            VStep::Conjugate { shape, scale } => {
                draw_inverse_gamma(rng, *shape, scale + 0.5 * sum_sq)
            }
            VStep::Slice(prior) => {
                let mut logf = |t: f64| {
                    let vv = t.exp();
                    prior.log_density_unnorm(vv, hist) - 0.5 * dim * t - 0.5 * sum_sq / vv + t
                };
                let t = slice_step(rng, v.ln(), &mut logf, 1.0)?;
                Ok(t.exp())
            }
        }
    }
}

/// Gibbs sampler for the normal-data BHM with flat hyperprior on the common
/// mean.
///
/// Full conditionals: each study mean is normal, the common mean is normal
/// with variance `v/(K+1)`, and `v` is conjugate inverse-gamma (or slice
/// sampled on `log v` for other priors).
pub fn gibbs_bhm(study: &StudySet, prior_v: &VPrior, cfg: &SamplerConfig) -> Result<ChainSet> {
    cfg.validate()?;
    let hist = study.historical();
    let k = hist.len();
    let dim = (k + 1) as f64;
    let vstep = VStep::from_prior(prior_v, dim);

    let mut names = vec!["theta".to_string()];
    for i in 1..=k {
        names.push(format!("theta0_{i}"));
    }
    names.push("mu".to_string());
    names.push("v".to_string());
    let n_params = names.len();

    let mut draws = vec![vec![Vec::with_capacity(cfg.iterations); cfg.chains]; n_params];
    for chain in 0..cfg.chains {
        let mut rng = chain_rng(cfg.seed, chain);
        let mut theta = study.current().ybar();
        let mut theta0: Vec<f64> = hist.iter().map(NormalSummary::ybar).collect();
        let mut mu = (theta + theta0.iter().sum::<f64>()) / dim;
        let mut v = 1.0;

        for _ in 0..cfg.iterations {
            // theta | mu, v
            let prec = study.current().precision() + 1.0 / v;
            let mean = (study.current().weighted_mean() + mu / v) / prec;
            theta = draw_normal(&mut rng, mean, (1.0 / prec).sqrt());
            // theta0_k | mu, v
            for (t0, h) in theta0.iter_mut().zip(hist) {
                let prec = h.precision() + 1.0 / v;
                let mean = (h.weighted_mean() + mu / v) / prec;
                *t0 = draw_normal(&mut rng, mean, (1.0 / prec).sqrt());
            }
            // mu | thetas, v (flat prior)
            let mean = (theta + theta0.iter().sum::<f64>()) / dim;
            mu = draw_normal(&mut rng, mean, (v / dim).sqrt());
            // v | thetas, mu
            let sum_sq =
                (theta - mu).powi(2) + theta0.iter().map(|t| (t - mu).powi(2)).sum::<f64>();
            v = vstep.draw(&mut rng, v, dim, sum_sq, hist)?;

            draws[0][chain].push(theta);
            for (i, t0) in theta0.iter().enumerate() {
                draws[1 + i][chain].push(*t0);
            }
            draws[1 + k][chain].push(mu);
            draws[2 + k][chain].push(v);
        }
    }
    ChainSet::assemble(names, draws, cfg.burn_in, cfg.seed, Vec::new())
}

/// Metropolis-within-Gibbs sampler for the BNPP.
///
/// The main effect is drawn exactly from its conditional normal given `v`;
/// `v` moves by random-walk Metropolis on `log v` against the collapsed
/// (theta-integrated) posterior. The global `a0 = f(v)` and the per-dataset
/// weights `h_k(v)` are reported as derived chains.
pub fn mwg_bnpp(study: &StudySet, prior: &BnppPrior, cfg: &SamplerConfig) -> Result<ChainSet> {
    cfg.validate()?;
    let hist = study.historical();
    let k = hist.len();

    let mut names = vec!["theta".to_string(), "v".to_string(), "a0".to_string()];
    for i in 1..=k {
        names.push(format!("a0_{i}"));
    }
    let n_params = names.len();

    let mut draws = vec![vec![Vec::with_capacity(cfg.iterations); cfg.chains]; n_params];
    let mut warnings = Vec::new();
    for chain in 0..cfg.chains {
        let mut rng = chain_rng(cfg.seed, chain);
        let mut scale = AdaptiveScale::new(cfg.proposal_scale, cfg.target_accept);
        // Start in the middle of the attainable range.
        let mid = 0.5 * (1.0 / (1.0 + k as f64) + 1.0);
        let mut t = crate::transform::f_multi_inv(mid, hist)?.ln();
        let mut logf = |t: f64| match crate::posterior::bnpp_log_collapsed_v(study, prior, t.exp())
        {
            Ok(l) => l + t,
            Err(_) => f64::NEG_INFINITY,
        };
        let mut logf_t = logf(t);
        if !logf_t.is_finite() {
            return Err(numerical("BNPP sampler initialization has zero density"));
        }
        let mut post_accepts = 0u64;
        let mut post_props = 0u64;

        for it in 0..cfg.iterations {
            let adapting = it < cfg.burn_in;
            let (t_new, logf_new, accepted) =
                rw_step(&mut rng, t, logf_t, &mut logf, &mut scale, adapting);
            t = t_new;
            logf_t = logf_new;
            if logf_t.is_nan() {
                return Err(numerical("divergent log density in the BNPP sampler"));
            }
            if !adapting {
                post_props += 1;
                post_accepts += accepted as u64;
            }
            let v = t.exp();
            let weights = h_weights(v, hist)?;
            let cond = crate::posterior::conditional_theta(
                study,
                &crate::posterior::WeightAssignment::new(weights.clone())?,
            )?;
            let theta = draw_normal(&mut rng, cond.mu_p, cond.sd());

            draws[0][chain].push(theta);
            draws[1][chain].push(v);
            draws[2][chain].push(f_multi(v, hist)?);
            for (i, w) in weights.iter().enumerate() {
                draws[3 + i][chain].push(*w);
            }
        }
        let rate = post_accepts as f64 / post_props.max(1) as f64;
        if !(0.05..=0.95).contains(&rate) {
            warnings.push(format!(
                "chain {chain}: post-adaptation acceptance rate {rate:.3} outside [0.05, 0.95]"
            ));
        }
    }
    ChainSet::assemble(names, draws, cfg.burn_in, cfg.seed, warnings)
}

/// Metropolis-within-Gibbs sampler for the iNPP.
///
/// The main effect is drawn exactly given the weights; each discounting
/// parameter moves by random-walk Metropolis on its logit against the joint,
/// with the normalizing constant recomputed at every proposal.
pub fn mwg_inpp(
    study: &StudySet,
    priors_a0: &[PriorSpec],
    cfg: &SamplerConfig,
) -> Result<ChainSet> {
    cfg.validate()?;
    let hist = study.historical();
    let k = hist.len();
    if priors_a0.len() != k {
        return Err(invalid(format!("expected {k} priors, got {}", priors_a0.len())));
    }
    for p in priors_a0 {
        p.validate()?;
    }

    let mut names = vec!["theta".to_string()];
    for i in 1..=k {
        names.push(format!("a0_{i}"));
    }
    let n_params = names.len();

    // Joint log density in (theta, a) up to constants; the discounted
    // likelihood's normalizing constant enters through S and T.
    let log_joint = |theta: f64, a: &[f64]| -> f64 {
        let mut s = 0.0;
        let mut t = 0.0;
        for (h, &w) in hist.iter().zip(a) {
            s += w * h.precision();
            t += w * h.weighted_mean();
        }
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        let cur = study.current();
        let mut l = -0.5 * cur.precision() * (theta - cur.ybar()).powi(2);
        l += 0.5 * s.ln() - 0.5 * s * theta * theta + t * theta - t * t / (2.0 * s);
        for (p, &w) in priors_a0.iter().zip(a) {
            l += p.log_density(w);
        }
        l
    };

    let logit = |a: f64| (a / (1.0 - a)).ln();
    let expit = |z: f64| 1.0 / (1.0 + (-z).exp());

    let mut draws = vec![vec![Vec::with_capacity(cfg.iterations); cfg.chains]; n_params];
    let mut warnings = Vec::new();
    for chain in 0..cfg.chains {
        let mut rng = chain_rng(cfg.seed, chain);
        let mut scales: Vec<AdaptiveScale> =
            (0..k).map(|_| AdaptiveScale::new(cfg.proposal_scale, cfg.target_accept)).collect();
        let mut a: Vec<f64> = vec![0.5; k];
        let mut theta;
        let mut post_accepts = vec![0u64; k];
        let mut post_props = vec![0u64; k];

        for it in 0..cfg.iterations {
            let adapting = it < cfg.burn_in;
            // theta | a: exact conditional normal.
            let cond = crate::posterior::conditional_theta(
                study,
                &crate::posterior::WeightAssignment::new(a.clone())?,
            )?;
            theta = draw_normal(&mut rng, cond.mu_p, cond.sd());

            // a0k | theta, rest: random walk on logit(a0k).
            for j in 0..k {
                let z = logit(a[j]);
                let a_ref = &a;
                let mut logf = |z_new: f64| {
                    let mut a_new = a_ref.clone();
                    let aj = expit(z_new);
                    a_new[j] = aj;
                    // logit Jacobian: log a + log(1 - a).
                    log_joint(theta, &a_new) + aj.ln() + (1.0 - aj).ln()
                };
                let logf_z = logf(z);
                let (z_new, logf_new, accepted) =
                    rw_step(&mut rng, z, logf_z, &mut logf, &mut scales[j], adapting);
                if logf_new.is_nan() {
                    return Err(numerical("divergent log density in the iNPP sampler"));
                }
                a[j] = expit(z_new);
                if !adapting {
                    post_props[j] += 1;
                    post_accepts[j] += accepted as u64;
                }
            }

            draws[0][chain].push(theta);
            for (i, w) in a.iter().enumerate() {
                draws[1 + i][chain].push(*w);
            }
        }
        for j in 0..k {
            let rate = post_accepts[j] as f64 / post_props[j].max(1) as f64;
            if !(0.05..=0.95).contains(&rate) {
                warnings.push(format!(
                    "chain {chain}, a0_{}: post-adaptation acceptance rate {rate:.3} outside \
                     [0.05, 0.95]",
                    j + 1
                ));
            }
        }
    }
    ChainSet::assemble(names, draws, cfg.burn_in, cfg.seed, warnings)
}

fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// BHM with exact Bernoulli likelihoods on two-arm binary trials.
///
/// Each study `j` has a control log-odds `gamma_j` with a flat prior and a
/// log-odds-ratio `theta_j`; the log-ORs are exchangeable `N(mu, v)` with a
/// flat prior on `mu`. Non-conjugate coordinates move by adaptive random-walk
/// Metropolis. The first trial is the current study; its log-OR is reported
/// as `theta`.
///
/// With `prior_only` the likelihood is switched off and `gamma`, `mu` are
/// frozen, so the retained draws of `v` recover its prior exactly.
pub fn mh_bernoulli_bhm(
    trials: &[TwoArmBinomialSummary],
    prior_v: &VPrior,
    cfg: &SamplerConfig,
    prior_only: bool,
) -> Result<ChainSet> {
    cfg.validate()?;
    if trials.len() < 2 {
        return Err(invalid(
            "the Bernoulli BHM needs a current trial and at least one historical trial",
        ));
    }
    let j_total = trials.len();
    let dim = j_total as f64;
    let vstep = VStep::from_prior(prior_v, dim);
    // Induced v-priors are evaluated at the historical trials' approximate
    // normal summaries (sample size one, mean log-OR, variance Var(log-OR)).
    let hist_approx: Vec<NormalSummary> = trials[1..]
        .iter()
        .map(|t| crate::approx::to_normal_summary(&crate::approx::log_or(t)?))
        .collect::<Result<_>>()?;

    let loglik = |trial: &TwoArmBinomialSummary, gamma: f64, theta: f64| -> f64 {
        let lc = trial.y_c() as f64 * gamma - trial.n_c() as f64 * softplus(gamma);
        let eta = gamma + theta;
        let lt = trial.y_t() as f64 * eta - trial.n_t() as f64 * softplus(eta);
        lc + lt
    };

    let mut names = vec!["theta".to_string()];
    for i in 1..j_total {
        names.push(format!("theta0_{i}"));
    }
    names.push("mu".to_string());
    names.push("v".to_string());
    if !prior_only {
        names.push("gamma".to_string());
        for i in 1..j_total {
            names.push(format!("gamma0_{i}"));
        }
    }
    let n_params = names.len();

    let mut draws = vec![vec![Vec::with_capacity(cfg.iterations); cfg.chains]; n_params];
    let mut warnings = Vec::new();
    for chain in 0..cfg.chains {
        let mut rng = chain_rng(cfg.seed, chain);
        let mut gammas: Vec<f64> = trials
            .iter()
            .map(|t| {
                let p = t.y_c() as f64 / t.n_c() as f64;
                (p / (1.0 - p)).ln()
            })
            .collect();
        let mut thetas: Vec<f64> = trials
            .iter()
            .map(|t| crate::approx::log_or(t).map(|a| a.theta_hat))
            .collect::<Result<_>>()?;
        let mut mu = if prior_only { 0.0 } else { thetas.iter().sum::<f64>() / dim };
        let mut v: f64 = 1.0;
        let mut g_scales: Vec<AdaptiveScale> = (0..j_total)
            .map(|_| AdaptiveScale::new(cfg.proposal_scale * 0.5, cfg.target_accept))
            .collect();
        let mut t_scales: Vec<AdaptiveScale> = (0..j_total)
            .map(|_| AdaptiveScale::new(cfg.proposal_scale * 0.5, cfg.target_accept))
            .collect();
        let mut post_accepts = 0u64;
        let mut post_props = 0u64;

        for it in 0..cfg.iterations {
            let adapting = it < cfg.burn_in;
            for j in 0..j_total {
                if prior_only {
                    // Exact normal conditional when the likelihood is off;
                    // gamma_j and mu stay frozen.
                    thetas[j] = draw_normal(&mut rng, mu, v.sqrt());
                    continue;
                }
                // gamma_j | rest.
                {
                    let theta_j = thetas[j];
                    let trial = &trials[j];
                    let mut logf = |g: f64| loglik(trial, g, theta_j);
                    let logf_g = logf(gammas[j]);
                    let (g, _, acc) =
                        rw_step(&mut rng, gammas[j], logf_g, &mut logf, &mut g_scales[j], adapting);
                    gammas[j] = g;
                    if !adapting {
                        post_props += 1;
                        post_accepts += acc as u64;
                    }
                }
                // theta_j | rest.
                {
                    let gamma_j = gammas[j];
                    let trial = &trials[j];
                    let mut logf = |t: f64| loglik(trial, gamma_j, t) - 0.5 * (t - mu).powi(2) / v;
                    let logf_t = logf(thetas[j]);
                    let (t, _, acc) =
                        rw_step(&mut rng, thetas[j], logf_t, &mut logf, &mut t_scales[j], adapting);
                    thetas[j] = t;
                    if !adapting {
                        post_props += 1;
                        post_accepts += acc as u64;
                    }
                }
            }
            if !prior_only {
                // mu | thetas, v (flat prior).
                mu = draw_normal(&mut rng, thetas.iter().sum::<f64>() / dim, (v / dim).sqrt());
            }
            // v | thetas, mu.
            let sum_sq: f64 = thetas.iter().map(|t| (t - mu).powi(2)).sum();
            v = vstep.draw(&mut rng, v, dim, sum_sq, &hist_approx)?;

            for (i, t) in thetas.iter().enumerate() {
                draws[i][chain].push(*t);
            }
            draws[j_total][chain].push(mu);
            draws[j_total + 1][chain].push(v);
            if !prior_only {
                for (i, g) in gammas.iter().enumerate() {
                    draws[j_total + 2 + i][chain].push(*g);
                }
            }
        }
        if !prior_only {
            let rate = post_accepts as f64 / post_props.max(1) as f64;
            if !(0.05..=0.95).contains(&rate) {
                warnings.push(format!(
                    "chain {chain}: post-adaptation acceptance rate {rate:.3} outside [0.05, 0.95]"
                ));
            }
        }
    }
    ChainSet::assemble(names, draws, cfg.burn_in, cfg.seed, warnings)
}

/// Rank-normalized split R-hat and effective sample size for one parameter.
///
/// Draws are pooled and rank-normalized through the standard-normal quantile
/// function, each chain is split in half, and the Gelman-Rubin statistic plus
/// Geyer's initial-monotone-sequence ESS are computed on the transformed
/// half-chains. `mcse` is the raw-scale posterior sd over `sqrt(ess)`.
pub fn diagnostics(chains: &[Vec<f64>]) -> Result<ParamDiagnostics> {
    if chains.len() < 2 {
        return Err(invalid("diagnostics require at least two chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap();
    if n < 100 {
        return Err(invalid(format!("diagnostics require at least 100 retained draws, got {n}")));
    }
    let n = n & !1usize; // even length so the halves match

    // Rank-normalize the pooled draws (average ranks for ties).
    let total = chains.len() * n;
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    for (ci, chain) in chains.iter().enumerate() {
        for (i, &x) in chain[..n].iter().enumerate() {
            if !x.is_finite() {
                return Err(invalid("non-finite draw in diagnostics input"));
            }
            indexed.push((x, ci * n + i));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for item in &indexed[i..=j] {
            ranks[item.1] = avg;
        }
        i = j + 1;
    }
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    let z: Vec<f64> =
        ranks.iter().map(|r| normal.inverse_cdf((r - 0.375) / (total as f64 + 0.25))).collect();

    // Split each chain in half.
    let half = n / 2;
    let mut split: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for ci in 0..chains.len() {
        let base = ci * n;
        split.push(&z[base..base + half]);
        split.push(&z[base + half..base + n]);
    }

    let m = split.len() as f64;
    let len = half as f64;
    let means: Vec<f64> = split.iter().map(|c| c.iter().sum::<f64>() / len).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = len / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let vars: Vec<f64> = split
        .iter()
        .zip(&means)
        .map(|(c, &mn)| c.iter().map(|x| (x - mn).powi(2)).sum::<f64>() / (len - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m;

    let raw_flat: Vec<f64> = chains.iter().flat_map(|c| c[..n].iter().copied()).collect();
    let raw_mean = raw_flat.iter().sum::<f64>() / raw_flat.len() as f64;
    let raw_sd = (raw_flat.iter().map(|x| (x - raw_mean).powi(2)).sum::<f64>()
        / (raw_flat.len() as f64 - 1.0))
        .sqrt();

    if w < 1e-12 * (1.0 + b) {
        // Degenerate within-chain variance: constant chains.
        let rhat = if b > 1e-12 { f64::INFINITY } else { 1.0 };
        return Ok(ParamDiagnostics { ess: 1.0, split_rhat: rhat, mcse: raw_sd });
    }

    let var_plus = (len - 1.0) / len * w + b / len;
    let rhat = (var_plus / w).sqrt().max(1.0);

    // Geyer's initial monotone positive sequence on the split chains.
    let acov = |c: &[f64], mean: f64, lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..(c.len() - lag) {
            s += (c[i] - mean) * (c[i + lag] - mean);
        }
        s / c.len() as f64
    };
    let mean_var = vars.iter().sum::<f64>() / m * (len - 1.0) / len;
    let mut rho_pairs: Vec<f64> = Vec::new();
    let mut lag = 1;
    let max_lag = half.saturating_sub(4);
    while lag + 1 < max_lag {
        let ac_even: f64 =
            split.iter().zip(&means).map(|(c, &mn)| acov(c, mn, lag)).sum::<f64>() / m;
        let ac_odd: f64 =
            split.iter().zip(&means).map(|(c, &mn)| acov(c, mn, lag + 1)).sum::<f64>() / m;
        let r_even = 1.0 - (mean_var - ac_even) / var_plus;
        let r_odd = 1.0 - (mean_var - ac_odd) / var_plus;
        let pair = r_even + r_odd;
        if pair <= 0.0 {
            break;
        }
        rho_pairs.push(pair);
        lag += 2;
    }
    // Enforce monotone nonincreasing pair sums.
    let mut tau = 1.0;
    let mut running = f64::INFINITY;
    for pair in rho_pairs.iter_mut() {
        if *pair > running {
            *pair = running;
        }
        running = *pair;
        tau += 2.0 * *pair;
    }

    let total_kept = m * len;
    let mut ess = total_kept / tau;
    let cap = total_kept * total_kept.log10();
    if ess > cap {
        ess = cap;
    }
    if !(ess > 0.0) {
        ess = 1.0;
    }

    Ok(ParamDiagnostics { ess, split_rhat: rhat, mcse: raw_sd / ess.sqrt() })
}
