//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the achieved metric (visible with `--nocapture`).

use std::time::Instant;

use rand::{RngExt, SeedableRng};

use npp::data::{NormalSummary, StudySet};
use npp::fitting::{fit_beta_mle, fit_ig_kl};
use npp::grid::{summarize, DensityGrid};
use npp::mcmc::{mh_bernoulli_bhm, mwg_bnpp, mwg_inpp, SamplerConfig};
use npp::posterior::{
    conditional_theta, marginal_a0k, marginal_theta_bhm_multi, marginal_theta_bhm_single,
    marginal_theta_bnpp, marginal_theta_inpp, marginal_theta_npp_single, theta_grid, A0kModel,
    BnppPrior, QuadratureSettings, VPrior, WeightAssignment,
};
use npp::prior::PriorSpec;
use npp::stats::{ks_sample_vs_grid, ks_two_sample};
use npp::transform::{bridge_quantities, f_multi, f_single, h_weights, induce_prior_v_single_with_points};

fn ns(n: u64, ybar: f64, s2: f64) -> NormalSummary {
    NormalSummary::new(n, ybar, s2).unwrap()
}

fn single_hist_setting() -> StudySet {
    StudySet::new(ns(20, 2.0, 0.5), vec![ns(20, 1.5, 0.3)]).unwrap()
}

fn multi_hist_setting() -> StudySet {
    StudySet::new(ns(30, 1.5, 0.5), vec![ns(20, 1.0, 0.5), ns(30, 2.0, 1.0), ns(50, 3.0, 1.5)])
        .unwrap()
}

fn beta22() -> PriorSpec {
    PriorSpec::Beta { alpha: 2.0, beta: 2.0 }
}


#[test]
fn criterion_01_single_dataset_equivalence() {
    let start = Instant::now();
    let study = single_hist_setting();
    let settings = QuadratureSettings::default();

    let npp = marginal_theta_npp_single(&study, &beta22(), &settings).unwrap();
    let bhm = marginal_theta_bhm_single(&study, &VPrior::InducedFromA0(beta22()), &settings)
        .unwrap();
    let sup = npp.sup_distance(&bhm).unwrap();
    assert!(sup < 1e-6, "quadrature sup-norm {sup} >= 1e-6");

    // Stochastic cross-check: sample the NPP, compare with the matched BHM
    // density (4 chains x 10,000 iterations, 5,000 burn-in).
    let chains = mwg_inpp(&study, &[beta22()], &SamplerConfig::four_by_10k(101)).unwrap();
    let ks = ks_sample_vs_grid(&chains.kept("theta").unwrap(), &bhm).unwrap();
    assert!(ks < 0.02, "MCMC KS {ks} >= 0.02");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "runtime {dt:.1}s >= 10s");
    println!("criterion 01: PASS  single-dataset equivalence (sup {sup:.2e}, KS {ks:.4}, {dt:.1}s)");
}

#[test]
fn criterion_02_multi_dataset_equivalence() {
    let start = Instant::now();
    let study = multi_hist_setting();
    let settings = QuadratureSettings::default();

    let bnpp = marginal_theta_bnpp(&study, &BnppPrior::OnA0(beta22()), &settings).unwrap();
    let bhm = marginal_theta_bhm_multi(&study, &VPrior::InducedFromA0(beta22()), &settings)
        .unwrap();
    let sup = bnpp.sup_distance(&bhm).unwrap();
    assert!(sup < 1e-6, "quadrature sup-norm {sup} >= 1e-6");

    // Stochastic cross-check at the 4 x 8,000 / 4,000 preset.
    let chains =
        mwg_bnpp(&study, &BnppPrior::OnA0(beta22()), &SamplerConfig::four_by_8k(202)).unwrap();
    let ks = ks_sample_vs_grid(&chains.kept("theta").unwrap(), &bhm).unwrap();
    assert!(ks < 0.02, "MCMC KS {ks} >= 0.02");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 30.0, "runtime {dt:.1}s >= 30s");
    println!("criterion 02: PASS  multi-dataset equivalence (sup {sup:.2e}, KS {ks:.4}, {dt:.1}s)");
}

#[test]
fn criterion_03_randomized_equivalence() {
    let start = Instant::now();
    let mut rng = rand::rngs::StdRng::seed_from_u64(314159);
    let settings = QuadratureSettings::default();

    let summary = |rng: &mut rand::rngs::StdRng| {
        let n = rng.random_range(5u64..=100);
        let ybar = rng.random_range(-3.0..3.0);
        let s2 = rng.random_range(0.1..5.0);
        ns(n, ybar, s2)
    };
    let mut worst_single: f64 = 0.0;
    for case in 0..20 {
        let study = StudySet::new(summary(&mut rng), vec![summary(&mut rng)]).unwrap();
        let prior = PriorSpec::Beta {
            alpha: rng.random_range(0.8..5.0),
            beta: rng.random_range(0.8..5.0),
        };
        let npp = marginal_theta_npp_single(&study, &prior, &settings).unwrap();
        let bhm =
            marginal_theta_bhm_single(&study, &VPrior::InducedFromA0(prior), &settings).unwrap();
        let sup = npp.sup_distance(&bhm).unwrap();
        assert!(sup < 1e-6, "single case {case}: sup {sup} >= 1e-6");
        worst_single = worst_single.max(sup);
    }

    let mut worst_multi: f64 = 0.0;
    for case in 0..20 {
        let k = [2usize, 3, 5][case % 3];
        let hist: Vec<NormalSummary> = (0..k).map(|_| summary(&mut rng)).collect();
        let study = StudySet::new(summary(&mut rng), hist).unwrap();
        let prior = PriorSpec::Beta {
            alpha: rng.random_range(0.8..5.0),
            beta: rng.random_range(0.8..5.0),
        };
        let bnpp = marginal_theta_bnpp(&study, &BnppPrior::OnA0(prior.clone()), &settings)
            .unwrap();
        let bhm =
            marginal_theta_bhm_multi(&study, &VPrior::InducedFromA0(prior), &settings).unwrap();
        let sup = bnpp.sup_distance(&bhm).unwrap();
        assert!(sup < 1e-6, "multi case {case} (K = {k}): sup {sup} >= 1e-6");
        worst_multi = worst_multi.max(sup);
    }

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 300.0, "runtime {dt:.1}s >= 300s");
    println!(
        "criterion 03: PASS  randomized equivalence (worst single {worst_single:.2e}, worst \
         multi {worst_multi:.2e}, {dt:.1}s)"
    );
}

#[test]
fn criterion_04_k1_reduction_identity() {
    let hist = [ns(20, 1.5, 0.3)];
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let v = 1e-6 * 10f64.powf(9.0 * i as f64 / 999.0);
        let h1 = h_weights(v, &hist).unwrap()[0];
        let fs = f_single(v, &hist[0]).unwrap();
        worst = worst.max((h1 - fs).abs());
    }
    assert!(worst < 1e-12, "max |h_1 - f_single| = {worst}");
    println!("criterion 04: PASS  K=1 reduction identity (max dev {worst:.2e})");
}

#[test]
fn criterion_05_jacobian_vs_finite_differences() {
    let hist = multi_hist_setting().historical().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let v = 1e-4 * 10f64.powf(5.0 * i as f64 / 999.0);
        let b = bridge_quantities(v, &hist).unwrap();
        let h = 1e-6;
        let fd = (f_multi(v + h, &hist).unwrap() - f_multi((v - h).max(1e-12), &hist).unwrap())
            / (v + h - (v - h).max(1e-12));
        let rel = ((b.jacobian - fd.abs()) / fd.abs()).abs();
        worst = worst.max(rel);
    }
    assert!(worst < 1e-6, "max relative Jacobian error = {worst}");
    println!("criterion 05: PASS  analytic Jacobian vs central differences (max rel {worst:.2e})");
}

#[test]
fn criterion_06_borrowing_behavior() {
    let start = Instant::now();
    let settings = QuadratureSettings::default();
    let cur = ns(30, 0.0, 1.0);
    let uniform2 = vec![PriorSpec::Uniform01, PriorSpec::Uniform01];
    let argmax_pos = |g: &DensityGrid| {
        let i = g
            .density()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        i as f64 / (g.len() - 1) as f64
    };

    // (a) Fully compatible: weight posteriors pile up at one and the BNPP
    // tightens the main effect below the no-borrowing sd.
    let study = StudySet::new(cur, vec![ns(50, 0.0, 1.0), ns(30, 0.0, 1.0)]).unwrap();
    let bnpp_model = A0kModel::Bnpp(BnppPrior::OnA0(PriorSpec::Uniform01));
    let inpp_model = A0kModel::Inpp(uniform2.clone());
    for grids in [
        marginal_a0k(&study, &bnpp_model, &settings).unwrap(),
        marginal_a0k(&study, &inpp_model, &settings).unwrap(),
    ] {
        for g in &grids {
            let pos = argmax_pos(g);
            assert!(pos > 0.98, "(a) weight density mode at relative position {pos}");
        }
    }
    let bnpp_theta =
        marginal_theta_bnpp(&study, &BnppPrior::OnA0(PriorSpec::Uniform01), &settings).unwrap();
    let sd = summarize(&bnpp_theta, 0.95).unwrap().sd;
    let no_borrow_sd = (1.0f64 / 30.0).sqrt();
    assert!(sd < no_borrow_sd, "(a) BNPP sd {sd} not below {no_borrow_sd}");

    // (b) Jointly shifted historical means: the BNPP discounts harder than
    // the iNPP and stays closer to the current-data mean.
    let study = StudySet::new(cur, vec![ns(50, 1.5, 1.0), ns(30, 1.5, 1.0)]).unwrap();
    let bnpp_grids = marginal_a0k(&study, &bnpp_model, &settings).unwrap();
    let inpp_grids = marginal_a0k(&study, &inpp_model, &settings).unwrap();
    for (k, (b, i)) in bnpp_grids.iter().zip(&inpp_grids).enumerate() {
        let (mb, mi) = (b.mean(), i.mean());
        assert!(mb < mi, "(b) dataset {k}: BNPP weight mean {mb} not below iNPP {mi}");
    }
    let bnpp_mean = marginal_theta_bnpp(&study, &BnppPrior::OnA0(PriorSpec::Uniform01), &settings)
        .unwrap()
        .mean()
        .abs();
    let inpp_mean = marginal_theta_inpp(&study, &uniform2, &settings).unwrap().mean().abs();
    assert!(
        bnpp_mean < inpp_mean,
        "(b) |E theta| BNPP {bnpp_mean} not below iNPP {inpp_mean}"
    );

    // (c) Mixed compatibility. Equal sizes: the iNPP favors the compatible
    // dataset while the BNPP weights are exactly exchangeable.
    let study = StudySet::new(cur, vec![ns(40, 0.0, 1.0), ns(40, 1.5, 1.0)]).unwrap();
    let inpp_grids = marginal_a0k(&study, &inpp_model, &settings).unwrap();
    assert!(
        inpp_grids[0].mean() > inpp_grids[1].mean(),
        "(c) iNPP should favor the compatible dataset"
    );
    let bnpp_grids = marginal_a0k(&study, &bnpp_model, &settings).unwrap();
    let sup = bnpp_grids[0].sup_distance(&bnpp_grids[1]).unwrap();
    assert!(sup < 1e-10, "(c) equal-size BNPP weights differ: sup {sup}");

    // Different sizes: BNPP ordering follows sample size only, even when the
    // larger dataset is the compatible one.
    let study = StudySet::new(cur, vec![ns(60, 0.0, 1.0), ns(30, 1.5, 1.0)]).unwrap();
    let inpp_grids = marginal_a0k(&study, &inpp_model, &settings).unwrap();
    assert!(
        inpp_grids[0].mean() > inpp_grids[1].mean(),
        "(c) iNPP should still favor the compatible dataset"
    );
    let bnpp_grids = marginal_a0k(&study, &bnpp_model, &settings).unwrap();
    assert!(
        bnpp_grids[0].mean() < bnpp_grids[1].mean(),
        "(c) BNPP should discount the larger dataset more regardless of compatibility"
    );

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt:.1}s >= 60s");
    println!("criterion 06: PASS  borrowing behavior across compatibility scenarios ({dt:.1}s)");
}

#[test]
fn criterion_07_pushforward_round_trip() {
    let hist = ns(20, 0.0, 1.0);
    let priors = [
        PriorSpec::Beta { alpha: 1.0, beta: 1.0 },
        PriorSpec::Beta { alpha: 0.5, beta: 0.5 },
        PriorSpec::Beta { alpha: 2.0, beta: 10.0 },
        PriorSpec::Beta { alpha: 10.0, beta: 2.0 },
    ];
    let mut rng = rand::rngs::StdRng::seed_from_u64(777);
    let mut worst: f64 = 0.0;
    for prior in &priors {
        let induced =
            induce_prior_v_single_with_points(prior, &hist, Some(1e12), 4097).unwrap();
        let v_draws = induced.sample_many(&mut rng, 100_000);
        let mapped: Vec<f64> =
            v_draws.iter().map(|&v| f_single(v, &hist).unwrap()).collect();
        let direct: Vec<f64> = (0..100_000).map(|_| prior.sample(&mut rng)).collect();
        let ks = ks_two_sample(&mapped, &direct).unwrap();
        assert!(ks < 0.01, "{prior:?}: KS {ks} >= 0.01");
        worst = worst.max(ks);
    }
    println!("criterion 07: PASS  pushforward round trip for the four beta panels (worst KS {worst:.4})");
}



#[test]
fn criterion_08_fitting_fixed_points() {
    let mut worst: f64 = 0.0;
    for &(c, d) in &[(3.0, 10.0), (3.0, 1.0), (1.0, 0.1), (1.0, 0.01)] {
        let prior = PriorSpec::InverseGamma { shape: c, scale: d };
        let lo = prior.quantile(1e-12).unwrap().max(1e-14);
        let hi = prior.quantile(1.0 - 1e-12).unwrap();
        let grid = DensityGrid::log_spaced_from_fn(lo, hi, 16385, |v| prior.log_density(v).exp())
            .unwrap()
            .normalize()
            .unwrap();
        let fit = fit_ig_kl(&grid).unwrap();
        let err = (fit.shape - c).abs().max((fit.scale - d).abs());
        assert!(err < 1e-3, "IG({c}, {d}): recovered ({}, {}), error {err}", fit.shape, fit.scale);
        worst = worst.max(err);
    }

    let mut rng = rand::rngs::StdRng::seed_from_u64(88);
    let beta = PriorSpec::Beta { alpha: 2.0, beta: 2.0 };
    let samples: Vec<f64> = (0..1_000_000).map(|_| beta.sample(&mut rng)).collect();
    let fit = fit_beta_mle(&samples).unwrap();
    let beta_err = (fit.alpha - 2.0).abs().max((fit.beta - 2.0).abs());
    assert!(beta_err < 0.02, "Beta(2,2) recovered ({}, {})", fit.alpha, fit.beta);
    println!(
        "criterion 08: PASS  fitting fixed points (worst IG error {worst:.2e}, beta error \
         {beta_err:.4})"
    );
}

/// Synthetic lupus-style counts: the published sample sizes (92, 548, 577)
/// with response counts chosen to mimic the reported posterior scale. The
/// real response counts are not published.
fn synthetic_lupus_counts() -> Vec<npp::approx::TwoArmBinomialSummary> {
    vec![
        npp::approx::TwoArmBinomialSummary::new(46, 24, 46, 19).unwrap(),
        npp::approx::TwoArmBinomialSummary::new(274, 158, 274, 120).unwrap(),
        npp::approx::TwoArmBinomialSummary::new(288, 167, 289, 129).unwrap(),
    ]
}

fn lupus_study() -> StudySet {
    let counts = synthetic_lupus_counts();
    let summaries: Vec<NormalSummary> = counts
        .iter()
        .map(|t| npp::approx::to_normal_summary(&npp::approx::log_or(t).unwrap()).unwrap())
        .collect();
    StudySet::new(summaries[0], summaries[1..].to_vec()).unwrap()
}

#[test]
fn criterion_09_binary_outcome_pipeline() {
    let start = Instant::now();
    let settings = QuadratureSettings::default();
    let study = lupus_study();

    // (a) Equivalence of the BNPP and the matched BHM on the approximate
    // normal model.
    let bnpp =
        marginal_theta_bnpp(&study, &BnppPrior::OnA0(PriorSpec::Uniform01), &settings).unwrap();
    let bhm =
        marginal_theta_bhm_multi(&study, &VPrior::InducedFromA0(PriorSpec::Uniform01), &settings)
            .unwrap();
    let sup = bnpp.sup_distance(&bhm).unwrap();
    assert!(sup < 1e-6, "(a) sup-norm {sup} >= 1e-6");

    // (b) The exact-likelihood Bernoulli BHM agrees with the approximate
    // normal pipeline at these sample sizes.
    let chains = mh_bernoulli_bhm(
        &synthetic_lupus_counts(),
        &VPrior::InducedFromA0(PriorSpec::Uniform01),
        &SamplerConfig::four_by_10k(909),
        false,
    )
    .unwrap();
    let ks = ks_sample_vs_grid(&chains.kept("theta").unwrap(), &bnpp).unwrap();
    assert!(ks < 0.05, "(b) Bernoulli-BHM vs normal-approximation KS {ks} >= 0.05");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 120.0, "runtime {dt:.1}s >= 120s");
    println!(
        "criterion 09: PASS  binary-outcome pipeline on synthetic counts (sup {sup:.2e}, KS \
         {ks:.4}, {dt:.1}s)"
    );
}

#[test]
fn criterion_10_conditional_posterior_oracle() {
    // Three-observation reduction at the single-dataset example means and
    // variances; the conditional at a0 = 0.5 against a dense Riemann slice
    // of the raw-data joint.
    let current = [1.5, 2.0, 2.5];
    let historical = [1.0, 1.5, 2.0];
    let (s2, s02) = (0.5, 0.3);
    let study = StudySet::new(
        NormalSummary::from_raw(&current, s2).unwrap(),
        vec![NormalSummary::from_raw(&historical, s02).unwrap()],
    )
    .unwrap();
    let cond = conditional_theta(&study, &WeightAssignment::new(vec![0.5]).unwrap()).unwrap();

    let grid = theta_grid(&study, 2001).unwrap();
    let a0 = 0.5;
    let log_slice: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let mut l = 0.0;
            for y in &current {
                l += -0.5 * (y - t) * (y - t) / s2;
            }
            for y in &historical {
                l += -0.5 * a0 * (y - t) * (y - t) / s02;
            }
            l
        })
        .collect();
    let max = log_slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut slice: Vec<f64> = log_slice.iter().map(|l| (l - max).exp()).collect();
    let mass = npp::quad::trapezoid(&grid, &slice);
    for s in slice.iter_mut() {
        *s /= mass;
    }
    let exact: Vec<f64> = grid.iter().map(|&t| cond.pdf(t)).collect();
    let exact_mass = npp::quad::trapezoid(&grid, &exact);
    let sup = exact
        .iter()
        .zip(&slice)
        .map(|(e, s)| (e / exact_mass - s).abs())
        .fold(0.0, f64::max);
    assert!(sup < 1e-5, "conditional vs Riemann slice sup {sup} >= 1e-5");
    println!("criterion 10: PASS  conditional posterior oracle (sup {sup:.2e})");
}
