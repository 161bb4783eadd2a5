//! Command-line front end: prior transforms, posterior computation,
//! samplers, prior fitting, binary-outcome approximation, scenario and
//! equivalence runners, and figure-data emission.

mod config;
mod io;
mod kv;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use npp::data::StudySet;
use npp::mcmc::{gibbs_bhm, mh_bernoulli_bhm, mwg_bnpp, mwg_inpp, SamplerConfig};
use npp::posterior::{
    marginal_a0_npp_single, marginal_a0k, marginal_theta_bhm_multi, marginal_theta_bnpp,
    marginal_theta_inpp, marginal_theta_npp_single, A0kModel, BnppPrior, QuadratureSettings,
    VPrior,
};
use npp::prior::{PriorSpec, Support};

use crate::io::{
    ensure_dir, parse_counts, parse_prior, parse_summary, write_grid, write_json, write_manifest,
    write_text,
};

/// Errors with an exit-code contract: configuration problems exit 2,
/// numerical failures exit 3, tolerance failures exit 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Tolerance(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Tolerance(m) => write!(f, "tolerance failure: {m}"),
        }
    }
}

impl From<npp::Error> for CliError {
    fn from(e: npp::Error) -> Self {
        match e {
            npp::Error::Invalid(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "npp",
    about = "Historical-data borrowing for i.i.d. normal models: normalized power priors, \
             the BHM-matching NPP, and Bayesian hierarchical models",
    version
)]
struct Cli {
    /// Seed driving all randomness in the invoked command.
    #[arg(long, global = true, default_value_t = 20240817)]
    seed: u64,
    /// Directory where output files are written.
    #[arg(long, global = true, default_value = "npp-out")]
    out_dir: PathBuf,
    /// Number of points in emitted density grids.
    #[arg(long, global = true, default_value_t = 1025)]
    grid_points: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    #[value(name = "a0-to-v")]
    A0ToV,
    #[value(name = "v-to-a0")]
    VToA0,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PosteriorModel {
    Npp,
    Inpp,
    Bnpp,
    Bhm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SampleModel {
    Bhm,
    Bnpp,
    Inpp,
    #[value(name = "bernoulli-bhm")]
    BernoulliBhm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitFamily {
    #[value(name = "inverse-gamma")]
    InverseGamma,
    Beta,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    #[value(name = "fig-a1")]
    FigA1,
    #[value(name = "fig-a2")]
    FigA2,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Map a prior between the discounting parameter and the heterogeneity
    /// variance; emits the induced density as CSV.
    Transform {
        #[arg(long, value_enum)]
        direction: Direction,
        /// Historical dataset summary `n,ybar,sigma2` (repeat for several).
        #[arg(long = "hist", required = true)]
        hist: Vec<String>,
        /// Source prior, e.g. `beta:2,2`, `uniform`, `inverse-gamma:3,10`.
        #[arg(long)]
        prior: String,
        /// Right edge of the variance grid (grown automatically if omitted).
        #[arg(long)]
        vmax: Option<f64>,
    },
    /// Marginal posteriors by deterministic quadrature.
    Posterior {
        #[arg(long, value_enum)]
        model: PosteriorModel,
        /// Current dataset summary `n,ybar,sigma2`.
        #[arg(long)]
        current: Option<String>,
        /// Historical dataset summary `n,ybar,sigma2` (repeatable).
        #[arg(long = "hist")]
        hist: Vec<String>,
        /// StudySet JSON file (alternative to --current/--hist).
        #[arg(long, conflicts_with_all = ["current", "hist"])]
        study_file: Option<PathBuf>,
        /// Discounting prior(s); one per historical dataset for inpp.
        #[arg(long = "prior")]
        priors: Vec<String>,
        /// Direct variance prior for the bhm model (otherwise induced from
        /// the discounting prior).
        #[arg(long)]
        prior_v: Option<String>,
        #[arg(long, default_value_t = 512)]
        nodes: usize,
    },
    /// Sampling-based inference with chain diagnostics.
    Sample {
        #[arg(long, value_enum)]
        model: SampleModel,
        #[arg(long)]
        current: Option<String>,
        #[arg(long = "hist")]
        hist: Vec<String>,
        /// Two-arm counts `n_t,y_t,n_c,y_c` for bernoulli-bhm (first is the
        /// current trial; repeatable).
        #[arg(long = "trial")]
        trials: Vec<String>,
        #[arg(long = "prior")]
        priors: Vec<String>,
        #[arg(long)]
        prior_v: Option<String>,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 5_000)]
        burnin: usize,
        /// Switch off the likelihood (bernoulli-bhm only): draws recover the
        /// variance prior.
        #[arg(long, default_value_t = false)]
        prior_only: bool,
    },
    /// Fit an inverse gamma to a tabulated density or a beta to samples.
    Fit {
        #[arg(long, value_enum)]
        family: FitFamily,
        /// Input file: grid CSV (inverse-gamma) or one sample per line (beta).
        #[arg(long)]
        input: PathBuf,
    },
    /// Log-odds-ratio approximation of two-arm binary trials.
    Binary {
        /// Counts `n_t,y_t,n_c,y_c`; the first trial is the current study.
        #[arg(long = "trial", required = true)]
        trials: Vec<String>,
        /// Apply the +0.5 continuity correction (permits zero cells).
        #[arg(long, default_value_t = false)]
        continuity: bool,
    },
    /// Run a configured comparison scenario (key-value or JSON config).
    Scenario {
        #[arg(long)]
        config: PathBuf,
    },
    /// Matched power-prior / hierarchical posteriors with pass/fail checks.
    Equivalence {
        #[arg(long, value_enum)]
        preset: Preset,
    },
    /// Emit the plot data behind one of the reference figures.
    FigureData {
        #[arg(long)]
        figure: String,
    },
    /// Full binary-outcome borrowing pipeline on bundled synthetic counts
    /// (or counts from a JSON file).
    LupusDemo {
        #[arg(long)]
        counts: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numerical(_) => ExitCode::from(3),
                CliError::Tolerance(_) => ExitCode::from(4),
            }
        }
    }
}

fn settings_with(grid_points: usize, nodes: usize) -> QuadratureSettings {
    QuadratureSettings { grid_points, nodes, ..QuadratureSettings::default() }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let out = cli.out_dir.clone();
    match cli.command {
        Command::Transform { direction, hist, prior, vmax } => {
            let hist: Vec<_> = hist.iter().map(|h| parse_summary(h)).collect::<Result<_, _>>()?;
            let prior = parse_prior(&prior)?;
            ensure_dir(&out)?;
            let (name, induced) = match direction {
                Direction::A0ToV => {
                    if prior.support() != Support::Unit {
                        return Err(CliError::Config(
                            "a0-to-v needs a prior supported on (0, 1)".into(),
                        ));
                    }
                    let ind = if hist.len() == 1 {
                        npp::transform::induce_prior_v_single_with_points(
                            &prior,
                            &hist[0],
                            vmax,
                            cli.grid_points,
                        )?
                    } else {
                        npp::transform::induce_prior_v_multi_with_points(
                            &prior,
                            &hist,
                            vmax,
                            cli.grid_points,
                        )?
                    };
                    ("induced_v.csv", ind)
                }
                Direction::VToA0 => {
                    if hist.len() != 1 {
                        return Err(CliError::Config(
                            "v-to-a0 is defined for a single historical dataset".into(),
                        ));
                    }
                    let ind = npp::transform::induce_prior_a0_single_with_points(
                        &prior,
                        &hist[0],
                        cli.grid_points,
                    )?;
                    ("induced_a0.csv", ind)
                }
            };
            let path = write_grid(&out, name, induced.density())?;
            write_manifest(
                &out,
                "transform",
                cli.seed,
                json!({ "prior": prior, "hist": hist, "vmax": vmax,
                        "data_dependent": induced.data_dependent() }),
                std::slice::from_ref(&path),
            )?;
            println!("wrote {}", path.display());
            Ok(())
        }

        Command::Posterior { model, current, hist, study_file, priors, prior_v, nodes } => {
            let study = load_study(current.as_deref(), &hist, study_file.as_deref())?;
            let settings = settings_with(cli.grid_points, nodes);
            let parsed: Vec<PriorSpec> =
                priors.iter().map(|p| parse_prior(p)).collect::<Result<_, _>>()?;
            let first = parsed.first().cloned().unwrap_or(PriorSpec::Uniform01);
            ensure_dir(&out)?;
            let mut files = Vec::new();
            let mut summary = serde_json::Map::new();
            let (theta, a0s) = match model {
                PosteriorModel::Npp => (
                    marginal_theta_npp_single(&study, &first, &settings)?,
                    vec![marginal_a0_npp_single(&study, &first, &settings)?],
                ),
                PosteriorModel::Inpp => {
                    let all = if parsed.len() == study.k() {
                        parsed.clone()
                    } else {
                        vec![first.clone(); study.k()]
                    };
                    (
                        marginal_theta_inpp(&study, &all, &settings)?,
                        marginal_a0k(&study, &A0kModel::Inpp(all), &settings)?,
                    )
                }
                PosteriorModel::Bnpp => {
                    let prior = BnppPrior::OnA0(first.clone());
                    (
                        marginal_theta_bnpp(&study, &prior, &settings)?,
                        marginal_a0k(&study, &A0kModel::Bnpp(prior), &settings)?,
                    )
                }
                PosteriorModel::Bhm => {
                    let vprior = match &prior_v {
                        Some(text) => VPrior::Spec(parse_prior(text)?),
                        None => VPrior::InducedFromA0(first.clone()),
                    };
                    (marginal_theta_bhm_multi(&study, &vprior, &settings)?, Vec::new())
                }
            };
            files.push(write_grid(&out, "theta.csv", &theta)?);
            summary.insert(
                "theta".into(),
                serde_json::to_value(npp::summarize(&theta, 0.95).map_err(CliError::from)?)
                    .unwrap(),
            );
            for (i, g) in a0s.iter().enumerate() {
                files.push(write_grid(&out, &format!("a0_{}.csv", i + 1), g)?);
                summary.insert(
                    format!("a0_{}", i + 1),
                    serde_json::to_value(npp::summarize(g, 0.95).map_err(CliError::from)?)
                        .unwrap(),
                );
            }
            files.push(write_json(&out, "summary.json", &summary)?);
            write_manifest(
                &out,
                "posterior",
                cli.seed,
                json!({ "study": study, "priors": parsed, "prior_v": prior_v }),
                &files,
            )?;
            println!("wrote {} files to {}", files.len(), out.display());
            Ok(())
        }

        Command::Sample {
            model,
            current,
            hist,
            trials,
            priors,
            prior_v,
            chains,
            iters,
            burnin,
            prior_only,
        } => {
            let cfg = SamplerConfig {
                chains,
                iterations: iters,
                burn_in: burnin,
                seed: cli.seed,
                ..SamplerConfig::default()
            };
            cfg.validate()?;
            let parsed: Vec<PriorSpec> =
                priors.iter().map(|p| parse_prior(p)).collect::<Result<_, _>>()?;
            let first = parsed.first().cloned().unwrap_or(PriorSpec::Uniform01);
            let vprior = match &prior_v {
                Some(text) => VPrior::Spec(parse_prior(text)?),
                None => VPrior::InducedFromA0(first.clone()),
            };
            let chain_set = match model {
                SampleModel::Bhm => {
                    let study = load_study(current.as_deref(), &hist, None)?;
                    gibbs_bhm(&study, &vprior, &cfg)?
                }
                SampleModel::Bnpp => {
                    let study = load_study(current.as_deref(), &hist, None)?;
                    mwg_bnpp(&study, &BnppPrior::OnA0(first), &cfg)?
                }
                SampleModel::Inpp => {
                    let study = load_study(current.as_deref(), &hist, None)?;
                    let all = if parsed.len() == study.k() {
                        parsed.clone()
                    } else {
                        vec![first.clone(); study.k()]
                    };
                    mwg_inpp(&study, &all, &cfg)?
                }
                SampleModel::BernoulliBhm => {
                    let trials = parse_trials(&trials)?;
                    mh_bernoulli_bhm(&trials, &vprior, &cfg, prior_only)?
                }
            };
            ensure_dir(&out)?;
            let mut files = Vec::new();
            files.push(write_text(&out, "draws.csv", &chain_set.to_long_csv())?);
            let diag: serde_json::Map<String, serde_json::Value> = chain_set
                .all_diagnostics()
                .map(|(name, d)| (name.to_string(), serde_json::to_value(d).unwrap()))
                .collect();
            files.push(write_json(
                &out,
                "diagnostics.json",
                &json!({ "parameters": diag, "warnings": chain_set.warnings() }),
            )?);
            write_manifest(&out, "sample", cli.seed, json!({ "config": cfg }), &files)?;
            for w in chain_set.warnings() {
                eprintln!("warning: {w}");
            }
            println!("wrote draws and diagnostics to {}", out.display());
            Ok(())
        }

        Command::Fit { family, input } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| CliError::Config(format!("cannot read {input:?}: {e}")))?;
            ensure_dir(&out)?;
            let mut files = Vec::new();
            match family {
                FitFamily::InverseGamma => {
                    let grid = npp::DensityGrid::from_csv(&text)?.normalize()?;
                    let fit = npp::fitting::fit_ig_kl(&grid)?;
                    files.push(write_json(&out, "fit.json", &fit)?);
                    let fitted = PriorSpec::InverseGamma { shape: fit.shape, scale: fit.scale };
                    let overlay = overlay_csv(&grid, |v| fitted.log_density(v).exp());
                    files.push(write_text(&out, "overlay.csv", &overlay)?);
                    println!(
                        "inverse-gamma fit: shape {:.6}, scale {:.6}, KL {:.3e}",
                        fit.shape, fit.scale, fit.kl
                    );
                }
                FitFamily::Beta => {
                    let samples: Vec<f64> = text
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != "value")
                        .map(|l| {
                            l.parse::<f64>()
                                .map_err(|_| CliError::Config(format!("bad sample line {l:?}")))
                        })
                        .collect::<Result<_, _>>()?;
                    let fit = npp::fitting::fit_beta_mle(&samples)?;
                    files.push(write_json(&out, "fit.json", &fit)?);
                    let hist = io::histogram_density(&samples, 64)?;
                    let fitted = PriorSpec::Beta { alpha: fit.alpha, beta: fit.beta };
                    let overlay = overlay_csv(&hist, |a| fitted.log_density(a).exp());
                    files.push(write_text(&out, "overlay.csv", &overlay)?);
                    println!("beta fit: alpha {:.6}, beta {:.6}", fit.alpha, fit.beta);
                }
            }
            write_manifest(&out, "fit", cli.seed, json!({ "input": input }), &files)?;
            Ok(())
        }

        Command::Binary { trials, continuity } => {
            let counts: Vec<(u64, u64, u64, u64)> =
                trials.iter().map(|t| parse_counts(t)).collect::<Result<_, _>>()?;
            let approx: Vec<npp::approx::LogOrApprox> = counts
                .iter()
                .map(|&(n_t, y_t, n_c, y_c)| {
                    npp::approx::log_or_from_counts(n_t, y_t, n_c, y_c, continuity)
                })
                .collect::<npp::Result<_>>()?;
            let summaries: Vec<npp::NormalSummary> = approx
                .iter()
                .map(npp::approx::to_normal_summary)
                .collect::<npp::Result<_>>()?;
            ensure_dir(&out)?;
            let mut files = Vec::new();
            files.push(write_json(&out, "log_odds_ratios.json", &approx)?);
            if summaries.len() >= 2 {
                let study = StudySet::new(summaries[0], summaries[1..].to_vec())?;
                files.push(write_json(&out, "studyset.json", &study)?);
            } else {
                files.push(write_json(&out, "summary.json", &summaries[0])?);
            }
            write_manifest(
                &out,
                "binary",
                cli.seed,
                json!({ "counts": counts, "continuity": continuity }),
                &files,
            )?;
            for (c, a) in counts.iter().zip(&approx) {
                println!("{c:?}: log OR {:.5}, variance {:.5}", a.theta_hat, a.var_hat);
            }
            Ok(())
        }

        Command::Scenario { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {config:?}: {e}")))?;
            let cfg = config::ScenarioConfig::from_text(&text)?;
            let dir = run::run_scenario(&cfg, cli.seed, &out)?;
            println!("scenario outputs in {}", dir.display());
            Ok(())
        }

        Command::Equivalence { preset } => {
            let preset = match preset {
                Preset::FigA1 => run::EquivalencePreset::FigA1,
                Preset::FigA2 => run::EquivalencePreset::FigA2,
                Preset::Random => run::EquivalencePreset::Random,
            };
            run::run_equivalence(
                preset,
                cli.seed,
                &out,
                &settings_with(cli.grid_points, QuadratureSettings::default().nodes),
            )
        }

        Command::FigureData { figure } => run::run_figure_data(
            &figure,
            cli.seed,
            &out,
            &settings_with(cli.grid_points, QuadratureSettings::default().nodes),
        ),

        Command::LupusDemo { counts } => run::run_lupus_demo(
            counts.as_deref(),
            cli.seed,
            &out,
            &settings_with(cli.grid_points, QuadratureSettings::default().nodes),
        ),
    }
}

fn load_study(
    current: Option<&str>,
    hist: &[String],
    study_file: Option<&std::path::Path>,
) -> Result<StudySet, CliError> {
    if let Some(path) = study_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {path:?}: {e}")))?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad study file: {e}")));
    }
    let current = current
        .ok_or_else(|| CliError::Config("either --study-file or --current is required".into()))?;
    if hist.is_empty() {
        return Err(CliError::Config("at least one --hist summary is required".into()));
    }
    let cur = parse_summary(current)?;
    let hs: Vec<_> = hist.iter().map(|h| parse_summary(h)).collect::<Result<_, _>>()?;
    StudySet::new(cur, hs).map_err(CliError::from)
}

fn parse_trials(texts: &[String]) -> Result<Vec<npp::approx::TwoArmBinomialSummary>, CliError> {
    if texts.is_empty() {
        return Err(CliError::Config("at least one --trial is required".into()));
    }
    texts
        .iter()
        .map(|t| {
            let (n_t, y_t, n_c, y_c) = parse_counts(t)?;
            npp::approx::TwoArmBinomialSummary::new(n_t, y_t, n_c, y_c).map_err(CliError::from)
        })
        .collect()
}

/// Three-column CSV (`point,target,fitted`) for overlay plots.
fn overlay_csv(target: &npp::DensityGrid, fitted: impl Fn(f64) -> f64) -> String {
    let mut text = String::from("point,target,fitted\n");
    for (&x, &d) in target.points().iter().zip(target.density()) {
        text.push_str(&format!("{x:.16e},{d:.16e},{:.16e}\n", fitted(x)));
    }
    text
}
