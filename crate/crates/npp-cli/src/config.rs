//! Scenario configuration: serde types shared by the key-value and JSON
//! config formats, plus validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use npp::data::StudySet;
use npp::mcmc::SamplerConfig;
use npp::posterior::{QuadratureSettings, VPrior};
use npp::prior::PriorSpec;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelChoice {
    #[serde(rename = "npp")]
    Npp,
    #[serde(rename = "inpp")]
    Inpp,
    #[serde(rename = "bnpp")]
    Bnpp,
    #[serde(rename = "bhm")]
    Bhm,
    #[serde(rename = "a0=0")]
    NoBorrowing,
    #[serde(rename = "a0=1")]
    FullBorrowing,
}

impl ModelChoice {
    pub fn label(&self) -> &'static str {
        match self {
            ModelChoice::Npp => "npp",
            ModelChoice::Inpp => "inpp",
            ModelChoice::Bnpp => "bnpp",
            ModelChoice::Bhm => "bhm",
            ModelChoice::NoBorrowing => "a0_0",
            ModelChoice::FullBorrowing => "a0_1",
        }
    }
}

/// A prior for the BHM variance: either a direct density on `(0, inf)` or
/// the prior induced from a discounting-side prior through the matching
/// transform.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VPriorConfig {
    Induced { induced_from_a0: PriorSpec },
    Direct(PriorSpec),
}

impl VPriorConfig {
    pub fn to_vprior(&self) -> VPrior {
        match self {
            VPriorConfig::Direct(p) => VPrior::Spec(p.clone()),
            VPriorConfig::Induced { induced_from_a0 } => {
                VPrior::InducedFromA0(induced_from_a0.clone())
            }
        }
    }
}

fn default_unit_prior() -> PriorSpec {
    PriorSpec::Uniform01
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    /// Prior on the single-dataset discounting parameter (NPP).
    pub npp: Option<PriorSpec>,
    /// One prior per historical dataset (iNPP).
    pub inpp: Option<Vec<PriorSpec>>,
    /// Prior on the global discounting parameter (BNPP).
    pub bnpp: Option<PriorSpec>,
    /// Prior on the heterogeneity variance (BHM).
    pub bhm: Option<VPriorConfig>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub points: usize,
    pub nodes: usize,
    pub nodes_2d: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        let q = QuadratureSettings::default();
        GridBlock { points: q.grid_points, nodes: q.nodes, nodes_2d: q.nodes_2d }
    }
}

impl GridBlock {
    pub fn settings(&self) -> QuadratureSettings {
        QuadratureSettings {
            nodes: self.nodes,
            nodes_2d: self.nodes_2d,
            grid_points: self.points,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub study: StudySet,
    pub models: Vec<ModelChoice>,
    #[serde(default)]
    pub priors: PriorBlock,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let value = crate::kv::parse_config_text(text).map_err(CliError::Config)?;
        let cfg: ScenarioConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("invalid scenario config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fail-fast validation before any output is written.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.models.is_empty() {
            return Err(CliError::Config("the models list must not be empty".into()));
        }
        let k = self.study.k();
        if self.models.contains(&ModelChoice::Npp) && k != 1 {
            return Err(CliError::Config(format!(
                "the single-dataset NPP needs exactly one historical dataset, got K = {k}"
            )));
        }
        let check = |p: &PriorSpec| p.validate().map_err(CliError::from);
        check(self.prior_npp())?;
        check(self.prior_bnpp())?;
        for p in self.priors_inpp() {
            check(&p)?;
        }
        if let Some(inpp) = &self.priors.inpp {
            if inpp.len() != k {
                return Err(CliError::Config(format!(
                    "inpp priors: expected {k} entries, got {}",
                    inpp.len()
                )));
            }
        }
        if let Some(cfg) = &self.sampler {
            cfg.validate()?;
        }
        if self.grid.points < 64 || self.grid.nodes < 32 || self.grid.nodes_2d < 32 {
            return Err(CliError::Config("grid resolution is too small".into()));
        }
        Ok(())
    }

    pub fn prior_npp(&self) -> &PriorSpec {
        self.priors.npp.as_ref().unwrap_or(&PriorSpec::Uniform01)
    }

    pub fn prior_bnpp(&self) -> &PriorSpec {
        self.priors.bnpp.as_ref().unwrap_or(&PriorSpec::Uniform01)
    }

    pub fn priors_inpp(&self) -> Vec<PriorSpec> {
        match &self.priors.inpp {
            Some(v) => v.clone(),
            None => vec![default_unit_prior(); self.study.k()],
        }
    }

    /// BHM prior: explicit if configured, otherwise the prior induced from
    /// the BNPP discounting prior (the matched hierarchical analysis).
    pub fn prior_bhm(&self) -> VPrior {
        match &self.priors.bhm {
            Some(cfg) => cfg.to_vprior(),
            None => VPrior::InducedFromA0(self.prior_bnpp().clone()),
        }
    }

    /// The fully resolved configuration (defaults made explicit), which
    /// reruns bit-identically.
    pub fn resolved(&self, fallback_seed: u64, fallback_out: &std::path::Path) -> ScenarioConfig {
        ScenarioConfig {
            study: self.study.clone(),
            models: self.models.clone(),
            priors: PriorBlock {
                npp: Some(self.prior_npp().clone()),
                inpp: Some(self.priors_inpp()),
                bnpp: Some(self.prior_bnpp().clone()),
                bhm: Some(match self.prior_bhm() {
                    VPrior::Spec(p) => VPriorConfig::Direct(p),
                    VPrior::InducedFromA0(p) => VPriorConfig::Induced { induced_from_a0: p },
                    VPrior::Induced(ip) => VPriorConfig::Induced {
                        induced_from_a0: ip.source().clone(),
                    },
                }),
            },
            sampler: self.sampler,
            outputs: Some(self.outputs.clone().unwrap_or_else(|| fallback_out.to_path_buf())),
            grid: self.grid,
            seed: Some(self.seed.unwrap_or(fallback_seed)),
        }
    }
}
