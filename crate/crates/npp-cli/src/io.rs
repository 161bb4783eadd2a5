//! Output-directory plumbing: CSV/JSON writers, run manifests, histograms.

use std::path::{Path, PathBuf};

use serde::Serialize;

use npp::grid::DensityGrid;

use crate::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {dir:?}: {e}")))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Config(format!("cannot write {path:?}: {e}")))?;
    Ok(path)
}

pub fn write_grid(dir: &Path, name: &str, grid: &DensityGrid) -> Result<PathBuf, CliError> {
    write_text(dir, name, &grid.to_csv())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failure: {e}")))?;
    write_text(dir, name, &text)
}

/// Every run drops a manifest with the seed, the resolved configuration,
/// and the list of files it produced.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
    files: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "config": config,
        "outputs": files.iter().map(|p| p.to_string_lossy()).collect::<Vec<_>>(),
    });
    write_json(dir, "manifest.json", &manifest)?;
    Ok(())
}

/// Normalized histogram of draws as a density grid over bin centers.
pub fn histogram_density(samples: &[f64], bins: usize) -> Result<DensityGrid, CliError> {
    if samples.is_empty() {
        return Err(CliError::Numerical("cannot histogram an empty sample".into()));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = (hi - lo).max(1e-12) * 1e-6;
    let (lo, hi) = (lo - pad, hi + pad);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &x in samples {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1.0;
    }
    let n = samples.len() as f64;
    let centers: Vec<f64> = (0..bins).map(|i| lo + width * (i as f64 + 0.5)).collect();
    let dens: Vec<f64> = counts.iter().map(|c| c / (n * width)).collect();
    // Trapezoid mass over bin centers is slightly below one; renormalize so
    // the grid slots into the same machinery as the quadrature densities.
    DensityGrid::new(centers, dens)
        .and_then(|g| g.normalize())
        .map_err(CliError::from)
}

/// Parse a comma-separated `n,ybar,sigma2` triple.
pub fn parse_summary(text: &str) -> Result<npp::data::NormalSummary, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "expected `n,ybar,sigma2`, got {text:?}"
        )));
    }
    let n: u64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad sample size in {text:?}")))?;
    let ybar: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad mean in {text:?}")))?;
    let s2: f64 = parts[2]
        .parse()
        .map_err(|_| CliError::Config(format!("bad variance in {text:?}")))?;
    npp::data::NormalSummary::new(n, ybar, s2).map_err(CliError::from)
}

/// Parse a comma-separated `n_t,y_t,n_c,y_c` count quadruple.
pub fn parse_counts(text: &str) -> Result<(u64, u64, u64, u64), CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::Config(format!("expected `n_t,y_t,n_c,y_c`, got {text:?}")));
    }
    let mut nums = [0u64; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| CliError::Config(format!("bad count in {text:?}")))?;
    }
    Ok((nums[0], nums[1], nums[2], nums[3]))
}

/// Parse a prior specification like `uniform`, `beta:2,2`,
/// `inverse-gamma:3,10`, `half-normal:1.0`, or `tabulated:grid.csv`.
pub fn parse_prior(text: &str) -> Result<npp::prior::PriorSpec, CliError> {
    use npp::prior::{PriorSpec, Support};
    let (family, args) = match text.split_once(':') {
        Some((f, a)) => (f.trim(), a.trim()),
        None => (text.trim(), ""),
    };
    let nums = || -> Result<Vec<f64>, CliError> {
        args.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad prior parameter in {text:?}")))
            })
            .collect()
    };
    let prior = match family {
        "uniform" | "uniform01" => PriorSpec::Uniform01,
        "beta" => {
            let v = nums()?;
            if v.len() != 2 {
                return Err(CliError::Config("beta prior needs two parameters".into()));
            }
            PriorSpec::Beta { alpha: v[0], beta: v[1] }
        }
        "inverse-gamma" | "ig" => {
            let v = nums()?;
            if v.len() != 2 {
                return Err(CliError::Config("inverse-gamma prior needs two parameters".into()));
            }
            PriorSpec::InverseGamma { shape: v[0], scale: v[1] }
        }
        "half-normal" => {
            let v = nums()?;
            if v.len() != 1 {
                return Err(CliError::Config("half-normal prior needs one parameter".into()));
            }
            PriorSpec::HalfNormal { scale: v[0] }
        }
        "tabulated" => {
            let csv = std::fs::read_to_string(args)
                .map_err(|e| CliError::Config(format!("cannot read {args:?}: {e}")))?;
            let grid = DensityGrid::from_csv(&csv)?.normalize()?;
            let support = if *grid.points().last().unwrap() <= 1.0 {
                Support::Unit
            } else {
                Support::Positive
            };
            PriorSpec::Tabulated { grid, support }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown prior family {other:?} (use uniform, beta, inverse-gamma, half-normal, \
                 or tabulated)"
            )))
        }
    };
    prior.validate()?;
    Ok(prior)
}
