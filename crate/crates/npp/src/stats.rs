//! Kolmogorov-Smirnov distances used to compare samplers, grids, and priors.

use crate::error::{invalid, Result};
use crate::grid::DensityGrid;

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample in KS input"));
    v
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_m - G_n|`.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(invalid("KS statistic requires nonempty samples"));
    }
    let (xs, ys) = (sorted(xs), sorted(ys));
    let (m, n) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        // Advance past ties on both sides before comparing the empirical CDFs.
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == t {
            i += 1;
        }
        while j < ys.len() && ys[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    Ok(d)
}

/// One-sample KS statistic of draws against a grid-tabulated density.
///
/// The reference CDF is the piecewise-linear trapezoid CDF of the grid.
pub fn ks_sample_vs_grid(samples: &[f64], grid: &DensityGrid) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS statistic requires a nonempty sample"));
    }
    let xs = sorted(samples);
    let cdf = grid.cdf();
    let total = *cdf.last().unwrap();
    if !(total > 0.0) {
        return Err(invalid("KS reference grid has zero mass"));
    }
    let pts = grid.points();
    let eval = |x: f64| -> f64 {
        if x <= pts[0] {
            return 0.0;
        }
        if x >= *pts.last().unwrap() {
            return 1.0;
        }
        let idx = pts.partition_point(|&p| p < x).clamp(1, pts.len() - 1);
        let frac = (x - pts[idx - 1]) / (pts[idx] - pts[idx - 1]);
        ((cdf[idx - 1] + frac * (cdf[idx] - cdf[idx - 1])) / total).clamp(0.0, 1.0)
    };
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = eval(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i + 1) as f64 / n).abs());
    }
    Ok(d)
}

/// One-sample KS statistic of draws against an arbitrary CDF.
pub fn ks_sample_vs_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS statistic requires a nonempty sample"));
    }
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i + 1) as f64 / n).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand::SeedableRng;

    #[test]
    fn identical_samples_have_zero_distance() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!(ks_two_sample(&xs, &xs).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_samples_have_distance_one() {
        let xs = [1.0, 2.0];
        let ys = [10.0, 11.0];
        assert!((ks_two_sample(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_draws_vs_uniform_grid() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let samples: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>()).collect();
        let grid = DensityGrid::from_fn(0.0, 1.0, 101, |_| 1.0).unwrap();
        let d = ks_sample_vs_grid(&samples, &grid).unwrap();
        assert!(d < 0.012, "d = {d}");
    }

    #[test]
    fn shifted_distribution_detected() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(13);
        let samples: Vec<f64> = (0..10_000).map(|_| 0.25 + 0.5 * rng.random::<f64>()).collect();
        let grid = DensityGrid::from_fn(0.0, 1.0, 101, |_| 1.0).unwrap();
        let d = ks_sample_vs_grid(&samples, &grid).unwrap();
        assert!(d > 0.2, "d = {d}");
    }
}
