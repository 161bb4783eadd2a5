//! Tabulated densities on explicit grids and moment/interval summaries.
//!
//! Every marginal posterior in this crate is ultimately represented as a
//! [`DensityGrid`]: a normalized density evaluated on a strictly increasing
//! grid. The trapezoid rule is the canonical integrator for these grids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Result};

/// Tolerance for treating a grid as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// A nonnegative density tabulated on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct DensityGrid {
    points: Vec<f64>,
    density: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    points: Vec<f64>,
    density: Vec<f64>,
    normalized: bool,
}

impl TryFrom<RawGrid> for DensityGrid {
    type Error = crate::Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        let grid = DensityGrid::new(raw.points, raw.density)?;
        if raw.normalized && !grid.normalized {
            return Err(invalid("grid claims to be normalized but trapezoid mass is not 1"));
        }
        Ok(grid)
    }
}

impl From<DensityGrid> for RawGrid {
    fn from(g: DensityGrid) -> Self {
        RawGrid { points: g.points, density: g.density, normalized: g.normalized }
    }
}

impl DensityGrid {
    /// Build a grid, validating monotonicity and nonnegativity. The
    /// `normalized` flag is set automatically when the trapezoid mass is
    /// within [`NORMALIZATION_TOL`] of one.
    pub fn new(points: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if points.len() != density.len() {
            return Err(invalid("points and density must have equal length"));
        }
        if points.len() < 2 {
            return Err(invalid("a density grid needs at least two points"));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(invalid("grid points must be strictly increasing"));
            }
        }
        for (&x, &d) in points.iter().zip(&density) {
            if !x.is_finite() {
                return Err(invalid("grid points must be finite"));
            }
            if !d.is_finite() || d < 0.0 {
                return Err(invalid(format!("density values must be finite and nonnegative, got {d} at x = {x}")));
            }
        }
        let mut grid = DensityGrid { points, density, normalized: false };
        grid.normalized = (grid.mass() - 1.0).abs() <= NORMALIZATION_TOL;
        Ok(grid)
    }

    /// Tabulate `f` on `n` equally spaced points over `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("grid range must satisfy lo < hi"));
        }
        if n < 2 {
            return Err(invalid("a density grid needs at least two points"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let points: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let density = points.iter().map(|&x| f(x)).collect();
        DensityGrid::new(points, density)
    }

    /// Tabulate `f` on `n` logarithmically spaced points over `[lo, hi]`,
    /// `lo > 0`. Suited to densities that spike near zero.
    pub fn log_spaced_from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(lo > 0.0) || !(hi > lo) {
            return Err(invalid("log-spaced grid requires 0 < lo < hi"));
        }
        if n < 2 {
            return Err(invalid("a density grid needs at least two points"));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let step = (lhi - llo) / (n - 1) as f64;
        let points: Vec<f64> = (0..n).map(|i| (llo + step * i as f64).exp()).collect();
        let density = points.iter().map(|&x| f(x)).collect();
        DensityGrid::new(points, density)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Trapezoid-rule mass of the tabulated density.
    pub fn mass(&self) -> f64 {
        crate::quad::trapezoid(&self.points, &self.density)
    }

    /// Rescale so the trapezoid mass is exactly one.
    pub fn normalize(&self) -> Result<DensityGrid> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(numerical(format!("cannot normalize: trapezoid mass is {mass}")));
        }
        let density: Vec<f64> = self.density.iter().map(|d| d / mass).collect();
        Ok(DensityGrid { points: self.points.clone(), density, normalized: true })
    }

    /// Linear interpolation of the density; zero outside the grid range.
    pub fn interpolate(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x < pts[0] || x > pts[pts.len() - 1] {
            return 0.0;
        }
        let idx = match pts.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.density[i],
            Err(i) => i,
        };
        let (x0, x1) = (pts[idx - 1], pts[idx]);
        let (d0, d1) = (self.density[idx - 1], self.density[idx]);
        d0 + (d1 - d0) * (x - x0) / (x1 - x0)
    }

    /// Trapezoid expectation of `f` under the tabulated density.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.points.iter().zip(&self.density).map(|(&x, &d)| f(x) * d).collect();
        crate::quad::trapezoid(&self.points, &vals)
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expectation(|x| (x - m) * (x - m))
    }

    /// Cumulative trapezoid integral at each grid point.
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.points.len() {
            acc += 0.5 * (self.density[i] + self.density[i - 1]) * (self.points[i] - self.points[i - 1]);
            out.push(acc);
        }
        out
    }

    /// Equal-tailed quantile from the piecewise-linear CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("quantile level must be in [0, 1], got {p}")));
        }
        let cdf = self.cdf();
        let total = *cdf.last().unwrap();
        if !(total > 0.0) {
            return Err(numerical("cannot take quantiles of an all-zero density"));
        }
        let target = p * total;
        let idx = cdf.partition_point(|&c| c < target);
        if idx == 0 {
            return Ok(self.points[0]);
        }
        if idx >= cdf.len() {
            return Ok(*self.points.last().unwrap());
        }
        let (c0, c1) = (cdf[idx - 1], cdf[idx]);
        let (x0, x1) = (self.points[idx - 1], self.points[idx]);
        if c1 - c0 <= 0.0 {
            return Ok(x0);
        }
        Ok(x0 + (x1 - x0) * (target - c0) / (c1 - c0))
    }

    /// Inverse-CDF draws from the tabulated density.
    pub fn sample_many<R: rand::RngExt + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<f64>> {
        let cdf = self.cdf();
        let total = *cdf.last().unwrap();
        if !(total > 0.0) {
            return Err(numerical("cannot sample from an all-zero density"));
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let target = rng.random::<f64>() * total;
            let idx = cdf.partition_point(|&c| c < target).clamp(1, cdf.len() - 1);
            let (c0, c1) = (cdf[idx - 1], cdf[idx]);
            let (x0, x1) = (self.points[idx - 1], self.points[idx]);
            let x = if c1 - c0 > 0.0 { x0 + (x1 - x0) * (target - c0) / (c1 - c0) } else { x0 };
            out.push(x);
        }
        Ok(out)
    }

    /// Maximum pointwise density difference. Both grids must share points.
    pub fn sup_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.check_same_points(other)?;
        Ok(self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Kolmogorov distance `max |F - G|` between two grids on shared points.
    pub fn ks_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.check_same_points(other)?;
        let (fa, fb) = (self.cdf(), other.cdf());
        let (ta, tb) = (*fa.last().unwrap(), *fb.last().unwrap());
        Ok(fa
            .iter()
            .zip(&fb)
            .map(|(a, b)| (a / ta - b / tb).abs())
            .fold(0.0, f64::max))
    }

    fn check_same_points(&self, other: &DensityGrid) -> Result<()> {
        if self.points.len() != other.points.len() {
            return Err(invalid("grids have different lengths"));
        }
        let scale = self.points.last().unwrap().abs().max(self.points[0].abs()).max(1.0);
        for (a, b) in self.points.iter().zip(&other.points) {
            if (a - b).abs() > 1e-9 * scale {
                return Err(invalid("grids are tabulated on different points"));
            }
        }
        Ok(())
    }

    /// Two-column CSV (`point,density`) with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,density\n");
        for (x, d) in self.points.iter().zip(&self.density) {
            out.push_str(&format!("{x:.16e},{d:.16e}\n"));
        }
        out
    }

    /// Parse the two-column CSV format produced by [`DensityGrid::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut density = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 0 && line.starts_with("point") {
                continue;
            }
            let mut parts = line.split(',');
            let err = || invalid(format!("bad CSV line {}: {line:?}", lineno + 1));
            let x: f64 = parts.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
            let d: f64 = parts.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
            points.push(x);
            density.push(d);
        }
        DensityGrid::new(points, density)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("DensityGrid serialization cannot fail")
    }
}

/// Posterior location, spread, and equal-tailed credible interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl PosteriorSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("PosteriorSummary serialization cannot fail")
    }
}

/// Trapezoid moments and the equal-tailed interval of a normalized grid.
pub fn summarize(grid: &DensityGrid, level: f64) -> Result<PosteriorSummary> {
    if !grid.is_normalized() {
        return Err(invalid("summarize requires a normalized grid"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("credible level must be in (0, 1), got {level}")));
    }
    let mean = grid.mean();
    let var = grid.variance();
    if !(var > 0.0) {
        return Err(numerical(format!("grid variance is not positive: {var}")));
    }
    let tail = 0.5 * (1.0 - level);
    Ok(PosteriorSummary {
        mean,
        sd: var.sqrt(),
        lo: grid.quantile(tail)?,
        hi: grid.quantile(1.0 - tail)?,
        level,
    })
}
