//! Fréchet means and variances, fitted representation models, modes of
//! variation and fraction-of-variance-explained curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{normalize, to_cdf, DensityFn, GridFunction, DEFAULT_FLOOR};
use crate::error::{DensError, Result};
use crate::fpca::{cross_sectional_mean, mode_of_variation, project_to_density, EigenSystem};
use crate::grid::Grid;
use crate::kde::KernelSpec;
use crate::metrics::{dist_l2, dist_wasserstein};
use crate::sphere::{square_back_with_floor, Pga};
use crate::transform::{TransformSpec, TransformedFn};

/// Largest default truncation.
pub const K_MAX_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    Wasserstein,
}

impl std::str::FromStr for Metric {
    type Err = DensError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Metric::L2),
            "wasserstein" | "w2" => Ok(Metric::Wasserstein),
            other => Err(DensError::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::L2 => write!(f, "l2"),
            Metric::Wasserstein => write!(f, "wasserstein"),
        }
    }
}

impl Metric {
    pub fn distance(self, f: &DensityFn, g: &DensityFn) -> Result<f64> {
        match self {
            Metric::L2 => dist_l2(f, g),
            Metric::Wasserstein => dist_wasserstein(f, g),
        }
    }
}

/// How densities are represented with `K` components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodKind {
    /// FPCA on the densities, truncations projected back onto densities.
    OrdinaryFpca,
    Transform { transform: TransformSpec },
    HilbertSphere,
}

impl MethodKind {
    pub fn lqd() -> Self {
        MethodKind::Transform { transform: TransformSpec::lqd() }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = DensError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpca" => Ok(MethodKind::OrdinaryFpca),
            "lqd" => Ok(MethodKind::lqd()),
            "loghazard" | "log-hazard" | "lh" => {
                Ok(MethodKind::Transform { transform: TransformSpec::log_hazard(TransformSpec::DEFAULT_DELTA)? })
            }
            "hs" => Ok(MethodKind::HilbertSphere),
            other => Err(DensError::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodKind::OrdinaryFpca => write!(f, "fpca"),
            MethodKind::Transform { transform: TransformSpec::LogQuantileDensity } => write!(f, "lqd"),
            MethodKind::Transform { transform } => write!(f, "{transform}"),
            MethodKind::HilbertSphere => write!(f, "hs"),
        }
    }
}

fn common_support(sample: &[DensityFn]) -> Result<Grid> {
    let first = sample.first().ok_or(DensError::EmptySample)?;
    let g = *first.grid();
    for f in sample {
        let h = f.grid();
        if !g.same_support(h) {
            return Err(DensError::SupportMismatch(g.lo(), g.hi(), h.lo(), h.hi()));
        }
    }
    Ok(g)
}

/// Pointwise average of densities; a density itself.
pub fn cross_sectional_density_mean(sample: &[DensityFn]) -> Result<DensityFn> {
    let mean = cross_sectional_mean(sample)?;
    normalize(mean.grid(), mean.values(), DEFAULT_FLOOR)
}

/// Density whose quantile function is the average of the sample's quantile
/// functions, on the grid of the first sample member.
///
/// The averaged quantile function is inverted exactly: at every grid point
/// `x` the level `t` with `mean_i Q_i(t) = x` is found by bisection, which
/// gives the distribution function of the mean on the grid. Central
/// differences (second-order one-sided at the ends) then give the density,
/// which is floored and renormalized.
pub fn wasserstein_frechet_mean(sample: &[DensityFn]) -> Result<DensityFn> {
    let grid = common_support(sample)?;
    let cdfs: Vec<_> = sample.iter().map(to_cdf).collect();
    let n = cdfs.len() as f64;
    let qbar = |t: f64| cdfs.iter().map(|c| c.quantile(t)).sum::<f64>() / n;
    let m = grid.len();
    let cdf: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            if j == 0 {
                return 0.0;
            }
            if j + 1 == m {
                return 1.0;
            }
            let x = grid.point(j);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if qbar(mid) < x {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let d = grid.step();
    let raw: Vec<f64> = (0..m)
        .map(|j| {
            if j == 0 {
                (-3.0 * cdf[0] + 4.0 * cdf[1] - cdf[2]) / (2.0 * d)
            } else if j + 1 == m {
                (3.0 * cdf[m - 1] - 4.0 * cdf[m - 2] + cdf[m - 3]) / (2.0 * d)
            } else {
                (cdf[j + 1] - cdf[j - 1]) / (2.0 * d)
            }
        })
        .collect();
    normalize(&grid, &raw, DEFAULT_FLOOR)
}

pub fn frechet_mean(sample: &[DensityFn], metric: Metric) -> Result<DensityFn> {
    match metric {
        Metric::L2 => cross_sectional_density_mean(sample),
        Metric::Wasserstein => wasserstein_frechet_mean(sample),
    }
}

fn mean_sq_distance(sample: &[DensityFn], other: &[DensityFn], metric: Metric) -> Result<f64> {
    let d: Vec<f64> =
        sample.par_iter().zip(other.par_iter()).map(|(f, g)| metric.distance(f, g)).collect::<Result<_>>()?;
    Ok(d.iter().map(|v| v * v).sum::<f64>() / sample.len() as f64)
}

/// `n^-1 sum_i d(f_i, mean)^2`.
pub fn frechet_variance(sample: &[DensityFn], mean: &DensityFn, metric: Metric) -> Result<f64> {
    if sample.is_empty() {
        return Err(DensError::EmptySample);
    }
    let d: Vec<f64> = sample.par_iter().map(|f| metric.distance(f, mean)).collect::<Result<_>>()?;
    Ok(d.iter().map(|v| v * v).sum::<f64>() / sample.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Fitted {
    Ordinary { system: EigenSystem },
    Transform { spec: TransformSpec, system: EigenSystem },
    Sphere { pga: Pga },
}

/// A representation model fitted to a density sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    method: MethodKind,
    grid: Grid,
    floor: f64,
    fitted: Fitted,
}

impl FittedModel {
    pub fn fit(sample: &[DensityFn], method: MethodKind) -> Result<Self> {
        Self::fit_with_floor(sample, method, DEFAULT_FLOOR)
    }

    pub fn fit_with_floor(sample: &[DensityFn], method: MethodKind, floor: f64) -> Result<Self> {
        let grid = *sample.first().ok_or(DensError::EmptySample)?.grid();
        if sample.iter().any(|f| *f.grid() != grid) {
            return Err(DensError::GridMismatch);
        }
        let fitted = match method {
            MethodKind::OrdinaryFpca => Fitted::Ordinary { system: EigenSystem::fit(sample)? },
            MethodKind::Transform { transform } => {
                let xs: Vec<TransformedFn> = sample.par_iter().map(|f| transform.forward(f)).collect::<Result<_>>()?;
                Fitted::Transform { spec: transform, system: EigenSystem::fit(&xs)? }
            }
            MethodKind::HilbertSphere => Fitted::Sphere { pga: Pga::fit(sample)? },
        };
        Ok(Self { method, grid, floor, fitted })
    }

    pub fn method(&self) -> MethodKind {
        self.method
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The linear decomposition: of the densities, of the transformed
    /// functions, or of the tangent vectors.
    pub fn system(&self) -> &EigenSystem {
        match &self.fitted {
            Fitted::Ordinary { system } | Fitted::Transform { system, .. } => system,
            Fitted::Sphere { pga } => &pga.tangent,
        }
    }

    pub fn n_components(&self) -> usize {
        self.system().n_components()
    }

    pub fn n_subjects(&self) -> usize {
        self.system().n_subjects()
    }

    fn check_k(&self, k: usize) -> Result<usize> {
        let avail = self.n_components();
        if avail == 0 {
            // no variation: every truncation is the center
            return Ok(0);
        }
        if k > avail {
            return Err(DensError::KTooLarge { requested: k, available: avail });
        }
        Ok(k)
    }

    fn to_density(&self, coef: &[f64]) -> Result<DensityFn> {
        match &self.fitted {
            Fitted::Ordinary { system } => project_to_density(&system.expand(coef)?, self.floor),
            Fitted::Transform { spec, system } => {
                let x = system.expand(coef)?;
                let x = TransformedFn::new(*x.grid(), x.into_values(), *spec)?;
                spec.inverse_with_floor(&x, &self.grid, self.floor)
            }
            Fitted::Sphere { pga } => {
                // the tangent mean vanishes up to the Karcher tolerance
                let v = pga.tangent.expand(coef)?;
                square_back_with_floor(&crate::sphere::exp_map(&pga.mean, &v)?, self.floor)
            }
        }
    }

    /// The representation with no components.
    pub fn center(&self) -> Result<DensityFn> {
        self.to_density(&[])
    }

    /// Subject `i` from its first `k` scores.
    pub fn represent_one(&self, i: usize, k: usize) -> Result<DensityFn> {
        let k = self.check_k(k)?;
        let scores = self.system().scores.get(i).ok_or_else(|| {
            DensError::InvalidArgument(format!("subject {i} out of range ({} subjects)", self.n_subjects()))
        })?;
        self.to_density(&scores[..k])
    }

    pub fn represent(&self, k: usize) -> Result<Vec<DensityFn>> {
        self.check_k(k)?;
        (0..self.n_subjects()).into_par_iter().map(|i| self.represent_one(i, k)).collect()
    }

    /// Mode of variation `k` (from 1) at `alpha` standard deviations.
    pub fn mode(&self, k: usize, alpha: f64) -> Result<DensityFn> {
        if k == 0 {
            return Err(DensError::InvalidArgument("components are numbered from 1".into()));
        }
        match &self.fitted {
            Fitted::Ordinary { system } => project_to_density(&mode_of_variation(system, k, alpha)?, self.floor),
            Fitted::Transform { spec, system } => {
                let x = mode_of_variation(system, k, alpha)?;
                let x = TransformedFn::new(*x.grid(), x.into_values(), *spec)?;
                spec.inverse_with_floor(&x, &self.grid, self.floor)
            }
            Fitted::Sphere { pga } => pga.mode(k, alpha, self.floor),
        }
    }

    /// Default truncation: the smallest `K` whose eigenvalues carry all but a
    /// `1e-8` fraction of the total, capped at `min(n - 1, 20)`.
    pub fn default_k_max(&self) -> usize {
        let ev = &self.system().eigenvalues;
        if ev.is_empty() {
            return 1;
        }
        let total: f64 = ev.iter().sum();
        let mut acc = 0.0;
        let mut k = ev.len();
        for (i, l) in ev.iter().enumerate() {
            acc += l;
            if acc >= (1.0 - 1e-8) * total {
                k = i + 1;
                break;
            }
        }
        let cap = self.n_subjects().saturating_sub(1).clamp(1, K_MAX_CAP);
        k.clamp(1, cap)
    }
}

/// Modes of the transformed sample mapped back to densities.
pub fn transformation_modes(sample: &[DensityFn], spec: TransformSpec, k: usize, alpha: f64) -> Result<DensityFn> {
    FittedModel::fit(sample, MethodKind::Transform { transform: spec })?.mode(k, alpha)
}

/// Truncated representations of every sample member.
pub fn represent(sample: &[DensityFn], method: MethodKind, k: usize) -> Result<Vec<DensityFn>> {
    if k == 0 {
        return Err(DensError::InvalidArgument("K must be at least 1".into()));
    }
    FittedModel::fit(sample, method)?.represent(k)
}

/// Where the analysed densities came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySource {
    Supplied,
    Estimated { bandwidth: f64, kernel: KernelSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetReport {
    pub method: MethodKind,
    pub metric: Metric,
    pub v_infinity: f64,
    /// Variance explained by `K = 1..=K_max` components.
    pub v_k: Vec<f64>,
    pub fve: Vec<f64>,
    pub selected_k: usize,
    pub reached: bool,
    pub p: f64,
    pub source: DensitySource,
}

/// Smallest `K` with `fve[K-1] > p`; if none qualifies, the largest `K` and
/// `false`.
pub fn select_k(fve: &[f64], p: f64) -> Result<(usize, bool)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DensError::InvalidArgument(format!("threshold p = {p} must lie in (0, 1)")));
    }
    if fve.is_empty() {
        return Err(DensError::InvalidArgument("empty FVE curve".into()));
    }
    Ok(match fve.iter().position(|&v| v > p) {
        Some(i) => (i + 1, true),
        None => (fve.len(), false),
    })
}

/// FVE curve of a fitted model under `metric` for `K = 1..=k_max`.
pub fn fve_curve_for(
    sample: &[DensityFn],
    model: &FittedModel,
    metric: Metric,
    k_max: Option<usize>,
    p: f64,
) -> Result<FrechetReport> {
    let k_max = match k_max {
        Some(0) => return Err(DensError::InvalidArgument("K_max must be at least 1".into())),
        Some(k) => {
            model.check_k(k)?;
            k
        }
        None => model.default_k_max(),
    };
    let mean = frechet_mean(sample, metric)?;
    let v_inf = frechet_variance(sample, &mean, metric)?;
    let mut v_k = Vec::with_capacity(k_max);
    let mut fve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let reps = model.represent(k)?;
        let resid = mean_sq_distance(sample, &reps, metric)?;
        let v = v_inf - resid;
        v_k.push(v);
        fve.push(if v_inf > 0.0 { v / v_inf } else { 1.0 });
    }
    let (selected_k, reached) = select_k(&fve, p)?;
    Ok(FrechetReport {
        method: model.method(),
        metric,
        v_infinity: v_inf,
        v_k,
        fve,
        selected_k,
        reached,
        p,
        source: DensitySource::Supplied,
    })
}

pub fn fve_curve(
    sample: &[DensityFn],
    method: MethodKind,
    metric: Metric,
    k_max: Option<usize>,
    p: f64,
) -> Result<FrechetReport> {
    let model = FittedModel::fit(sample, method)?;
    fve_curve_for(sample, &model, metric, k_max, p)
}
