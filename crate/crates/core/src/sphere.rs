//! Square-root densities on the unit sphere of L2: geodesic distance,
//! exponential and log maps, Karcher mean and tangent-space PCA.

use serde::{Deserialize, Serialize};

use crate::density::{normalize, DensityFn, GridFn, GridFunction, DEFAULT_FLOOR};
use crate::error::{DensError, Result};
use crate::fpca::EigenSystem;
use crate::grid::Grid;

pub const KARCHER_TOL: f64 = 1e-9;
pub const KARCHER_MAX_ITER: usize = 200;

/// `sqrt(f)` on a grid; unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction for SpherePoint {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl SpherePoint {
    /// Rescales `values` to unit norm.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DensError::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DensError::NonFinite(i));
        }
        let n = norm(&grid, &values);
        if n == 0.0 {
            return Err(DensError::AllZero);
        }
        Ok(Self { grid, values: values.into_iter().map(|v| v / n).collect() })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.grid, &self.values)
    }
}

fn inner(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    grid.integrate(&p)
}

fn norm(grid: &Grid, a: &[f64]) -> f64 {
    inner(grid, a, a).max(0.0).sqrt()
}

pub fn sqrt_embed(f: &DensityFn) -> SpherePoint {
    SpherePoint { grid: *f.grid(), values: f.values().iter().map(|v| v.sqrt()).collect() }
}

/// Squares, floors and renormalizes.
pub fn square_back(p: &SpherePoint) -> Result<DensityFn> {
    square_back_with_floor(p, DEFAULT_FLOOR)
}

pub fn square_back_with_floor(p: &SpherePoint, floor: f64) -> Result<DensityFn> {
    let raw: Vec<f64> = p.values.iter().map(|v| v * v).collect();
    normalize(&p.grid, &raw, floor)
}

fn check(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(DensError::GridMismatch);
    }
    Ok(())
}

/// `arccos <p, q>`, in `[0, pi]`.
pub fn geodesic_distance(p: &SpherePoint, q: &SpherePoint) -> Result<f64> {
    check(&p.grid, &q.grid)?;
    Ok(inner(&p.grid, &p.values, &q.values).clamp(-1.0, 1.0).acos())
}

/// Fisher-Rao distance between densities, up to a constant factor.
pub fn fisher_rao_distance(f: &DensityFn, g: &DensityFn) -> Result<f64> {
    geodesic_distance(&sqrt_embed(f), &sqrt_embed(g))
}

/// Tangent vector at `mu` pointing to `p`, with length equal to the geodesic
/// distance.
pub fn log_map(mu: &SpherePoint, p: &SpherePoint) -> Result<GridFn> {
    check(&mu.grid, &p.grid)?;
    let c = inner(&mu.grid, &mu.values, &p.values).clamp(-1.0, 1.0);
    let theta = c.acos();
    let factor = if theta < 1e-12 { 1.0 } else { theta / theta.sin() };
    let v = p.values.iter().zip(&mu.values).map(|(pv, mv)| factor * (pv - c * mv)).collect();
    GridFn::new(mu.grid, v)
}

/// `cos|v| mu + sin|v| v / |v|`.
pub fn exp_map(mu: &SpherePoint, v: &GridFn) -> Result<SpherePoint> {
    check(&mu.grid, v.grid())?;
    let len = norm(&mu.grid, v.values());
    if len == 0.0 {
        return Ok(mu.clone());
    }
    let (c, s) = (len.cos(), len.sin() / len);
    let values = mu.values.iter().zip(v.values()).map(|(m, t)| c * m + s * t).collect();
    SpherePoint::from_values(mu.grid, values)
}

/// Average of the log maps at `mu`.
fn mean_tangent(mu: &SpherePoint, sample: &[SpherePoint]) -> Result<GridFn> {
    let mut acc = vec![0.0; mu.grid.len()];
    for p in sample {
        let v = log_map(mu, p)?;
        acc.iter_mut().zip(v.values()).for_each(|(a, b)| *a += b);
    }
    let n = sample.len() as f64;
    GridFn::new(mu.grid, acc.into_iter().map(|a| a / n).collect())
}

/// Karcher mean by unit-step tangent averaging, started from the normalized
/// extrinsic mean.
pub fn karcher_mean(sample: &[SpherePoint], tol: f64, max_iter: usize) -> Result<SpherePoint> {
    let first = sample.first().ok_or(DensError::EmptySample)?;
    let grid = first.grid;
    if sample.iter().any(|p| p.grid != grid) {
        return Err(DensError::GridMismatch);
    }
    let mut acc = vec![0.0; grid.len()];
    for p in sample {
        acc.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b);
    }
    let mut mu = SpherePoint::from_values(grid, acc)?;
    for _ in 0..max_iter {
        let v = mean_tangent(&mu, sample)?;
        if norm(&grid, v.values()) <= tol {
            return Ok(mu);
        }
        mu = exp_map(&mu, &v)?;
    }
    let v = mean_tangent(&mu, sample)?;
    if norm(&grid, v.values()) <= tol {
        return Ok(mu);
    }
    Err(DensError::NoConvergence(max_iter))
}

/// Fréchet mean under the Fisher-Rao metric: the Karcher mean of the square
/// roots, squared back.
pub fn fisher_rao_mean(sample: &[DensityFn]) -> Result<DensityFn> {
    let pts: Vec<SpherePoint> = sample.iter().map(sqrt_embed).collect();
    square_back(&karcher_mean(&pts, KARCHER_TOL, KARCHER_MAX_ITER)?)
}

/// Karcher mean and tangent-space principal components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pga {
    pub mean: SpherePoint,
    pub tangent: EigenSystem,
}

pub fn pga(sample: &[SpherePoint]) -> Result<Pga> {
    let mean = karcher_mean(sample, KARCHER_TOL, KARCHER_MAX_ITER)?;
    let logs = sample.iter().map(|p| log_map(&mean, p)).collect::<Result<Vec<_>>>()?;
    let tangent = EigenSystem::fit(&logs)?;
    Ok(Pga { mean, tangent })
}

impl Pga {
    pub fn fit(sample: &[DensityFn]) -> Result<Self> {
        let pts: Vec<SpherePoint> = sample.iter().map(sqrt_embed).collect();
        pga(&pts)
    }

    /// Subject `i` rebuilt from `k` tangent components.
    pub fn represent(&self, i: usize, k: usize, floor: f64) -> Result<DensityFn> {
        let v = self.tangent.expand(&self.tangent.scores[i][..k])?;
        square_back_with_floor(&exp_map(&self.mean, &v)?, floor)
    }

    /// `exp_mu(alpha sqrt(tau_k) e_k)`, squared back; `k` counted from 1.
    pub fn mode(&self, k: usize, alpha: f64, floor: f64) -> Result<DensityFn> {
        if k == 0 {
            return Err(DensError::InvalidArgument("components are numbered from 1".into()));
        }
        if k > self.tangent.n_components() {
            return Err(DensError::KTooLarge { requested: k, available: self.tangent.n_components() });
        }
        let e = &self.tangent.eigenfunctions[k - 1];
        let step = alpha * self.tangent.eigenvalues[k - 1].sqrt();
        let v = GridFn::new(*e.grid(), e.values().iter().map(|x| step * x).collect())?;
        square_back_with_floor(&exp_map(&self.mean, &v)?, floor)
    }
}

/// Representations of every subject from `k` tangent components.
pub fn hs_represent(sample: &[DensityFn], k: usize) -> Result<Vec<DensityFn>> {
    let model = Pga::fit(sample)?;
    (0..sample.len()).map(|i| model.represent(i, k, DEFAULT_FLOOR)).collect()
}

pub fn hs_mode(sample: &[DensityFn], k: usize, alpha: f64) -> Result<DensityFn> {
    Pga::fit(sample)?.mode(k, alpha, DEFAULT_FLOOR)
}
