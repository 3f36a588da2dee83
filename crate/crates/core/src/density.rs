//! Densities on a uniform grid and their equivalent representations
//! (distribution function, quantile function, quantile density, hazard).

use serde::{Deserialize, Serialize};

use crate::error::{DensError, Result};
use crate::grid::Grid;

/// Default lower bound for density values.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Tolerance on the unit-mass invariant.
pub const MASS_TOL: f64 = 1e-10;

/// Anything stored as values on a [`Grid`].
pub trait GridFunction {
    fn grid(&self) -> &Grid;
    fn values(&self) -> &[f64];
}

/// An unconstrained function on a grid (means, eigenfunctions, reconstructions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DensError::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DensError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
}

impl GridFunction for GridFn {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A probability density on a compact interval: nonnegative, finite and with
/// unit trapezoidal mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFn {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityFn {
    /// Validates an already-normalized density.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DensError::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DensError::NonFinite(i));
        }
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(DensError::NonPositive(i));
        }
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(DensError::BadMass(mass));
        }
        Ok(Self { grid, values })
    }

    /// Evaluates `f` on the grid and normalizes with the default floor.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let raw: Vec<f64> = grid.points().into_iter().map(f).collect();
        normalize(&grid, &raw, DEFAULT_FLOOR)
    }

    /// Uniform density on the grid's support.
    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / grid.width();
        Self { grid, values: vec![v; grid.len()] }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The same density expressed on the unit interval:
    /// `g(u) = width * f(lo + u * width)`.
    pub fn to_unit(&self) -> DensityFn {
        let w = self.grid.width();
        let grid = Grid::unit(self.grid.len()).expect("grid length already validated");
        DensityFn { grid, values: self.values.iter().map(|v| v * w).collect() }
    }

    /// Inverse of [`DensityFn::to_unit`].
    pub fn from_unit(&self, lo: f64, hi: f64) -> Result<DensityFn> {
        let grid = Grid::new(lo, hi, self.grid.len())?;
        let w = grid.width();
        Ok(DensityFn { grid, values: self.values.iter().map(|v| v / w).collect() })
    }

    pub fn as_grid_fn(&self) -> GridFn {
        GridFn { grid: self.grid, values: self.values.clone() }
    }
}

impl GridFunction for DensityFn {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Clamps `raw` from below at `floor` and rescales to unit mass.
///
/// Rescaling can push floored values below the floor when the clamped mass
/// exceeds one, so clamp and rescale alternate until both hold. An input that
/// already satisfies both is returned unchanged, which makes the operation
/// idempotent.
pub fn normalize(grid: &Grid, raw: &[f64], floor: f64) -> Result<DensityFn> {
    if raw.len() != grid.len() {
        return Err(DensError::GridMismatch);
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(DensError::NonFinite(i));
    }
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(DensError::InvalidArgument(format!("floor {floor} must be finite and >= 0")));
    }
    if !raw.iter().any(|&v| v > 0.0) {
        return Err(DensError::AllZero);
    }
    let mut values: Vec<f64> = raw.to_vec();
    for _ in 0..100 {
        let mut clamped = false;
        for v in values.iter_mut() {
            if *v < floor || *v < 0.0 {
                *v = floor.max(0.0);
                clamped = true;
            }
        }
        let mass = grid.integrate(&values);
        if mass <= 0.0 {
            return Err(DensError::AllZero);
        }
        if !clamped && (mass - 1.0).abs() <= 1e-13 {
            break;
        }
        let scale = 1.0 / mass;
        for v in values.iter_mut() {
            *v *= scale;
        }
        // floored cells now sit at floor * scale; done once nothing dips below
        if values.iter().all(|&v| v >= floor) {
            break;
        }
    }
    Ok(DensityFn { grid: *grid, values })
}

/// Distribution function at the grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfFn {
    grid: Grid,
    values: Vec<f64>,
}

impl CdfFn {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DensError::GridMismatch);
        }
        if values[0] != 0.0 || (values[values.len() - 1] - 1.0).abs() > MASS_TOL {
            return Err(DensError::InvalidArgument("cdf must run from 0 to 1".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(DensError::InvalidArgument("cdf must be nondecreasing".into()));
        }
        Ok(Self { grid, values })
    }

    /// Smallest `x` with `F(x) >= t` under piecewise-linear interpolation.
    pub fn quantile(&self, t: f64) -> f64 {
        let f = &self.values;
        let m = f.len();
        if t <= 0.0 {
            return self.grid.lo();
        }
        if t >= f[m - 1] {
            // first node reaching the top
            let idx = f.partition_point(|&v| v < f[m - 1]);
            return self.grid.point(idx);
        }
        let idx = f.partition_point(|&v| v < t);
        let (f0, f1) = (f[idx - 1], f[idx]);
        let x0 = self.grid.point(idx - 1);
        x0 + (t - f0) / (f1 - f0) * self.grid.step()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }
}

impl GridFunction for CdfFn {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Cumulative trapezoidal integral, pinned to 0 at `lo` and exactly 1 at `hi`.
pub fn to_cdf(f: &DensityFn) -> CdfFn {
    let mut c = f.grid.cumulative(&f.values);
    let total = c[c.len() - 1];
    for v in c.iter_mut() {
        *v /= total;
    }
    let last = c.len() - 1;
    c[0] = 0.0;
    c[last] = 1.0;
    CdfFn { grid: f.grid, values: c }
}

/// Quantile function on a grid of probability levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFn {
    tgrid: Grid,
    values: Vec<f64>,
}

impl GridFunction for QuantileFn {
    fn grid(&self) -> &Grid {
        &self.tgrid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_unit(tgrid: &Grid) -> Result<()> {
    if tgrid.lo() != 0.0 || tgrid.hi() != 1.0 {
        return Err(DensError::InvalidGrid("probability grid must span [0, 1]".into()));
    }
    Ok(())
}

/// Piecewise-linear inversion of `cdf` on `tgrid` (which must be `[0, 1]`).
pub fn to_quantile(cdf: &CdfFn, tgrid: &Grid) -> Result<QuantileFn> {
    check_unit(tgrid)?;
    let v = &cdf.values;
    if let Some(j) = (0..v.len().saturating_sub(2)).find(|&j| v[j + 2] <= v[j]) {
        return Err(DensError::NotInvertible(j));
    }
    let mut values: Vec<f64> = tgrid.points().into_iter().map(|t| cdf.quantile(t)).collect();
    let last = values.len() - 1;
    values[0] = cdf.grid.lo();
    values[last] = cdf.grid.hi();
    Ok(QuantileFn { tgrid: *tgrid, values })
}

/// Quantile density `q(t) = 1 / f(Q(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileDensityFn {
    tgrid: Grid,
    values: Vec<f64>,
}

impl GridFunction for QuantileDensityFn {
    fn grid(&self) -> &Grid {
        &self.tgrid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn to_quantile_density(f: &DensityFn, tgrid: &Grid) -> Result<QuantileDensityFn> {
    if let Some(i) = f.values.iter().position(|&v| v <= 0.0) {
        return Err(DensError::NonPositive(i));
    }
    let q = to_quantile(&to_cdf(f), tgrid)?;
    let values = q.values.iter().map(|&x| 1.0 / f.eval(x)).collect();
    Ok(QuantileDensityFn { tgrid: *tgrid, values })
}

/// Hazard `f / (1 - F)` of the unit-interval version of a density, on
/// `[0, 1 - delta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardFn {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction for HazardFn {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn to_hazard(f: &DensityFn, delta: f64) -> Result<HazardFn> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DensError::InvalidArgument(format!("delta {delta} must lie in (0, 1)")));
    }
    let unit = f.to_unit();
    let cdf = to_cdf(&unit);
    let grid = Grid::new(0.0, 1.0 - delta, f.grid.len())?;
    let mut values = Vec::with_capacity(grid.len());
    for t in grid.points() {
        let surv = 1.0 - cdf.eval(t);
        if surv <= 0.0 {
            return Err(DensError::Overflow(format!("survival vanishes at t = {t}")));
        }
        values.push(unit.eval(t) / surv);
    }
    Ok(HazardFn { grid, values })
}
