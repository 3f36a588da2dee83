//! Functional principal component analysis on a shared grid.
//!
//! Inner products use trapezoidal weights `W`. The covariance operator is
//! discretized as `W^{1/2} G W^{1/2}`, which stays symmetric, and eigenvectors
//! are mapped back with `W^{-1/2}` so eigenfunctions are orthonormal in L2.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::density::{normalize, DensityFn, GridFn, GridFunction};
use crate::error::{DensError, Result};
use crate::grid::Grid;

/// Components with eigenvalue below this fraction of the largest are dropped.
pub const RELATIVE_EIGEN_TOL: f64 = 1e-12;

fn shared_grid<G: GridFunction>(sample: &[G]) -> Result<Grid> {
    let first = sample.first().ok_or(DensError::EmptySample)?;
    let grid = *first.grid();
    if sample.iter().any(|g| *g.grid() != grid) {
        return Err(DensError::GridMismatch);
    }
    Ok(grid)
}

/// Pointwise average.
pub fn cross_sectional_mean<G: GridFunction>(sample: &[G]) -> Result<GridFn> {
    let grid = shared_grid(sample)?;
    let n = sample.len() as f64;
    let mut acc = vec![0.0; grid.len()];
    for f in sample {
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    GridFn::new(grid, acc)
}

/// Symmetric surface on `grid x grid`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSurface {
    grid: Grid,
    values: Vec<f64>,
}

impl CovSurface {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.len() {
            return Err(DensError::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DensError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[s * self.grid.len() + t]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn centered<G: GridFunction>(sample: &[G], mean: &GridFn) -> Result<Vec<Vec<f64>>> {
    let grid = shared_grid(sample)?;
    if *mean.grid() != grid {
        return Err(DensError::GridMismatch);
    }
    Ok(sample
        .iter()
        .map(|f| f.values().iter().zip(mean.values()).map(|(a, b)| a - b).collect())
        .collect())
}

/// `n^-1 sum_i (X_i(s) - mean(s)) (X_i(t) - mean(t))`.
pub fn covariance<G: GridFunction>(sample: &[G], mean: &GridFn) -> Result<CovSurface> {
    let c = centered(sample, mean)?;
    let m = mean.grid().len();
    let n = c.len() as f64;
    let mut values = vec![0.0; m * m];
    for s in 0..m {
        for t in s..m {
            let v = c.iter().map(|r| r[s] * r[t]).sum::<f64>() / n;
            values[s * m + t] = v;
            values[t * m + s] = v;
        }
    }
    CovSurface::new(*mean.grid(), values)
}

/// Largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Sorts eigenpairs descending, clips negatives to 0 and keeps at most `k`.
fn ordered_pairs(eig: SymmetricEigen<f64, nalgebra::Dyn>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|i| (eig.eigenvalues[i].max(0.0), eig.eigenvectors.column(i).iter().copied().collect()))
        .collect()
}

/// Eigenvalues and L2-orthonormal eigenfunctions of a covariance surface,
/// leading `k` pairs.
pub fn eigendecompose(cov: &CovSurface, k: usize) -> Result<(Vec<f64>, Vec<GridFn>)> {
    let grid = *cov.grid();
    let m = grid.len();
    if k > m {
        return Err(DensError::KTooLarge { requested: k, available: m });
    }
    let scale = cov.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    for s in 0..m {
        for t in s + 1..m {
            if (cov.get(s, t) - cov.get(t, s)).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(DensError::NotSymmetric);
            }
        }
    }
    let sw: Vec<f64> = grid.trapezoid_weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |s, t| {
        let v = 0.5 * (cov.get(s, t) + cov.get(t, s));
        sw[s] * v * sw[t]
    });
    let pairs = ordered_pairs(SymmetricEigen::new(a), k);
    let mut values = Vec::with_capacity(k);
    let mut funcs = Vec::with_capacity(k);
    for (lambda, vec) in pairs {
        let mut phi: Vec<f64> = vec.iter().zip(&sw).map(|(v, w)| v / w).collect();
        let norm = grid.integrate(&phi.iter().map(|p| p * p).collect::<Vec<_>>()).sqrt();
        if norm > 0.0 {
            phi.iter_mut().for_each(|p| *p /= norm);
        }
        fix_sign(&mut phi);
        values.push(lambda);
        funcs.push(GridFn::new(grid, phi)?);
    }
    Ok((values, funcs))
}

fn inner(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    grid.integrate(&p)
}

/// `n x K` matrix of `int (X_i - mean) phi_k`.
pub fn scores<G: GridFunction>(sample: &[G], mean: &GridFn, eigenfunctions: &[GridFn]) -> Result<Vec<Vec<f64>>> {
    let c = centered(sample, mean)?;
    let grid = *mean.grid();
    if eigenfunctions.iter().any(|e| *e.grid() != grid) {
        return Err(DensError::GridMismatch);
    }
    Ok(c.iter().map(|r| eigenfunctions.iter().map(|e| inner(&grid, r, e.values())).collect()).collect())
}

/// Mean, eigenpairs and scores of a sample of functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub mean: GridFn,
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<GridFn>,
    pub scores: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// Fits all components with eigenvalue above the relative tolerance.
    pub fn fit<G: GridFunction>(sample: &[G]) -> Result<Self> {
        let mean = cross_sectional_mean(sample)?;
        let grid = *mean.grid();
        let c = centered(sample, &mean)?;
        let (n, m) = (c.len(), grid.len());
        let (values, funcs) = if n < m {
            gram_route(&grid, &c)?
        } else {
            let cov = covariance(sample, &mean)?;
            eigendecompose(&cov, m)?
        };
        // centering leaves rounding noise of order eps * max|X|; eigenvalues at
        // that level are treated as zero
        let maxabs = sample.iter().flat_map(|f| f.values()).fold(0.0f64, |a, v| a.max(v.abs()));
        let noise = (1e3 * f64::EPSILON * maxabs).powi(2) * grid.width();
        let top = values.first().copied().unwrap_or(0.0);
        let keep = values
            .iter()
            .take_while(|&&l| top > noise && l > RELATIVE_EIGEN_TOL * top && l > noise)
            .count();
        let eigenvalues = values[..keep].to_vec();
        let eigenfunctions = funcs[..keep].to_vec();
        let scores = scores(sample, &mean, &eigenfunctions)?;
        Ok(Self { mean, eigenvalues, eigenfunctions, scores })
    }

    pub fn grid(&self) -> &Grid {
        self.mean.grid()
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.scores.len()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.n_components() {
            return Err(DensError::KTooLarge { requested: k, available: self.n_components() });
        }
        Ok(())
    }

    /// `mean + sum_{k <= K} c_k phi_k`.
    pub fn expand(&self, coef: &[f64]) -> Result<GridFn> {
        self.check_k(coef.len())?;
        let mut v = self.mean.values().to_vec();
        for (c, e) in coef.iter().zip(&self.eigenfunctions) {
            for (a, b) in v.iter_mut().zip(e.values()) {
                *a += c * b;
            }
        }
        GridFn::new(*self.grid(), v)
    }

    /// Scores of a new function on the first `k` components.
    pub fn project<G: GridFunction>(&self, f: &G, k: usize) -> Result<Vec<f64>> {
        self.check_k(k)?;
        if f.grid() != self.grid() {
            return Err(DensError::GridMismatch);
        }
        let r: Vec<f64> = f.values().iter().zip(self.mean.values()).map(|(a, b)| a - b).collect();
        Ok(self.eigenfunctions[..k].iter().map(|e| inner(self.grid(), &r, e.values())).collect())
    }

    /// Fraction of total variance in the first `k` components, `k = 1..`.
    pub fn fve(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                if total > 0.0 {
                    acc / total
                } else {
                    1.0
                }
            })
            .collect()
    }
}

/// Eigenpairs through the `n x n` Gram matrix of the weighted centered data.
fn gram_route(grid: &Grid, c: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<GridFn>)> {
    let (n, m) = (c.len(), grid.len());
    let sw: Vec<f64> = grid.trapezoid_weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, m, |i, j| c[i][j] * sw[j]);
    let gram = (&a * a.transpose()) / n as f64;
    let gram = (&gram + gram.transpose()) * 0.5;
    let pairs = ordered_pairs(SymmetricEigen::new(gram), n);
    let mut values = Vec::with_capacity(n);
    let mut funcs = Vec::with_capacity(n);
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (lambda, u) in pairs {
        if lambda <= 0.0 {
            break;
        }
        let u = nalgebra::DVector::from_vec(u);
        let mut v: Vec<f64> = (a.transpose() * u).iter().copied().collect();
        // small components lose orthogonality through A^T u; two passes of
        // Gram-Schmidt against the leading ones restore it
        for _ in 0..2 {
            for prev in &vecs {
                let d: f64 = prev.iter().zip(&v).map(|(p, x)| p * x).sum();
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= d * p);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        vecs.push(v);
        values.push(lambda);
    }
    for v in vecs {
        let mut phi: Vec<f64> = v.iter().zip(&sw).map(|(x, w)| x / w).collect();
        fix_sign(&mut phi);
        funcs.push(GridFn::new(*grid, phi)?);
    }
    Ok((values, funcs))
}

/// Reconstructions from the first `k` components; `k = 0` gives the mean.
pub fn truncate(system: &EigenSystem, k: usize) -> Result<Vec<GridFn>> {
    system.check_k(k)?;
    system.scores.iter().map(|s| system.expand(&s[..k])).collect()
}

/// `mean + alpha sqrt(lambda_k) phi_k`, with `k` counted from 1.
pub fn mode_of_variation(system: &EigenSystem, k: usize, alpha: f64) -> Result<GridFn> {
    if k == 0 {
        return Err(DensError::InvalidArgument("components are numbered from 1".into()));
    }
    system.check_k(k)?;
    let mut coef = vec![0.0; k];
    coef[k - 1] = alpha * system.eigenvalues[k - 1].sqrt();
    system.expand(&coef)
}

/// Positive part, floored and renormalized.
pub fn project_to_density(f: &GridFn, floor: f64) -> Result<DensityFn> {
    let pos: Vec<f64> = f.values().iter().map(|v| v.max(0.0)).collect();
    if f.grid().integrate(&pos) <= 0.0 {
        return Err(DensError::AllZero);
    }
    normalize(f.grid(), &pos, floor)
}
