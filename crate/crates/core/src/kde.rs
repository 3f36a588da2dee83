//! Boundary-corrected kernel density estimation on a compact support.
//!
//! Samples and grid are mapped affinely to `[0, 1]`. Near the ends the kernel
//! sum is multiplied by a weight `w(x, h)` that compensates for kernel mass
//! falling outside the support, and the result is divided by its own integral
//! so the estimate is a bona fide density.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::density::{normalize, DensityFn, DEFAULT_FLOOR};
use crate::error::{DensError, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian,
    Epanechnikov,
    Uniform,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = DensError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(KernelSpec::Gaussian),
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            "uniform" | "box" => Ok(KernelSpec::Uniform),
            other => Err(DensError::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

impl KernelSpec {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelSpec::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelSpec::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelSpec::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// `int_{-inf}^u kappa`.
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            KernelSpec::Gaussian => 0.5 * (1.0 + erf(u * FRAC_1_SQRT_2)),
            KernelSpec::Epanechnikov => {
                let u = u.clamp(-1.0, 1.0);
                0.5 + 0.75 * (u - u * u * u / 3.0)
            }
            KernelSpec::Uniform => 0.5 * (u.clamp(-1.0, 1.0) + 1.0),
        }
    }

    pub fn integral(self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }

    /// `(int_0^1 kappa)^{-1}`, the upper bound of the boundary weight.
    pub fn weight_bound(self) -> f64 {
        1.0 / self.integral(0.0, 1.0)
    }

    /// Beyond this |u| the kernel contributes nothing measurable.
    fn reach(self) -> f64 {
        match self {
            KernelSpec::Gaussian => 10.0,
            _ => 1.0,
        }
    }
}

/// Boundary weight at `x` in `[0, 1]` for bandwidth `h` in `(0, 1/2)`.
pub fn boundary_weight(x: f64, h: f64, kernel: KernelSpec) -> Result<f64> {
    if !(h > 0.0 && h < 0.5) {
        return Err(DensError::BadBandwidth(h));
    }
    Ok(weight_unchecked(x, h, kernel))
}

fn weight_unchecked(x: f64, h: f64, kernel: KernelSpec) -> f64 {
    if x < h {
        1.0 / kernel.integral(-x / h, 1.0)
    } else if x > 1.0 - h {
        1.0 / kernel.integral(-1.0, (1.0 - x) / h)
    } else {
        1.0
    }
}

/// `N^{-1/3}` clamped into `(0, 0.49]`.
pub fn default_bandwidth(n: usize) -> f64 {
    (n.max(1) as f64).powf(-1.0 / 3.0).min(0.49)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    /// Bandwidth in the units of the support; `bandwidth / width` must lie in
    /// `(0, 0.5)`.
    pub bandwidth: f64,
    pub kernel: KernelSpec,
    pub grid: Grid,
    pub floor: f64,
}

impl KdeConfig {
    pub fn new(bandwidth: f64, grid: Grid) -> Self {
        Self { bandwidth, kernel: KernelSpec::Gaussian, grid, floor: DEFAULT_FLOOR }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn unit_bandwidth(&self) -> f64 {
        self.bandwidth / self.grid.width()
    }
}

/// Estimates a density from `samples` on the configured grid.
pub fn estimate_density(samples: &[f64], cfg: &KdeConfig) -> Result<DensityFn> {
    let raw = kernel_sum(samples, cfg)?;
    normalize(&cfg.grid, &raw, cfg.floor)
}

/// Weighted kernel sums at the grid points divided by their trapezoidal
/// integral (the estimator before flooring).
pub fn kernel_sum(samples: &[f64], cfg: &KdeConfig) -> Result<Vec<f64>> {
    let grid = &cfg.grid;
    if samples.len() < 2 {
        return Err(DensError::TooFewSamples { got: samples.len(), need: 2 });
    }
    let h = cfg.unit_bandwidth();
    if !(h > 0.0 && h < 0.5) {
        return Err(DensError::BadBandwidth(h));
    }
    let (lo, width) = (grid.lo(), grid.width());
    let mut unit: Vec<f64> = Vec::with_capacity(samples.len());
    for &s in samples {
        if !s.is_finite() {
            return Err(DensError::NonFinite(unit.len()));
        }
        if s < grid.lo() || s > grid.hi() {
            return Err(DensError::OutOfSupport(s, grid.lo(), grid.hi()));
        }
        unit.push((s - lo) / width);
    }
    unit.sort_by(f64::total_cmp);
    let reach = cfg.kernel.reach() * h;
    let m = grid.len();
    let step = 1.0 / (m - 1) as f64;
    let mut values = Vec::with_capacity(m);
    for j in 0..m {
        let x = if j + 1 == m { 1.0 } else { j as f64 * step };
        let start = unit.partition_point(|&w| w < x - reach);
        let end = unit.partition_point(|&w| w <= x + reach);
        let s: f64 = unit[start..end].iter().map(|&w| cfg.kernel.eval((x - w) / h)).sum();
        values.push(s * weight_unchecked(x, h, cfg.kernel));
    }
    // denominator: sum_l int_0^1 kappa((y - W_l)/h) w(y, h) dy on the grid
    let total = grid.integrate(&values);
    if !(total > 0.0) {
        return Err(DensError::AllZero);
    }
    Ok(values.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GridFunction;
    use crate::metrics::{dist_l2, dist_sup};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interior_weight_is_one() {
        for k in [KernelSpec::Gaussian, KernelSpec::Epanechnikov, KernelSpec::Uniform] {
            assert_eq!(boundary_weight(0.5, 0.1, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn gaussian_weight_at_boundary() {
        // normal table: Phi(1) - Phi(0) = 0.341345
        let w = boundary_weight(0.0, 0.1, KernelSpec::Gaussian).unwrap();
        assert!((w - 1.0 / 0.341_344_746).abs() < 1e-3, "{w}");
        let w1 = boundary_weight(1.0, 0.1, KernelSpec::Gaussian).unwrap();
        assert!((w - w1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        assert_eq!(boundary_weight(0.1, 0.5, KernelSpec::Gaussian), Err(DensError::BadBandwidth(0.5)));
        assert_eq!(boundary_weight(0.1, 0.0, KernelSpec::Gaussian), Err(DensError::BadBandwidth(0.0)));
    }

    #[test]
    fn weight_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: f64 = rng.random();
            let h: f64 = rng.random_range(1e-3..0.4999);
            for k in [KernelSpec::Gaussian, KernelSpec::Epanechnikov, KernelSpec::Uniform] {
                let w = boundary_weight(x, h, k).unwrap();
                assert!(w >= 1.0 - 1e-12 && w <= k.weight_bound() + 1e-12, "{k:?} {x} {h} {w}");
            }
        }
    }

    #[test]
    fn default_bandwidth_examples() {
        assert!((default_bandwidth(1000) - 0.1).abs() < 1e-12);
        assert_eq!(default_bandwidth(8), 0.49);
        assert!((default_bandwidth(100) - 0.215_443_469).abs() < 1e-8);
    }

    #[test]
    fn sample_count_and_support_errors() {
        let cfg = KdeConfig::new(0.1, Grid::unit(101).unwrap());
        assert_eq!(estimate_density(&[0.5], &cfg), Err(DensError::TooFewSamples { got: 1, need: 2 }));
        assert!(matches!(estimate_density(&[0.5, 1.5], &cfg), Err(DensError::OutOfSupport(..))));
        // closed interval
        assert!(estimate_density(&[0.0, 1.0], &cfg).is_ok());
    }

    #[test]
    fn dirac_samples_give_symmetric_unimodal_estimate() {
        let g = Grid::unit(201).unwrap();
        let d = estimate_density(&[0.5; 10], &KdeConfig::new(0.2, g)).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        let v = d.values();
        for j in 0..201 {
            assert!((v[j] - v[200 - j]).abs() < 1e-12);
        }
        let peak = v.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, v[100]);
    }

    #[test]
    fn dirac_peak_decreases_with_bandwidth() {
        let g = Grid::unit(201).unwrap();
        let mut last = f64::INFINITY;
        let mut prev: Option<DensityFn> = None;
        for h in [0.05, 0.1, 0.2, 0.3, 0.45] {
            let d = estimate_density(&[0.5; 4], &KdeConfig::new(h, g)).unwrap();
            let peak = d.max_value();
            assert!(peak < last);
            last = peak;
            if let Some(p) = prev {
                assert!(dist_sup(&p, &d).unwrap() > 0.0);
            }
            prev = Some(d);
        }
    }

    #[test]
    fn uniform_samples_recover_uniform() {
        // The weight integrates the kernel up to u = 1, which fully corrects
        // the boundary only for kernels supported on [-1, 1].
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let g = Grid::unit(512).unwrap();
        let cfg = KdeConfig::new(default_bandwidth(n), g).with_kernel(KernelSpec::Epanechnikov);
        let d = estimate_density(&samples, &cfg).unwrap();
        let err = dist_l2(&d, &DensityFn::uniform(g)).unwrap();
        assert!(err <= 0.05, "{err}");
    }

    #[test]
    fn interior_location_equivariance() {
        // shift by a whole number of grid steps, far from both boundaries
        let g = Grid::new(0.0, 8.0, 801).unwrap();
        let shift_steps = 50;
        let c = shift_steps as f64 * g.step();
        let s1 = [3.7, 4.0, 4.1, 4.4, 4.9];
        let s2: Vec<f64> = s1.iter().map(|s| s + c).collect();
        let cfg = KdeConfig::new(0.2, g);
        let d1 = estimate_density(&s1, &cfg).unwrap();
        let d2 = estimate_density(&s2, &cfg).unwrap();
        for j in 0..801 - shift_steps {
            assert!((d1.values()[j] - d2.values()[j + shift_steps]).abs() <= 1e-6);
        }
    }

    #[test]
    fn every_kernel_gives_a_density() {
        let g = Grid::new(-1.0, 1.0, 257).unwrap();
        for k in [KernelSpec::Gaussian, KernelSpec::Epanechnikov, KernelSpec::Uniform] {
            let d = estimate_density(&[-0.99, -0.5, 0.0, 0.3, 0.95], &KdeConfig::new(0.3, g).with_kernel(k)).unwrap();
            assert!((d.mass() - 1.0).abs() < 1e-12);
            assert!(d.min_value() >= DEFAULT_FLOOR);
            assert_eq!(d.grid(), &g);
        }
    }
}
