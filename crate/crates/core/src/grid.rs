//! Uniform grids, trapezoidal quadrature and piecewise-linear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{DensError, Result};

/// Uniform grid `lo + j * step` for `j = 0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    m: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(DensError::InvalidGrid("non-finite endpoint".into()));
        }
        if hi <= lo {
            return Err(DensError::InvalidGrid(format!("hi {hi} must exceed lo {lo}")));
        }
        if m < 3 {
            return Err(DensError::InvalidGrid(format!("need at least 3 points, got {m}")));
        }
        Ok(Self { lo, hi, m })
    }

    /// The unit interval with `m` points.
    pub fn unit(m: usize) -> Result<Self> {
        Self::new(0.0, 1.0, m)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn step(&self) -> f64 {
        self.width() / (self.m - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.m {
            self.hi
        } else {
            self.lo + j as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.point(j)).collect()
    }

    /// Same number of points, different endpoints.
    pub fn with_support(&self, lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, self.m)
    }

    pub fn same_support(&self, other: &Grid) -> bool {
        let tol = 1e-12 * self.width().max(other.width());
        (self.lo - other.lo).abs() <= tol && (self.hi - other.hi).abs() <= tol
    }

    /// Trapezoidal weights; `sum_j w_j g_j` approximates the integral of `g`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let d = self.step();
        let mut w = vec![d; self.m];
        w[0] = 0.5 * d;
        w[self.m - 1] = 0.5 * d;
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        trapezoid(self.step(), values)
    }

    /// Running trapezoidal integral starting at 0.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        cumulative_trapezoid(self.step(), values)
    }

    /// Linear interpolation of grid values at `x`, clamped to the grid ends.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.m);
        let (j, frac) = self.locate(x);
        if frac == 0.0 {
            values[j]
        } else {
            values[j] + frac * (values[j + 1] - values[j])
        }
    }

    /// Cell index and fractional offset in `[0, 1)` of `x`, clamped.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        if x <= self.lo {
            return (0, 0.0);
        }
        if x >= self.hi {
            return (self.m - 1, 0.0);
        }
        let s = (x - self.lo) / self.step();
        let j = (s.floor() as usize).min(self.m - 2);
        let frac = (s - j as f64).clamp(0.0, 1.0);
        (j, frac)
    }
}

pub fn trapezoid(step: f64, values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}

pub fn cumulative_trapezoid(step: f64, values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// `int_0^step exp(a + (b - a) s / step) ds`, exact for linear exponents.
pub fn exp_linear_integral(step: f64, a: f64, b: f64) -> f64 {
    let d = b - a;
    if d.abs() < 1e-8 {
        // series of (e^d - 1)/d
        step * a.exp() * (1.0 + d / 2.0 + d * d / 6.0)
    } else {
        step * (b.exp() - a.exp()) / d
    }
}

/// Inverse of `s -> int_0^s exp(a + slope u) du` on one cell; `target` is the
/// partial integral.
pub fn exp_linear_inverse(step: f64, a: f64, b: f64, target: f64) -> f64 {
    let slope = (b - a) / step;
    let scaled = target * (-a).exp();
    if (slope * step).abs() < 1e-8 {
        scaled
    } else {
        (1.0 + slope * scaled).ln() / slope
    }
}

/// `int_0^step exp(X)` when `exp(-X)` is linear from `exp(-a)` to `exp(-b)`.
pub fn recip_linear_integral(step: f64, a: f64, b: f64) -> f64 {
    let d = b - a;
    if d.abs() < 1e-5 {
        // series of d / (1 - e^{-d})
        step * a.exp() * (1.0 + d / 2.0 + d * d / 12.0)
    } else {
        step * a.exp() * d / -(-d).exp_m1()
    }
}

/// `X` at the point of a cell where `int exp(X)`, under the model of
/// [`recip_linear_integral`], reaches `target`.
pub fn recip_linear_inverse(step: f64, a: f64, b: f64, target: f64) -> f64 {
    let x = a - target * (-a).exp() * (a - b).exp_m1() / step;
    x.clamp(a.min(b), a.max(b))
}

/// Linear interpolation on an arbitrary nondecreasing abscissa.
pub fn interp_monotone(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // first index with xs[idx] > x
    let idx = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    if x1 <= x0 {
        return y0;
    }
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(0.0, 1.0, 2).is_err());
        assert!(Grid::new(1.0, 1.0, 10).is_err());
        assert!(Grid::new(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn endpoints_are_exact() {
        let g = Grid::new(-3.0, 3.0, 512).unwrap();
        assert_eq!(g.point(0), -3.0);
        assert_eq!(g.point(511), 3.0);
        assert!((g.step() - 6.0 / 511.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let g = Grid::new(0.0, 2.0, 7).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((g.integrate(&v) - 8.0).abs() < 1e-14);
        let c = g.cumulative(&v);
        assert!((c[6] - 8.0).abs() < 1e-14);
    }

    #[test]
    fn exp_linear_matches_quadrature() {
        let (a, b, h) = (0.3, 2.1, 0.5);
        let fine = Grid::new(0.0, h, 20001).unwrap();
        let v: Vec<f64> = fine.points().iter().map(|s| (a + (b - a) * s / h).exp()).collect();
        let q = fine.integrate(&v);
        assert!((exp_linear_integral(h, a, b) - q).abs() < 1e-8);
        let s = 0.37;
        let part = exp_linear_integral(s, a, a + (b - a) * s / h);
        assert!((exp_linear_inverse(h, a, b, part) - s).abs() < 1e-12);
    }

    #[test]
    fn interpolation_clamps() {
        let g = Grid::unit(5).unwrap();
        let v = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(g.interpolate(&v, -1.0), 0.0);
        assert_eq!(g.interpolate(&v, 2.0), 4.0);
        assert!((g.interpolate(&v, 0.375) - 1.5).abs() < 1e-14);
    }
}
