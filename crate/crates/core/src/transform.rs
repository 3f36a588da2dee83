//! Log hazard and log quantile density transformations between densities
//! and unconstrained functions in L2.
//!
//! Both maps work on the unit-interval version of a density; inverses map
//! back to the requested native grid. For log quantile density functions the
//! density quantile `exp(-X)` is interpolated onto a finer grid and taken as
//! linear between its nodes, so that thin tails, where `X` has a logarithmic
//! singularity, stay resolved; log hazard functions are interpolated by cubics
//! and `exp(X)` is integrated as exp-linear.

use serde::{Deserialize, Serialize};

use crate::density::{normalize, to_cdf, CdfFn, DensityFn, GridFunction, DEFAULT_FLOOR};
use crate::error::{DensError, Result};
use crate::grid::{exp_linear_integral, recip_linear_integral, recip_linear_inverse, Grid};

/// Largest exponent accepted by the inverse maps.
pub const MAX_EXPONENT: f64 = 700.0;

/// Which transformation, with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// Log hazard on `[0, 1 - delta]`.
    LogHazard { delta: f64 },
    /// Log quantile density on `[0, 1]`.
    LogQuantileDensity,
}

impl TransformSpec {
    pub const DEFAULT_DELTA: f64 = 0.1;

    pub fn lqd() -> Self {
        TransformSpec::LogQuantileDensity
    }

    pub fn log_hazard(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(DensError::InvalidArgument(format!("delta {delta} must lie in (0, 0.5]")));
        }
        Ok(TransformSpec::LogHazard { delta })
    }

    pub fn forward(&self, f: &DensityFn) -> Result<TransformedFn> {
        match *self {
            TransformSpec::LogQuantileDensity => lqd_forward(f),
            TransformSpec::LogHazard { delta } => log_hazard_forward(f, delta),
        }
    }

    /// Maps back onto `grid` (native support) with the default floor.
    pub fn inverse(&self, x: &TransformedFn, grid: &Grid) -> Result<DensityFn> {
        self.inverse_with_floor(x, grid, DEFAULT_FLOOR)
    }

    pub fn inverse_with_floor(&self, x: &TransformedFn, grid: &Grid, floor: f64) -> Result<DensityFn> {
        if x.spec != *self {
            return Err(DensError::InvalidArgument("transformed function was produced by a different transform".into()));
        }
        match *self {
            TransformSpec::LogQuantileDensity => lqd_inverse_with_floor(x, grid, floor),
            TransformSpec::LogHazard { .. } => log_hazard_inverse_with_floor(x, grid, floor),
        }
    }

    /// Domain of the transformed functions for grids of `m` points.
    pub fn tgrid(&self, m: usize) -> Result<Grid> {
        match *self {
            TransformSpec::LogQuantileDensity => Grid::unit(m),
            TransformSpec::LogHazard { delta } => Grid::new(0.0, 1.0 - delta, m),
        }
    }
}

impl std::fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransformSpec::LogQuantileDensity => write!(f, "lqd"),
            TransformSpec::LogHazard { delta } => write!(f, "loghazard(delta={delta})"),
        }
    }
}

/// A density mapped into L2: finite values on the transform's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedFn {
    tgrid: Grid,
    values: Vec<f64>,
    spec: TransformSpec,
}

impl TransformedFn {
    pub fn new(tgrid: Grid, values: Vec<f64>, spec: TransformSpec) -> Result<Self> {
        if values.len() != tgrid.len() {
            return Err(DensError::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DensError::NonFinite(i));
        }
        let expected = spec.tgrid(tgrid.len())?;
        if !expected.same_support(&tgrid) {
            return Err(DensError::InvalidGrid(format!(
                "{spec} lives on [{}, {}], got [{}, {}]",
                expected.lo(),
                expected.hi(),
                tgrid.lo(),
                tgrid.hi()
            )));
        }
        Ok(Self { tgrid: expected, values, spec })
    }

    pub fn spec(&self) -> TransformSpec {
        self.spec
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl GridFunction for TransformedFn {
    fn grid(&self) -> &Grid {
        &self.tgrid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

fn require_positive(f: &DensityFn) -> Result<()> {
    match f.values().iter().position(|&v| !(v > 0.0)) {
        Some(i) => Err(DensError::NonPositive(i)),
        None => Ok(()),
    }
}

fn exponent_guard(values: &[f64]) -> Result<()> {
    let max = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max > MAX_EXPONENT {
        return Err(DensError::Overflow(format!("|X| reaches {max}, above {MAX_EXPONENT}")));
    }
    Ok(())
}

/// Solves `int over one cell of exp(X) = target` for the end value `a`, with
/// `exp(-X)` linear in the cell and `b` at the other end.
fn solve_end_exponent(step: f64, b: f64, target: f64) -> f64 {
    let goal = target.ln();
    let log_cell = |a: f64| recip_linear_integral(step, a, b).ln();
    let (mut lo, mut hi) = (b - 60.0, MAX_EXPONENT.max(b + 60.0));
    if log_cell(lo) >= goal {
        return lo;
    }
    if log_cell(hi) <= goal {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_cell(mid) < goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Quantile of the piecewise linear interpolant of `f` at level `t`, and the
/// density there. The trapezoidal cdf is exact for the interpolant, so within
/// a cell it is quadratic.
fn linear_density_quantile(f: &DensityFn, cdf: &CdfFn, t: f64) -> (f64, f64) {
    let (grid, fv, cv) = (f.grid(), f.values(), cdf.values());
    let m = fv.len();
    let j = cv.partition_point(|&c| c <= t).clamp(1, m - 1) - 1;
    let h = grid.step();
    let (f0, f1) = (fv[j], fv[j + 1]);
    let r = (t - cv[j]).clamp(0.0, cv[j + 1] - cv[j]);
    let a = (f1 - f0) / (2.0 * h);
    let s = (2.0 * r / (f0 + (f0 * f0 + 4.0 * a * r).max(0.0).sqrt())).clamp(0.0, h);
    (grid.point(j) + s, f0 + (f1 - f0) * s / h)
}

/// `X(t) = -log f(Q(t))` on a uniform grid over `[0, 1]`.
///
/// Interior nodes take the pointwise value. At each end node the value is
/// chosen so that the integral of `exp(X)` over the end cell equals the exact
/// quantile increment; at floor-level tails the pointwise value would assign
/// the end cell far too much length.
pub fn lqd_forward(f: &DensityFn) -> Result<TransformedFn> {
    require_positive(f)?;
    let unit = f.to_unit();
    let m = unit.grid().len();
    let cdf = to_cdf(&unit);
    let tgrid = Grid::unit(m)?;
    let (qv, fq): (Vec<f64>, Vec<f64>) = tgrid.points().into_iter().map(|t| linear_density_quantile(&unit, &cdf, t)).unzip();
    let mut x: Vec<f64> = fq.iter().map(|v| -v.ln()).collect();
    let dt = tgrid.step();
    x[0] = solve_end_exponent(dt, x[1], qv[1] - qv[0]);
    x[m - 1] = solve_end_exponent(dt, x[m - 2], qv[m - 1] - qv[m - 2]);
    TransformedFn::new(tgrid, x, TransformSpec::LogQuantileDensity)
}

/// `exp(X)` integrated on the refined grid, with `exp(-X)` linear between
/// refined nodes. Interior cells interpolate `exp(-X)` by cubics through
/// interior nodes, falling back to linear where the cubic leaves
/// `[lo / 2, 2 hi]` of the cell's node values; the two end cells stay linear,
/// the model their end nodes were solved under.
struct LqdCells {
    step: f64,
    x: Vec<f64>,
    cum: Vec<f64>,
}

impl LqdCells {
    fn new(x: &TransformedFn) -> Result<Self> {
        exponent_guard(&x.values)?;
        let g: Vec<f64> = x.values.iter().map(|v| (-v).exp()).collect();
        let n = g.len();
        let mut xr = Vec::with_capacity((n - 1) * REFINE + 1);
        for j in 0..n - 1 {
            let (lo, hi) = (g[j].min(g[j + 1]), g[j].max(g[j + 1]));
            for k in 0..REFINE {
                let s = k as f64 / REFINE as f64;
                let linear = g[j] + s * (g[j + 1] - g[j]);
                let v = if j == 0 || j == n - 2 {
                    linear
                } else {
                    let c = cubic_in(&g, 1, n - 2, j, s);
                    if c > 0.5 * lo && c < 2.0 * hi {
                        c
                    } else {
                        linear
                    }
                };
                xr.push(-v.ln());
            }
        }
        xr.push(x.values[n - 1]);
        let step = x.tgrid.step() / REFINE as f64;
        let mut cum = Vec::with_capacity(xr.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in xr.windows(2) {
            acc += recip_linear_integral(step, w[0], w[1]);
            cum.push(acc);
        }
        Ok(Self { step, x: xr, cum })
    }

    fn theta(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// `X` at the point where the running integral reaches `target`.
    fn x_at_mass(&self, target: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c <= target).clamp(1, self.cum.len() - 1) - 1;
        recip_linear_inverse(self.step, self.x[i], self.x[i + 1], (target - self.cum[i]).max(0.0))
    }
}

/// Quantile nodes `F^{-1}(t_j) = theta^{-1} int_0^{t_j} exp(X)` of an LQD
/// function, together with `theta`. The last node is exactly 1.
pub fn lqd_quantile_nodes(x: &TransformedFn) -> Result<(Vec<f64>, f64)> {
    let cells = LqdCells::new(x)?;
    let theta = cells.theta();
    let mut q: Vec<f64> = cells.cum.iter().step_by(REFINE).map(|c| c / theta).collect();
    let last = q.len() - 1;
    q[last] = 1.0;
    Ok((q, theta))
}

pub fn lqd_inverse(x: &TransformedFn, grid: &Grid) -> Result<DensityFn> {
    lqd_inverse_with_floor(x, grid, DEFAULT_FLOOR)
}

/// `f(u) = theta exp(-X(F(u)))` on `[0, 1]`, mapped to `grid`. Between
/// refined nodes the density is exponential in `u`, which is what a linear
/// density quantile integrates to.
pub fn lqd_inverse_with_floor(x: &TransformedFn, grid: &Grid, floor: f64) -> Result<DensityFn> {
    if x.spec != TransformSpec::LogQuantileDensity {
        return Err(DensError::InvalidArgument("expected a log quantile density function".into()));
    }
    let cells = LqdCells::new(x)?;
    let theta = cells.theta();
    let log_theta = theta.ln();
    let m = grid.len();
    let raw: Vec<f64> = (0..m)
        .map(|i| {
            let u = if i + 1 == m { 1.0 } else { i as f64 / (m - 1) as f64 };
            (log_theta - cells.x_at_mass(u * theta)).exp() / grid.width()
        })
        .collect();
    normalize(grid, &raw, floor)
}

/// `X(t) = log f(t) - log(1 - F(t))` on `[0, 1 - delta]`.
pub fn log_hazard_forward(f: &DensityFn, delta: f64) -> Result<TransformedFn> {
    let spec = TransformSpec::log_hazard(delta)?;
    require_positive(f)?;
    let unit = f.to_unit();
    let cdf = to_cdf(&unit);
    let tgrid = spec.tgrid(unit.grid().len())?;
    let mut values = Vec::with_capacity(tgrid.len());
    for t in tgrid.points() {
        let surv = 1.0 - cdf.eval(t);
        if surv < 1e-300 {
            return Err(DensError::Overflow(format!("survival {surv} at t = {t}")));
        }
        values.push(unit.eval(t).ln() - surv.ln());
    }
    TransformedFn::new(tgrid, values, spec)
}

pub fn log_hazard_inverse(x: &TransformedFn, grid: &Grid) -> Result<DensityFn> {
    log_hazard_inverse_with_floor(x, grid, DEFAULT_FLOOR)
}

/// Refinement factor for the inverse maps: transformed functions are
/// interpolated by cubics onto a grid this many times finer before `exp(X)` is
/// integrated.
const REFINE: usize = 8;

/// Four-point Lagrange interpolation at cell `j`, fraction `s`, using only
/// nodes `lo..=hi`.
fn cubic_in(v: &[f64], lo: usize, hi: usize, j: usize, s: f64) -> f64 {
    if hi - lo < 3 {
        return v[j] + s * (v[(j + 1).min(hi)] - v[j]);
    }
    let base = j.saturating_sub(1).clamp(lo, hi - 3);
    let p = j as f64 - base as f64 + s;
    let (y0, y1, y2, y3) = (v[base], v[base + 1], v[base + 2], v[base + 3]);
    -y0 * (p - 1.0) * (p - 2.0) * (p - 3.0) / 6.0 + y1 * p * (p - 2.0) * (p - 3.0) / 2.0
        - y2 * p * (p - 1.0) * (p - 3.0) / 2.0
        + y3 * p * (p - 1.0) * (p - 2.0) / 6.0
}

fn cubic_at(v: &[f64], j: usize, s: f64) -> f64 {
    cubic_in(v, 0, v.len() - 1, j, s)
}

/// Cumulative hazard `int_0^t exp(X)` on a refined grid.
struct CumulativeHazard {
    grid: Grid,
    x: Vec<f64>,
    cum: Vec<f64>,
}

impl CumulativeHazard {
    fn new(x: &TransformedFn) -> Result<Self> {
        let v = &x.values;
        let m = v.len();
        let grid = Grid::new(x.tgrid.lo(), x.tgrid.hi(), (m - 1) * REFINE + 1)?;
        let mut xr = Vec::with_capacity(grid.len());
        for j in 0..m - 1 {
            for k in 0..REFINE {
                xr.push(cubic_at(v, j, k as f64 / REFINE as f64));
            }
        }
        xr.push(v[m - 1]);
        let dt = grid.step();
        let mut cum = Vec::with_capacity(xr.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in xr.windows(2) {
            acc += exp_linear_integral(dt, w[0], w[1]);
            cum.push(acc);
        }
        Ok(Self { grid, x: xr, cum })
    }

    fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// `(X(u), Lambda(u))` for `u` inside the domain.
    fn at(&self, u: f64) -> (f64, f64) {
        let (j, frac) = self.grid.locate(u);
        if j + 1 >= self.x.len() {
            return (self.x[j], self.cum[j]);
        }
        let x_at = self.x[j] + frac * (self.x[j + 1] - self.x[j]);
        (x_at, self.cum[j] + exp_linear_integral(frac * self.grid.step(), self.x[j], x_at))
    }
}

/// `f(u) = exp(X(u) - int_0^u exp(X))` on `[0, 1 - delta]`; the remaining mass
/// is spread uniformly over `(1 - delta, 1]`.
///
/// The representative jumps at `1 - delta`. The grid node nearest the jump is
/// set so that the trapezoidal mass of its two cells equals their exact mass;
/// every other node carries the pointwise value.
pub fn log_hazard_inverse_with_floor(x: &TransformedFn, grid: &Grid, floor: f64) -> Result<DensityFn> {
    let delta = match x.spec {
        TransformSpec::LogHazard { delta } => delta,
        _ => return Err(DensError::InvalidArgument("expected a log hazard function".into())),
    };
    exponent_guard(&x.values)?;
    let hz = CumulativeHazard::new(x)?;
    let end = 1.0 - delta;
    let lambda_end = hz.total();
    let tail = (-lambda_end).exp() / delta;
    let m = grid.len();
    let step = 1.0 / (m - 1) as f64;
    let node = |i: usize| if i + 1 == m { 1.0 } else { i as f64 * step };
    let mut raw: Vec<f64> = (0..m)
        .map(|i| {
            let u = node(i);
            if u <= end {
                let (x_at, lambda) = hz.at(u);
                (x_at - lambda).exp()
            } else {
                tail
            }
        })
        .collect();

    // exact mass of [a, b] under the two-piece representative
    let survival = |u: f64| if u <= end { (-hz.at(u).1).exp() } else { (-lambda_end).exp() - (u - end) * tail };
    let right = (0..m).find(|&i| node(i) > end).unwrap_or(m - 1);
    let k = if right > 0 && end - node(right - 1) < node(right) - end { right - 1 } else { right };
    if k >= 1 && k + 1 < m {
        let exact = survival(node(k - 1)) - survival(node(k + 1));
        let v = (exact - 0.5 * step * (raw[k - 1] + raw[k + 1])) / step;
        raw[k] = v.max(0.0);
    }

    let width = grid.width();
    for v in raw.iter_mut() {
        *v /= width;
    }
    normalize(grid, &raw, floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::to_cdf;
    use crate::metrics::{dist_l2, dist_sup};

    fn linear_density(m: usize) -> DensityFn {
        DensityFn::from_fn(Grid::unit(m).unwrap(), |x| 2.0 * (1.0 + x) / 3.0).unwrap()
    }

    #[test]
    fn lqd_of_uniform_is_zero() {
        let x = lqd_forward(&DensityFn::uniform(Grid::unit(101).unwrap())).unwrap();
        assert!(x.values().iter().all(|v| v.abs() < 1e-12));
        // affine normalization: uniform on [0, 2] maps to uniform on [0, 1]
        let x = lqd_forward(&DensityFn::uniform(Grid::new(0.0, 2.0, 101).unwrap())).unwrap();
        assert!(x.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn lqd_of_linear_density() {
        let x = lqd_forward(&linear_density(512)).unwrap();
        let v = x.values();
        assert!((v[0] - 1.5f64.ln()).abs() < 1e-3, "{}", v[0]);
        assert!((v[511] - (1.5f64.ln() - 0.5 * 4f64.ln())).abs() < 1e-3, "{}", v[511]);
        // interior against the analytic form Q(t) = -1 + sqrt(1 + 3t)
        for (t, xv) in x.grid().points().iter().zip(v).skip(1).take(510) {
            let exact = -(2.0 * (1.0 + 3.0 * t).sqrt() / 3.0f64).ln();
            assert!((xv - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn lqd_inverse_of_constants_is_uniform() {
        let g = Grid::unit(101).unwrap();
        for c in [0.0, 2.5, -4.0] {
            let x = TransformedFn::new(g, vec![c; 101], TransformSpec::lqd()).unwrap();
            let f = lqd_inverse(&x, &g).unwrap();
            assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn lqd_round_trip() {
        let f = linear_density(512);
        let back = lqd_inverse(&lqd_forward(&f).unwrap(), f.grid()).unwrap();
        assert!(dist_sup(&back, &f).unwrap() <= 1e-3);
    }

    #[test]
    fn lqd_round_trip_restores_native_support() {
        let g = Grid::new(-3.0, 3.0, 512).unwrap();
        let f = DensityFn::from_fn(g, |x| (-0.125 * (x - 0.4) * (x - 0.4)).exp()).unwrap();
        let back = lqd_inverse(&lqd_forward(&f).unwrap(), &g).unwrap();
        assert_eq!(back.grid(), &g);
        assert!(dist_sup(&back, &f).unwrap() <= 1e-3);
    }

    #[test]
    fn lqd_quantile_ends_at_one() {
        let g = Grid::unit(64).unwrap();
        let x = TransformedFn::new(g, g.points().iter().map(|t| (5.0 * t).sin() * 3.0).collect(), TransformSpec::lqd())
            .unwrap();
        let (q, _) = lqd_quantile_nodes(&x).unwrap();
        assert!((q[63] - 1.0).abs() < 1e-10);
        assert_eq!(q[0], 0.0);
        assert!(q.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn lqd_overflow_guard() {
        let g = Grid::unit(11).unwrap();
        let mut v = vec![0.0; 11];
        v[4] = 701.0;
        let x = TransformedFn::new(g, v, TransformSpec::lqd()).unwrap();
        assert!(matches!(lqd_inverse(&x, &g), Err(DensError::Overflow(_))));
    }

    #[test]
    fn log_hazard_of_uniform() {
        let x = log_hazard_forward(&DensityFn::uniform(Grid::unit(512).unwrap()), 0.1).unwrap();
        assert!(x.values()[0].abs() < 1e-4);
        let mid = x.grid().interpolate(x.values(), 0.5);
        assert!((mid - 2f64.ln()).abs() < 1e-4, "{mid}");
        assert_eq!(x.grid().hi(), 0.9);
    }

    #[test]
    fn log_hazard_of_truncated_normal_increases_at_right_end() {
        let g = Grid::new(-3.0, 3.0, 512).unwrap();
        let f = DensityFn::from_fn(g, |x| (-0.5 * x * x).exp()).unwrap();
        let x = log_hazard_forward(&f, 0.1).unwrap();
        let v = x.values();
        assert!(v.iter().all(|v| v.is_finite()));
        let tail = &v[v.len() * 3 / 4..];
        assert!(tail.windows(2).all(|w| w[1] > w[0]));
        // equal inputs give identical outputs
        assert_eq!(x, log_hazard_forward(&f.clone(), 0.1).unwrap());
    }

    #[test]
    fn log_hazard_inverse_of_zero_is_exponential() {
        let spec = TransformSpec::log_hazard(0.1).unwrap();
        let tg = spec.tgrid(512).unwrap();
        let x = TransformedFn::new(tg, vec![0.0; 512], spec).unwrap();
        let g = Grid::unit(512).unwrap();
        let f = log_hazard_inverse(&x, &g).unwrap();
        for (u, v) in g.points().iter().zip(f.values()) {
            // the node nearest the jump carries the straddling mass
            if (u - 0.9).abs() <= g.step() {
                continue;
            }
            let expect = if *u <= 0.9 { (-u).exp() } else { 10.0 * (-0.9f64).exp() };
            assert!((v - expect).abs() < 1e-3, "{u} {v} {expect}");
        }
    }

    #[test]
    fn log_hazard_round_trip_on_uniform() {
        let g = Grid::unit(512).unwrap();
        let f = DensityFn::uniform(g);
        let back = log_hazard_inverse(&log_hazard_forward(&f, 0.1).unwrap(), &g).unwrap();
        for (u, v) in g.points().iter().zip(back.values()) {
            if *u <= 0.9 {
                assert!((v - 1.0).abs() < 1e-3);
            }
        }
        let tail = 1.0 - to_cdf(&back).eval(0.9);
        assert!((tail - 0.1).abs() < 1e-6, "{tail}");
    }

    #[test]
    fn log_hazard_spike_keeps_unit_mass() {
        let spec = TransformSpec::log_hazard(0.1).unwrap();
        let tg = spec.tgrid(101).unwrap();
        let mut v = vec![0.0; 101];
        v[0] = 8.0;
        let x = TransformedFn::new(tg, v, spec).unwrap();
        let f = log_hazard_inverse(&x, &Grid::unit(101).unwrap()).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wrong_domain_is_rejected() {
        let g = Grid::unit(11).unwrap();
        let spec = TransformSpec::log_hazard(0.1).unwrap();
        assert!(TransformedFn::new(g, vec![0.0; 11], spec).is_err());
        assert!(TransformSpec::log_hazard(0.7).is_err());
    }

    #[test]
    fn round_trip_error_shrinks_with_resolution() {
        let err = |m: usize| {
            let g = Grid::new(-2.0, 2.0, m).unwrap();
            let f = DensityFn::from_fn(g, |x| 1.0 + 0.8 * (1.5 * x).sin()).unwrap();
            let lqd = dist_sup(&lqd_inverse(&lqd_forward(&f).unwrap(), &g).unwrap(), &f).unwrap();
            let lh = log_hazard_inverse(&log_hazard_forward(&f, 0.1).unwrap(), &g).unwrap();
            let cut = (0.9 * (m - 1) as f64) as usize;
            let lh_err = lh.values()[..cut].iter().zip(&f.values()[..cut]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (lqd, lh_err)
        };
        let (a1, b1) = err(128);
        let (a2, b2) = err(512);
        assert!(a2 < a1 && b2 < b1, "{a1} {a2} {b1} {b2}");
        assert!(a2 <= 1e-3 && b2 <= 1e-3);
    }

    #[test]
    fn transform_dispatch_matches_free_functions() {
        let f = linear_density(128);
        let spec = TransformSpec::log_hazard(0.2).unwrap();
        assert_eq!(spec.forward(&f).unwrap(), log_hazard_forward(&f, 0.2).unwrap());
        let x = TransformSpec::lqd().forward(&f).unwrap();
        let back = TransformSpec::lqd().inverse(&x, f.grid()).unwrap();
        assert!(dist_l2(&back, &f).unwrap() < 1e-3);
        assert!(spec.inverse(&x, f.grid()).is_err());
    }
}
