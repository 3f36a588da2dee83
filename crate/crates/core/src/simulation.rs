//! Truncated-normal density families and the replication harness comparing
//! representation methods.
//!
//! Every replication draws from its own ChaCha8 stream: the generator is
//! seeded with the run seed and switched to stream `rep`, so results do not
//! depend on how replications are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::density::{normalize, DensityFn, DEFAULT_FLOOR};
use crate::error::{DensError, Result};
use crate::frechet::{cross_sectional_density_mean, frechet_variance, wasserstein_frechet_mean, FittedModel, MethodKind, Metric};
use crate::grid::Grid;
use crate::kde::{estimate_density, KdeConfig, KernelSpec};
use crate::metrics::dist_wasserstein;
use crate::sphere::{karcher_mean, sqrt_embed, square_back, KARCHER_MAX_ITER, KARCHER_TOL};

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_REPS: usize = 50;

/// The three truncated-normal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SettingId {
    /// `N(0, sigma^2)` on `[-3, 3]`, `log sigma ~ U[-1.5, 1.5]`.
    S1,
    /// `N(mu, 1)` on `[-5, 5]`, `mu ~ U[-3, 3]`.
    S2,
    /// `N(mu, sigma^2)` on `[-5, 5]`, `log sigma ~ U[-1, 1]`, `mu ~ U[-2.5, 2.5]`.
    S3,
}

impl std::str::FromStr for SettingId {
    type Err = DensError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches('s') {
            "1" => Ok(SettingId::S1),
            "2" => Ok(SettingId::S2),
            "3" => Ok(SettingId::S3),
            _ => Err(DensError::InvalidArgument(format!("unknown setting '{s}'"))),
        }
    }
}

impl SettingId {
    pub fn support(self) -> (f64, f64) {
        match self {
            SettingId::S1 => (-3.0, 3.0),
            SettingId::S2 | SettingId::S3 => (-5.0, 5.0),
        }
    }

    /// Number of random parameters, the true dimension of the family.
    pub fn true_k(self) -> usize {
        match self {
            SettingId::S1 | SettingId::S2 => 1,
            SettingId::S3 => 2,
        }
    }

    /// `(mu, sigma)` for one subject.
    pub fn draw(self, rng: &mut impl Rng) -> (f64, f64) {
        match self {
            SettingId::S1 => (0.0, rng.random_range(-1.5..1.5f64).exp()),
            SettingId::S2 => (rng.random_range(-3.0..3.0), 1.0),
            SettingId::S3 => {
                let sigma = rng.random_range(-1.0..1.0f64).exp();
                (rng.random_range(-2.5..2.5), sigma)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Observation {
    Full,
    /// `n_obs` draws per density, estimated with a Gaussian kernel.
    Sampled { n_obs: usize, bandwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub id: SettingId,
    pub n: usize,
    pub observed: Observation,
    pub seed: u64,
    pub grid_points: usize,
}

impl SettingSpec {
    pub fn new(id: SettingId, n: usize, observed: Observation, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(DensError::InvalidArgument(format!("n = {n} must be at least 2")));
        }
        if let Observation::Sampled { n_obs, bandwidth } = observed {
            if n_obs < 10 {
                return Err(DensError::InvalidArgument(format!("n_obs = {n_obs} must be at least 10")));
            }
            if !(bandwidth > 0.0) {
                return Err(DensError::BadBandwidth(bandwidth));
            }
        }
        Ok(Self { id, n, observed, seed, grid_points: DEFAULT_GRID_POINTS })
    }

    pub fn with_grid_points(mut self, m: usize) -> Self {
        self.grid_points = m;
        self
    }

    pub fn grid(&self) -> Result<Grid> {
        let (lo, hi) = self.id.support();
        Grid::new(lo, hi, self.grid_points)
    }

    /// The generator for replication `rep`.
    pub fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }

    /// `N(0, 1)` truncated to the setting's support.
    pub fn reference(&self) -> Result<DensityFn> {
        let (lo, hi) = self.id.support();
        truncated_normal_density(0.0, 1.0, lo, hi, &self.grid()?)
    }
}

/// Standard normal truncated to `[a, b]` after scaling.
struct TruncNormal {
    mu: f64,
    sigma: f64,
    lo_cdf: f64,
    mass: f64,
}

impl TruncNormal {
    fn new(mu: f64, sigma: f64, a: f64, b: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(DensError::DegenerateSigma(sigma));
        }
        if !(a < b) {
            return Err(DensError::InvalidArgument(format!("support [{a}, {b}] is empty")));
        }
        let z = Normal::standard();
        let lo_cdf = z.cdf((a - mu) / sigma);
        let mass = z.cdf((b - mu) / sigma) - lo_cdf;
        if !(mass > 0.0) {
            return Err(DensError::DegenerateSigma(sigma));
        }
        Ok(Self { mu, sigma, lo_cdf, mass })
    }

    fn pdf(&self, x: f64) -> f64 {
        Normal::standard().pdf((x - self.mu) / self.sigma) / (self.sigma * self.mass)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.mu + self.sigma * Normal::standard().inverse_cdf(self.lo_cdf + u * self.mass)
    }
}

/// `phi((x - mu) / sigma) / (sigma (Phi(beta) - Phi(alpha)))` on `grid`,
/// floored and renormalized for the trapezoidal rule.
pub fn truncated_normal_density(mu: f64, sigma: f64, a: f64, b: f64, grid: &Grid) -> Result<DensityFn> {
    let tn = TruncNormal::new(mu, sigma, a, b)?;
    let raw: Vec<f64> = grid.points().into_iter().map(|x| tn.pdf(x)).collect();
    normalize(grid, &raw, DEFAULT_FLOOR)
}

/// Draws from a truncated normal by exact inverse-cdf sampling, clamped to
/// the support.
pub fn sample_truncated_normal(mu: f64, sigma: f64, a: f64, b: f64, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let tn = TruncNormal::new(mu, sigma, a, b)?;
    Ok((0..n).map(|_| tn.quantile(rng.random::<f64>()).clamp(a, b)).collect())
}

/// One generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    /// `(mu, sigma)` per subject.
    pub params: Vec<(f64, f64)>,
    pub truth: Vec<DensityFn>,
    /// What the analysis sees: the truth, or kernel estimates.
    pub observed: Vec<DensityFn>,
    pub samples: Option<Vec<Vec<f64>>>,
}

/// Generates one replication's sample from `rng`.
pub fn gen_setting_with(spec: &SettingSpec, rng: &mut impl Rng) -> Result<Generated> {
    let grid = spec.grid()?;
    let (lo, hi) = spec.id.support();
    let mut params = Vec::with_capacity(spec.n);
    let mut samples = Vec::new();
    for _ in 0..spec.n {
        let (mu, sigma) = spec.id.draw(rng);
        params.push((mu, sigma));
        if let Observation::Sampled { n_obs, .. } = spec.observed {
            samples.push(sample_truncated_normal(mu, sigma, lo, hi, n_obs, rng)?);
        }
    }
    let truth =
        params.iter().map(|&(mu, sigma)| truncated_normal_density(mu, sigma, lo, hi, &grid)).collect::<Result<Vec<_>>>()?;
    let (observed, samples) = match spec.observed {
        Observation::Full => (truth.clone(), None),
        Observation::Sampled { bandwidth, .. } => {
            let cfg = KdeConfig::new(bandwidth, grid).with_kernel(KernelSpec::Gaussian);
            let est = samples.iter().map(|s| estimate_density(s, &cfg)).collect::<Result<Vec<_>>>()?;
            (est, Some(samples))
        }
    };
    Ok(Generated { params, truth, observed, samples })
}

/// The sample of replication 0.
pub fn gen_setting(spec: &SettingSpec) -> Result<Generated> {
    gen_setting_with(spec, &mut spec.rng(0))
}

/// FVE of one method in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFve {
    pub method: MethodKind,
    /// At the requested `K`.
    pub fve: f64,
    /// At `K - 1` (the center alone when `K = 1`).
    pub fve_previous: f64,
}

/// Fréchet means of one replication under the three metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMeans {
    pub cross_sectional: Vec<f64>,
    pub wasserstein: Vec<f64>,
    pub fisher_rao: Vec<f64>,
    /// Wasserstein distances from each mean to the reference density.
    pub dw_cross_sectional: f64,
    pub dw_wasserstein: f64,
    pub dw_fisher_rao: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub fve: Vec<MethodFve>,
    pub means: RepMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self { q1: quantile_sorted(&v, 0.25), median: quantile_sorted(&v, 0.5), q3: quantile_sorted(&v, 0.75) })
    }
}

/// Linear interpolation between order statistics.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (h - i as f64) * (v[i + 1] - v[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodKind,
    pub fve: Quartiles,
    /// Replications where the FVE at `K` fell below the FVE at `K - 1`.
    pub nesting_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    /// Fréchet mean, under each metric, of the per-replication means.
    pub cross_sectional: Vec<f64>,
    pub wasserstein: Vec<f64>,
    pub fisher_rao: Vec<f64>,
    pub dw_cross_sectional: f64,
    pub dw_wasserstein: f64,
    pub dw_fisher_rao: f64,
    /// Fraction of replications where the Wasserstein mean is closer (in
    /// `d_W`) to the reference than the cross-sectional mean.
    pub wasserstein_closer_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub spec: SettingSpec,
    pub k: usize,
    pub metric: Metric,
    pub grid: Grid,
    pub reference: Vec<f64>,
    pub reps: Vec<RepResult>,
    pub failures: Vec<RepFailure>,
    pub methods: Vec<MethodSummary>,
    pub means: Option<MeanSummary>,
}

fn fve_at(model: &FittedModel, sample: &[DensityFn], metric: Metric, v_inf: f64, k: usize) -> Result<f64> {
    let reps = if k == 0 {
        vec![model.center()?; sample.len()]
    } else {
        let k = k.min(model.n_components().max(1));
        model.represent(k)?
    };
    let resid: f64 =
        sample.iter().zip(&reps).map(|(f, r)| metric.distance(f, r).map(|d| d * d)).sum::<Result<f64>>()?
            / sample.len() as f64;
    Ok(if v_inf > 0.0 { (v_inf - resid) / v_inf } else { 1.0 })
}

fn run_rep(
    spec: &SettingSpec,
    methods: &[MethodKind],
    k: usize,
    metric: Metric,
    rep: usize,
    reference: &DensityFn,
) -> Result<RepResult> {
    let data = gen_setting_with(spec, &mut spec.rng(rep))?;
    let sample = &data.observed;
    let center = match metric {
        Metric::L2 => cross_sectional_density_mean(sample)?,
        Metric::Wasserstein => wasserstein_frechet_mean(sample)?,
    };
    let v_inf = frechet_variance(sample, &center, metric)?;
    let mut fve = Vec::with_capacity(methods.len());
    for &method in methods {
        let model = FittedModel::fit(sample, method)?;
        fve.push(MethodFve {
            method,
            fve: fve_at(&model, sample, metric, v_inf, k)?,
            fve_previous: fve_at(&model, sample, metric, v_inf, k - 1)?,
        });
    }
    let cross = cross_sectional_density_mean(sample)?;
    let wass = wasserstein_frechet_mean(sample)?;
    let pts: Vec<_> = sample.iter().map(sqrt_embed).collect();
    let fr = square_back(&karcher_mean(&pts, KARCHER_TOL, KARCHER_MAX_ITER)?)?;
    let means = RepMeans {
        dw_cross_sectional: dist_wasserstein(&cross, reference)?,
        dw_wasserstein: dist_wasserstein(&wass, reference)?,
        dw_fisher_rao: dist_wasserstein(&fr, reference)?,
        cross_sectional: cross.into_values(),
        wasserstein: wass.into_values(),
        fisher_rao: fr.into_values(),
    };
    Ok(RepResult { rep, fve, means })
}

fn summarize_means(reps: &[RepResult], grid: Grid, reference: &DensityFn) -> Result<MeanSummary> {
    let dens = |get: fn(&RepMeans) -> &Vec<f64>| -> Result<Vec<DensityFn>> {
        reps.iter().map(|r| DensityFn::new(grid, get(&r.means).clone())).collect()
    };
    let cross = cross_sectional_density_mean(&dens(|m| &m.cross_sectional)?)?;
    let wass = wasserstein_frechet_mean(&dens(|m| &m.wasserstein)?)?;
    let fr_pts: Vec<_> = dens(|m| &m.fisher_rao)?.iter().map(sqrt_embed).collect();
    let fr = square_back(&karcher_mean(&fr_pts, KARCHER_TOL, KARCHER_MAX_ITER)?)?;
    let closer = reps.iter().filter(|r| r.means.dw_wasserstein < r.means.dw_cross_sectional).count();
    Ok(MeanSummary {
        dw_cross_sectional: dist_wasserstein(&cross, reference)?,
        dw_wasserstein: dist_wasserstein(&wass, reference)?,
        dw_fisher_rao: dist_wasserstein(&fr, reference)?,
        cross_sectional: cross.into_values(),
        wasserstein: wass.into_values(),
        fisher_rao: fr.into_values(),
        wasserstein_closer_fraction: closer as f64 / reps.len() as f64,
    })
}

/// Runs `reps` replications and compares the FVE of `methods` at `k`
/// components. Failed replications are recorded, not dropped silently.
pub fn run_comparison(
    spec: &SettingSpec,
    methods: &[MethodKind],
    k: usize,
    metric: Metric,
    reps: usize,
) -> Result<SimulationResult> {
    if reps == 0 {
        return Err(DensError::InvalidArgument("reps must be at least 1".into()));
    }
    if k == 0 {
        return Err(DensError::InvalidArgument("K must be at least 1".into()));
    }
    let grid = spec.grid()?;
    let reference = spec.reference()?;
    let outcomes: Vec<Result<RepResult>> =
        (0..reps).into_par_iter().map(|rep| run_rep(spec, methods, k, metric, rep, &reference)).collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => ok.push(r),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push(RepFailure { rep, error: e.to_string() });
            }
        }
    }
    let summaries = methods
        .iter()
        .enumerate()
        .filter_map(|(j, &method)| {
            let v: Vec<f64> = ok.iter().map(|r| r.fve[j].fve).collect();
            let violations = ok.iter().filter(|r| r.fve[j].fve < r.fve[j].fve_previous).count();
            Quartiles::of(&v).map(|fve| MethodSummary { method, fve, nesting_violations: violations })
        })
        .collect();
    let means = if ok.is_empty() { None } else { Some(summarize_means(&ok, grid, &reference)?) };
    Ok(SimulationResult {
        spec: *spec,
        k,
        metric,
        grid,
        reference: reference.into_values(),
        reps: ok,
        failures,
        methods: summaries,
        means,
    })
}

impl SimulationResult {
    pub fn median_fve(&self, method: MethodKind) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).map(|m| m.fve.median)
    }

    /// Rows `rep,method,fve` for box plots.
    pub fn fve_rows(&self) -> Vec<(usize, String, f64)> {
        self.reps.iter().flat_map(|r| r.fve.iter().map(move |f| (r.rep, f.method.to_string(), f.fve))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GridFunction;
    use crate::metrics::dist_sup;

    #[test]
    fn truncated_normal_examples() {
        let g = Grid::new(-3.0, 3.0, 601).unwrap();
        let f = truncated_normal_density(0.0, 1.0, -3.0, 3.0, &g).unwrap();
        assert!((f.eval(0.0) - 0.39894228 / 0.99730020).abs() < 1e-4);
        for j in 0..601 {
            assert!((f.values()[j] - f.values()[600 - j]).abs() < 1e-14);
        }
        assert!((f.mass() - 1.0).abs() < 1e-12);
        assert_eq!(truncated_normal_density(0.0, 0.0, -3.0, 3.0, &g), Err(DensError::DegenerateSigma(0.0)));
    }

    #[test]
    fn sampling_matches_the_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = sample_truncated_normal(1.0, 2.0, -5.0, 5.0, 20_000, &mut rng).unwrap();
        assert!(xs.iter().all(|&x| (-5.0..=5.0).contains(&x)));
        // mean of N(1, 4) truncated to [-5, 5]
        let tn = TruncNormal::new(1.0, 2.0, -5.0, 5.0).unwrap();
        let g = Grid::new(-5.0, 5.0, 20001).unwrap();
        let mean_exact = g.integrate(&g.points().iter().map(|&x| x * tn.pdf(x)).collect::<Vec<_>>());
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - mean_exact).abs() < 0.05, "{mean} {mean_exact}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SettingSpec::new(SettingId::S3, 10, Observation::Sampled { n_obs: 50, bandwidth: 0.2 }, 7).unwrap();
        let a = gen_setting(&spec).unwrap();
        let b = gen_setting(&spec).unwrap();
        assert_eq!(a, b);
        let c = gen_setting_with(&spec, &mut spec.rng(1)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn setting_one_is_centered() {
        let spec = SettingSpec::new(SettingId::S1, 20, Observation::Full, 3).unwrap().with_grid_points(301);
        let g = gen_setting(&spec).unwrap();
        for f in &g.truth {
            let argmax = (0..301).max_by(|&a, &b| f.values()[a].total_cmp(&f.values()[b])).unwrap();
            assert_eq!(f.grid().point(argmax), 0.0);
        }
    }

    #[test]
    fn setting_two_locations_are_symmetric() {
        let spec = SettingSpec::new(SettingId::S2, 500, Observation::Full, 11).unwrap().with_grid_points(401);
        let g = gen_setting(&spec).unwrap();
        let mean_argmax = g
            .truth
            .iter()
            .map(|f| {
                let j = (0..401).max_by(|&a, &b| f.values()[a].total_cmp(&f.values()[b])).unwrap();
                f.grid().point(j)
            })
            .sum::<f64>()
            / 500.0;
        assert!(mean_argmax.abs() < 0.15, "{mean_argmax}");
    }

    #[test]
    fn spec_validation() {
        assert!(SettingSpec::new(SettingId::S1, 1, Observation::Full, 0).is_err());
        assert!(SettingSpec::new(SettingId::S1, 5, Observation::Sampled { n_obs: 5, bandwidth: 0.2 }, 0).is_err());
        assert_eq!("2".parse::<SettingId>().unwrap(), SettingId::S2);
        assert_eq!("s3".parse::<SettingId>().unwrap(), SettingId::S3);
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(q.median, 2.5);
        assert_eq!(q.q1, 1.75);
        assert_eq!(q.q3, 3.25);
    }

    #[test]
    fn small_comparison_runs_and_is_deterministic() {
        let spec = SettingSpec::new(SettingId::S2, 12, Observation::Full, 5).unwrap().with_grid_points(201);
        let methods = [MethodKind::lqd(), MethodKind::OrdinaryFpca, MethodKind::HilbertSphere];
        let a = run_comparison(&spec, &methods, 1, Metric::L2, 3).unwrap();
        let b = run_comparison(&spec, &methods, 1, Metric::L2, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.failures.is_empty());
        assert_eq!(a.reps.len(), 3);
        for r in &a.reps {
            let lqd = &r.fve[0];
            assert!((0.0..=1.0).contains(&lqd.fve));
            assert!(lqd.fve >= lqd.fve_previous);
        }
        let means = a.means.unwrap();
        let w = DensityFn::new(a.grid, means.wasserstein).unwrap();
        assert!(dist_sup(&w, &spec.reference().unwrap()).unwrap() < 0.2);
    }
}
