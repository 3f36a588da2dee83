//! Scalar-on-density linear regression on principal component scores, either
//! of the densities themselves or of their log quantile density transforms.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityFn;
use crate::error::{DensError, Result};
use crate::fpca::EigenSystem;
use crate::transform::lqd_forward;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_REPEATS: usize = 50;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

/// Which scores serve as predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    /// Ordinary FPC scores of the densities.
    Fpca,
    /// FPC scores of the log quantile density transforms.
    Lqd,
}

impl std::str::FromStr for ScoreMethod {
    type Err = DensError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpca" | "fpcascores" => Ok(ScoreMethod::Fpca),
            "lqd" | "lqdscores" => Ok(ScoreMethod::Lqd),
            _ => Err(DensError::InvalidArgument(format!("unknown score method '{s}'"))),
        }
    }
}

impl std::fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMethod::Fpca => "fpca",
            ScoreMethod::Lqd => "lqd",
        })
    }
}

/// Eigenbasis fitted to a set of densities under one score method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBasis {
    pub method: ScoreMethod,
    pub system: EigenSystem,
}

impl ScoreBasis {
    pub fn fit(densities: &[DensityFn], method: ScoreMethod) -> Result<Self> {
        let system = match method {
            ScoreMethod::Fpca => EigenSystem::fit(densities)?,
            ScoreMethod::Lqd => {
                let xs = densities.iter().map(lqd_forward).collect::<Result<Vec<_>>>()?;
                EigenSystem::fit(&xs)?
            }
        };
        Ok(Self { method, system })
    }

    /// Fits on the subjects listed in `subset` only.
    pub fn fit_subset(densities: &[DensityFn], subset: &[usize], method: ScoreMethod) -> Result<Self> {
        let train: Vec<DensityFn> = subset.iter().map(|&i| densities[i].clone()).collect();
        Self::fit(&train, method)
    }

    pub fn n_components(&self) -> usize {
        self.system.n_components()
    }

    /// Scores of the fitted subjects on the first `k` components.
    pub fn training_scores(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        if k > self.n_components() {
            return Err(DensError::KTooLarge { requested: k, available: self.n_components() });
        }
        Ok(self.system.scores.iter().map(|s| s[..k].to_vec()).collect())
    }

    /// Scores of a new density on the first `k` components.
    pub fn project(&self, f: &DensityFn, k: usize) -> Result<Vec<f64>> {
        match self.method {
            ScoreMethod::Fpca => self.system.project(f, k),
            ScoreMethod::Lqd => self.system.project(&lqd_forward(f)?, k),
        }
    }
}

/// `y = intercept + sum_k coefficients[k] * score_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlrModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Number of score columns requested; `coefficients` may be shorter when
    /// trailing columns were dropped for rank deficiency.
    pub k: usize,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

impl FlrModel {
    pub fn predict(&self, scores: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(scores).map(|(b, s)| b * s).sum::<f64>()
    }
}

fn design(scores: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(scores.len(), k + 1, |i, j| if j == 0 { 1.0 } else { scores[i][j - 1] })
}

fn full_rank(x: &DMatrix<f64>) -> bool {
    let sv = x.singular_values();
    let top = sv.max();
    top > 0.0 && sv.iter().all(|&s| s > RANK_TOL * top)
}

/// Ordinary least squares with intercept on an `n x K` score matrix.
///
/// Trailing score columns are dropped (with a warning) until the design has
/// full column rank.
pub fn fit_flr(scores: &[Vec<f64>], y: &[f64]) -> Result<FlrModel> {
    let n = y.len();
    if scores.len() != n {
        return Err(DensError::InvalidArgument(format!("{} score rows for {n} responses", scores.len())));
    }
    let k = scores.first().map_or(0, |r| r.len());
    if scores.iter().any(|r| r.len() != k) {
        return Err(DensError::InvalidArgument("score rows differ in length".into()));
    }
    if n <= k + 1 {
        return Err(DensError::TooFewSamples { got: n, need: k + 2 });
    }
    if let Some(i) = y.iter().chain(scores.iter().flatten()).position(|v| !v.is_finite()) {
        return Err(DensError::NonFinite(i));
    }
    let mut used = k;
    let mut x = design(scores, used);
    while !full_rank(&x) {
        if used == 0 {
            return Err(DensError::RankDeficient);
        }
        used -= 1;
        log::warn!("score matrix is rank deficient; dropping component {}", used + 1);
        x = design(scores, used);
    }
    let yv = DVector::from_column_slice(y);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&yv, 0.0)
        .map_err(|_| DensError::RankDeficient)?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = yv.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    Ok(FlrModel { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect(), k, r_squared, residuals })
}

/// A fitted basis together with the regression on its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRegression {
    pub basis: ScoreBasis,
    pub model: FlrModel,
}

impl DensityRegression {
    pub fn fit(densities: &[DensityFn], y: &[f64], method: ScoreMethod, k: usize) -> Result<Self> {
        let basis = ScoreBasis::fit(densities, method)?;
        let model = fit_flr(&basis.training_scores(k)?, y)?;
        Ok(Self { basis, model })
    }

    pub fn predict(&self, f: &DensityFn) -> Result<f64> {
        Ok(self.model.predict(&self.basis.project(f, self.model.k)?))
    }
}

/// Splits `0..n` into `folds` contiguous groups of a seeded shuffle.
pub fn fold_assignment(n: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    (0..folds).map(|f| idx[f * n / folds..(f + 1) * n / folds].to_vec()).collect()
}

fn repeat_sse(densities: &[DensityFn], y: &[f64], method: ScoreMethod, k: usize, folds: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = densities.len();
    let mut sse = 0.0;
    for test in fold_assignment(n, folds, rng) {
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        let basis = ScoreBasis::fit_subset(densities, &train, method)?;
        let ytrain: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit_flr(&basis.training_scores(k)?, &ytrain)?;
        for &i in &test {
            let pred = model.predict(&basis.project(&densities[i], k)?);
            sse += (y[i] - pred).powi(2);
        }
    }
    Ok(sse)
}

/// Repeated K-fold cross-validated prediction error.
///
/// Each repeat shuffles with its own stream of a generator seeded by `seed`;
/// the basis and scores are recomputed from the training fold only and the
/// held-out densities are projected onto it.
pub fn cv_mse(
    densities: &[DensityFn],
    y: &[f64],
    method: ScoreMethod,
    k: usize,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    let n = densities.len();
    if y.len() != n {
        return Err(DensError::InvalidArgument(format!("{n} densities but {} responses", y.len())));
    }
    if folds < 2 || folds > n {
        return Err(DensError::InvalidArgument(format!("folds must lie in [2, {n}], got {folds}")));
    }
    if repeats == 0 {
        return Err(DensError::InvalidArgument("repeats must be at least 1".into()));
    }
    let sse = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            repeat_sse(densities, y, method, k, folds, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sse.iter().sum::<f64>() / (n * repeats) as f64)
}

/// One row of the prediction-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub method: ScoreMethod,
    pub k: usize,
    pub cv_mse: f64,
    pub r_squared: f64,
}

/// CV error and in-sample R^2 for each `k` in `ks`.
pub fn regression_table(
    densities: &[DensityFn],
    y: &[f64],
    method: ScoreMethod,
    ks: &[usize],
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<RegressionRow>> {
    let basis = ScoreBasis::fit(densities, method)?;
    ks.iter()
        .map(|&k| {
            let model = fit_flr(&basis.training_scores(k)?, y)?;
            let mse = cv_mse(densities, y, method, k, folds, repeats, seed)?;
            Ok(RegressionRow { method, k, cv_mse: mse, r_squared: model.r_squared })
        })
        .collect()
}

/// Drops subjects whose response is missing.
pub fn drop_missing(densities: Vec<DensityFn>, y: &[Option<f64>]) -> Result<(Vec<DensityFn>, Vec<f64>)> {
    if densities.len() != y.len() {
        return Err(DensError::InvalidArgument(format!("{} densities but {} responses", densities.len(), y.len())));
    }
    let (d, v): (Vec<_>, Vec<_>) = densities.into_iter().zip(y).filter_map(|(f, r)| r.map(|v| (f, v))).unzip();
    Ok((d, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GridFunction;
    use crate::grid::Grid;
    use crate::simulation::truncated_normal_density;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn shifted_family(n: usize, seed: u64) -> (Vec<DensityFn>, Vec<f64>) {
        let grid = Grid::new(-5.0, 5.0, 201).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d = mu.iter().map(|&m| truncated_normal_density(m, 1.0, -5.0, 5.0, &grid).unwrap()).collect();
        (d, mu)
    }

    #[test]
    fn noiseless_line() {
        let scores: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3 - 1.0]).collect();
        let y: Vec<f64> = scores.iter().map(|s| 2.0 + 3.0 * s[0]).collect();
        let m = fit_flr(&scores, &y).unwrap();
        assert!((m.intercept - 2.0).abs() < 1e-8);
        assert!((m.coefficients[0] - 3.0).abs() < 1e-8);
        assert!((m.r_squared - 1.0).abs() < 1e-8);
    }

    #[test]
    fn null_model_r_squared_is_small() {
        let mut small = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<Vec<f64>> = (0..65).map(|_| vec![rng.sample(StandardNormal)]).collect();
            let y: Vec<f64> = (0..65).map(|_| rng.sample(StandardNormal)).collect();
            if fit_flr(&scores, &y).unwrap().r_squared < 0.2 {
                small += 1;
            }
        }
        assert!(small >= 95, "{small}");
    }

    #[test]
    fn permutation_permutes_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scores: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let y: Vec<f64> = scores.iter().map(|s| 1.0 + s[0] - 0.5 * s[1] + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let a = fit_flr(&scores, &y).unwrap();
        let perm: Vec<usize> = (0..20).rev().collect();
        let ps: Vec<Vec<f64>> = perm.iter().map(|&i| scores[i].clone()).collect();
        let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let b = fit_flr(&ps, &py).unwrap();
        for (x, z) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - z).abs() < 1e-10);
        }
        for (j, &i) in perm.iter().enumerate() {
            assert!((b.residuals[j] - a.residuals[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_subjects() {
        let scores = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.0]];
        assert!(matches!(fit_flr(&scores, &[1.0, 2.0, 3.0]), Err(DensError::TooFewSamples { .. })));
    }

    #[test]
    fn rank_deficient_columns_are_dropped() {
        let scores: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let m = fit_flr(&scores, &y).unwrap();
        assert_eq!(m.coefficients.len(), 1);
        assert!((m.coefficients[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn r_squared_nondecreasing_in_k() {
        let (d, mu) = shifted_family(40, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = mu.iter().map(|m| m * m + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        for method in [ScoreMethod::Fpca, ScoreMethod::Lqd] {
            let basis = ScoreBasis::fit(&d, method).unwrap();
            let r2: Vec<f64> = (0..=5).map(|k| fit_flr(&basis.training_scores(k).unwrap(), &y).unwrap().r_squared).collect();
            for w in r2.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{method}: {r2:?}");
            }
        }
    }

    #[test]
    fn predictions_ignore_eigenfunction_signs() {
        let (d, mu) = shifted_family(30, 2);
        let fit = DensityRegression::fit(&d, &mu, ScoreMethod::Lqd, 2).unwrap();
        let mut flipped = fit.basis.clone();
        for e in flipped.system.eigenfunctions.iter_mut().take(1) {
            *e = crate::density::GridFn::new(*e.grid(), e.values().iter().map(|v| -v).collect()).unwrap();
        }
        for s in flipped.system.scores.iter_mut() {
            s[0] = -s[0];
        }
        let model = fit_flr(&flipped.training_scores(2).unwrap(), &mu).unwrap();
        assert!((model.coefficients[0] + fit.model.coefficients[0]).abs() < 1e-10);
        let (probe, _) = shifted_family(5, 3);
        for f in &probe {
            let a = fit.predict(f).unwrap();
            let b = model.predict(&flipped.project(f, 2).unwrap());
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn training_basis_ignores_held_out_densities() {
        let (d, _) = shifted_family(20, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let folds = fold_assignment(20, 5, &mut rng);
        let test = &folds[0];
        let train: Vec<usize> = (0..20).filter(|i| !test.contains(i)).collect();
        let mut corrupted = d.clone();
        let other = truncated_normal_density(4.0, 0.3, -5.0, 5.0, d[0].grid()).unwrap();
        for &i in test {
            corrupted[i] = other.clone();
        }
        for method in [ScoreMethod::Fpca, ScoreMethod::Lqd] {
            let a = ScoreBasis::fit_subset(&d, &train, method).unwrap();
            let b = ScoreBasis::fit_subset(&corrupted, &train, method).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn folds_partition_subjects() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let folds = fold_assignment(23, 10, &mut rng);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 2 || f.len() == 3));
    }

    #[test]
    fn cv_error_near_noise_for_linear_response() {
        let (d, _) = shifted_family(60, 6);
        let basis = ScoreBasis::fit(&d, ScoreMethod::Lqd).unwrap();
        let s1: Vec<f64> = basis.system.scores.iter().map(|s| s[0]).collect();
        let sd = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y: Vec<f64> = s1.iter().map(|s| 1.0 + 2.0 * s + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let mse = cv_mse(&d, &y, ScoreMethod::Lqd, 1, 10, 5, 11).unwrap();
        assert!(mse <= 1.2 * sd * sd, "{mse}");
    }

    #[test]
    fn cv_is_deterministic() {
        let (d, mu) = shifted_family(25, 8);
        let a = cv_mse(&d, &mu, ScoreMethod::Fpca, 2, 5, 2, 42).unwrap();
        let b = cv_mse(&d, &mu, ScoreMethod::Fpca, 2, 5, 2, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn missing_responses_are_dropped() {
        let (d, _) = shifted_family(4, 10);
        let (kept, y) = drop_missing(d, &[Some(1.0), None, Some(3.0), None]).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(y, vec![1.0, 3.0]);
    }
}
