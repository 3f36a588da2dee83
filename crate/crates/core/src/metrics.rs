//! The L2, uniform and Wasserstein distances.

use crate::density::{to_cdf, CdfFn, DensityFn, GridFunction};
use crate::error::{DensError, Result};

fn check_same_grid<A: GridFunction + ?Sized, B: GridFunction + ?Sized>(a: &A, b: &B) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(DensError::GridMismatch);
    }
    Ok(())
}

/// `sqrt(int (f - g)^2)` by the trapezoidal rule.
pub fn dist_l2<A: GridFunction + ?Sized, B: GridFunction + ?Sized>(a: &A, b: &B) -> Result<f64> {
    check_same_grid(a, b)?;
    let sq: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(a.grid().integrate(&sq).max(0.0).sqrt())
}

/// Largest absolute difference over the grid points.
pub fn dist_sup<A: GridFunction + ?Sized, B: GridFunction + ?Sized>(a: &A, b: &B) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Wasserstein-2 distance, computed as the L2 distance between quantile
/// functions.
///
/// Both distribution functions are piecewise linear on their grids, so both
/// quantile functions are piecewise linear in the probability level with
/// breakpoints at the cdf node values. Merging the two breakpoint sets gives a
/// shared probability grid on which the squared difference is integrated
/// exactly.
pub fn dist_wasserstein(f: &DensityFn, g: &DensityFn) -> Result<f64> {
    let (gf, gg) = (f.grid(), g.grid());
    if !gf.same_support(gg) {
        return Err(DensError::SupportMismatch(gf.lo(), gf.hi(), gg.lo(), gg.hi()));
    }
    Ok(quantile_l2(&to_cdf(f), &to_cdf(g)).sqrt())
}

/// Squared L2 distance between the quantile functions of two cdfs.
pub(crate) fn quantile_l2(cf: &CdfFn, cg: &CdfFn) -> f64 {
    let (fv, gv) = (cf.values(), cg.values());
    let (mf, mg) = (fv.len(), gv.len());
    let cell_q = |c: &CdfFn, v: &[f64], i: usize, t: f64| -> f64 {
        let x0 = c.grid().point(i);
        x0 + (t - v[i]) / (v[i + 1] - v[i]) * c.grid().step()
    };
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0;
    let mut acc = 0.0;
    while t < 1.0 {
        while i + 2 < mf && fv[i + 1] <= t {
            i += 1;
        }
        while j + 2 < mg && gv[j + 1] <= t {
            j += 1;
        }
        let next = fv[i + 1].min(gv[j + 1]).min(1.0);
        if next <= t {
            break;
        }
        let da = cell_q(cf, fv, i, t) - cell_q(cg, gv, j, t);
        let db = cell_q(cf, fv, i, next) - cell_q(cg, gv, j, next);
        acc += (next - t) * (da * da + da * db + db * db) / 3.0;
        t = next;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn lin(m: usize) -> (DensityFn, DensityFn) {
        let g = Grid::unit(m).unwrap();
        (DensityFn::uniform(g), DensityFn::from_fn(g, |x| 2.0 * x).unwrap())
    }

    #[test]
    fn l2_examples() {
        let (f, g) = lin(512);
        assert_eq!(dist_l2(&f, &f).unwrap(), 0.0);
        assert!((dist_l2(&f, &g).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn l2_scales_with_support() {
        // f(x) = 1, g(x) = 2x on [0,1]; mapped to [0, w] values scale by 1/w,
        // so d2 scales by 1/sqrt(w)
        let (f, g) = lin(512);
        let w = 4.0;
        let fw = f.from_unit(0.0, w).unwrap();
        let gw = g.from_unit(0.0, w).unwrap();
        let ratio = dist_l2(&fw, &gw).unwrap() / dist_l2(&f, &g).unwrap();
        assert!((ratio - 1.0 / w.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sup_examples() {
        let (f, g) = lin(101);
        assert_eq!(dist_sup(&f, &f).unwrap(), 0.0);
        assert!((dist_sup(&f, &g).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn grid_mismatch() {
        let (f, _) = lin(101);
        let (g, _) = lin(102);
        assert_eq!(dist_l2(&f, &g), Err(DensError::GridMismatch));
        assert_eq!(dist_sup(&f, &g), Err(DensError::GridMismatch));
    }

    #[test]
    fn wasserstein_examples() {
        let (f, g) = lin(512);
        assert_eq!(dist_wasserstein(&f, &f).unwrap(), 0.0);
        let d = dist_wasserstein(&f, &g).unwrap();
        assert!((d - (1.0f64 / 30.0).sqrt()).abs() < 1e-3, "{d}");
        // grids may differ in resolution
        let (_, g2) = lin(300);
        assert!((dist_wasserstein(&f, &g2).unwrap() - d).abs() < 1e-3);
    }

    #[test]
    fn wasserstein_support_mismatch() {
        let f = DensityFn::uniform(Grid::unit(50).unwrap());
        let g = DensityFn::uniform(Grid::new(0.0, 2.0, 50).unwrap());
        assert!(matches!(dist_wasserstein(&f, &g), Err(DensError::SupportMismatch(..))));
    }

    #[test]
    fn wasserstein_shift_of_uniforms() {
        // U[0,0.5] vs U[0.5,1] (floored) differ by a shift of 0.5
        let g = Grid::unit(1001).unwrap();
        let a = DensityFn::from_fn(g, |x| if x <= 0.5 { 2.0 } else { 0.0 }).unwrap();
        let b = DensityFn::from_fn(g, |x| if x >= 0.5 { 2.0 } else { 0.0 }).unwrap();
        assert!((dist_wasserstein(&a, &b).unwrap() - 0.5).abs() < 2e-3);
    }

    fn random_density(grid: Grid, p: &[f64]) -> DensityFn {
        DensityFn::from_fn(grid, |x| {
            let z = (x - p[0]) / p[1];
            (-0.5 * z * z).exp() + p[2]
        })
        .unwrap()
    }

    fn params() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 3).prop_map(|v| vec![-1.0 + 2.0 * v[0], 0.2 + v[1], 0.01 + 0.2 * v[2]])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn metric_axioms(a in params(), b in params(), c in params()) {
            let grid = Grid::new(-2.0, 2.0, 201).unwrap();
            let (f, g, h) = (random_density(grid, &a), random_density(grid, &b), random_density(grid, &c));
            for d in [
                |x: &DensityFn, y: &DensityFn| dist_l2(x, y).unwrap(),
                |x: &DensityFn, y: &DensityFn| dist_sup(x, y).unwrap(),
                |x: &DensityFn, y: &DensityFn| dist_wasserstein(x, y).unwrap(),
            ] {
                prop_assert!(d(&f, &g) >= 0.0);
                prop_assert!((d(&f, &g) - d(&g, &f)).abs() <= 1e-9);
                prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-9);
            }
            // sup norm dominates the normalized L2 norm
            prop_assert!(dist_sup(&f, &g).unwrap() + 1e-12 >= dist_l2(&f, &g).unwrap() / grid.width().sqrt());
        }

        #[test]
        fn wasserstein_affine_equivariance(a in params(), b in params(), slope in 0.2f64..5.0, shift in -3.0f64..3.0) {
            let grid = Grid::new(-2.0, 2.0, 201).unwrap();
            let (f, g) = (random_density(grid, &a), random_density(grid, &b));
            let lo = shift + slope * -2.0;
            let hi = shift + slope * 2.0;
            let fu = f.to_unit().from_unit(lo, hi).unwrap();
            let gu = g.to_unit().from_unit(lo, hi).unwrap();
            let lhs = dist_wasserstein(&fu, &gu).unwrap();
            let rhs = slope * dist_wasserstein(&f, &g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-6, "{} vs {}", lhs, rhs);
        }
    }
}
