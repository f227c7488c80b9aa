//! The augmented one-way ANOVA over surrogate scores.
//!
//! Residuals of the null model become observations of a high-dimensional
//! one-way design whose cells are nearest-neighbor windows in the ordering
//! induced by a univariate surrogate score. The test statistic is
//! `sqrt(n) (MST - MSE)`, standardized by a Rice-type fourth-moment
//! estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::{fl, fu, Float};
use crate::projection::{self, Rule};
use crate::smoothing::{default_bandwidth, local_poly_fit, Bandwidth, KernelSpec};

/// Sorted ordering of surrogate scores plus the implied index windows.
///
/// `order[k]` is the original index of the k-th smallest score (ties broken
/// by original index, ascending). The windows are the `n - p + 1` contiguous
/// blocks of `p` sorted positions; block `c` covers positions `c..c+p`,
/// which is the nearest-neighbor window of the interior position `c + (p-1)/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLayout {
    pub order: Vec<usize>,
    pub p: usize,
}

impl WindowLayout {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n() - self.p + 1
    }

    /// Iterate over windows as slices of original indices, in sorted order.
    pub fn windows(&self) -> impl Iterator<Item = &[usize]> {
        self.order.windows(self.p)
    }
}

/// Sort scores ascending (ties by original index) and lay out the
/// nearest-neighbor windows of size `p`.
pub fn build_windows<T: Float>(scores: &[T], p: usize) -> Result<WindowLayout> {
    if p < 3 || p % 2 == 0 {
        return Err(Error::InvalidWindowSize { p });
    }
    let n = scores.len();
    if n < p {
        return Err(Error::TooFewObservations { got: n, needed: p });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(WindowLayout { order, p })
}

/// Balanced one-way ANOVA mean squares over the augmented observation
/// vector: cell = window, observations = residuals of its members.
pub fn mst_mse<T: Float>(residuals: &[T], layout: &WindowLayout) -> Result<(T, T)> {
    let p = layout.p;
    let n_cells = layout.n_cells();
    if n_cells < 2 {
        return Err(Error::TooFewCells { got: n_cells });
    }
    let pf = fu::<T>(p);
    let mut cell_means = Vec::with_capacity(n_cells);
    let mut grand = T::zero();
    let mut within = T::zero();
    for w in layout.windows() {
        let mut s = T::zero();
        for &j in w {
            s += residuals[j];
        }
        let mean = s / pf;
        grand += s;
        for &j in w {
            let d = residuals[j] - mean;
            within += d * d;
        }
        cell_means.push(mean);
    }
    grand /= fu::<T>(n_cells * p);
    let mut between = T::zero();
    for m in &cell_means {
        let d = *m - grand;
        between += d * d;
    }
    let mst = pf * between / fu(n_cells - 1);
    let mse = within / (fu::<T>(n_cells) * fu(p - 1));
    Ok((mst, mse))
}

/// Dense-matrix oracle for `MST - MSE`.
///
/// Assembles the full `(Np x Np)` quadratic-form matrix
/// `A = c1 (direct sum of J_p blocks) - c2 J_{Np} - c3 I_{Np}` with
/// `N = n - p + 1` cells, applies it to the augmented residual vector, and
/// returns the quadratic form. Intended purely as an independent check of
/// [`mst_mse`].
pub fn quadratic_form_oracle<T: Float>(residuals: &[T], layout: &WindowLayout) -> Result<T> {
    let p = layout.p;
    let n_cells = layout.n_cells();
    if n_cells < 2 {
        return Err(Error::TooFewCells { got: n_cells });
    }
    let m = n_cells * p;
    let mf = fu::<T>(m);
    let nf = fu::<T>(n_cells);
    let pf = fu::<T>(p);
    let c1 = (mf - T::one()) / (nf * (nf - T::one()) * pf * (pf - T::one()));
    let c2 = T::one() / (nf * (nf - T::one()) * pf);
    let c3 = T::one() / (nf * (pf - T::one()));

    let mut a = DMatrix::<T>::from_element(m, m, -c2);
    for cell in 0..n_cells {
        for i in 0..p {
            for j in 0..p {
                a[(cell * p + i, cell * p + j)] += c1;
            }
        }
    }
    for i in 0..m {
        a[(i, i)] -= c3;
    }

    let mut xi = DVector::<T>::zeros(m);
    for (c, w) in layout.windows().enumerate() {
        for (k, &j) in w.iter().enumerate() {
            xi[c * p + k] = residuals[j];
        }
    }
    Ok((xi.transpose() * a * xi)[(0, 0)])
}

/// Rice-type estimator of the integrated fourth conditional moment,
/// computed on residuals already ordered by the surrogate scores:
/// `tau2 = 1/(4(n-3)) sum_{j=2}^{n-2} (xi_j - xi_{j-1})^2 (xi_{j+2} - xi_{j+1})^2`.
pub fn tau2_hat<T: Float>(residuals_sorted: &[T]) -> Result<T> {
    let n = residuals_sorted.len();
    if n < 4 {
        return Err(Error::TooFewObservations { got: n, needed: 4 });
    }
    let r = residuals_sorted;
    let mut s = T::zero();
    // 1-based j = 2..=n-2
    for idx in 1..=(n - 3) {
        let d1 = r[idx] - r[idx - 1];
        let d2 = r[idx + 2] - r[idx + 1];
        s += d1 * d1 * d2 * d2;
    }
    Ok(s / (fl::<T>(4.0) * fu(n - 3)))
}

/// Standardize `MST - MSE` by the asymptotic null variance
/// `2p(2p-1)/(3(p-1)) * tau2` and return `(z, p_value)` for the one-sided
/// upper-tail test.
pub fn standardize<T: Float>(mst: T, mse: T, tau2: T, n: usize, p: usize) -> Result<(T, T)> {
    if !(tau2 > T::zero()) || !tau2.is_finite() {
        return Err(Error::DegenerateVariance {
            tau2: tau2.to_f64().unwrap_or(f64::NAN),
        });
    }
    let pf = fu::<T>(p);
    let var_const = fl::<T>(2.0) * pf * (fl::<T>(2.0) * pf - T::one())
        / (fl::<T>(3.0) * (pf - T::one()));
    let z = fu::<T>(n).sqrt() * (mst - mse) / (var_const * tau2).sqrt();
    let p_value = (-z).norm_cdf();
    Ok((z, p_value))
}

/// How the univariate ordering surrogate is produced for multi-column
/// groups: the supervised-PC threshold rule and its parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig<T> {
    /// Window size (odd, >= 3).
    pub p: usize,
    /// Local polynomial order for the null fit.
    pub q: usize,
    /// Supervised-PC p-value threshold.
    pub theta: T,
    pub rule: Rule,
    pub kernel: KernelSpec<T>,
    /// Override for the null-fit bandwidth; `None` selects the
    /// rate-respecting default for the current covariate matrix.
    pub bandwidth: Option<Bandwidth<T>>,
    /// Standardize columns before the principal component extraction.
    pub standardize_pc: bool,
}

impl<T: Float> Default for TestConfig<T> {
    fn default() -> Self {
        TestConfig {
            p: 11,
            q: 1,
            theta: fl(0.05),
            rule: Rule::Rule1,
            kernel: KernelSpec::default(),
            bandwidth: None,
            standardize_pc: false,
        }
    }
}

/// Per-test diagnostics retained for reproducibility.
#[derive(Debug, Clone)]
pub struct Diagnostics<T> {
    /// Bandwidth actually used for the null fit (empty when the null model
    /// had no covariates and reduced to the grand mean).
    pub bandwidth: Vec<T>,
    /// Surrogate scores that ordered the windows.
    pub scores: Vec<T>,
    /// Index set feeding the supervised PC, when one was computed.
    pub selected: Option<Vec<usize>>,
    /// Constant group columns dropped before the PC.
    pub dropped_columns: Vec<usize>,
}

/// Outcome of one group (or single-covariate) significance test.
#[derive(Debug, Clone)]
pub struct TestResult<T> {
    pub mst: T,
    pub mse: T,
    pub tau2_hat: T,
    pub z: T,
    pub p_value: T,
    pub p: usize,
    pub n: usize,
    pub diagnostics: Diagnostics<T>,
}

/// Residuals of the null model `Y ~ X_keep`. With no columns the null model
/// is the grand mean.
pub(crate) fn null_residuals<T: Float>(
    y: &DVector<T>,
    x_keep: &DMatrix<T>,
    cfg: &TestConfig<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = y.len();
    if x_keep.ncols() == 0 {
        let mean = y.sum() / fu(n);
        return Ok((y.iter().map(|v| *v - mean).collect(), Vec::new()));
    }
    let h = match &cfg.bandwidth {
        Some(h) => h.clone(),
        None => default_bandwidth(x_keep, cfg.q)?,
    };
    let fit = local_poly_fit(x_keep, y, &cfg.kernel, &h, cfg.q)?;
    Ok((fit.residuals, h.lambdas))
}

/// Core statistic given precomputed residuals and ordering scores.
pub(crate) fn test_from_scores<T: Float>(
    residuals: &[T],
    scores: &[T],
    p: usize,
) -> Result<(T, T, T, T, T)> {
    let n = residuals.len();
    // a constant score carries no ordering information; the statistic is
    // defined to be zero (every augmented cell would coincide)
    let constant = scores.windows(2).all(|w| w[0] == w[1]);
    if constant {
        let tau2 = tau2_hat(residuals)?;
        return Ok((T::zero(), T::zero(), tau2, T::zero(), fl(0.5)));
    }
    let layout = build_windows(scores, p)?;
    let (mst, mse) = mst_mse(residuals, &layout)?;
    let sorted: Vec<T> = layout.order.iter().map(|&i| residuals[i]).collect();
    let tau2 = tau2_hat(&sorted)?;
    let (z, p_value) = standardize(mst, mse, tau2, n, p)?;
    Ok((mst, mse, tau2, z, p_value))
}

/// Test whether the group of covariates `z_group` influences the regression
/// function, given that the columns of `x_keep` stay in the null model.
pub fn group_test<T: Float>(
    y: &DVector<T>,
    x_keep: &DMatrix<T>,
    z_group: &DMatrix<T>,
    cfg: &TestConfig<T>,
) -> Result<TestResult<T>> {
    let n = y.len();
    let s = z_group.ncols();
    if s == 0 {
        return Err(Error::EmptyGroup);
    }
    if x_keep.nrows() != n && x_keep.ncols() > 0 {
        return Err(Error::InvalidConfig {
            reason: "row count mismatch between Y and X".into(),
        });
    }
    if z_group.nrows() != n {
        return Err(Error::InvalidConfig {
            reason: "row count mismatch between Y and Z".into(),
        });
    }

    let (residuals, bandwidth) = null_residuals(y, x_keep, cfg)?;

    let (scores, selected, dropped) = if s == 1 {
        (z_group.column(0).iter().copied().collect::<Vec<T>>(), None, Vec::new())
    } else {
        let proj = projection::supervised_pc_from_residuals(
            &residuals,
            z_group,
            cfg.theta,
            cfg.rule,
            cfg.p,
            cfg.standardize_pc,
        )?;
        (
            proj.scores.iter().copied().collect(),
            Some(proj.selected),
            proj.dropped_columns,
        )
    };

    let (mst, mse, tau2, z, p_value) = test_from_scores(&residuals, &scores, cfg.p)?;
    Ok(TestResult {
        mst,
        mse,
        tau2_hat: tau2,
        z,
        p_value,
        p: cfg.p,
        n,
        diagnostics: Diagnostics {
            bandwidth,
            scores,
            selected,
            dropped_columns: dropped,
        },
    })
}

/// Single-covariate specialization: the tested column itself orders the
/// windows.
pub fn univariate_test<T: Float>(
    y: &DVector<T>,
    x_keep: &DMatrix<T>,
    z_col: &DVector<T>,
    cfg: &TestConfig<T>,
) -> Result<TestResult<T>> {
    let z = DMatrix::from_column_slice(z_col.len(), 1, z_col.as_slice());
    group_test(y, x_keep, &z, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn layout_identity(n: usize, p: usize) -> WindowLayout {
        WindowLayout { order: (0..n).collect(), p }
    }

    #[test]
    fn windows_over_sorted_positions() {
        let scores = [0.1, 0.2, 0.3, 0.4, 0.5];
        let layout = build_windows(&scores, 3).unwrap();
        let wins: Vec<Vec<usize>> = layout.windows().map(|w| w.to_vec()).collect();
        // realizes {j : |F(P_j) - F(P_i)| <= (p-1)/(2n)} for distinct scores
        assert_eq!(wins, vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4]]);
        assert_eq!(layout.n_cells(), 3);
    }

    #[test]
    fn ecdf_definition_agrees_on_distinct_scores() {
        // brute-force Eq.-(3)-style windows from the empirical CDF
        let scores = [0.42, -1.3, 0.0, 2.2, 0.9, -0.4, 1.5];
        let n = scores.len();
        let p = 3usize;
        let layout = build_windows(&scores, p).unwrap();
        // integer rank counts keep the <= comparison exact
        let count = |v: f64| scores.iter().filter(|s| **s <= v).count() as i64;
        let half = (p - 1) / 2;
        for (c, w) in layout.windows().enumerate() {
            let center = layout.order[c + half];
            let mut expected: Vec<usize> = (0..n)
                .filter(|&j| (count(scores[j]) - count(scores[center])).abs() <= half as i64)
                .collect();
            expected.sort_unstable();
            let mut got = w.to_vec();
            got.sort_unstable();
            assert_eq!(got, expected, "window centered at sorted position {}", c + half);
        }
    }

    #[test]
    fn degenerate_single_window() {
        let scores = [3.0, 1.0, 2.0];
        let layout = build_windows(&scores, 3).unwrap();
        assert_eq!(layout.n_cells(), 1);
        assert_eq!(layout.windows().next().unwrap(), &[1, 2, 0]);
    }

    #[test]
    fn ties_break_by_original_index() {
        let scores = [0.1, 0.2, 0.2, 0.4, 0.5];
        let layout = build_windows(&scores, 3).unwrap();
        assert_eq!(layout.order, vec![0, 1, 2, 3, 4]);
        for w in layout.windows() {
            assert_eq!(w.len(), 3);
        }
    }

    #[test]
    fn too_few_observations() {
        let scores = [0.1, 0.2];
        assert_eq!(
            build_windows(&scores, 3),
            Err(Error::TooFewObservations { got: 2, needed: 3 })
        );
        assert_eq!(build_windows(&[0.0; 9], 4), Err(Error::InvalidWindowSize { p: 4 }));
    }

    #[test]
    fn constant_residuals_have_zero_mean_squares() {
        let layout = layout_identity(9, 3);
        let resid = [2.5f64; 9];
        let (mst, mse) = mst_mse(&resid, &layout).unwrap();
        assert_eq!(mst, 0.0);
        assert_eq!(mse, 0.0);
        assert!(quadratic_form_oracle(&resid, &layout).unwrap().abs() < 1e-12);
    }

    #[test]
    fn alternating_residuals_match_oracle() {
        let layout = layout_identity(5, 3);
        let resid = [1.0f64, -1.0, 1.0, -1.0, 1.0];
        let (mst, mse) = mst_mse(&resid, &layout).unwrap();
        let oracle = quadratic_form_oracle(&resid, &layout).unwrap();
        assert!(((mst - mse) - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn quadratic_homogeneity() {
        let layout = layout_identity(10, 5);
        let resid: Vec<f64> = (0..10).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let (mst, mse) = mst_mse(&resid, &layout).unwrap();
        let scaled: Vec<f64> = resid.iter().map(|v| 3.0 * v).collect();
        let (mst2, mse2) = mst_mse(&scaled, &layout).unwrap();
        assert!((mst2 - 9.0 * mst).abs() < 1e-10);
        assert!((mse2 - 9.0 * mse).abs() < 1e-10);
    }

    #[test]
    fn oracle_identity_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 7..=20usize {
            for &p in &[3usize, 5, 7] {
                if n < p + 2 {
                    continue;
                }
                let resid: Vec<f64> =
                    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let scores: Vec<f64> =
                    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let layout = build_windows(&scores, p).unwrap();
                let (mst, mse) = mst_mse(&resid, &layout).unwrap();
                let oracle = quadratic_form_oracle(&resid, &layout).unwrap();
                let denom = oracle.abs().max(1e-30);
                assert!(
                    ((mst - mse) - oracle).abs() / denom < 1e-12 || ((mst - mse) - oracle).abs() < 1e-15,
                    "n={n} p={p}: {} vs {oracle}",
                    mst - mse
                );
            }
        }
    }

    #[test]
    fn tau2_constant_and_alternating() {
        assert_eq!(tau2_hat(&[5.0; 12]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((tau2_hat(&alt).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(
            tau2_hat(&[1.0, 2.0, 3.0]),
            Err(Error::TooFewObservations { got: 3, needed: 4 })
        );
    }

    #[test]
    fn tau2_consistent_for_iid_normal() {
        // E[(xi_j - xi_{j-1})^2] = 2 sigma^2, the two squared differences are
        // independent, so E[tau2] = (2)(2)/4 = 1 for sigma = 1
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut vals = Vec::new();
        for _ in 0..50 {
            let r: Vec<f64> = (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            vals.push(tau2_hat(&r).unwrap());
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = vals[25];
        assert!((median - 1.0).abs() < 0.1, "median tau2 {median}");
    }

    #[test]
    fn standardize_basics() {
        let (z, pv) = standardize::<f64>(0.7, 0.7, 1.0, 100, 11).unwrap();
        assert_eq!(z, 0.0);
        assert!((pv - 0.5).abs() < 1e-15);
        // p = 11 variance constant
        let c: f64 = 2.0 * 11.0 * 21.0 / (3.0 * 10.0);
        assert!((c - 15.4).abs() < 1e-12);
        let (z1, _) = standardize::<f64>(1.0, 0.5, 1.0, 100, 11).unwrap();
        assert!((z1 - 10.0 * 0.5 / 15.4f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            standardize::<f64>(1.0, 0.5, 0.0, 100, 11),
            Err(Error::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn p_value_decreasing_in_z() {
        let mut last = 1.0;
        for i in 0..20 {
            let mst = 0.1 * i as f64;
            let (_, pv) = standardize(mst, 0.0, 1.0, 50, 5).unwrap();
            assert!(pv < last);
            assert!((0.0..=1.0).contains(&pv));
            last = pv;
        }
    }

    #[test]
    fn residual_scaling_leaves_z_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let resid: Vec<f64> = (0..60).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scores: Vec<f64> = (0..60).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (_, _, _, z0, _) = test_from_scores(&resid, &scores, 5).unwrap();
        let scaled: Vec<f64> = resid.iter().map(|v| 3.7 * v).collect();
        let (_, _, _, z1, _) = test_from_scores(&scaled, &scores, 5).unwrap();
        assert!((z0 - z1).abs() < 1e-10, "{z0} vs {z1}");
    }

    #[test]
    fn noiseless_null_is_degenerate_but_centered() {
        // Y = m(X) exactly, Z irrelevant: residuals are ~0 and tau2 underflows
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 80;
        let x = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_iterator(n, x.column(0).iter().map(|v| 2.0 * v + 1.0));
        let z = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cfg = TestConfig::default();
        match group_test(&y, &x, &z, &cfg) {
            // residuals are rounding noise; z is scale-invariant so it need
            // not be small, but the magnitudes and p-value must stay sane
            Ok(res) => {
                assert!(res.mst.abs() < 1e-12);
                assert!(res.mse.abs() < 1e-12);
                assert!(res.z.is_finite());
                assert!((0.0..=1.0).contains(&res.p_value));
            }
            // exact-zero residuals give tau2 = 0, which is a legal outcome
            Err(Error::DegenerateVariance { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn constant_z_column_gives_zero_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 60;
        let x = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)] + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        let z = DVector::from_element(n, 3.0);
        let res = univariate_test(&y, &x, &z, &TestConfig::default()).unwrap();
        assert_eq!(res.z, 0.0);
        assert!((res.p_value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn location_invariance_of_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 100;
        let x = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)].sin() + rng.sample::<f64, _>(StandardNormal)
        });
        let cfg = TestConfig::default();
        let r0 = group_test(&y, &x, &z, &cfg).unwrap();
        let y_shift = y.map(|v| v + 100.0);
        let r1 = group_test(&y_shift, &x, &z, &cfg).unwrap();
        assert!((r0.z - r1.z).abs() < 1e-6, "{} vs {}", r0.z, r1.z);
        let y_scaled = y.map(|v| 4.0 * v);
        let r2 = group_test(&y_scaled, &x, &z, &cfg).unwrap();
        assert!((r0.z - r2.z).abs() < 1e-10, "{} vs {}", r0.z, r2.z);
    }
}
