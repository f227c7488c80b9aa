//! Univariate surrogate scores: the supervised first principal component of
//! a tested group, and the sliced-inverse-regression estimate of the
//! dimension-reduction matrix.

use nalgebra::{DMatrix, DVector};

use crate::anovatest::{self, TestConfig};
use crate::error::{Error, Result};
use crate::num::{fl, fu, Float};

/// Rule for forming the covariate set feeding the first supervised PC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Only covariates with p-value below the threshold.
    Rule1,
    /// Rule 1 plus the smallest-p covariate among the remainder.
    Rule2,
}

/// Supervised principal component of a tested group.
#[derive(Debug, Clone)]
pub struct ProjectionResult<T> {
    /// Indices (into the group's columns) feeding the PC.
    pub selected: Vec<usize>,
    /// Unit-norm coefficient vector, zero outside `selected`.
    pub coef: DVector<T>,
    /// `Z * coef`.
    pub scores: DVector<T>,
    /// Univariate p-values per group column (1.0 for dropped columns).
    pub pvalues: Vec<T>,
    /// Constant columns excluded from the PC.
    pub dropped_columns: Vec<usize>,
}

/// First principal component direction of the column-centered matrix `m`.
///
/// Columns are centered but not rescaled. The sign is fixed so the
/// coordinate of largest magnitude is positive.
pub fn first_pc<T: Float>(m: &DMatrix<T>) -> Result<DVector<T>> {
    let n = m.nrows();
    let k = m.ncols();
    if k == 0 || n < 2 {
        return Err(Error::InvalidConfig {
            reason: "first_pc needs k >= 1 columns and n >= 2 rows".into(),
        });
    }
    if k == 1 {
        return Ok(DVector::from_element(1, T::one()));
    }
    let mut centered = m.clone();
    for c in 0..k {
        let mean = centered.column(c).sum() / fu(n);
        for i in 0..n {
            centered[(i, c)] -= mean;
        }
    }
    let cov = centered.transpose() * &centered / fu::<T>(n - 1);
    if !(cov.trace() > T::zero()) {
        return Err(Error::DegenerateCovariance);
    }
    let eig = cov.symmetric_eigen();
    let mut best = 0;
    for i in 1..k {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    if !(eig.eigenvalues[best] > T::zero()) {
        return Err(Error::DegenerateCovariance);
    }
    let mut v: DVector<T> = eig.eigenvectors.column(best).into_owned();
    fix_sign(&mut v);
    Ok(v)
}

/// Make the largest-magnitude coordinate positive.
fn fix_sign<T: Float>(v: &mut DVector<T>) {
    let mut arg = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[arg].abs() {
            arg = i;
        }
    }
    if v[arg] < T::zero() {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Supervised first principal component of the group `z`, driven by the
/// univariate test p-values computed from the null-model residuals.
pub fn supervised_pc<T: Float>(
    y: &DVector<T>,
    x_keep: &DMatrix<T>,
    z: &DMatrix<T>,
    theta: T,
    rule: Rule,
    cfg: &TestConfig<T>,
) -> Result<ProjectionResult<T>> {
    let (residuals, _) = anovatest::null_residuals(y, x_keep, cfg)?;
    supervised_pc_from_residuals(&residuals, z, theta, rule, cfg.p, cfg.standardize_pc)
}

/// Same as [`supervised_pc`], but with the null fit already done. The s
/// univariate tests share one set of residuals.
pub(crate) fn supervised_pc_from_residuals<T: Float>(
    residuals: &[T],
    z: &DMatrix<T>,
    theta: T,
    rule: Rule,
    p: usize,
    standardize_pc: bool,
) -> Result<ProjectionResult<T>> {
    let n = z.nrows();
    let s = z.ncols();
    if s == 0 {
        return Err(Error::EmptyGroup);
    }
    if !(theta > T::zero() && theta < T::one()) {
        return Err(Error::InvalidConfig {
            reason: "theta must lie in (0, 1)".into(),
        });
    }

    let mut dropped = Vec::new();
    let mut usable = Vec::new();
    for j in 0..s {
        let col = z.column(j);
        let constant = col.iter().skip(1).all(|v| *v == col[0]);
        if constant {
            dropped.push(j);
        } else {
            usable.push(j);
        }
    }
    if usable.is_empty() {
        return Err(Error::DegenerateGroup { col: dropped[0] });
    }

    let mut pvalues = vec![T::one(); s];
    for &j in &usable {
        let scores: Vec<T> = z.column(j).iter().copied().collect();
        let (_, _, _, _, pv) = anovatest::test_from_scores(residuals, &scores, p)?;
        pvalues[j] = pv;
    }

    if s == 1 {
        let coef = DVector::from_element(1, T::one());
        return Ok(ProjectionResult {
            selected: vec![0],
            scores: z.column(0).into_owned(),
            coef,
            pvalues,
            dropped_columns: dropped,
        });
    }

    let mut selected: Vec<usize> = usable
        .iter()
        .copied()
        .filter(|&j| pvalues[j] < theta)
        .collect();
    if rule == Rule::Rule2 {
        if let Some(&extra) = usable
            .iter()
            .filter(|j| !selected.contains(j))
            .min_by(|&&a, &&b| pvalues[a].partial_cmp(&pvalues[b]).unwrap())
        {
            selected.push(extra);
            selected.sort_unstable();
        }
    }
    let want = 2.min(usable.len());
    if selected.len() < want {
        let mut by_p = usable.clone();
        by_p.sort_by(|&a, &b| {
            pvalues[a]
                .partial_cmp(&pvalues[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        selected = by_p[..want].to_vec();
        selected.sort_unstable();
    }

    let mut sub = DMatrix::<T>::zeros(n, selected.len());
    for (c, &j) in selected.iter().enumerate() {
        sub.set_column(c, &z.column(j));
    }
    if standardize_pc {
        for c in 0..sub.ncols() {
            let mean = sub.column(c).sum() / fu(n);
            let var = sub
                .column(c)
                .iter()
                .map(|v| (*v - mean) * (*v - mean))
                .sum::<T>()
                / fu(n - 1);
            let sd = var.sqrt();
            if sd > T::zero() {
                for i in 0..n {
                    sub[(i, c)] /= sd;
                }
            }
        }
    }
    let pc = first_pc(&sub)?;
    let mut coef = DVector::<T>::zeros(s);
    for (c, &j) in selected.iter().enumerate() {
        coef[j] = pc[c];
    }
    let scores = z * &coef;
    Ok(ProjectionResult {
        selected,
        coef,
        scores,
        pvalues,
        dropped_columns: dropped,
    })
}

/// Sliced-inverse-regression estimate of the K x d projection matrix.
#[derive(Debug, Clone)]
pub struct SirEstimate<T> {
    /// K x d matrix; rows orthonormal in the standardized-covariate metric.
    pub b_matrix: DMatrix<T>,
    /// Eigenvalues of the slice-mean covariance, descending.
    pub eigvals: Vec<T>,
    pub n_slices: usize,
    pub k: usize,
}

/// Sliced Inverse Regression.
///
/// Standardizes `x`, slices observations by the order of `y` into
/// `n_slices` near-equal slices (a binary response is sliced by class),
/// and eigen-decomposes the slice-weighted covariance of slice means. The
/// top-k directions are returned back-transformed to covariate units.
pub fn sir<T: Float>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    n_slices: usize,
    k: usize,
) -> Result<SirEstimate<T>> {
    let n = x.nrows();
    let d = x.ncols();
    if n_slices < 2 || n < n_slices {
        return Err(Error::InvalidConfig {
            reason: format!("need n >= n_slices >= 2, got n={n}, n_slices={n_slices}"),
        });
    }
    if k < 1 || k > d {
        return Err(Error::InvalidConfig {
            reason: format!("need 1 <= k <= d, got k={k}, d={d}"),
        });
    }
    if n <= d {
        return Err(Error::SingularCovariance);
    }

    let means: Vec<T> = (0..d).map(|c| x.column(c).sum() / fu(n)).collect();
    let mut centered = x.clone();
    for c in 0..d {
        for i in 0..n {
            centered[(i, c)] -= means[c];
        }
    }
    let cov = centered.transpose() * &centered / fu::<T>(n - 1);
    let eig = cov.symmetric_eigen();
    let max_ev = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |a, &b| a.max(b));
    let tol = max_ev * fl::<T>(1e-12);
    if eig.eigenvalues.iter().any(|&ev| !(ev > tol)) {
        return Err(Error::SingularCovariance);
    }
    // Sigma^{-1/2} = V diag(1/sqrt(lambda)) V^T
    let mut scaled = eig.eigenvectors.clone();
    for c in 0..d {
        let inv_sqrt = T::one() / eig.eigenvalues[c].sqrt();
        for i in 0..d {
            scaled[(i, c)] *= inv_sqrt;
        }
    }
    let inv_sqrt_cov = &scaled * eig.eigenvectors.transpose();
    let standardized = &centered * &inv_sqrt_cov;

    // slice membership: by class for binary y, by y-order otherwise
    let distinct = {
        let mut vals: Vec<T> = y.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        vals
    };
    let slices: Vec<Vec<usize>> = if distinct.len() == 2 {
        let lo = distinct[0];
        let mut s0 = Vec::new();
        let mut s1 = Vec::new();
        for i in 0..n {
            if y[i] == lo {
                s0.push(i);
            } else {
                s1.push(i);
            }
        }
        vec![s0, s1]
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            y[a].partial_cmp(&y[b]).unwrap().then(a.cmp(&b))
        });
        let base = n / n_slices;
        let extra = n % n_slices;
        let mut out = Vec::with_capacity(n_slices);
        let mut pos = 0;
        for h in 0..n_slices {
            let len = base + usize::from(h < extra);
            out.push(order[pos..pos + len].to_vec());
            pos += len;
        }
        out
    };

    let mut m = DMatrix::<T>::zeros(d, d);
    for slice in &slices {
        if slice.is_empty() {
            continue;
        }
        let w = fu::<T>(slice.len()) / fu(n);
        let mut mean = DVector::<T>::zeros(d);
        for &i in slice {
            for c in 0..d {
                mean[c] += standardized[(i, c)];
            }
        }
        mean /= fu::<T>(slice.len());
        m += &mean * mean.transpose() * w;
    }

    let meig = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| meig.eigenvalues[b].partial_cmp(&meig.eigenvalues[a]).unwrap());
    let eigvals: Vec<T> = idx.iter().map(|&i| meig.eigenvalues[i].max(T::zero())).collect();

    let mut b = DMatrix::<T>::zeros(k, d);
    for row in 0..k {
        let mut eta: DVector<T> = meig.eigenvectors.column(idx[row]).into_owned();
        fix_sign(&mut eta);
        // back-transform: direction in covariate units is Sigma^{-1/2} eta
        let dir = &inv_sqrt_cov * eta;
        for c in 0..d {
            b[(row, c)] = dir[c];
        }
    }

    Ok(SirEstimate {
        b_matrix: b,
        eigvals,
        n_slices: slices.len(),
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn first_pc_identical_columns() {
        let base = randn_matrix(40, 1, 1);
        let m = DMatrix::from_fn(40, 2, |i, _| base[(i, 0)]);
        let pc = first_pc(&m).unwrap();
        let root = 1.0 / 2f64.sqrt();
        assert!((pc[0] - root).abs() < 1e-10);
        assert!((pc[1] - root).abs() < 1e-10);
    }

    #[test]
    fn first_pc_single_column() {
        let m = randn_matrix(20, 1, 2);
        assert_eq!(first_pc(&m).unwrap(), DVector::from_element(1, 1.0));
    }

    #[test]
    fn first_pc_matches_power_iteration_oracle() {
        let m = randn_matrix(50, 3, 3);
        let pc = first_pc(&m).unwrap();

        // independent power-iteration oracle on the explicit covariance
        let n = m.nrows() as f64;
        let mut centered = m.clone();
        for c in 0..3 {
            let mean = centered.column(c).mean();
            centered.column_mut(c).add_scalar_mut(-mean);
        }
        let cov = centered.transpose() * &centered / (n - 1.0);
        let mut v = DVector::from_vec(vec![1.0, 0.3, -0.2]);
        for _ in 0..10_000 {
            v = &cov * v;
            v /= v.norm();
        }
        let mut arg = 0;
        for i in 1..3 {
            if v[i].abs() > v[arg].abs() {
                arg = i;
            }
        }
        if v[arg] < 0.0 {
            v = -v;
        }
        assert!((pc - v).norm() < 1e-8);
    }

    #[test]
    fn first_pc_degenerate_covariance() {
        let m = DMatrix::from_element(10, 2, 4.0);
        assert_eq!(first_pc(&m), Err(Error::DegenerateCovariance));
    }

    #[test]
    fn supervised_pc_rule_application() {
        // engineered residuals/groups are overkill for the rule logic; feed
        // synthetic p-values by building groups whose tests produce them is
        // fragile, so the rules are exercised through select_indices-style
        // behavior below with real data and through direct checks here.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let z = DMatrix::<f64>::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        // residuals strongly driven by columns 0 and 2, independent of 1
        let resid: Vec<f64> = (0..n)
            .map(|i| {
                2.0 * z[(i, 0)] + 2.0 * z[(i, 2)]
                    + 0.1 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let r1 = supervised_pc_from_residuals(&resid, &z, 0.05, Rule::Rule1, 11, false).unwrap();
        assert_eq!(r1.selected, vec![0, 2]);
        assert!(r1.pvalues[0] < 0.05 && r1.pvalues[2] < 0.05);
        assert!(r1.pvalues[1] > 0.05);
        let r2 = supervised_pc_from_residuals(&resid, &z, 0.05, Rule::Rule2, 11, false).unwrap();
        assert_eq!(r2.selected, vec![0, 1, 2]);
        // coefficient vector is unit norm, zero outside the selected set
        assert!((r1.coef.norm() - 1.0).abs() < 1e-12);
        assert_eq!(r1.coef[1], 0.0);
    }

    #[test]
    fn supervised_pc_fallback_two_smallest() {
        // pure noise: no p-value passes theta, fall back to the two smallest
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 150;
        let z = DMatrix::<f64>::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let resid: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = supervised_pc_from_residuals(&resid, &z, 1e-9, Rule::Rule1, 11, false).unwrap();
        assert_eq!(r.selected.len(), 2);
        let mut by_p: Vec<usize> = (0..3).collect();
        by_p.sort_by(|&a, &b| r.pvalues[a].partial_cmp(&r.pvalues[b]).unwrap());
        let mut expected = by_p[..2].to_vec();
        expected.sort_unstable();
        assert_eq!(r.selected, expected);
    }

    #[test]
    fn supervised_pc_drops_constant_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 120;
        let mut z = DMatrix::<f64>::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        for i in 0..n {
            z[(i, 1)] = 5.0;
        }
        let resid: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = supervised_pc_from_residuals(&resid, &z, 0.05, Rule::Rule1, 11, false).unwrap();
        assert_eq!(r.dropped_columns, vec![1]);
        assert!(!r.selected.contains(&1));
        assert_eq!(r.coef[1], 0.0);

        let all_const = DMatrix::<f64>::from_element(n, 2, 1.0);
        assert!(matches!(
            supervised_pc_from_residuals(&resid, &all_const, 0.05, Rule::Rule1, 11, false),
            Err(Error::DegenerateGroup { col: 0 })
        ));
    }

    #[test]
    fn sir_recovers_single_index_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1000;
        let d = 4;
        let beta = DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0]) / 5f64.sqrt();
        let mut angles = Vec::new();
        for rep in 0..50 {
            let x = randn_matrix(n, d, 100 + rep);
            let y = DVector::from_fn(n, |i, _| {
                let lin: f64 = (0..d).map(|c| x[(i, c)] * beta[c]).sum();
                lin + 0.5 * rng.sample::<f64, _>(StandardNormal)
            });
            let est = sir(&x, &y, 10, 1).unwrap();
            let b1 = est.b_matrix.row(0).transpose();
            let cos = (b1.dot(&beta) / (b1.norm() * beta.norm())).abs();
            angles.push(cos);
        }
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(angles[25] > 0.95, "median cosine {}", angles[25]);
    }

    #[test]
    fn sir_null_eigenvalues_small_under_independence() {
        // permutation oracle: the largest SIR eigenvalue under a permuted
        // (independent) response bounds what independence should produce
        let n = 500;
        let d = 4;
        let x = randn_matrix(n, d, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = DVector::<f64>::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let observed = sir(&x, &y, 10, 1).unwrap().eigvals[0];

        let mut perm_stats = Vec::new();
        for _ in 0..40 {
            let mut idx: Vec<usize> = (0..n).collect();
            // Fisher-Yates with the test RNG
            for i in (1..n).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                idx.swap(i, j);
            }
            let yp = DVector::from_fn(n, |i, _| y[idx[i]]);
            perm_stats.push(sir(&x, &yp, 10, 1).unwrap().eigvals[0]);
        }
        perm_stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q95 = perm_stats[37];
        // y itself is independent of x, so observed should look like the
        // permutation distribution, comfortably below 3x its 95th percentile
        assert!(observed < 3.0 * q95, "observed {observed}, q95 {q95}");
    }

    #[test]
    fn sir_binary_response_slices_by_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 400;
        let x = randn_matrix(n, 3, 300);
        let y = DVector::from_fn(n, |i, _| {
            let p = 1.0 / (1.0 + (-2.0 * x[(i, 0)]).exp());
            f64::from(rand::Rng::random::<f64>(&mut rng) < p)
        });
        let est = sir(&x, &y, 2, 1).unwrap();
        assert_eq!(est.n_slices, 2);
        let b1 = est.b_matrix.row(0).transpose();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((b1.dot(&e1) / b1.norm()).abs() > 0.8);
    }

    #[test]
    fn sir_rejects_degenerate_inputs() {
        let x = randn_matrix(50, 3, 400);
        let y = DVector::from_fn(50, |i, _| i as f64);
        assert!(matches!(
            sir(&x, &y, 1, 1),
            Err(Error::InvalidConfig { .. })
        ));
        // collinear covariates
        let mut xc = x.clone();
        let col0: Vec<f64> = xc.column(0).iter().copied().collect();
        for i in 0..50 {
            xc[(i, 2)] = 2.0 * col0[i];
        }
        assert!(matches!(sir(&xc, &y, 5, 1), Err(Error::SingularCovariance)));
    }

    #[test]
    fn sir_affine_invariance_of_directions() {
        let x = randn_matrix(600, 3, 500);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = DVector::from_fn(600, |i, _| {
            (x[(i, 0)] + x[(i, 1)]).powi(2)
                + 0.3 * rng.sample::<f64, _>(StandardNormal)
        });
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.0, 1.0, -0.3, 0.1, 0.0, 1.5]);
        let xt = &x * &a;
        let e0 = sir(&x, &y, 10, 1).unwrap();
        let e1 = sir(&xt, &y, 10, 1).unwrap();
        // the estimated direction in the transformed coordinates should map
        // back to the original one: b1 ~ A b1'
        let b0 = e0.b_matrix.row(0).transpose();
        let b1 = &a * e1.b_matrix.row(0).transpose();
        let cos = (b0.dot(&b1) / (b0.norm() * b1.norm())).abs();
        assert!(cos > 0.99, "cosine {cos}");
    }
}
