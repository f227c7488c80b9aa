//! Backward-elimination group variable selection driven by the
//! Benjamini-Yekutieli FDR rule over group test p-values.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::anovatest::{group_test, TestConfig};
use crate::error::{Error, Result};
use crate::num::{fu, Float};
use crate::projection::sir;

/// Disjoint covariate groups covering all columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    pub groups: Vec<Vec<usize>>,
    pub labels: Option<Vec<String>>,
}

impl GroupMap {
    /// Sequential groups of equal size covering `d_total` columns.
    pub fn sequential(d_total: usize, group_size: usize) -> Self {
        let groups = (0..d_total / group_size)
            .map(|g| (g * group_size..(g + 1) * group_size).collect())
            .collect();
        GroupMap { groups, labels: None }
    }

    pub fn label(&self, idx: usize) -> String {
        self.labels
            .as_ref()
            .and_then(|l| l.get(idx).cloned())
            .unwrap_or_else(|| format!("group{}", idx + 1))
    }

    /// Check disjointness, non-emptiness, and coverage of `0..d_total`.
    pub fn validate(&self, d_total: usize) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut seen = vec![false; d_total];
        for (g, cols) in self.groups.iter().enumerate() {
            if cols.is_empty() {
                return Err(Error::InvalidGroups {
                    reason: format!("group {g} is empty"),
                });
            }
            for &c in cols {
                if c >= d_total {
                    return Err(Error::InvalidGroups {
                        reason: format!("group {g} references column {c} out of {d_total}"),
                    });
                }
                if seen[c] {
                    return Err(Error::InvalidGroups {
                        reason: format!("column {c} belongs to more than one group"),
                    });
                }
                seen[c] = true;
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidGroups {
                reason: format!("column {c} is not assigned to any group"),
            });
        }
        Ok(())
    }
}

/// Benjamini-Yekutieli step-up cutoff.
///
/// With ordered p-values pi_(1) <= ... <= pi_(d), returns
/// `k = max { l : pi_(l) <= (l/d) * alpha / sum_{j=1}^d 1/j }`, or 0 when no
/// rank passes.
pub fn by_cutoff<T: Float>(pvalues: &[T], alpha: T) -> usize {
    let d = pvalues.len();
    if d == 0 {
        return 0;
    }
    let mut sorted: Vec<T> = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let harmonic: T = (1..=d).map(|j| T::one() / fu::<T>(j)).sum();
    let mut k = 0;
    for (rank0, pv) in sorted.iter().enumerate() {
        let l = rank0 + 1;
        let threshold = fu::<T>(l) * alpha / (fu::<T>(d) * harmonic);
        if *pv <= threshold {
            k = l;
        }
    }
    k
}

/// Options for [`backward_select`] beyond the shared test configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectConfig<T> {
    pub test: TestConfig<T>,
    /// Number of SIR directions.
    pub k: usize,
    /// Slice count for a continuous response; a binary response is always
    /// sliced by class.
    pub n_slices: usize,
    /// Terminate with the empty set once every remaining p-value exceeds
    /// alpha unadjusted, instead of eliminating one group per iteration.
    pub stop_when_empty: bool,
    /// Re-estimate the SIR directions after each elimination (extension;
    /// the stated procedure only drops columns).
    pub refit_sir: bool,
}

impl<T: Float> Default for SelectConfig<T> {
    fn default() -> Self {
        SelectConfig {
            test: TestConfig::default(),
            k: 2,
            n_slices: 10,
            stop_when_empty: false,
            refit_sir: false,
        }
    }
}

/// One pass of the elimination loop.
#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    /// Group indices still active at the start of the iteration.
    pub active_groups: Vec<usize>,
    /// P-values aligned with `active_groups`.
    pub pvalues: Vec<T>,
    /// Benjamini-Yekutieli cutoff rank.
    pub cutoff_k: usize,
    /// Group eliminated this iteration, if any.
    pub eliminated_group: Option<usize>,
    /// SIR direction count actually used, when capped below the configured K.
    pub k_capped: Option<usize>,
}

/// Full audit trail of one backward-elimination run.
#[derive(Debug, Clone)]
pub struct SelectionTrace<T> {
    pub iterations: Vec<IterationRecord<T>>,
    /// Group indices retained at termination.
    pub retained: Vec<usize>,
    pub alpha: T,
    pub config: SelectConfig<T>,
}

fn submatrix_columns<T: Float>(x: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(x.nrows(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        out.set_column(c, &x.column(j));
    }
    out
}

fn is_binary<T: Float>(y: &DVector<T>) -> bool {
    let mut vals: Vec<T> = y.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    vals.len() == 2
}

/// Backward elimination over covariate groups.
///
/// Estimates the dimension-reduction matrix once by SIR, then repeatedly
/// tests every active group (with the reduced predictors of the other
/// groups playing the role of the null covariates), eliminates the group
/// with the largest p-value whenever the BY cutoff retains fewer than all
/// groups, and stops when the cutoff covers every active group.
pub fn backward_select<T: Float>(
    y: &DVector<T>,
    x: &DMatrix<T>,
    gm: &GroupMap,
    alpha: T,
    cfg: &SelectConfig<T>,
) -> Result<SelectionTrace<T>> {
    let n = y.len();
    let d_total = x.ncols();
    gm.validate(d_total)?;
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidConfig {
            reason: "alpha must lie in (0, 1)".into(),
        });
    }
    if d_total >= n {
        return Err(Error::SingularCovariance);
    }

    let binary = is_binary(y);
    let n_slices = if binary { 2 } else { cfg.n_slices };
    let k0 = cfg.k.min(d_total);

    let est = sir(x, y, n_slices, k0)?;
    // b columns are scattered over the full column index set so elimination
    // is pure bookkeeping
    let mut b_full = est.b_matrix.clone();

    let mut active: Vec<usize> = (0..gm.groups.len()).collect();
    let mut iterations: Vec<IterationRecord<T>> = Vec::new();

    loop {
        let d = active.len();
        if d == 0 {
            break;
        }
        let active_cols: Vec<usize> = active
            .iter()
            .flat_map(|&g| gm.groups[g].iter().copied())
            .collect();
        let k_used = k0.min(active_cols.len());
        let k_capped = (k_used < k0).then_some(k_used);
        let b = b_full.rows(0, k_used).into_owned();

        let pvalues: Vec<T> = active
            .par_iter()
            .map(|&g| -> Result<T> {
                let group_cols = &gm.groups[g];
                let keep_cols: Vec<usize> = active_cols
                    .iter()
                    .copied()
                    .filter(|c| !group_cols.contains(c))
                    .collect();
                // reduced predictors: X_cols * B_cols^T, an n x K matrix
                let x_keep = if keep_cols.is_empty() {
                    DMatrix::zeros(n, 0)
                } else {
                    submatrix_columns(x, &keep_cols) * submatrix_columns(&b, &keep_cols).transpose()
                };
                let z_group =
                    submatrix_columns(x, group_cols) * submatrix_columns(&b, group_cols).transpose();
                Ok(group_test(y, &x_keep, &z_group, &cfg.test)?.p_value)
            })
            .collect::<Result<Vec<T>>>()?;

        let cutoff_k = by_cutoff(&pvalues, alpha);

        if cutoff_k == d {
            iterations.push(IterationRecord {
                active_groups: active.clone(),
                pvalues,
                cutoff_k,
                eliminated_group: None,
                k_capped,
            });
            break;
        }

        if cfg.stop_when_empty && pvalues.iter().all(|pv| *pv > alpha) {
            iterations.push(IterationRecord {
                active_groups: active.clone(),
                pvalues,
                cutoff_k,
                eliminated_group: None,
                k_capped,
            });
            active.clear();
            break;
        }

        // eliminate the largest p-value; ties go to the lowest group index
        let mut worst = 0;
        for i in 1..d {
            if pvalues[i] > pvalues[worst] {
                worst = i;
            }
        }
        let eliminated = active[worst];
        iterations.push(IterationRecord {
            active_groups: active.clone(),
            pvalues,
            cutoff_k,
            eliminated_group: Some(eliminated),
            k_capped,
        });
        active.remove(worst);

        if cfg.refit_sir && !active.is_empty() {
            let cols: Vec<usize> = active
                .iter()
                .flat_map(|&g| gm.groups[g].iter().copied())
                .collect();
            let k_new = k0.min(cols.len());
            let sub = submatrix_columns(x, &cols);
            let refit = sir(&sub, y, n_slices, k_new)?;
            b_full = DMatrix::zeros(k0, d_total);
            for (c, &j) in cols.iter().enumerate() {
                for row in 0..k_new {
                    b_full[(row, j)] = refit.b_matrix[(row, c)];
                }
            }
        }
    }

    Ok(SelectionTrace {
        iterations,
        retained: active,
        alpha,
        config: cfg.clone(),
    })
}
