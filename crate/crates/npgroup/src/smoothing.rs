//! Multivariate local polynomial regression.
//!
//! Fits a degree-`q` polynomial at every design point by kernel-weighted
//! least squares with a product kernel and a diagonal bandwidth matrix,
//! returning fitted values and residuals of the null model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::{fl, fu, Float};

/// Kernel family for the product kernel. Both choices have bounded support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Product Epanechnikov, `k(u) = 0.75 (1 - u^2)` on `|u| <= 1`.
    Epanechnikov,
    /// Standard normal density truncated at `+-support_radius`.
    GaussianTruncated,
}

/// A product kernel with its support radius in bandwidth-standardized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    pub support_radius: T,
}

impl<T: Float> Default for KernelSpec<T> {
    fn default() -> Self {
        Self::epanechnikov()
    }
}

impl<T: Float> KernelSpec<T> {
    pub fn epanechnikov() -> Self {
        KernelSpec {
            family: KernelFamily::Epanechnikov,
            support_radius: T::one(),
        }
    }

    /// Gaussian kernel cut off at four bandwidths so the support stays bounded.
    pub fn gaussian_truncated() -> Self {
        KernelSpec {
            family: KernelFamily::GaussianTruncated,
            support_radius: fl(4.0),
        }
    }

    /// Univariate kernel value at `u` (already standardized by the bandwidth).
    pub fn eval1(&self, u: T) -> T {
        if u.abs() > self.support_radius {
            return T::zero();
        }
        match self.family {
            KernelFamily::Epanechnikov => {
                let s = u / self.support_radius;
                fl::<T>(0.75) * (T::one() - s * s) / self.support_radius
            }
            KernelFamily::GaussianTruncated => {
                fl::<T>(1.0 / (2.0 * std::f64::consts::PI).sqrt())
                    * (-u * u / fl::<T>(2.0)).exp()
            }
        }
    }

    /// Product kernel weight for the displacement `diff` under bandwidths
    /// `lambdas`: `prod_c k(diff_c / lambda_c) / lambda_c`.
    pub fn weight(&self, diff: &[T], lambdas: &[T]) -> T {
        let mut w = T::one();
        for (d, l) in diff.iter().zip(lambdas) {
            w *= self.eval1(*d / *l) / *l;
            if w == T::zero() {
                return w;
            }
        }
        w
    }
}

/// Diagonal bandwidth: one positive entry per covariate coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth<T> {
    pub lambdas: Vec<T>,
}

impl<T: Float> Bandwidth<T> {
    pub fn new(lambdas: Vec<T>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidConfig {
                reason: "bandwidth entries must be strictly positive and finite".into(),
            });
        }
        Ok(Bandwidth { lambdas })
    }
}

/// Result of a local polynomial fit at all design points.
#[derive(Debug, Clone)]
pub struct LocalPolyFit<T> {
    pub order_q: usize,
    pub fitted: Vec<T>,
    pub residuals: Vec<T>,
    /// Number of design-matrix columns, `gamma_dim(r, q)`.
    pub effective_columns: usize,
}

/// Number of r-variate monomials of total degree at most q.
pub fn gamma_dim(r: usize, q: usize) -> usize {
    assert!(r >= 1, "gamma_dim requires r >= 1");
    multi_indices(r, q).len()
}

/// Multi-indices `(k_1, ..., k_r)` with `k_1 + ... + k_r <= q`, ordered by
/// (total degree, lexicographic with the first coordinate's exponent
/// descending). This fixed ordering makes serialized fits byte-stable.
pub(crate) fn multi_indices(r: usize, q: usize) -> Vec<Vec<usize>> {
    fn compositions(r: usize, total: usize, out: &mut Vec<Vec<usize>>, prefix: &mut Vec<usize>) {
        if r == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=total).rev() {
            prefix.push(k);
            compositions(r - 1, total - k, out, prefix);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 0..=q {
        compositions(r, degree, &mut out, &mut Vec::new());
    }
    out
}

/// One row of the local design matrix: the monomials of `x_j - x0` up to
/// total degree `q`, in the ordering of [`multi_indices`].
pub fn design_row<T: Float>(x_j: &[T], x0: &[T], q: usize) -> Vec<T> {
    assert_eq!(x_j.len(), x0.len(), "dimension mismatch");
    let r = x_j.len();
    let diff: Vec<T> = x_j.iter().zip(x0).map(|(a, b)| *a - *b).collect();
    multi_indices(r, q)
        .iter()
        .map(|mi| {
            let mut v = T::one();
            for (c, &k) in mi.iter().enumerate() {
                v *= diff[c].powi(k as i32);
            }
            v
        })
        .collect()
}

fn fill_design_row<T: Float>(diff: &[T], indices: &[Vec<usize>], out: &mut [T]) {
    for (slot, mi) in out.iter_mut().zip(indices) {
        let mut v = T::one();
        for (c, &k) in mi.iter().enumerate() {
            v *= diff[c].powi(k as i32);
        }
        *slot = v;
    }
}

const MAX_CONDITION: f64 = 1e12;
const RIDGE_SCALE: f64 = 1e-8;

/// Solve the symmetric system `g beta = b`, applying a single ridge fallback
/// when the condition number exceeds 1e12. `None` means unrecoverably
/// singular.
fn solve_normal_equations<T: Float>(mut g: DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    let gamma = g.nrows();
    for attempt in 0..2 {
        let eig = g.clone().symmetric_eigen();
        let mut lo = T::max_value().unwrap();
        let mut hi = T::zero();
        for &ev in eig.eigenvalues.iter() {
            if !ev.is_finite() {
                return None;
            }
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
        if lo > T::zero() && hi / lo <= fl(MAX_CONDITION) {
            // beta = V diag(1/lambda) V^T b
            let vt_b = eig.eigenvectors.transpose() * b;
            let scaled =
                DVector::from_iterator(gamma, vt_b.iter().zip(eig.eigenvalues.iter()).map(|(v, l)| *v / *l));
            return Some(&eig.eigenvectors * scaled);
        }
        if attempt == 0 {
            let ridge = fl::<T>(RIDGE_SCALE) * g.trace() / fu(gamma);
            for i in 0..gamma {
                g[(i, i)] += ridge;
            }
        }
    }
    None
}

/// Local polynomial regression of order `q` of `y` on the rows of `x`.
///
/// At each design point `x_i` the fitted value is the intercept of the
/// kernel-weighted least squares polynomial; residuals are `y_i - fitted_i`.
pub fn local_poly_fit<T: Float>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    kernel: &KernelSpec<T>,
    h: &Bandwidth<T>,
    q: usize,
) -> Result<LocalPolyFit<T>> {
    let n = x.nrows();
    let r = x.ncols();
    if r == 0 {
        return Err(Error::InvalidConfig {
            reason: "local fit needs at least one covariate column".into(),
        });
    }
    if h.lambdas.len() != r {
        return Err(Error::InvalidConfig {
            reason: format!("bandwidth has {} entries for {} covariates", h.lambdas.len(), r),
        });
    }
    let gamma = gamma_dim(r, q);
    if n <= gamma {
        return Err(Error::TooFewObservations { got: n, needed: gamma + 1 });
    }
    let indices = multi_indices(r, q);

    let rows: Vec<Vec<T>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut fitted = vec![T::zero(); n];
    let mut residuals = vec![T::zero(); n];
    let mut diff = vec![T::zero(); r];
    let mut drow = vec![T::zero(); gamma];

    for i in 0..n {
        let mut g = DMatrix::<T>::zeros(gamma, gamma);
        let mut b = DVector::<T>::zeros(gamma);
        for j in 0..n {
            for c in 0..r {
                diff[c] = rows[j][c] - rows[i][c];
            }
            let w = kernel.weight(&diff, &h.lambdas);
            if w == T::zero() {
                continue;
            }
            fill_design_row(&diff, &indices, &mut drow);
            for a in 0..gamma {
                let wa = w * drow[a];
                b[a] += wa * y[j];
                for bb in a..gamma {
                    g[(a, bb)] += wa * drow[bb];
                }
            }
        }
        // mirror the upper triangle
        for a in 0..gamma {
            for bb in (a + 1)..gamma {
                g[(bb, a)] = g[(a, bb)];
            }
        }
        let beta = solve_normal_equations(g, &b).ok_or(Error::SingularFit { point_index: i })?;
        fitted[i] = beta[0];
        residuals[i] = y[i] - beta[0];
    }

    Ok(LocalPolyFit {
        order_q: q,
        fitted,
        residuals,
        effective_columns: gamma,
    })
}

/// Rate-respecting rule-of-thumb bandwidth: `lambda_i = sd(X_i) * n^{-a}`.
///
/// The exponent must satisfy `n lambda^{4(q+1)} -> 0` and
/// `n lambda^{2r} / (log n)^2 -> infinity`, i.e. lie strictly inside
/// `(1/(4(q+1)), 1/(2r))`. We use `a = 1/4` when that value is admissible and
/// the interval midpoint otherwise.
pub fn default_bandwidth<T: Float>(x: &DMatrix<T>, q: usize) -> Result<Bandwidth<T>> {
    let n = x.nrows();
    let r = x.ncols();
    if n < 10 {
        return Err(Error::TooFewObservations { got: n, needed: 10 });
    }
    let lo = 1.0 / (4.0 * (q as f64 + 1.0));
    let hi = 1.0 / (2.0 * r as f64);
    if lo >= hi {
        return Err(Error::InfeasibleRates { r, q });
    }
    let a = if lo < 0.25 && 0.25 < hi { 0.25 } else { 0.5 * (lo + hi) };
    let scale: T = fl((n as f64).powf(-a));
    let lambdas = (0..r)
        .map(|c| {
            let col = x.column(c);
            let mean = col.sum() / fu(n);
            let var = col.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / fu(n - 1);
            let sd = var.sqrt();
            // a constant column carries no local information; fall back to
            // unit scale so the fit degrades to ignoring that coordinate
            let sd = if sd > T::zero() { sd } else { T::one() };
            sd * scale
        })
        .collect();
    Bandwidth::new(lambdas)
}
