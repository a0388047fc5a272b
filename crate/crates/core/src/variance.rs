//! Exact design-based variances of the balance statistics under complete
//! randomization of `n1` of `N` units, and an exhaustive enumeration oracle
//! that checks them.
//!
//! For covariates `X_j, X_k` with population (`1/N`) covariance `σ_jk`,
//!
//! ```text
//! Cov(δ_j, δ_k) = σ_jk · N² / ((N − 1) · n1 · n0)
//! ```
//!
//! and every linear combination `w'δ` has variance `w' Cov(δ) w`.

use serde::{Deserialize, Serialize};

use crate::balance::Scale;
use crate::data::{self, Dataset, GroupSizes};
use crate::error::{BalanceError, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::{compensated_sum, CompensatedSum, Scalar};
use crate::special::erfc;
pub use crate::special::standard_normal_cdf;

/// Upper bound on the number of assignments the oracle will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

fn design_factor<T: Scalar>(n1: usize, n0: usize) -> Result<T> {
    let g = GroupSizes::new(n1, n0)?;
    if g.n < 2 {
        return Err(BalanceError::DegenerateAssignment { n1, n0 });
    }
    let n = T::count(g.n);
    Ok(n * n / (T::count(g.n - 1) * T::count(n1) * T::count(n0)))
}

fn check_len<T>(col: &[T], n1: usize, n0: usize) -> Result<()> {
    if col.len() != n1 + n0 {
        return Err(BalanceError::ShapeMismatch(format!(
            "column has {} entries but n1 + n0 = {}",
            col.len(),
            n1 + n0
        )));
    }
    Ok(())
}

/// `Var(δ_j) = N² σ²_j / ((N − 1) n0 n1)`.
pub fn exact_variance_delta_j<T: Scalar>(x_j: &[T], n1: usize, n0: usize) -> Result<T> {
    let f = design_factor::<T>(n1, n0)?;
    check_len(x_j, n1, n0)?;
    Ok(f * data::population_variance(x_j))
}

/// `Cov(δ_j, δ_k) = σ_jk N² / ((N − 1) n1 n0)`.
pub fn exact_cov_delta<T: Scalar>(x_j: &[T], x_k: &[T], n1: usize, n0: usize) -> Result<T> {
    let f = design_factor::<T>(n1, n0)?;
    check_len(x_j, n1, n0)?;
    check_len(x_k, n1, n0)?;
    Ok(f * data::population_covariance(x_j, x_k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport<T> {
    pub var_delta_j: Vec<T>,
    pub cov_delta: Matrix<T>,
    pub var_delta_uw: T,
    pub var_delta_rw_conditional: T,
    /// Finite-population covariance of the covariates on the report scale.
    pub population_cov: Matrix<T>,
    pub scale: Scale,
}

/// Exact variances for the dataset's own assignment sizes, on the
/// standardized scale.
pub fn variance_report<T: Scalar>(d: &Dataset<T>, weights: &[T]) -> Result<VarianceReport<T>> {
    variance_report_scaled(d, weights, Scale::Standardized)
}

/// [`variance_report`] on either scale. On the standardized scale constant
/// covariates contribute zero rows and columns.
pub fn variance_report_scaled<T: Scalar>(
    d: &Dataset<T>,
    weights: &[T],
    scale: Scale,
) -> Result<VarianceReport<T>> {
    let p = d.p();
    if weights.len() != p {
        return Err(BalanceError::WeightDimensionMismatch {
            expected: p,
            found: weights.len(),
        });
    }
    let g = d.group_sizes();
    let factor = design_factor::<T>(g.n1, g.n0)?;
    let columns: Vec<Vec<T>> = match scale {
        Scale::Raw => d.x().columns(),
        Scale::Standardized => {
            let view = data::standardize(d)?;
            let mut cols = vec![vec![T::zero(); d.n()]; p];
            for (k, &j) in view.retained_columns.iter().enumerate() {
                cols[j] = view.x_std.column(k);
            }
            cols
        }
    };
    let mut population_cov = Matrix::zeros(p, p);
    for j in 0..p {
        for k in 0..=j {
            let c = data::population_covariance(&columns[j], &columns[k]);
            population_cov[(j, k)] = c;
            population_cov[(k, j)] = c;
        }
    }
    let cov_delta = Matrix::from_fn(p, p, |j, k| factor * population_cov[(j, k)]);
    let var_delta_j = (0..p).map(|j| cov_delta[(j, j)]).collect();
    let ones = vec![T::one(); p];
    Ok(VarianceReport {
        var_delta_j,
        var_delta_uw: cov_delta.quadratic_form(&ones).max(T::zero()),
        var_delta_rw_conditional: cov_delta.quadratic_form(weights).max(T::zero()),
        cov_delta,
        population_cov,
        scale,
    })
}

/// Statistic evaluated by the enumeration oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleStatistic<T> {
    /// Sum of covariate differences.
    Unweighted,
    /// `w'δ` for fixed weights.
    Weighted(Vec<T>),
    /// A single covariate difference.
    Single(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult<T> {
    pub mean: T,
    /// Variance over all equally likely assignments (divide by the count).
    pub variance: T,
    /// Statistic value for every assignment, in revolving-door order.
    pub values: Vec<T>,
}

/// `C(n, k)` with saturation at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Visits every `k`-subset of `0..n` in revolving-door order (each step
/// swaps exactly one element out and one in).
///
/// `visit` receives the current subset (unsorted) and, after the first call,
/// the `(removed, added)` pair that produced it.
pub fn revolving_door(n: usize, k: usize, mut visit: impl FnMut(&[usize], Option<(usize, usize)>)) {
    if k == 0 || k > n {
        if k == 0 {
            visit(&[], None);
        }
        return;
    }
    if k == n {
        visit(&(0..n).collect::<Vec<_>>(), None);
        return;
    }
    if k == 1 {
        visit(&[0], None);
        for i in 1..n {
            visit(&[i], Some((i - 1, i)));
        }
        return;
    }
    // c[1..=k] holds the combination, c[k+1] = n sentinel
    let mut c: Vec<usize> = (0..=k + 1).map(|j| j.saturating_sub(1)).collect();
    c[k + 1] = n;
    let mut change = None;
    loop {
        visit(&c[1..=k], change);
        // easy case on c1
        if k % 2 == 1 {
            if c[1] + 1 < c[2] {
                change = Some((c[1], c[1] + 1));
                c[1] += 1;
                continue;
            }
        } else if c[1] > 0 {
            change = Some((c[1], c[1] - 1));
            c[1] -= 1;
            continue;
        }
        let mut j = 2;
        let mut try_decrease = k % 2 == 1;
        loop {
            if try_decrease {
                // here c[j] = c[j-1] + 1
                if c[j] >= j {
                    change = Some((c[j], j - 2));
                    c[j] = c[j - 1];
                    c[j - 1] = j - 2;
                    break;
                }
                j += 1;
            } else {
                // here c[j-1] = j - 2
                if c[j] + 1 < c[j + 1] {
                    change = Some((j - 2, c[j] + 1));
                    c[j - 1] = c[j];
                    c[j] += 1;
                    break;
                }
                j += 1;
            }
            if j > k {
                return;
            }
            try_decrease = !try_decrease;
        }
    }
}

/// Exact randomization distribution of a balance statistic over every
/// assignment of `n1` treated units among the rows of `x`.
///
/// Treated column sums are updated incrementally with compensated
/// arithmetic, so each assignment costs `O(p)`.
pub fn enumeration_oracle<T: Scalar>(
    x: &Matrix<T>,
    n1: usize,
    statistic: &OracleStatistic<T>,
) -> Result<EnumerationResult<T>> {
    let (n, p) = (x.nrows(), x.ncols());
    let g = GroupSizes::new(n1, n.saturating_sub(n1))?;
    let count = binomial(n, n1);
    if count > ENUMERATION_LIMIT {
        return Err(BalanceError::TooManyAssignments {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let weights: Vec<T> = match statistic {
        OracleStatistic::Unweighted => vec![T::one(); p],
        OracleStatistic::Weighted(w) => {
            if w.len() != p {
                return Err(BalanceError::WeightDimensionMismatch {
                    expected: p,
                    found: w.len(),
                });
            }
            w.clone()
        }
        OracleStatistic::Single(j) => {
            if *j >= p {
                return Err(BalanceError::InvalidArgument(format!("covariate {j} out of range")));
            }
            (0..p).map(|k| if k == *j { T::one() } else { T::zero() }).collect()
        }
    };
    let totals: Vec<T> = (0..p).map(|j| compensated_sum(x.column(j))).collect();
    let (fn1, fn0) = (T::count(g.n1), T::count(g.n0));
    let mut treated: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); p];
    let mut values = Vec::with_capacity(count as usize);

    revolving_door(n, n1, |subset, change| {
        match change {
            None => {
                for acc in treated.iter_mut() {
                    *acc = CompensatedSum::new();
                }
                for &i in subset {
                    for (acc, &v) in treated.iter_mut().zip(x.row(i)) {
                        acc.add(v);
                    }
                }
            }
            Some((out, inn)) => {
                for ((acc, &vo), &vi) in treated.iter_mut().zip(x.row(out)).zip(x.row(inn)) {
                    acc.add(-vo);
                    acc.add(vi);
                }
            }
        }
        let delta: Vec<T> = treated
            .iter()
            .zip(&totals)
            .map(|(acc, &tot)| {
                let st = acc.value();
                st / fn1 - (tot - st) / fn0
            })
            .collect();
        values.push(dot(&delta, &weights));
    });

    let k = T::count(values.len());
    let mean = compensated_sum(values.iter().copied()) / k;
    let variance = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean))) / k;
    Ok(EnumerationResult { mean, variance, values })
}

/// Two-sided asymptotic p-value `2(1 − Φ(|δ|/√Var))`.
pub fn normal_approx_test<T: Scalar>(statistic: T, exact_variance: T) -> Result<f64> {
    let var = exact_variance.as_f64();
    if !(var > 0.0) {
        return Err(BalanceError::ZeroVariance);
    }
    let z = statistic.as_f64().abs() / var.sqrt();
    // 2(1 − Φ(z)) = erfc(z/√2), computed without cancellation
    Ok(erfc(z / std::f64::consts::SQRT_2).min(1.0))
}
