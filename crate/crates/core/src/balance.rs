//! Covariate mean differences and the omnibus balance statistics: the
//! unweighted sum, the regression-weighted sum and two-sample Hotelling T².

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{BalanceError, Result};
use crate::linalg::{cholesky, cholesky_solve, dot, symmetric_pinv, Matrix};
use crate::regression::{control_arm_weights, Arm, RegressionFit};
use crate::scalar::Scalar;

/// Scale on which covariate differences are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Covariates divided by their population standard deviation.
    #[default]
    Standardized,
    Raw,
}

/// Treated-minus-control means on the raw scale.
pub(crate) fn raw_mean_differences<T: Scalar>(d: &Dataset<T>) -> Result<Vec<T>> {
    let g = d.group_sizes();
    if g.n1 == 0 || g.n0 == 0 {
        return Err(BalanceError::DegenerateAssignment { n1: g.n1, n0: g.n0 });
    }
    let (n1, n0) = (T::count(g.n1), T::count(g.n0));
    let mut sum_t = vec![T::zero(); d.p()];
    let mut sum_c = vec![T::zero(); d.p()];
    for i in 0..d.n() {
        let target = if d.z()[i] == 1 { &mut sum_t } else { &mut sum_c };
        for (acc, &v) in target.iter_mut().zip(d.x().row(i)) {
            *acc = *acc + v;
        }
    }
    Ok(sum_t.iter().zip(&sum_c).map(|(&t, &c)| t / n1 - c / n0).collect())
}

/// Divides raw differences by population SDs; constant columns map to 0.
pub(crate) fn to_scale<T: Scalar>(raw: &[T], sds: &[T], scale: Scale) -> Vec<T> {
    match scale {
        Scale::Raw => raw.to_vec(),
        Scale::Standardized => raw
            .iter()
            .zip(sds)
            .map(|(&r, &s)| if s > T::zero() { r / s } else { T::zero() })
            .collect(),
    }
}

fn effective_sds<T: Scalar>(d: &Dataset<T>) -> Vec<T> {
    let means = d.column_means();
    d.column_sds()
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            if data::is_constant(&d.x().column(j), s, means[j]) {
                T::zero()
            } else {
                s
            }
        })
        .collect()
}

/// Per-covariate differences `X̄_j^T − X̄_j^C`.
pub fn covariate_differences<T: Scalar>(d: &Dataset<T>, scale: Scale) -> Result<Vec<T>> {
    let raw = raw_mean_differences(d)?;
    let sds = effective_sds(d);
    let mut out = to_scale(&raw, &sds, scale);
    // constant columns are exactly balanced
    for (v, s) in out.iter_mut().zip(&sds) {
        if *s == T::zero() {
            *v = T::zero();
        }
    }
    Ok(out)
}

/// Sum of standardized covariate differences.
pub fn delta_unweighted<T: Scalar>(d: &Dataset<T>) -> Result<T> {
    Ok(covariate_differences(d, Scale::Standardized)?.into_iter().sum())
}

/// Weighted sum `Σ w_j δ_j` for an arbitrary weight vector.
pub fn weighted_sum<T: Scalar>(delta: &[T], weights: &[T]) -> Result<T> {
    if delta.len() != weights.len() {
        return Err(BalanceError::WeightDimensionMismatch {
            expected: delta.len(),
            found: weights.len(),
        });
    }
    Ok(dot(delta, weights))
}

/// Both routes to the regression-weighted statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionWeightedDelta<T> {
    /// `Σ β̂_j δ_j`.
    pub weighted_sum: T,
    /// Fitted mean of the unobserved arm minus the observed mean of the
    /// fitted arm (sign aligned with treated-minus-control).
    pub fitted_mean_difference: T,
}

/// Weights for `δ_RW` on the requested scale: standardized coefficients on
/// the standardized scale, raw slopes otherwise.
pub fn scaled_weights<T: Scalar>(fit: &RegressionFit<T>, scale: Scale) -> Vec<T> {
    match scale {
        Scale::Raw => fit.coefficients.clone(),
        Scale::Standardized => fit.standardized_coefficients.clone(),
    }
}

/// Computes `δ_RW` both as a weighted sum of covariate differences and as a
/// difference of (fitted) arm means, without checking that they agree.
pub fn delta_rw_routes<T: Scalar>(
    d: &Dataset<T>,
    weights: &RegressionFit<T>,
    scale: Scale,
) -> Result<RegressionWeightedDelta<T>> {
    if weights.coefficients.len() != d.p() {
        return Err(BalanceError::WeightDimensionMismatch {
            expected: d.p(),
            found: weights.coefficients.len(),
        });
    }
    let (fit_rows, other_rows) = match weights.arm {
        Arm::Control => (d.control_indices(), d.treated_indices()),
        Arm::Treatment => (d.treated_indices(), d.control_indices()),
        Arm::FullPopulation => {
            return Err(BalanceError::WeightArmMismatch {
                arm: Arm::FullPopulation.label().into(),
            })
        }
    };
    if fit_rows.len() != weights.n_used {
        return Err(BalanceError::WeightArmMismatch {
            arm: weights.arm.label().into(),
        });
    }
    let sds = effective_sds(d);
    let delta = to_scale(&raw_mean_differences(d)?, &sds, scale);
    let w = scaled_weights(weights, scale);
    let weighted_sum = weighted_sum(&delta, &w)?;

    let intercept = weights.intercept.unwrap_or_else(T::zero);
    let fitted_other = data::mean(
        &other_rows
            .iter()
            .map(|&i| intercept + dot(d.x().row(i), &weights.coefficients))
            .collect::<Vec<_>>(),
    );
    let observed_fit = data::mean(&fit_rows.iter().map(|&i| d.y_obs()[i]).collect::<Vec<_>>());
    let mut diff = match weights.arm {
        Arm::Control => fitted_other - observed_fit,
        _ => observed_fit - fitted_other,
    };
    if scale == Scale::Standardized {
        diff = if weights.outcome_sd > T::zero() {
            diff / weights.outcome_sd
        } else {
            T::zero()
        };
    }
    Ok(RegressionWeightedDelta {
        weighted_sum,
        fitted_mean_difference: diff,
    })
}

/// Regression-weighted sum of standardized covariate differences, with the
/// weights fit on one arm of this same dataset.
///
/// The fitted-mean route is computed alongside and must agree to within
/// rounding; disagreement is reported as `IdentityViolation`.
pub fn delta_regression_weighted<T: Scalar>(d: &Dataset<T>, weights: &RegressionFit<T>) -> Result<T> {
    delta_regression_weighted_scaled(d, weights, Scale::Standardized)
}

pub fn delta_regression_weighted_scaled<T: Scalar>(
    d: &Dataset<T>,
    weights: &RegressionFit<T>,
    scale: Scale,
) -> Result<T> {
    let routes = delta_rw_routes(d, weights, scale)?;
    let gap = (routes.weighted_sum - routes.fitted_mean_difference).abs();
    let magnitude = T::one()
        .max(routes.weighted_sum.abs())
        .max(weights.intercept.unwrap_or_else(T::zero).abs());
    if gap > T::lit(1e-9).max(T::epsilon() * T::lit(1e6)) * magnitude {
        return Err(BalanceError::IdentityViolation(format!(
            "weighted sum {} vs fitted-mean difference {}",
            routes.weighted_sum, routes.fitted_mean_difference
        )));
    }
    Ok(routes.weighted_sum)
}

/// Hotelling statistic plus whether the pooled covariance had to be
/// pseudo-inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotellingT2<T> {
    pub value: T,
    pub pseudo_inverse: bool,
}

/// Two-sample Hotelling T² with the pooled, bias-corrected covariance:
/// `(n1 n0 / N) d' S⁻¹ d`.
///
/// Population-constant covariates are excluded (their difference is zero).
/// A singular pooled covariance falls back to its pseudo-inverse and sets
/// `pseudo_inverse`.
pub fn hotelling_t2<T: Scalar>(d: &Dataset<T>) -> Result<HotellingT2<T>> {
    let g = d.group_sizes();
    let sds = effective_sds(d);
    let keep: Vec<usize> = (0..d.p()).filter(|&j| sds[j] > T::zero()).collect();
    if keep.is_empty() {
        return Ok(HotellingT2 {
            value: T::zero(),
            pseudo_inverse: false,
        });
    }
    let q = keep.len();
    let treated = d.treated_indices();
    let control = d.control_indices();
    let arm_mean = |rows: &[usize]| -> Vec<T> {
        keep.iter()
            .map(|&j| data::mean(&rows.iter().map(|&i| d.x()[(i, j)]).collect::<Vec<_>>()))
            .collect()
    };
    let mean_t = arm_mean(&treated);
    let mean_c = arm_mean(&control);
    let mut scatter = Matrix::<T>::zeros(q, q);
    for (rows, m) in [(&treated, &mean_t), (&control, &mean_c)] {
        for &i in rows.iter() {
            let dev: Vec<T> = keep.iter().zip(m).map(|(&j, &mj)| d.x()[(i, j)] - mj).collect();
            for a in 0..q {
                for b in 0..q {
                    scatter[(a, b)] = scatter[(a, b)] + dev[a] * dev[b];
                }
            }
        }
    }
    let dof = T::count(g.n - 2);
    let pooled = Matrix::from_fn(q, q, |a, b| scatter[(a, b)] / dof);
    let diff: Vec<T> = mean_t.iter().zip(&mean_c).map(|(&a, &b)| a - b).collect();
    let (solved, pseudo_inverse) = match cholesky(&pooled) {
        Some(l) => (cholesky_solve(&l, &diff), false),
        None => (symmetric_pinv(&pooled).mul_vec(&diff), true),
    };
    let factor = T::count(g.n1) * T::count(g.n0) / T::count(g.n);
    Ok(HotellingT2 {
        value: (factor * dot(&diff, &solved)).max(T::zero()),
        pseudo_inverse,
    })
}

/// All balance statistics for one dataset and assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport<T> {
    pub delta: Vec<T>,
    pub delta_uw: T,
    pub delta_rw: T,
    /// Fitted-mean route to `delta_rw`, kept for audit.
    pub delta_rw_fitted_mean: T,
    pub hotelling_t2: T,
    pub hotelling_pseudo_inverse: bool,
    pub weights_used: RegressionFit<T>,
    pub scale: Scale,
}

/// Computes every balance statistic with control-arm prognosis weights.
pub fn balance_report<T: Scalar>(d: &Dataset<T>, scale: Scale) -> Result<BalanceReport<T>> {
    let weights = control_arm_weights(d)?;
    balance_report_with(d, weights, scale)
}

/// [`balance_report`] with caller-supplied arm weights.
pub fn balance_report_with<T: Scalar>(
    d: &Dataset<T>,
    weights: RegressionFit<T>,
    scale: Scale,
) -> Result<BalanceReport<T>> {
    let delta = covariate_differences(d, scale)?;
    let delta_uw = delta.iter().copied().sum();
    let delta_rw = delta_regression_weighted_scaled(d, &weights, scale)?;
    let routes = delta_rw_routes(d, &weights, scale)?;
    let h = hotelling_t2(d)?;
    Ok(BalanceReport {
        delta,
        delta_uw,
        delta_rw,
        delta_rw_fitted_mean: routes.fitted_mean_difference,
        hotelling_t2: h.value,
        hotelling_pseudo_inverse: h.pseudo_inverse,
        weights_used: weights,
        scale,
    })
}
