//! Ordinary least squares for projecting outcomes onto covariates.
//!
//! Arm regressions supply the prognosis weights used by the
//! regression-weighted balance statistic; [`residualize`] exposes the
//! partialling-out step behind each multiple-regression coefficient.

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{BalanceError, Result};
use crate::linalg::{least_squares, norm, Matrix};
use crate::scalar::Scalar;

/// Which units a regression was fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Control,
    Treatment,
    FullPopulation,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
            Arm::FullPopulation => "full-population",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit<T> {
    /// Slope coefficients, one per covariate of the input design.
    pub coefficients: Vec<T>,
    pub intercept: Option<T>,
    /// Slopes rescaled to unit-variance outcome and covariates.
    pub standardized_coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub fitted: Vec<T>,
    pub r_squared: T,
    pub n_used: usize,
    pub arm: Arm,
    /// Population-constant covariates excluded from the fit (coefficient 0).
    pub dropped_columns: Vec<usize>,
    /// Standard deviation of the outcome over the fitting sample (`1/n`).
    pub outcome_sd: T,
}

/// Least-squares fit of `y` on the columns of `x`.
///
/// Standardized coefficients use the fitting sample's own moments. When the
/// outcome is constant they are reported as zero.
pub fn fit_ols<T: Scalar>(x: &Matrix<T>, y: &[T], include_intercept: bool) -> Result<RegressionFit<T>> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(BalanceError::ShapeMismatch(format!(
            "y has {} entries, x has {n} rows",
            y.len()
        )));
    }
    let k = p + usize::from(include_intercept);
    if n <= k {
        return Err(BalanceError::InsufficientRows { rows: n, required: k });
    }
    let design = if include_intercept {
        Matrix::from_fn(n, k, |i, j| if j == 0 { T::one() } else { x[(i, j - 1)] })
    } else {
        x.clone()
    };
    let beta = least_squares(&design, y).map_err(|e| match e {
        // report indices in terms of the caller's columns
        BalanceError::RankDeficient { columns } if include_intercept => BalanceError::RankDeficient {
            columns: columns.into_iter().map(|c| c.saturating_sub(1)).collect(),
        },
        other => other,
    })?;
    let fitted = design.mul_vec(&beta);
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&a, &b)| a - b).collect();
    let (intercept, coefficients) = if include_intercept {
        (Some(beta[0]), beta[1..].to_vec())
    } else {
        (None, beta)
    };

    let sse: T = residuals.iter().map(|&e| e * e).sum();
    let sst: T = if include_intercept {
        let m = data::mean(y);
        y.iter().map(|&v| (v - m) * (v - m)).sum()
    } else {
        y.iter().map(|&v| v * v).sum()
    };
    let r_squared = if sst > T::zero() {
        (T::one() - sse / sst).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };

    let outcome_sd = data::population_variance(y).sqrt();
    let x_sds: Vec<T> = (0..p).map(|j| data::population_variance(&x.column(j)).sqrt()).collect();
    let standardized_coefficients = standardize_coefficients(&coefficients, &x_sds, outcome_sd);

    Ok(RegressionFit {
        coefficients,
        intercept,
        standardized_coefficients,
        residuals,
        fitted,
        r_squared,
        n_used: n,
        arm: Arm::FullPopulation,
        dropped_columns: Vec::new(),
        outcome_sd,
    })
}

fn standardize_coefficients<T: Scalar>(beta: &[T], x_sds: &[T], y_sd: T) -> Vec<T> {
    if y_sd == T::zero() {
        return vec![T::zero(); beta.len()];
    }
    beta.iter().zip(x_sds).map(|(&b, &s)| b * s / y_sd).collect()
}

/// Prognosis weights: `y_obs` regressed on the covariates within the control
/// arm, with an intercept.
///
/// Covariates that are constant over the whole population get weight zero.
/// Standardized weights use the control arm's outcome SD and the full
/// population's covariate SDs.
pub fn control_arm_weights<T: Scalar>(d: &Dataset<T>) -> Result<RegressionFit<T>> {
    arm_weights(d, Arm::Control)
}

/// Treatment-arm analogue of [`control_arm_weights`] (prognosis for `Y(1)`).
pub fn treatment_arm_weights<T: Scalar>(d: &Dataset<T>) -> Result<RegressionFit<T>> {
    arm_weights(d, Arm::Treatment)
}

pub fn arm_weights<T: Scalar>(d: &Dataset<T>, arm: Arm) -> Result<RegressionFit<T>> {
    let rows = match arm {
        Arm::Control => d.control_indices(),
        Arm::Treatment => d.treated_indices(),
        Arm::FullPopulation => (0..d.n()).collect(),
    };
    let sds = d.column_sds();
    let means = d.column_means();
    let retained: Vec<usize> = (0..d.p())
        .filter(|&j| !data::is_constant(&d.x().column(j), sds[j], means[j]))
        .collect();
    fit_on_rows(d, &rows, &retained, &sds, arm)
}

/// Arm fit restricted to `rows`, using covariates `retained` (others get
/// weight zero) and population SDs `pop_sds` for standardization.
pub(crate) fn fit_on_rows<T: Scalar>(
    d: &Dataset<T>,
    rows: &[usize],
    retained: &[usize],
    pop_sds: &[T],
    arm: Arm,
) -> Result<RegressionFit<T>> {
    let required = retained.len() + 1;
    if rows.len() <= required {
        return Err(match arm {
            Arm::Treatment => BalanceError::TreatmentArmTooSmall {
                n1: rows.len(),
                required,
            },
            _ => BalanceError::ControlArmTooSmall {
                n0: rows.len(),
                required,
            },
        });
    }
    let x = d.x().select_rows(rows).select_columns(retained);
    let y: Vec<T> = rows.iter().map(|&i| d.y_obs()[i]).collect();
    let mut fit = fit_ols(&x, &y, true).map_err(|e| match e {
        BalanceError::RankDeficient { columns } => BalanceError::RankDeficient {
            columns: columns.into_iter().map(|c| retained[c]).collect(),
        },
        other => other,
    })?;

    let p = d.p();
    let mut coefficients = vec![T::zero(); p];
    for (k, &j) in retained.iter().enumerate() {
        coefficients[j] = fit.coefficients[k];
    }
    fit.standardized_coefficients = standardize_coefficients(&coefficients, pop_sds, fit.outcome_sd);
    fit.coefficients = coefficients;
    fit.dropped_columns = (0..p).filter(|j| !retained.contains(j)).collect();
    fit.arm = arm;
    Ok(fit)
}

/// Residual of column `j` after regressing it on the other columns and an
/// intercept.
///
/// Fails with `RankDeficient` when column `j` itself lies in the span of the
/// others (its residual vanishes), naming `j`.
pub fn residualize<T: Scalar>(x: &Matrix<T>, j: usize) -> Result<Vec<T>> {
    if j >= x.ncols() {
        return Err(BalanceError::InvalidArgument(format!(
            "column {j} out of range for {} columns",
            x.ncols()
        )));
    }
    let target = x.column(j);
    let others: Vec<usize> = (0..x.ncols()).filter(|&k| k != j).collect();
    let centered: Vec<T> = {
        let m = data::mean(&target);
        target.iter().map(|&v| v - m).collect()
    };
    let residual = if others.is_empty() {
        centered.clone()
    } else {
        let fit = fit_ols(&x.select_columns(&others), &target, true).map_err(|e| match e {
            BalanceError::RankDeficient { columns } => BalanceError::RankDeficient {
                columns: columns.into_iter().map(|c| others[c]).collect(),
            },
            other => other,
        })?;
        fit.residuals
    };
    let scale = norm(&centered);
    if scale == T::zero() || norm(&residual) <= T::rank_tolerance() * scale {
        return Err(BalanceError::RankDeficient { columns: vec![j] });
    }
    Ok(residual)
}

/// Bivariate slope `Cov(y, r) / Var(r)` of `y` on a residualized regressor.
pub fn bivariate_slope<T: Scalar>(y: &[T], residualized: &[T]) -> T {
    data::population_covariance(y, residualized) / data::population_variance(residualized)
}

#[cfg(test)]
mod tests {
    use super::*;
    type Matrix = crate::linalg::Matrix<f64>;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn exact_fit_without_intercept() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, -1.0, 4.0, 0.5]]).unwrap();
        let y = x.column(0);
        let fit = fit_ols(&x, &y, false).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn recovers_known_coefficients_with_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_design(&mut rng, 40, 2);
        let y: Vec<f64> = (0..40).map(|i| 3.0 * x[(i, 0)] - 2.0 * x[(i, 1)] + 5.0).collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-8);
        assert!((fit.coefficients[1] + 2.0).abs() < 1e-8);
        assert!((fit.intercept.unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn noise_outcome_has_small_r_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_design(&mut rng, 10_000, 3);
        let y: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        assert!(fit.r_squared < 0.01, "r2 = {}", fit.r_squared);
        assert!(fit.coefficients.iter().all(|b| b.abs() < 0.05));
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_design(&mut rng, 200, 4);
        let y: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-8 * 200.0 * scale;
        assert!(fit.residuals.iter().sum::<f64>().abs() < tol);
        for j in 0..4 {
            let c = x.column(j);
            let ex: f64 = c.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            assert!(ex.abs() < tol);
        }
    }

    #[test]
    fn rank_deficiency_reports_column() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0, 4.0, 6.0], vec![2.0, 4.0, 6.0, 8.0, 12.0]]).unwrap();
        let err = fit_ols(&x, &[1.0, 0.0, 2.0, 1.0, 3.0], true).unwrap_err();
        assert_eq!(err, BalanceError::RankDeficient { columns: vec![1] });
        let err = fit_ols(&x, &[1.0, 0.0], true).unwrap_err();
        assert!(matches!(err, BalanceError::ShapeMismatch(_)));
        let small = Matrix::from_columns(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        assert!(matches!(
            fit_ols(&small, &[1.0, 2.0], true),
            Err(BalanceError::InsufficientRows { .. })
        ));
    }

    fn dataset(x: Matrix, z: Vec<u8>, y: Vec<f64>) -> Dataset<f64> {
        Dataset::from_parts(x, z, y).unwrap()
    }

    #[test]
    fn control_weights_collapse_onto_prognostic_covariate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60;
        let x = random_design(&mut rng, n, 3);
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if z[i] == 0 {
                    x[(i, 0)]
                } else {
                    rng.sample(StandardNormal)
                }
            })
            .collect();
        let fit = control_arm_weights(&dataset(x, z, y)).unwrap();
        assert_eq!(fit.arm, Arm::Control);
        assert_eq!(fit.n_used, 30);
        for (j, b) in fit.coefficients.iter().enumerate() {
            let target = if j == 0 { 1.0 } else { 0.0 };
            assert!((b - target).abs() < 1e-10);
        }
    }

    #[test]
    fn control_weights_noise_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 8000;
        let x = random_design(&mut rng, n, 3);
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let fit = control_arm_weights(&dataset(x, z, y)).unwrap();
        // sd of each weight ≈ 1/sqrt(4000) ≈ 0.016
        assert!(fit.standardized_coefficients.iter().all(|b| b.abs() < 0.07));
    }

    #[test]
    fn control_arm_too_small() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, 0.1, 0.9, 0.3, 0.2, 0.7]])
            .unwrap();
        // n0 = p = 2
        let d = dataset(x, vec![1, 1, 1, 1, 0, 0], vec![1.0; 6]);
        assert!(matches!(
            control_arm_weights(&d),
            Err(BalanceError::ControlArmTooSmall { n0: 2, .. })
        ));
    }

    #[test]
    fn constant_covariate_gets_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 30;
        let x = Matrix::from_fn(n, 2, |_, j| if j == 1 { 4.0 } else { rng.sample(StandardNormal) });
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y = x.column(0).iter().map(|v| 2.0 * v).collect();
        let fit = control_arm_weights(&dataset(x, z, y)).unwrap();
        assert_eq!(fit.dropped_columns, vec![1]);
        assert_eq!(fit.coefficients[1], 0.0);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn treatment_arm_weights_use_treated_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 40;
        let x = random_design(&mut rng, n, 2);
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n).map(|i| if z[i] == 1 { -x[(i, 1)] } else { 0.0 }).collect();
        let fit = treatment_arm_weights(&dataset(x, z, y)).unwrap();
        assert_eq!(fit.arm, Arm::Treatment);
        assert!((fit.coefficients[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn residualize_single_column_is_centered() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0, 6.0]]).unwrap();
        assert_eq!(residualize(&x, 0).unwrap(), vec![-2.0, -1.0, 0.0, 3.0]);
    }

    #[test]
    fn residualize_duplicate_column_is_rank_deficient() {
        let c = vec![1.0, 3.0, 2.0, 5.0, 4.0];
        let x = Matrix::from_columns(&[c.clone(), vec![0.0, 1.0, 0.0, 1.0, 1.0], c]).unwrap();
        assert!(matches!(residualize(&x, 0), Err(BalanceError::RankDeficient { .. })));
    }

    #[test]
    fn residualize_orthogonal_design_returns_centered_column() {
        // centered, mutually orthogonal columns
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let c = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let x = Matrix::from_columns(&[a.clone(), b, c]).unwrap();
        let r = residualize(&x, 0).unwrap();
        for (ri, ai) in r.iter().zip(&a) {
            assert!((ri - ai).abs() < 1e-10);
        }
    }

    #[test]
    fn standardized_coefficients_rescale_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = Matrix::from_fn(100, 2, |_, j| rng.sample::<f64, _>(StandardNormal) * (j as f64 + 1.5));
        let y: Vec<f64> = (0..100)
            .map(|i| 0.7 * x[(i, 0)] + 0.2 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        let sy = data::population_variance(&y).sqrt();
        for j in 0..2 {
            let sx = data::population_variance(&x.column(j)).sqrt();
            let expect = fit.coefficients[j] * sx / sy;
            assert!((fit.standardized_coefficients[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn row_order_does_not_change_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_design(&mut rng, 50, 3);
        let y: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        let order: Vec<usize> = (0..50).rev().collect();
        let xr = x.select_rows(&order);
        let yr: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let fit_r = fit_ols(&xr, &yr, true).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&fit_r.coefficients) {
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn works_in_single_precision() {
        let x = crate::linalg::Matrix::<f32>::from_columns(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap();
        let y: Vec<f32> = x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-4);
    }
}
