//! Prognosis / imbalance diagnostics.
//!
//! Prognosis is the R² of the outcome on all covariates in the control arm;
//! imbalance is the R² of the assignment indicator on all covariates over
//! the whole population (a linear probability fit). Together they place a
//! study on a prognosis-versus-imbalance plot.

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{BalanceError, Result};
use crate::regression::{arm_weights, fit_ols, Arm};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaggedCorrelation<T> {
    pub control: T,
    pub full: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    pub prognosis_r2: T,
    pub imbalance_r2: T,
    pub lagged_correlation: Option<LaggedCorrelation<T>>,
}

/// Computes both R² diagnostics and, when `lag` is given, the correlation
/// of that column with the observed outcome (control arm and full data).
pub fn diagnostics<T: Scalar>(d: &Dataset<T>, lag: Option<&[T]>) -> Result<Diagnostics<T>> {
    let prognosis_r2 = arm_weights(d, Arm::Control)?.r_squared;

    let view = data::standardize(d)?;
    let z: Vec<T> = d
        .z()
        .iter()
        .map(|&v| if v == 1 { T::one() } else { T::zero() })
        .collect();
    let x = d.x().select_columns(&view.retained_columns);
    let imbalance_r2 = fit_ols(&x, &z, true)?.r_squared;

    let lagged_correlation = match lag {
        None => None,
        Some(l) => {
            if l.len() != d.n() {
                return Err(BalanceError::ShapeMismatch(format!(
                    "lag column has {} entries, dataset has {}",
                    l.len(),
                    d.n()
                )));
            }
            let rows = d.control_indices();
            let lc: Vec<T> = rows.iter().map(|&i| l[i]).collect();
            let yc: Vec<T> = rows.iter().map(|&i| d.y_obs()[i]).collect();
            Some(LaggedCorrelation {
                control: data::correlation(&lc, &yc),
                full: data::correlation(l, d.y_obs()),
            })
        }
    };
    Ok(Diagnostics {
        prognosis_r2,
        imbalance_r2,
        lagged_correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    type Matrix = crate::linalg::Matrix<f64>;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn outcome_equal_to_covariate_is_fully_prognostic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let x = Matrix::from_fn(n, 2, |_, _| rng.sample(StandardNormal));
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y = x.column(0);
        let d = Dataset::from_parts(x, z, y.clone()).unwrap();
        let diag = diagnostics(&d, Some(&y)).unwrap();
        assert!((diag.prognosis_r2 - 1.0).abs() < 1e-12);
        let lag = diag.lagged_correlation.unwrap();
        assert!((lag.full - 1.0).abs() < 1e-12);
        assert!((lag.control - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_assignment_has_small_imbalance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let x = Matrix::from_fn(n, 3, |_, _| rng.sample(StandardNormal));
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let y = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let d = Dataset::from_parts(x, z, y).unwrap();
        let diag = diagnostics(&d, None).unwrap();
        assert!(diag.imbalance_r2 < 0.01);
        assert!(diag.lagged_correlation.is_none());
    }

    #[test]
    fn assignment_driven_by_covariate_is_imbalanced() {
        let n = 200;
        let x = Matrix::from_fn(n, 1, |i, _| i as f64);
        let z: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        let d = Dataset::from_parts(x, z, vec![0.0; n]).unwrap();
        assert!(diagnostics(&d, None).unwrap().imbalance_r2 > 0.7);
    }
}
