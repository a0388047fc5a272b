//! Conditional balance tests for as-if-random treatment assignment.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! simulation engine and command-line tool use.
//!
//! ```
//! use balance_lab::{balance_report, permutation_test, Dataset, Matrix, PermutationConfig, Scale, StatisticKind};
//!
//! let x = Matrix::from_columns(&[vec![0.2, 1.1, -0.4, 0.9, 0.3, -1.2, 0.5, 0.0]]).unwrap();
//! let z = vec![1, 1, 1, 1, 0, 0, 0, 0];
//! let y = vec![1.0, 2.1, 0.2, 1.8, 0.9, -0.7, 1.2, 0.4];
//! let d = Dataset::from_parts(x, z, y).unwrap();
//!
//! let report = balance_report(&d, Scale::Standardized).unwrap();
//! let test = permutation_test(&d, StatisticKind::Rw, &PermutationConfig::new(200, 7)).unwrap();
//! assert!((0.0..=1.0).contains(&test.p_value));
//! assert!((report.delta_rw - test.observed).abs() < 1e-12);
//! ```

pub mod balance;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod permutation;
pub mod regression;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod special;
pub mod variance;

pub use balance::{
    balance_report, covariate_differences, delta_regression_weighted, delta_unweighted, hotelling_t2, Scale,
};
pub use data::{load_dataset, standardize, GroupSizes, LoadOptions};
pub use diagnostics::diagnostics;
pub use error::{BalanceError, Result};
pub use permutation::{permutation_test, permutation_tests, PermutationConfig, StatisticKind, WeightPolicy};
pub use regression::{control_arm_weights, fit_ols, residualize, treatment_arm_weights, Arm};
pub use scalar::Scalar;
pub use simulation::{
    generate_dataset, run_power_study, DgpConfig, GridCell, PowerStudyResult, StudyGrid, StudyOptions,
};
pub use variance::{
    enumeration_oracle, exact_cov_delta, exact_variance_delta_j, normal_approx_test, variance_report,
    OracleStatistic,
};

pub type Matrix = linalg::Matrix<f64>;
pub type Dataset = data::Dataset<f64>;
pub type StandardizedView = data::StandardizedView<f64>;
pub type LoadedData = data::LoadedData<f64>;
pub type RegressionFit = regression::RegressionFit<f64>;
pub type BalanceReport = balance::BalanceReport<f64>;
pub type HotellingT2 = balance::HotellingT2<f64>;
pub type VarianceReport = variance::VarianceReport<f64>;
pub type EnumerationResult = variance::EnumerationResult<f64>;
pub type PermutationResult = permutation::PermutationResult<f64>;
pub type Diagnostics = diagnostics::Diagnostics<f64>;

/// Single-precision dataset, for memory-bound permutation runs.
pub type Dataset32 = data::Dataset<f32>;
