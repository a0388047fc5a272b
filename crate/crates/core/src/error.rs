use thiserror::Error;

/// Errors raised by the balance-testing core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BalanceError {
    #[error("column '{0}' not found in input header")]
    MissingColumn(String),

    #[error("treatment column '{column}' is not binary: row {row} has value '{value}'")]
    NonBinaryTreatment { column: String, row: usize, value: String },

    #[error("row {row}, column '{column}': value '{value}' is not numeric")]
    NonNumericValue { row: usize, column: String, value: String },

    #[error("row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },

    #[error("row {row}, column '{column}': value is not finite")]
    NonFiniteValue { row: usize, column: String },

    #[error("input is not rectangular: row {row} has {found} fields, header has {expected}")]
    Ragged { row: usize, expected: usize, found: usize },

    #[error("too few rows: need at least 4 units, found {0}")]
    TooFewRows(usize),

    #[error("degenerate assignment: n1 = {n1}, n0 = {n0}; both arms need at least one unit")]
    DegenerateAssignment { n1: usize, n0: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("all covariate columns are constant; no usable covariates remain")]
    AllColumnsConstant,

    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("insufficient rows for least squares: {rows} rows, need more than {required}")]
    InsufficientRows { rows: usize, required: usize },

    #[error("control arm too small for regression weights: n0 = {n0}, need more than {required}")]
    ControlArmTooSmall { n0: usize, required: usize },

    #[error("treatment arm too small for regression weights: n1 = {n1}, need more than {required}")]
    TreatmentArmTooSmall { n1: usize, required: usize },

    #[error("weight vector has length {found}, dataset has {expected} covariates")]
    WeightDimensionMismatch { expected: usize, found: usize },

    #[error("weights were not fit on this dataset's {arm} arm")]
    WeightArmMismatch { arm: String },

    #[error("pooled covariance matrix is singular")]
    SingularCovariance,

    #[error("enumeration needs {count} assignments, limit is {limit}")]
    TooManyAssignments { count: u128, limit: u128 },

    #[error("variance is zero; normal approximation undefined")]
    ZeroVariance,

    #[error("infeasible correlation structure: {0}")]
    InfeasibleCorrelation(String),

    #[error("numerical identity violated: {0}")]
    IdentityViolation(String),

    #[error("{failed} of {total} replicates failed (limit is under 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input parse error: {0}")]
    Parse(String),
}

impl BalanceError {
    /// True when the error reflects a numerical breakdown rather than a
    /// violated input precondition.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BalanceError::IdentityViolation(_) | BalanceError::TooManyFailures { .. }
        )
    }
}

pub type Result<T, E = BalanceError> = std::result::Result<T, E>;
