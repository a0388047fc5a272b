//! Finite-population data model: covariates, binary assignment and observed
//! outcomes for `N` fully enumerated units.
//!
//! All population moments use the `1/N` convention.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{BalanceError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Treated and control counts; fixed by design, not random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub n1: usize,
    pub n0: usize,
    pub n: usize,
}

impl GroupSizes {
    pub fn new(n1: usize, n0: usize) -> Result<Self> {
        if n1 == 0 || n0 == 0 {
            return Err(BalanceError::DegenerateAssignment { n1, n0 });
        }
        Ok(Self { n1, n0, n: n1 + n0 })
    }
}

/// A validated finite population with binary treatment assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    x: Matrix<T>,
    z: Vec<u8>,
    y_obs: Vec<T>,
    column_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Matrix<T>, z: Vec<u8>, y_obs: Vec<T>, column_names: Vec<String>) -> Result<Self> {
        let n = x.nrows();
        if n < 4 {
            return Err(BalanceError::TooFewRows(n));
        }
        if x.ncols() == 0 {
            return Err(BalanceError::ShapeMismatch("need at least one covariate".into()));
        }
        if z.len() != n || y_obs.len() != n {
            return Err(BalanceError::ShapeMismatch(format!(
                "x has {n} rows, z has {}, y_obs has {}",
                z.len(),
                y_obs.len()
            )));
        }
        if column_names.len() != x.ncols() {
            return Err(BalanceError::ShapeMismatch(format!(
                "{} column names for {} covariates",
                column_names.len(),
                x.ncols()
            )));
        }
        if let Some(row) = z.iter().position(|&v| v > 1) {
            return Err(BalanceError::NonBinaryTreatment {
                column: "z".into(),
                row: row + 1,
                value: z[row].to_string(),
            });
        }
        for i in 0..n {
            if let Some(j) = x.row(i).iter().position(|v| !v.is_finite()) {
                return Err(BalanceError::NonFiniteValue {
                    row: i + 1,
                    column: column_names[j].clone(),
                });
            }
            if !y_obs[i].is_finite() {
                return Err(BalanceError::NonFiniteValue {
                    row: i + 1,
                    column: "y_obs".into(),
                });
            }
        }
        let n1 = z.iter().filter(|&&v| v == 1).count();
        GroupSizes::new(n1, n - n1)?;
        Ok(Self {
            x,
            z,
            y_obs,
            column_names,
        })
    }

    /// Builds a dataset with generated column names `x1..xp`.
    pub fn from_parts(x: Matrix<T>, z: Vec<u8>, y_obs: Vec<T>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, z, y_obs, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn y_obs(&self) -> &[T] {
        &self.y_obs
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn group_sizes(&self) -> GroupSizes {
        let n1 = self.z.iter().filter(|&&v| v == 1).count();
        GroupSizes {
            n1,
            n0: self.n() - n1,
            n: self.n(),
        }
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        arm_indices(&self.z, 1)
    }

    pub fn control_indices(&self) -> Vec<usize> {
        arm_indices(&self.z, 0)
    }

    /// Same units and covariates under a different assignment vector.
    pub fn with_assignment(&self, z: Vec<u8>) -> Result<Self> {
        Self::new(self.x.clone(), z, self.y_obs.clone(), self.column_names.clone())
    }

    /// Same units with one extra covariate column appended.
    pub fn with_covariate(&self, name: &str, column: &[T]) -> Result<Self> {
        let mut names = self.column_names.clone();
        names.push(name.to_string());
        Self::new(self.x.with_column(column)?, self.z.clone(), self.y_obs.clone(), names)
    }

    /// Population (`1/N`) means of every covariate.
    pub fn column_means(&self) -> Vec<T> {
        (0..self.p()).map(|j| mean(&self.x.column(j))).collect()
    }

    /// Population (`1/N`) standard deviations of every covariate.
    pub fn column_sds(&self) -> Vec<T> {
        (0..self.p())
            .map(|j| population_variance(&self.x.column(j)).sqrt())
            .collect()
    }
}

fn arm_indices(z: &[u8], level: u8) -> Vec<usize> {
    z.iter()
        .enumerate()
        .filter_map(|(i, &v)| (v == level).then_some(i))
        .collect()
}

pub fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::count(v.len())
}

/// `(1/N) Σ (v_i − v̄)²`
pub fn population_variance<T: Scalar>(v: &[T]) -> T {
    population_covariance(v, v)
}

/// `(1/N) Σ (u_i − ū)(v_i − v̄)`
pub fn population_covariance<T: Scalar>(u: &[T], v: &[T]) -> T {
    let mu = mean(u);
    let mv = mean(v);
    u.iter().zip(v).map(|(&a, &b)| (a - mu) * (b - mv)).sum::<T>() / T::count(u.len())
}

/// Pearson correlation, or zero when either input is constant.
pub fn correlation<T: Scalar>(u: &[T], v: &[T]) -> T {
    let su = population_variance(u).sqrt();
    let sv = population_variance(v).sqrt();
    if su == T::zero() || sv == T::zero() {
        return T::zero();
    }
    population_covariance(u, v) / (su * sv)
}

/// Covariates centered and scaled by their population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedView<T> {
    /// Retained columns only.
    pub x_std: Matrix<T>,
    pub means: Vec<T>,
    /// Zero for constant columns.
    pub sds: Vec<T>,
    pub dropped_constant_columns: Vec<usize>,
    /// Original indices of the columns of `x_std`.
    pub retained_columns: Vec<usize>,
}

pub fn standardize<T: Scalar>(d: &Dataset<T>) -> Result<StandardizedView<T>> {
    standardize_matrix(d.x())
}

/// Column standardization of an arbitrary matrix (same rules as
/// [`standardize`]).
pub fn standardize_matrix<T: Scalar>(x: &Matrix<T>) -> Result<StandardizedView<T>> {
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut cols = Vec::new();
    for j in 0..x.ncols() {
        let c = x.column(j);
        let m = mean(&c);
        let sd = population_variance(&c).sqrt();
        means.push(m);
        if is_constant(&c, sd, m) {
            sds.push(T::zero());
            dropped.push(j);
        } else {
            sds.push(sd);
            retained.push(j);
            cols.push(c.iter().map(|&v| (v - m) / sd).collect::<Vec<_>>());
        }
    }
    if retained.is_empty() {
        return Err(BalanceError::AllColumnsConstant);
    }
    Ok(StandardizedView {
        x_std: Matrix::from_columns(&cols)?,
        means,
        sds,
        dropped_constant_columns: dropped,
        retained_columns: retained,
    })
}

/// Population-constant test tolerant of rounding in the mean.
pub(crate) fn is_constant<T: Scalar>(c: &[T], sd: T, mean: T) -> bool {
    sd == T::zero()
        || sd <= T::epsilon() * T::lit(16.0) * mean.abs().max(T::min_positive_value())
        || c.iter().all(|&v| v == c[0])
}

/// Options for reading a delimiter-separated table into a [`Dataset`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub treatment_column: String,
    pub outcome_column: String,
    pub covariate_columns: Vec<String>,
    /// Additional numeric columns returned alongside the dataset.
    pub extra_columns: Vec<String>,
    pub delimiter: u8,
    /// Explicit treated label for two-level string treatments.
    pub treated_level: Option<String>,
    /// Drop rows with missing values instead of rejecting the input.
    pub lenient_missing: bool,
}

impl LoadOptions {
    pub fn new(treatment: &str, outcome: &str, covariates: &[&str]) -> Self {
        Self {
            treatment_column: treatment.to_string(),
            outcome_column: outcome.to_string(),
            covariate_columns: covariates.iter().map(|s| s.to_string()).collect(),
            extra_columns: Vec::new(),
            delimiter: b',',
            treated_level: None,
            lenient_missing: false,
        }
    }
}

/// Result of [`load_dataset`].
#[derive(Debug, Clone)]
pub struct LoadedData<T> {
    pub dataset: Dataset<T>,
    /// Values of `LoadOptions::extra_columns`, in request order.
    pub extras: Vec<(String, Vec<T>)>,
    /// Rows skipped for missing values (lenient mode only).
    pub dropped_rows: usize,
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("n/a")
}

/// Reads a header-first delimited table and validates it into a [`Dataset`].
pub fn load_dataset<T: Scalar, R: Read>(source: R, opts: &LoadOptions) -> Result<LoadedData<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| BalanceError::Parse(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BalanceError::MissingColumn(name.to_string()))
    };
    if opts.covariate_columns.is_empty() {
        return Err(BalanceError::InvalidArgument("no covariate columns selected".into()));
    }
    let t_idx = find(&opts.treatment_column)?;
    let y_idx = find(&opts.outcome_column)?;
    let x_idx = opts
        .covariate_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let e_idx = opts.extra_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut raw_t: Vec<(usize, String)> = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut extras: Vec<Vec<T>> = vec![Vec::new(); e_idx.len()];
    let mut dropped = 0;

    let parse = |row: usize, col: usize, s: &str| -> Result<T> {
        let v: f64 = s.trim().parse().map_err(|_| BalanceError::NonNumericValue {
            row,
            column: header[col].clone(),
            value: s.to_string(),
        })?;
        if !v.is_finite() {
            return Err(BalanceError::NonFiniteValue {
                row,
                column: header[col].clone(),
            });
        }
        Ok(T::lit(v))
    };

    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| BalanceError::Parse(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(BalanceError::Ragged {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let selected = std::iter::once(t_idx)
            .chain(std::iter::once(y_idx))
            .chain(x_idx.iter().copied())
            .chain(e_idx.iter().copied());
        if let Some(col) = selected.clone().find(|&c| is_missing(&rec[c])) {
            if opts.lenient_missing {
                dropped += 1;
                continue;
            }
            return Err(BalanceError::MissingValue {
                row,
                column: header[col].clone(),
            });
        }
        raw_t.push((row, rec[t_idx].trim().to_string()));
        y.push(parse(row, y_idx, &rec[y_idx])?);
        x.push(
            x_idx
                .iter()
                .map(|&c| parse(row, c, &rec[c]))
                .collect::<Result<Vec<_>>>()?,
        );
        for (slot, &c) in extras.iter_mut().zip(&e_idx) {
            slot.push(parse(row, c, &rec[c])?);
        }
    }

    if y.len() < 4 {
        return Err(BalanceError::TooFewRows(y.len()));
    }
    let z = map_treatment(&raw_t, &opts.treatment_column, opts.treated_level.as_deref())?;
    let dataset = Dataset::new(Matrix::from_rows(&x)?, z, y, opts.covariate_columns.clone())?;
    Ok(LoadedData {
        dataset,
        extras: opts.extra_columns.iter().cloned().zip(extras).collect(),
        dropped_rows: dropped,
    })
}

fn map_treatment(values: &[(usize, String)], column: &str, treated: Option<&str>) -> Result<Vec<u8>> {
    let non_binary = |row: usize, value: &str| BalanceError::NonBinaryTreatment {
        column: column.to_string(),
        row,
        value: value.to_string(),
    };
    if let Some(level) = treated {
        let mut distinct = BTreeSet::new();
        let mut out = Vec::with_capacity(values.len());
        for (row, v) in values {
            distinct.insert(v.as_str());
            if distinct.len() > 2 {
                return Err(non_binary(*row, v));
            }
            out.push(u8::from(v == level));
        }
        return Ok(out);
    }
    values
        .iter()
        .map(|(row, v)| {
            let lower = v.to_ascii_lowercase();
            match lower.as_str() {
                "true" => Ok(1),
                "false" => Ok(0),
                _ => match v.parse::<f64>() {
                    Ok(f) if f == 1.0 => Ok(1),
                    Ok(f) if f == 0.0 => Ok(0),
                    _ => Err(non_binary(*row, v)),
                },
            }
        })
        .collect()
}
