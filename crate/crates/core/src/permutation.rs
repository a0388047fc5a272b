//! Randomization inference: re-draw the treatment labels, recompute the
//! balance statistics, and report two-sided permutation p-values.
//!
//! Replicate `b` draws its assignment from stream `b` of the run seed, so a
//! result depends only on `(dataset, seed, B)` and never on the number of
//! worker threads. All requested statistics share the same permuted
//! assignments.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{scaled_weights, to_scale, Scale};
use crate::data::{self, Dataset};
use crate::error::{BalanceError, Result};
use crate::linalg::{cholesky, cholesky_solve, dot, symmetric_pinv, Matrix};
use crate::regression::{control_arm_weights, fit_on_rows, Arm};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    /// Unweighted sum of covariate differences.
    Uw,
    /// Regression-weighted sum of covariate differences.
    Rw,
    /// Two-sample Hotelling T².
    Hotelling,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 3] = [StatisticKind::Uw, StatisticKind::Rw, StatisticKind::Hotelling];

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Uw => "uw",
            StatisticKind::Rw => "rw",
            StatisticKind::Hotelling => "hotelling",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = BalanceError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uw" => Ok(StatisticKind::Uw),
            "rw" => Ok(StatisticKind::Rw),
            "hotelling" | "t2" => Ok(StatisticKind::Hotelling),
            other => Err(BalanceError::InvalidArgument(format!("unknown statistic '{other}'"))),
        }
    }
}

/// How regression weights are treated under permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightPolicy {
    /// Weights from the observed assignment, held fixed.
    #[default]
    Fixed,
    /// Weights refit on each permuted control arm.
    #[serde(alias = "refit")]
    RefitPerPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub permutations: usize,
    pub seed: u64,
    pub weight_policy: WeightPolicy,
    pub scale: Scale,
}

impl PermutationConfig {
    pub fn new(permutations: usize, seed: u64) -> Self {
        Self {
            permutations,
            seed,
            weight_policy: WeightPolicy::Fixed,
            scale: Scale::Standardized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult<T> {
    pub statistic: StatisticKind,
    pub observed: T,
    pub b: usize,
    /// One value per replicate; failed replicates are stored as `+∞`.
    pub permuted_values: Vec<T>,
    /// Fraction of replicates with `|δ*| ≥ |δ_obs|`.
    pub p_value: f64,
    /// `(1 + count) / (B + 1)`; never zero.
    pub p_conservative: f64,
    pub exceed_count: usize,
    pub failures: usize,
    pub seed: u64,
    pub weight_policy: WeightPolicy,
}

impl<T: Scalar> PermutationResult<T> {
    fn from_values(
        statistic: StatisticKind,
        observed: T,
        permuted_values: Vec<T>,
        failures: usize,
        cfg: &PermutationConfig,
    ) -> Self {
        let b = permuted_values.len();
        let exceed_count = count_extreme(observed, &permuted_values);
        Self {
            statistic,
            observed,
            b,
            permuted_values,
            p_value: exceed_count as f64 / b as f64,
            p_conservative: (exceed_count + 1) as f64 / (b + 1) as f64,
            exceed_count,
            failures,
            seed: cfg.seed,
            weight_policy: cfg.weight_policy,
        }
    }

    /// Recomputes the p-value from the stored replicate values.
    pub fn recompute_p_value(&self) -> f64 {
        count_extreme(self.observed, &self.permuted_values) as f64 / self.permuted_values.len() as f64
    }
}

fn count_extreme<T: Scalar>(observed: T, values: &[T]) -> usize {
    let threshold = observed.abs();
    values.iter().filter(|v| v.abs() >= threshold).count()
}

/// Uniformly random rearrangement of `z` (Fisher–Yates).
pub fn permute_assignment<R: Rng + ?Sized>(z: &[u8], rng: &mut R) -> Vec<u8> {
    let mut out = z.to_vec();
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

/// Sorted treated indices for replicate `index` of `seed`: a partial
/// Fisher–Yates draw of `n1` of `n` units.
pub fn permuted_treated_set(n: usize, n1: usize, seed: u64, index: u64, scratch: &mut Vec<usize>) -> Vec<usize> {
    let mut rng = rng::stream(seed, index);
    scratch.clear();
    scratch.extend(0..n);
    for i in 0..n1 {
        let j = rng.random_range(i..n);
        scratch.swap(i, j);
    }
    let mut treated = scratch[..n1].to_vec();
    treated.sort_unstable();
    treated
}

enum RwMode<T> {
    Fixed(Vec<T>),
    Refit { retained: Vec<usize>, pop_sds: Vec<T> },
}

struct HotellingKernel<T> {
    keep: Vec<usize>,
    total_scatter_inv: Matrix<T>,
}

/// Recomputes statistics from a treated index set in `O(n1·p)` (plus a
/// regression for refit weights).
struct Kernel<'a, T> {
    d: &'a Dataset<T>,
    n1: usize,
    n0: usize,
    totals: Vec<T>,
    sds: Vec<T>,
    scale: Scale,
    rw: Option<RwMode<T>>,
    hotelling: Option<HotellingKernel<T>>,
}

impl<'a, T: Scalar> Kernel<'a, T> {
    fn new(
        d: &'a Dataset<T>,
        stats: &[StatisticKind],
        cfg: &PermutationConfig,
        fixed_weights: Option<Vec<T>>,
    ) -> Result<Self> {
        let g = d.group_sizes();
        let means = d.column_means();
        let sds: Vec<T> = d
            .column_sds()
            .into_iter()
            .enumerate()
            .map(|(j, s)| {
                if data::is_constant(&d.x().column(j), s, means[j]) {
                    T::zero()
                } else {
                    s
                }
            })
            .collect();
        let totals: Vec<T> = (0..d.p()).map(|j| d.x().column(j).into_iter().sum()).collect();

        let rw = if stats.contains(&StatisticKind::Rw) {
            Some(match (fixed_weights, cfg.weight_policy) {
                (Some(w), _) => {
                    if w.len() != d.p() {
                        return Err(BalanceError::WeightDimensionMismatch {
                            expected: d.p(),
                            found: w.len(),
                        });
                    }
                    RwMode::Fixed(w)
                }
                (None, WeightPolicy::Fixed) => RwMode::Fixed(scaled_weights(&control_arm_weights(d)?, cfg.scale)),
                (None, WeightPolicy::RefitPerPermutation) => RwMode::Refit {
                    retained: (0..d.p()).filter(|&j| sds[j] > T::zero()).collect(),
                    pop_sds: d.column_sds(),
                },
            })
        } else {
            None
        };

        let hotelling = if stats.contains(&StatisticKind::Hotelling) {
            let keep: Vec<usize> = (0..d.p()).filter(|&j| sds[j] > T::zero()).collect();
            let q = keep.len();
            let mut scatter = Matrix::zeros(q, q);
            for i in 0..d.n() {
                let dev: Vec<T> = keep.iter().map(|&j| d.x()[(i, j)] - means[j]).collect();
                for a in 0..q {
                    for b in 0..q {
                        scatter[(a, b)] = scatter[(a, b)] + dev[a] * dev[b];
                    }
                }
            }
            let inv = match cholesky(&scatter) {
                Some(l) => {
                    let mut inv = Matrix::zeros(q, q);
                    for k in 0..q {
                        let e: Vec<T> = (0..q).map(|i| if i == k { T::one() } else { T::zero() }).collect();
                        for (i, v) in cholesky_solve(&l, &e).into_iter().enumerate() {
                            inv[(i, k)] = v;
                        }
                    }
                    inv
                }
                None => symmetric_pinv(&scatter),
            };
            Some(HotellingKernel {
                keep,
                total_scatter_inv: inv,
            })
        } else {
            None
        };

        Ok(Self {
            d,
            n1: g.n1,
            n0: g.n0,
            totals,
            sds,
            scale: cfg.scale,
            rw,
            hotelling,
        })
    }

    fn raw_differences(&self, treated: &[usize]) -> Vec<T> {
        let mut sums = vec![T::zero(); self.d.p()];
        for &i in treated {
            for (acc, &v) in sums.iter_mut().zip(self.d.x().row(i)) {
                *acc = *acc + v;
            }
        }
        let (n1, n0) = (T::count(self.n1), T::count(self.n0));
        sums.iter()
            .zip(&self.totals)
            .map(|(&s, &tot)| s / n1 - (tot - s) / n0)
            .collect()
    }

    fn evaluate(&self, treated: &[usize], stat: StatisticKind, raw: &[T]) -> Result<T> {
        let scaled = || {
            let mut v = to_scale(raw, &self.sds, self.scale);
            for (x, s) in v.iter_mut().zip(&self.sds) {
                if *s == T::zero() {
                    *x = T::zero();
                }
            }
            v
        };
        match stat {
            StatisticKind::Uw => Ok(scaled().into_iter().sum()),
            StatisticKind::Rw => match self.rw.as_ref().expect("rw kernel prepared") {
                RwMode::Fixed(w) => Ok(dot(&scaled(), w)),
                RwMode::Refit { retained, pop_sds } => {
                    let control = complement(self.d.n(), treated);
                    let fit = fit_on_rows(self.d, &control, retained, pop_sds, Arm::Control)?;
                    Ok(dot(&scaled(), &scaled_weights(&fit, self.scale)))
                }
            },
            StatisticKind::Hotelling => {
                let h = self.hotelling.as_ref().expect("hotelling kernel prepared");
                if h.keep.is_empty() {
                    return Ok(T::zero());
                }
                let diff: Vec<T> = h.keep.iter().map(|&j| raw[j]).collect();
                let a = h.total_scatter_inv.quadratic_form(&diff);
                let n = T::count(self.n1 + self.n0);
                let c = T::count(self.n1) * T::count(self.n0) / n;
                let denom = T::one() - c * a;
                if denom <= T::epsilon() {
                    return Ok(T::infinity());
                }
                Ok((c * (n - T::lit(2.0)) * a / denom).max(T::zero()))
            }
        }
    }
}

fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - sorted.len());
    let mut it = sorted.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Permutation test of a single statistic.
pub fn permutation_test<T: Scalar>(
    d: &Dataset<T>,
    statistic: StatisticKind,
    cfg: &PermutationConfig,
) -> Result<PermutationResult<T>> {
    Ok(permutation_tests(d, &[statistic], cfg)?.remove(0))
}

/// Permutation tests of several statistics over one shared set of
/// permuted assignments. Results follow the order of `statistics`.
pub fn permutation_tests<T: Scalar>(
    d: &Dataset<T>,
    statistics: &[StatisticKind],
    cfg: &PermutationConfig,
) -> Result<Vec<PermutationResult<T>>> {
    run(d, statistics, cfg, None)
}

/// Regression-weighted permutation test with caller-supplied fixed weights
/// (on the scale named in `cfg`).
pub fn permutation_test_with_weights<T: Scalar>(
    d: &Dataset<T>,
    weights: &[T],
    cfg: &PermutationConfig,
) -> Result<PermutationResult<T>> {
    let cfg = PermutationConfig {
        weight_policy: WeightPolicy::Fixed,
        ..*cfg
    };
    Ok(run(d, &[StatisticKind::Rw], &cfg, Some(weights.to_vec()))?.remove(0))
}

fn run<T: Scalar>(
    d: &Dataset<T>,
    statistics: &[StatisticKind],
    cfg: &PermutationConfig,
    fixed_weights: Option<Vec<T>>,
) -> Result<Vec<PermutationResult<T>>> {
    if cfg.permutations == 0 {
        return Err(BalanceError::InvalidArgument("need at least one permutation".into()));
    }
    if statistics.is_empty() {
        return Err(BalanceError::InvalidArgument("no statistic requested".into()));
    }
    let kernel = Kernel::new(d, statistics, cfg, fixed_weights)?;
    let observed_set = d.treated_indices();
    let observed_raw = kernel.raw_differences(&observed_set);
    let observed = statistics
        .iter()
        .map(|&s| kernel.evaluate(&observed_set, s, &observed_raw))
        .collect::<Result<Vec<_>>>()?;

    let (n, n1) = (d.n(), kernel.n1);
    let draws: Vec<Vec<Option<T>>> = (0..cfg.permutations)
        .into_par_iter()
        .map_init(Vec::new, |scratch, b| {
            let treated = permuted_treated_set(n, n1, cfg.seed, b as u64, scratch);
            let raw = kernel.raw_differences(&treated);
            statistics
                .iter()
                .map(|&s| kernel.evaluate(&treated, s, &raw).ok())
                .collect()
        })
        .collect();

    Ok(statistics
        .iter()
        .enumerate()
        .map(|(k, &stat)| {
            let mut failures = 0;
            let values = draws
                .iter()
                .map(|row| {
                    row[k].unwrap_or_else(|| {
                        failures += 1;
                        T::infinity()
                    })
                })
                .collect();
            PermutationResult::from_values(stat, observed[k], values, failures, cfg)
        })
        .collect())
}
