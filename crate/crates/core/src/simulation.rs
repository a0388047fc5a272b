//! Monte Carlo power and specificity study for the balance tests.
//!
//! Each dataset has a fixed balanced assignment `z` (first `n/2` units
//! treated). With `z̃ = ±1` the standardized assignment and independent
//! standard normal noise,
//!
//! ```text
//! X_j  = ρ(X_j, Z) · z̃ + √(1 − ρ(X_j, Z)²) · ε_j
//! Y(0) = ρ(X_1, Y) · X_1 + √(1 − ρ(X_1, Y)²) · ε_y
//! Y    = Y(0) + τ · z
//! ```
//!
//! so every covariate and `Y(0)` have unit variance and the expected
//! correlations equal the configured targets.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::Scale;
use crate::data::{self, Dataset};
use crate::error::{BalanceError, Result};
use crate::linalg::Matrix;
use crate::permutation::{permutation_tests, PermutationConfig, StatisticKind, WeightPolicy};
use crate::rng;

const DATA_STREAM_TAG: u64 = 0xDA7A;
const PERMUTATION_TAG: u64 = 0x9E53;

/// Data-generating process for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub rho_x1_z: f64,
    pub rho_x2_z: f64,
    pub rho_x1_y: f64,
    pub tau: f64,
    pub seed: u64,
}

impl DgpConfig {
    /// 500 units, three covariates, no imbalance or prognosis.
    pub fn null(seed: u64) -> Self {
        Self {
            n: 500,
            p: 3,
            rho_x1_z: 0.0,
            rho_x2_z: 0.0,
            rho_x1_y: 0.0,
            tau: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [
            ("corr(X1, Z)", self.rho_x1_z),
            ("corr(X2, Z)", self.rho_x2_z),
            ("corr(X1, Y)", self.rho_x1_y),
        ] {
            if !rho.is_finite() || rho.abs() > 1.0 {
                return Err(BalanceError::InfeasibleCorrelation(format!(
                    "{name} = {rho} is outside [-1, 1]"
                )));
            }
        }
        if self.rho_x2_z != 0.0 && self.p < 2 {
            return Err(BalanceError::InfeasibleCorrelation(
                "imbalance on X2 needs at least two covariates".into(),
            ));
        }
        if self.p == 0 {
            return Err(BalanceError::InvalidArgument("need at least one covariate".into()));
        }
        if self.n < 4 || !self.n.is_multiple_of(2) {
            return Err(BalanceError::InvalidArgument(format!(
                "n = {} must be even and at least 4",
                self.n
            )));
        }
        if !self.tau.is_finite() {
            return Err(BalanceError::InvalidArgument("tau must be finite".into()));
        }
        Ok(())
    }

    fn imbalance(&self, j: usize) -> f64 {
        match j {
            0 => self.rho_x1_z,
            1 => self.rho_x2_z,
            _ => 0.0,
        }
    }
}

/// Draws replicate `replicate_index` of the configured process.
pub fn generate_dataset(cfg: &DgpConfig, replicate_index: u64) -> Result<Dataset<f64>> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = rng::stream(rng::derive_seed(cfg.seed, DATA_STREAM_TAG), replicate_index);
    let z: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    let loadings: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            let r = cfg.imbalance(j);
            (r, (1.0 - r * r).sqrt())
        })
        .collect();
    let (ry, sy) = (cfg.rho_x1_y, (1.0 - cfg.rho_x1_y * cfg.rho_x1_y).sqrt());

    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for &zi in &z {
        let zt = if zi == 1 { 1.0 } else { -1.0 };
        let row_start = x.len();
        for &(r, s) in &loadings {
            let e: f64 = rng.sample(StandardNormal);
            x.push(r * zt + s * e);
        }
        let ey: f64 = rng.sample(StandardNormal);
        let y0 = ry * x[row_start] + sy * ey;
        y.push(y0 + cfg.tau * f64::from(zi));
    }
    Dataset::from_parts(Matrix::from_row_major(n, p, x)?, z, y)
}

/// Location of a cell on the study grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Zero-based index of the imbalanced covariate.
    pub imbalanced_covariate: usize,
    pub imbalance: f64,
    pub prognosis: f64,
}

/// Grid axes for a power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub master_seed: u64,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub imbalance_levels: Vec<f64>,
    pub prognosis_levels: Vec<f64>,
    pub imbalanced_covariates: Vec<usize>,
}

impl StudyGrid {
    /// `{0, 0.1, 0.2}` imbalance on X1 × prognosis `0, 0.05, …, 0.5`.
    pub fn desk_default(master_seed: u64) -> Self {
        Self {
            master_seed,
            n: 500,
            p: 3,
            tau: 0.0,
            imbalance_levels: vec![0.0, 0.1, 0.2],
            prognosis_levels: (0..=10).map(|k| f64::from(k) * 0.05).collect(),
            imbalanced_covariates: vec![0],
        }
    }

    /// Cells in covariate, imbalance, prognosis order; cell `k` gets seed
    /// `derive_seed(master_seed, k)`.
    pub fn cells(&self) -> Result<Vec<(GridCell, DgpConfig)>> {
        let mut out = Vec::new();
        for &cov in &self.imbalanced_covariates {
            if cov > 1 {
                return Err(BalanceError::InvalidArgument(format!(
                    "imbalance is supported on X1 or X2, not X{}",
                    cov + 1
                )));
            }
            for &imb in &self.imbalance_levels {
                for &prog in &self.prognosis_levels {
                    let index = out.len() as u64;
                    let cfg = DgpConfig {
                        n: self.n,
                        p: self.p,
                        rho_x1_z: if cov == 0 { imb } else { 0.0 },
                        rho_x2_z: if cov == 1 { imb } else { 0.0 },
                        rho_x1_y: prog,
                        tau: self.tau,
                        seed: rng::derive_seed(self.master_seed, index),
                    };
                    cfg.validate()?;
                    out.push((
                        GridCell {
                            imbalanced_covariate: cov,
                            imbalance: imb,
                            prognosis: prog,
                        },
                        cfg,
                    ));
                }
            }
        }
        if out.is_empty() {
            return Err(BalanceError::InvalidArgument("empty study grid".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub statistics: Vec<StatisticKind>,
    pub replicates: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub weight_policy: WeightPolicy,
    pub scale: Scale,
}

impl StudyOptions {
    /// 300 replicates × 200 permutations at α = 0.05, all statistics.
    pub fn desk_default() -> Self {
        Self {
            statistics: StatisticKind::ALL.to_vec(),
            replicates: 300,
            permutations: 200,
            alpha: 0.05,
            weight_policy: WeightPolicy::Fixed,
            scale: Scale::Standardized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.permutations == 0 {
            return Err(BalanceError::InvalidArgument(
                "replicates and permutations must be positive".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BalanceError::InvalidArgument(format!(
                "alpha = {} not in (0, 1)",
                self.alpha
            )));
        }
        if self.statistics.is_empty() {
            return Err(BalanceError::InvalidArgument("no statistics selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub statistic: StatisticKind,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// `√(r(1 − r)/replicates)`.
    pub mc_standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudyResult {
    pub cell: GridCell,
    pub rates: Vec<RejectionRate>,
    /// Mean of `(Ȳ_T − Ȳ_C − τ) / σ_Y(0)` over replicates.
    pub standardized_bias: f64,
    pub bias_mc_standard_error: f64,
    /// Replicates contributing to the rates.
    pub replicates: usize,
    pub failed_replicates: usize,
    pub permutations_per_replicate: usize,
    pub alpha: f64,
}

impl PowerStudyResult {
    pub fn rate(&self, statistic: StatisticKind) -> Option<&RejectionRate> {
        self.rates.iter().find(|r| r.statistic == statistic)
    }
}

/// One replicate's outcome: which statistics rejected, and the
/// standardized bias of the difference in means.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub p_values: Vec<f64>,
    pub standardized_bias: f64,
}

/// Generates replicate `r` of `cfg` and runs the permutation tests on it.
pub fn run_replicate(cfg: &DgpConfig, r: u64, opts: &StudyOptions) -> Result<ReplicateOutcome> {
    let d = generate_dataset(cfg, r)?;
    let perm = PermutationConfig {
        permutations: opts.permutations,
        seed: rng::derive_seed(rng::derive_seed(cfg.seed, PERMUTATION_TAG), r),
        weight_policy: opts.weight_policy,
        scale: opts.scale,
    };
    let results = permutation_tests(&d, &opts.statistics, &perm)?;
    Ok(ReplicateOutcome {
        p_values: results.iter().map(|r| r.p_value).collect(),
        standardized_bias: standardized_bias(&d, cfg.tau),
    })
}

fn standardized_bias(d: &Dataset<f64>, tau: f64) -> f64 {
    let y0: Vec<f64> = d
        .y_obs()
        .iter()
        .zip(d.z())
        .map(|(&y, &z)| y - tau * f64::from(z))
        .collect();
    let sd = data::population_variance(&y0).sqrt();
    let arm_mean = |rows: Vec<usize>| data::mean(&rows.iter().map(|&i| d.y_obs()[i]).collect::<Vec<_>>());
    let diff = arm_mean(d.treated_indices()) - arm_mean(d.control_indices()) - tau;
    if sd > 0.0 {
        diff / sd
    } else {
        0.0
    }
}

/// Runs every replicate of one cell and aggregates rejection rates.
pub fn run_cell(cell: GridCell, cfg: &DgpConfig, opts: &StudyOptions) -> Result<PowerStudyResult> {
    opts.validate()?;
    cfg.validate()?;
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r, opts))
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed > 0 && failed * 100 >= opts.replicates {
        return Err(BalanceError::TooManyFailures {
            failed,
            total: opts.replicates,
        });
    }
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let reps = ok.len();
    let rates = opts
        .statistics
        .iter()
        .enumerate()
        .map(|(k, &statistic)| {
            let rejections = ok.iter().filter(|o| o.p_values[k] < opts.alpha).count();
            let rate = rejections as f64 / reps as f64;
            RejectionRate {
                statistic,
                rejections,
                rejection_rate: rate,
                mc_standard_error: (rate * (1.0 - rate) / reps as f64).sqrt(),
            }
        })
        .collect();
    let mut sum = 0.0;
    for o in &ok {
        sum += o.standardized_bias;
    }
    let mean = sum / reps as f64;
    let mut ss = 0.0;
    for o in &ok {
        ss += (o.standardized_bias - mean).powi(2);
    }
    let bias_se = if reps > 1 {
        (ss / (reps - 1) as f64 / reps as f64).sqrt()
    } else {
        0.0
    };
    Ok(PowerStudyResult {
        cell,
        rates,
        standardized_bias: mean,
        bias_mc_standard_error: bias_se,
        replicates: reps,
        failed_replicates: failed,
        permutations_per_replicate: opts.permutations,
        alpha: opts.alpha,
    })
}

/// Runs every cell of the grid in order.
pub fn run_power_study(grid: &[(GridCell, DgpConfig)], opts: &StudyOptions) -> Result<Vec<PowerStudyResult>> {
    if grid.is_empty() {
        return Err(BalanceError::InvalidArgument("empty study grid".into()));
    }
    grid.iter().map(|(cell, cfg)| run_cell(*cell, cfg, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infeasible_configs_rejected() {
        let mut cfg = DgpConfig::null(1);
        cfg.rho_x1_z = 1.2;
        assert!(matches!(
            generate_dataset(&cfg, 0),
            Err(BalanceError::InfeasibleCorrelation(_))
        ));
        let mut cfg = DgpConfig::null(1);
        cfg.n = 501;
        assert!(generate_dataset(&cfg, 0).is_err());
        let mut cfg = DgpConfig::null(1);
        cfg.p = 1;
        cfg.rho_x2_z = 0.1;
        assert!(matches!(cfg.validate(), Err(BalanceError::InfeasibleCorrelation(_))));
    }

    #[test]
    fn full_loading_reproduces_standardized_assignment() {
        let mut cfg = DgpConfig::null(3);
        cfg.rho_x1_z = 1.0;
        let d = generate_dataset(&cfg, 0).unwrap();
        for i in 0..d.n() {
            let zt = if d.z()[i] == 1 { 1.0 } else { -1.0 };
            assert_eq!(d.x()[(i, 0)], zt);
        }
        assert_eq!(d.group_sizes().n1, 250);
    }

    #[test]
    fn null_process_is_uncorrelated_most_of_the_time() {
        let cfg = DgpConfig::null(4);
        let reps = 200;
        let mut small = 0;
        for r in 0..reps {
            let d = generate_dataset(&cfg, r).unwrap();
            let z: Vec<f64> = d.z().iter().map(|&v| f64::from(v)).collect();
            let ok = (0..3).all(|j| data::correlation(&d.x().column(j), &z).abs() < 0.1)
                && data::correlation(&d.x().column(0), d.y_obs()).abs() < 0.1;
            small += usize::from(ok);
        }
        // each |corr| < 0.1 with prob ≈ 0.975 at n = 500; four of them ≈ 0.90
        assert!(small as f64 / reps as f64 > 0.8, "{small}");
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let cfg = DgpConfig::null(5);
        assert_eq!(generate_dataset(&cfg, 7).unwrap(), generate_dataset(&cfg, 7).unwrap());
        assert_ne!(generate_dataset(&cfg, 7).unwrap(), generate_dataset(&cfg, 8).unwrap());
    }

    #[test]
    fn grid_cells_are_ordered_and_seeded() {
        let mut g = StudyGrid::desk_default(11);
        g.imbalanced_covariates = vec![0, 1];
        let cells = g.cells().unwrap();
        assert_eq!(cells.len(), 2 * 3 * 11);
        assert_eq!(cells[0].1.seed, rng::derive_seed(11, 0));
        assert_eq!(cells[33].0.imbalanced_covariate, 1);
        assert_eq!(cells[33].1.rho_x1_z, 0.0);
        g.imbalanced_covariates = vec![2];
        assert!(g.cells().is_err());
    }

    #[test]
    fn small_cell_runs_deterministically() {
        let mut cfg = DgpConfig::null(6);
        cfg.n = 60;
        let opts = StudyOptions {
            replicates: 20,
            permutations: 50,
            ..StudyOptions::desk_default()
        };
        let cell = GridCell {
            imbalanced_covariate: 0,
            imbalance: 0.0,
            prognosis: 0.0,
        };
        let a = run_cell(cell, &cfg, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_cell(cell, &cfg, &opts).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.replicates, 20);
        for r in &a.rates {
            assert!((0.0..=1.0).contains(&r.rejection_rate));
        }
    }
}
