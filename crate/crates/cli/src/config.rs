//! Study configuration file.
//!
//! ```toml
//! seed = 20240601
//! replicates = 300
//! permutations = 200
//! alpha = 0.05
//! n = 500
//! p = 3
//! tau = 0.0
//! statistics = ["uw", "rw", "hotelling"]
//! weight_policy = "fixed"        # or "refit"
//! scale = "standardized"         # or "raw"
//! imbalance = [0.0, 0.1, 0.2]
//! prognosis = [0.0, 0.1, 0.2, 0.3]
//! imbalanced_covariates = [1]    # 1 = X1, 2 = X2
//! ```
//!
//! Every key is optional; omitted keys take the values shown in
//! [`StudyConfig::default`].

use balance_lab::simulation::StudyGrid;
use balance_lab::{Scale, StatisticKind, StudyOptions, WeightPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: Option<u64>,
    pub replicates: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub statistics: Vec<StatisticKind>,
    pub weight_policy: WeightPolicy,
    pub scale: Scale,
    pub imbalance: Vec<f64>,
    pub prognosis: Vec<f64>,
    pub imbalanced_covariates: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let grid = StudyGrid::desk_default(0);
        let opts = StudyOptions::desk_default();
        Self {
            seed: None,
            replicates: opts.replicates,
            permutations: opts.permutations,
            alpha: opts.alpha,
            n: grid.n,
            p: grid.p,
            tau: grid.tau,
            statistics: opts.statistics,
            weight_policy: opts.weight_policy,
            scale: opts.scale,
            imbalance: grid.imbalance_levels,
            prognosis: grid.prognosis_levels,
            imbalanced_covariates: grid.imbalanced_covariates.iter().map(|c| c + 1).collect(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn grid(&self, seed: u64) -> Result<StudyGrid> {
        if self.imbalance.is_empty() || self.prognosis.is_empty() || self.imbalanced_covariates.is_empty() {
            return Err(CliError::Config(
                "imbalance, prognosis and imbalanced_covariates must be non-empty".into(),
            ));
        }
        let covs = self
            .imbalanced_covariates
            .iter()
            .map(|&c| {
                if c == 0 {
                    Err(CliError::Config("imbalanced_covariates are numbered from 1".into()))
                } else {
                    Ok(c - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StudyGrid {
            master_seed: seed,
            n: self.n,
            p: self.p,
            tau: self.tau,
            imbalance_levels: self.imbalance.clone(),
            prognosis_levels: self.prognosis.clone(),
            imbalanced_covariates: covs,
        })
    }

    pub fn options(&self) -> StudyOptions {
        StudyOptions {
            statistics: self.statistics.clone(),
            replicates: self.replicates,
            permutations: self.permutations,
            alpha: self.alpha,
            weight_policy: self.weight_policy,
            scale: self.scale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let c = StudyConfig::from_toml("").unwrap();
        assert_eq!(c, StudyConfig::default());
        assert_eq!(c.replicates, 300);
        assert_eq!(c.prognosis.len(), 11);
        assert_eq!(c.grid(1).unwrap().cells().unwrap().len(), 33);
    }

    #[test]
    fn parses_full_schema() {
        let c = StudyConfig::from_toml(
            r#"
seed = 9
replicates = 10
permutations = 20
alpha = 0.1
n = 100
p = 2
tau = 0.5
statistics = ["rw", "uw"]
weight_policy = "refit"
scale = "raw"
imbalance = [0.3]
prognosis = [0.0, 0.2]
imbalanced_covariates = [2]
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.statistics, vec![StatisticKind::Rw, StatisticKind::Uw]);
        assert_eq!(c.weight_policy, WeightPolicy::RefitPerPermutation);
        assert_eq!(c.scale, Scale::Raw);
        let cells = c.grid(9).unwrap().cells().unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].1.rho_x2_z, 0.3);
    }

    #[test]
    fn rejects_unknown_keys_and_zero_index() {
        assert!(StudyConfig::from_toml("replicats = 3").is_err());
        let c = StudyConfig::from_toml("imbalanced_covariates = [0]").unwrap();
        assert!(c.grid(1).is_err());
    }
}
