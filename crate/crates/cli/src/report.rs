//! Reports shared by the JSON and the plain-text renderers.

use std::fmt::Write as _;

use balance_lab::{Diagnostics, Scale, StatisticKind, WeightPolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub name: String,
    /// Treated-minus-control mean difference on the report scale.
    pub difference: f64,
    /// Exact randomization standard error of the difference.
    pub exact_se: f64,
    /// Two-sided normal-approximation p-value; absent for constant columns.
    pub asymptotic_p: Option<f64>,
    /// Control-arm regression weight on the report scale.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmnibusStatistic {
    pub statistic: StatisticKind,
    pub observed: f64,
    /// Exact standard error; not defined for Hotelling T².
    pub exact_se: Option<f64>,
    pub asymptotic_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSummary {
    pub statistic: StatisticKind,
    pub observed: f64,
    pub permutations: usize,
    pub exceed_count: usize,
    pub p_value: f64,
    pub p_conservative: f64,
    pub failures: usize,
    pub weight_policy: WeightPolicy,
    pub seed: u64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub input: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub dropped_rows: usize,
    pub scale: Scale,
    pub alpha: f64,
    pub seed: u64,
    pub covariates: Vec<CovariateBalance>,
    /// Columns with no variation; they carry zero weight.
    pub constant_covariates: Vec<String>,
    pub omnibus: Vec<OmnibusStatistic>,
    pub permutation_results: Vec<PermutationSummary>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub input: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub dropped_rows: usize,
    pub covariates: Vec<String>,
    pub lag_column: Option<String>,
    pub diagnostics: Diagnostics,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn scale_name(s: Scale) -> &'static str {
    match s {
        Scale::Standardized => "standardized",
        Scale::Raw => "raw",
    }
}

fn policy_name(w: WeightPolicy) -> &'static str {
    match w {
        WeightPolicy::Fixed => "fixed",
        WeightPolicy::RefitPerPermutation => "refit",
    }
}

fn write_diagnostics(out: &mut String, d: &Diagnostics) {
    let _ = writeln!(out, "prognosis R²  {:.4}", d.prognosis_r2);
    let _ = writeln!(out, "imbalance R²  {:.4}", d.imbalance_r2);
    if let Some(l) = &d.lagged_correlation {
        let _ = writeln!(out, "lag corr      control {:.4}  full {:.4}", l.control, l.full);
    }
}

impl TestReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "input: {}", self.input);
        let _ = writeln!(
            out,
            "units: {} ({} treated, {} control{})",
            self.n,
            self.n_treated,
            self.n_control,
            if self.dropped_rows > 0 {
                format!(", {} rows dropped", self.dropped_rows)
            } else {
                String::new()
            }
        );
        let _ = writeln!(out, "scale: {}  seed: {}", scale_name(self.scale), self.seed);
        let _ = writeln!(out);

        let width = self.covariates.iter().map(|c| c.name.len()).max().unwrap_or(0).max(9);
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}  {:>8}  {:>10}",
            "covariate", "diff", "exact SE", "asym p", "weight"
        );
        for c in &self.covariates {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.4}  {:>10.4}  {:>8}  {:>10.4}",
                c.name,
                c.difference,
                c.exact_se,
                opt(c.asymptotic_p),
                c.weight
            );
        }
        if !self.constant_covariates.is_empty() {
            let _ = writeln!(out, "constant (ignored): {}", self.constant_covariates.join(", "));
        }
        let _ = writeln!(out);

        let _ = writeln!(
            out,
            "{:<10}  {:>10}  {:>10}  {:>8}  {:>8}  {:>8}  {:>6}",
            "statistic", "observed", "exact SE", "asym p", "perm p", "p (+1)", "B"
        );
        for s in &self.omnibus {
            let perm = self.permutation_results.iter().find(|p| p.statistic == s.statistic);
            let _ = writeln!(
                out,
                "{:<10}  {:>10.4}  {:>10}  {:>8}  {:>8}  {:>8}  {:>6}{}",
                s.statistic.name(),
                s.observed,
                opt(s.exact_se),
                opt(s.asymptotic_p),
                opt(perm.map(|p| p.p_value)),
                opt(perm.map(|p| p.p_conservative)),
                perm.map_or_else(|| "-".to_string(), |p| p.permutations.to_string()),
                match perm {
                    Some(p) if p.reject => "  *",
                    _ => "",
                }
            );
        }
        if let Some(p) = self.permutation_results.first() {
            let _ = writeln!(
                out,
                "* marks permutation p < {}; weights {}",
                self.alpha,
                policy_name(p.weight_policy)
            );
            let failures: usize = self.permutation_results.iter().map(|p| p.failures).sum();
            if failures > 0 {
                let _ = writeln!(
                    out,
                    "{failures} permuted weight refits failed and were counted as extreme"
                );
            }
        }
        let _ = writeln!(out);
        write_diagnostics(&mut out, &self.diagnostics);
        out
    }
}

impl DiagnoseReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "input: {}", self.input);
        let _ = writeln!(
            out,
            "units: {} ({} treated, {} control)",
            self.n, self.n_treated, self.n_control
        );
        let _ = writeln!(out, "covariates: {}", self.covariates.join(", "));
        write_diagnostics(&mut out, &self.diagnostics);
        out
    }
}
