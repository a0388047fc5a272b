use std::fs;
use std::path::{Path, PathBuf};

use balance_lab::balance::{balance_report, scaled_weights};
use balance_lab::data::standardize;
use balance_lab::simulation::run_cell;
use balance_lab::variance::variance_report_scaled;
use balance_lab::{
    diagnostics, load_dataset, normal_approx_test, permutation_tests, LoadOptions, LoadedData, PermutationConfig,
    PowerStudyResult, Scale, StatisticKind,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{parse_delimiter, DiagnoseArgs, Format, InputArgs, SimulateArgs, TestArgs};
use crate::config::StudyConfig;
use crate::error::{CliError, Result};
use crate::manifest::{digest_hex, write_atomic, write_json, RunManifest};
use crate::output;
use crate::report::{CovariateBalance, DiagnoseReport, OmnibusStatistic, PermutationSummary, TestReport};

/// Runs `f` on a rayon pool of `threads` workers (0 = one per core).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn resolve_seed(seed: Option<u64>) -> (u64, bool) {
    match seed {
        Some(s) => (s, false),
        None => (rand::random(), true),
    }
}

struct Input {
    bytes: Vec<u8>,
    loaded: LoadedData,
    covariates: Vec<String>,
}

fn load_input(args: &InputArgs) -> Result<Input> {
    let bytes = fs::read(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let delimiter = parse_delimiter(&args.delimiter).map_err(CliError::Usage)?;
    let mut covariates: Vec<String> = args
        .covariates
        .iter()
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .collect();
    if covariates.is_empty() {
        let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(&bytes[..]);
        let header = reader
            .headers()
            .map_err(|e| CliError::Usage(format!("cannot read header: {e}")))?;
        covariates = header
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| *h != args.treatment && *h != args.outcome && Some(h) != args.lag_column.as_ref())
            .collect();
        if covariates.is_empty() {
            return Err(CliError::Usage(
                "input has no columns besides treatment and outcome".into(),
            ));
        }
    }
    let opts = LoadOptions {
        treatment_column: args.treatment.clone(),
        outcome_column: args.outcome.clone(),
        covariate_columns: covariates.clone(),
        extra_columns: args.lag_column.iter().cloned().collect(),
        delimiter,
        treated_level: args.treated_level.clone(),
        lenient_missing: args.lenient_missing,
    };
    let loaded = load_dataset(&bytes[..], &opts)?;
    Ok(Input {
        bytes,
        loaded,
        covariates,
    })
}

fn lag_values(loaded: &LoadedData) -> Option<&[f64]> {
    loaded.extras.first().map(|(_, v)| v.as_slice())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn build_test_report(args: &TestArgs, input: &Input, seed: u64) -> Result<(TestReport, Vec<Vec<f64>>)> {
    if args.permutations == 0 {
        return Err(CliError::Usage("--permutations must be at least 1".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha {} is not in (0, 1)", args.alpha)));
    }
    let d = &input.loaded.dataset;
    let scale: Scale = args.scale.into();
    let balance = balance_report(d, scale)?;
    let weights = scaled_weights(&balance.weights_used, scale);
    let var = variance_report_scaled(d, &weights, scale)?;
    let constant = standardize(d)?.dropped_constant_columns;

    let covariates = (0..d.p())
        .map(|j| CovariateBalance {
            name: input.covariates[j].clone(),
            difference: balance.delta[j],
            exact_se: var.var_delta_j[j].sqrt(),
            asymptotic_p: normal_approx_test(balance.delta[j], var.var_delta_j[j]).ok(),
            weight: weights[j],
        })
        .collect();
    let omnibus = vec![
        OmnibusStatistic {
            statistic: StatisticKind::Uw,
            observed: balance.delta_uw,
            exact_se: Some(var.var_delta_uw.sqrt()),
            asymptotic_p: normal_approx_test(balance.delta_uw, var.var_delta_uw).ok(),
        },
        OmnibusStatistic {
            statistic: StatisticKind::Rw,
            observed: balance.delta_rw,
            exact_se: Some(var.var_delta_rw_conditional.sqrt()),
            asymptotic_p: normal_approx_test(balance.delta_rw, var.var_delta_rw_conditional).ok(),
        },
        OmnibusStatistic {
            statistic: StatisticKind::Hotelling,
            observed: balance.hotelling_t2,
            exact_se: None,
            asymptotic_p: None,
        },
    ];

    let cfg = PermutationConfig {
        permutations: args.permutations,
        seed,
        weight_policy: args.weight_policy.into(),
        scale,
    };
    let perms = permutation_tests(d, &args.statistic.kinds(), &cfg)?;
    let permutation_results = perms
        .iter()
        .map(|r| PermutationSummary {
            statistic: r.statistic,
            observed: r.observed,
            permutations: r.b,
            exceed_count: r.exceed_count,
            p_value: r.p_value,
            p_conservative: r.p_conservative,
            failures: r.failures,
            weight_policy: r.weight_policy,
            seed: r.seed,
            reject: r.p_value < args.alpha,
        })
        .collect();
    let g = d.group_sizes();
    let report = TestReport {
        input: args.input.input.display().to_string(),
        n: g.n,
        n_treated: g.n1,
        n_control: g.n0,
        dropped_rows: input.loaded.dropped_rows,
        scale,
        alpha: args.alpha,
        seed,
        covariates,
        constant_covariates: constant.iter().map(|&j| input.covariates[j].clone()).collect(),
        omnibus,
        permutation_results,
        diagnostics: diagnostics(d, lag_values(&input.loaded))?,
    };
    Ok((report, perms.into_iter().map(|r| r.permuted_values).collect()))
}

pub fn cmd_test(args: &TestArgs) -> Result<TestReport> {
    let (seed, from_entropy) = resolve_seed(args.seed);
    let input = load_input(&args.input)?;
    let config = json!({
        "input": args.input.input,
        "treatment": args.input.treatment,
        "outcome": args.input.outcome,
        "covariates": input.covariates,
        "treated_level": args.input.treated_level,
        "lag_column": args.input.lag_column,
        "lenient_missing": args.input.lenient_missing,
        "statistic": args.statistic.kinds(),
        "permutations": args.permutations,
        "weight_policy": balance_lab::WeightPolicy::from(args.weight_policy),
        "scale": Scale::from(args.scale),
        "alpha": args.alpha,
    });
    let (report, permuted, mut manifest) = with_threads(args.threads, || {
        let manifest =
            RunManifest::start("test", config, seed, from_entropy).with_input(&args.input.input, &input.bytes);
        build_test_report(args, &input, seed).map(|(r, p)| (r, p, manifest))
    })??;
    manifest.finish();

    match args.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", to_json(&report)?),
    }
    if from_entropy {
        eprintln!("seed: {seed}");
    }
    if let Some(dir) = &args.out_dir {
        ensure_dir(dir)?;
        write_json(&dir.join("report.json"), &report)?;
        write_atomic(&dir.join("report.txt"), report.to_text().as_bytes())?;
        if args.dump_permutations {
            for (r, values) in report.permutation_results.iter().zip(&permuted) {
                let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                write_atomic(&dir.join(format!("permutations_{}.bin", r.statistic)), &bytes)?;
            }
        }
        manifest.write(dir)?;
    }
    Ok(report)
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<DiagnoseReport> {
    let input = load_input(&args.input)?;
    let mut manifest = RunManifest::start(
        "diagnose",
        json!({
            "input": args.input.input,
            "treatment": args.input.treatment,
            "outcome": args.input.outcome,
            "covariates": input.covariates,
            "treated_level": args.input.treated_level,
            "lag_column": args.input.lag_column,
            "lenient_missing": args.input.lenient_missing,
        }),
        0,
        false,
    )
    .with_input(&args.input.input, &input.bytes);
    let d = &input.loaded.dataset;
    let g = d.group_sizes();
    let report = DiagnoseReport {
        input: args.input.input.display().to_string(),
        n: g.n,
        n_treated: g.n1,
        n_control: g.n0,
        dropped_rows: input.loaded.dropped_rows,
        covariates: input.covariates.clone(),
        lag_column: args.input.lag_column.clone(),
        diagnostics: diagnostics(d, lag_values(&input.loaded))?,
    };
    manifest.finish();
    match args.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", to_json(&report)?),
    }
    if let Some(dir) = &args.out_dir {
        ensure_dir(dir)?;
        write_json(&dir.join("diagnostics.json"), &report)?;
        manifest.write(dir)?;
    }
    Ok(report)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    index: usize,
    result: PowerStudyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub fingerprint: String,
    /// Provenance record in the same directory.
    pub manifest: String,
    pub seed: u64,
    /// What the standardized bias is divided by.
    pub bias_standardization: String,
    pub config: StudyConfig,
    pub results: Vec<PowerStudyResult>,
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub out_dir: PathBuf,
    /// False when `--stop-after` ended the run early.
    pub complete: bool,
    pub results: Vec<PowerStudyResult>,
}

fn checkpoint_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("cell_{index:04}.json"))
}

fn read_checkpoint(path: &Path, fingerprint: &str, index: usize) -> Option<PowerStudyResult> {
    let text = fs::read_to_string(path).ok()?;
    match serde_json::from_str::<Checkpoint>(&text) {
        Ok(c) if c.fingerprint == fingerprint && c.index == index => Some(c.result),
        _ => {
            eprintln!("ignoring stale checkpoint {}", path.display());
            None
        }
    }
}

fn previous_seed(out_dir: &Path) -> Option<u64> {
    let text = fs::read_to_string(out_dir.join("manifest.json")).ok()?;
    serde_json::from_str::<RunManifest>(&text).ok().map(|m| m.seed)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutcome> {
    let text = fs::read(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let cfg = StudyConfig::from_toml(&String::from_utf8_lossy(&text))?;
    let delimiter = parse_delimiter(&args.delimiter).map_err(CliError::Usage)?;

    let out_dir = args.out_dir.clone();
    let resumed_seed = if args.resume { previous_seed(&out_dir) } else { None };
    let (seed, from_entropy) = resolve_seed(args.seed.or(cfg.seed).or(resumed_seed));
    let resolved = StudyConfig {
        seed: Some(seed),
        ..cfg
    };
    let opts = resolved.options();
    opts.validate()?;
    let cells = resolved.grid(seed)?.cells()?;
    let fingerprint = digest_hex(&serde_json::to_vec(&resolved).map_err(|e| CliError::Output(e.to_string()))?);

    ensure_dir(&out_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    if !args.resume && ckpt_dir.exists() {
        fs::remove_dir_all(&ckpt_dir).map_err(|e| CliError::io(&ckpt_dir, e))?;
    }
    ensure_dir(&ckpt_dir)?;

    let config_json = serde_json::to_value(&resolved).map_err(|e| CliError::Output(e.to_string()))?;
    let mut manifest = with_threads(args.threads, || {
        RunManifest::start("simulate", config_json, seed, from_entropy).with_input(&args.config, &text)
    })?;
    manifest.write(&out_dir)?;

    let mut results = Vec::with_capacity(cells.len());
    let mut computed = 0;
    for (k, (cell, dgp)) in cells.iter().enumerate() {
        let path = checkpoint_path(&ckpt_dir, k);
        if args.resume {
            if let Some(r) = read_checkpoint(&path, &fingerprint, k) {
                results.push(r);
                continue;
            }
        }
        if args.stop_after.is_some_and(|limit| computed >= limit) {
            eprintln!("stopped after {computed} cells; rerun with --resume to finish");
            return Ok(SimulateOutcome {
                out_dir,
                complete: false,
                results,
            });
        }
        eprintln!(
            "cell {}/{}: X{} imbalance {} prognosis {}",
            k + 1,
            cells.len(),
            cell.imbalanced_covariate + 1,
            cell.imbalance,
            cell.prognosis
        );
        let r = with_threads(args.threads, || run_cell(*cell, dgp, &opts))??;
        write_json(
            &path,
            &Checkpoint {
                fingerprint: fingerprint.clone(),
                index: k,
                result: r.clone(),
            },
        )?;
        results.push(r);
        computed += 1;
    }

    let ext = if delimiter == b'\t' { "tsv" } else { "csv" };
    write_atomic(
        &out_dir.join(format!("results.{ext}")),
        &output::results_table(&results, delimiter)?,
    )?;
    write_atomic(
        &out_dir.join(format!("plot_data.{ext}")),
        &output::plot_data(&results, delimiter)?,
    )?;
    let plots = out_dir.join("plots");
    ensure_dir(&plots)?;
    for facet in output::facet_svgs(&results) {
        write_atomic(&plots.join(format!("{}.svg", facet.file_stem)), facet.svg.as_bytes())?;
    }
    write_json(
        &out_dir.join("summary.json"),
        &StudySummary {
            fingerprint,
            manifest: "manifest.json".into(),
            seed,
            bias_standardization: "population standard deviation of Y(0) within the replicate".into(),
            config: resolved,
            results: results.clone(),
        },
    )?;
    manifest.finish();
    manifest.write(&out_dir)?;
    Ok(SimulateOutcome {
        out_dir,
        complete: true,
        results,
    })
}
