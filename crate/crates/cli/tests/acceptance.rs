//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use balance_lab::balance::balance_report;
use balance_lab::data::standardize_matrix;
use balance_lab::rng;
use balance_lab::simulation::{run_cell, run_replicate};
use balance_lab::variance::variance_report_scaled;
use balance_lab::{
    fit_ols, Dataset, DgpConfig, GridCell, Matrix, PowerStudyResult, Scale, StatisticKind, StudyGrid, StudyOptions,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
    Matrix::from_fn(n, p, |_, _| normal(rng))
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// OLS with intercept through the normal equations; returns slopes only.
fn normal_equation_slopes(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len() + 1;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (r, &yi) in rows.iter().zip(y) {
        let v: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
        for a in 0..k {
            xty[a] += v[a] * yi;
            for b in 0..k {
                xtx[a][b] += v[a] * v[b];
            }
        }
    }
    solve(xtx, xty)[1..].to_vec()
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn exact_variance() -> Outcome {
    let mut rng = rng::stream(101, 0);
    let (mut worst_rel, mut worst_mean, mut checks) = (0.0f64, 0.0f64, 0usize);
    for k in 0..200 {
        let n = 4 + k % 9;
        let p = 1 + (k / 9) % 4;
        let x = random_matrix(&mut rng, n, p);
        let xs = standardize_matrix(&x).unwrap().x_std;
        let w: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        for n1 in 1..n {
            let z: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
            let d = Dataset::from_parts(x.clone(), z, vec![0.0; n]).unwrap();
            let report = variance_report_scaled(&d, &w, Scale::Standardized).unwrap();

            // every assignment of n1 treated units, by bitmask
            let mut values: Vec<Vec<f64>> = Vec::new();
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n1 {
                    continue;
                }
                let mut delta = vec![0.0; p];
                for (j, dj) in delta.iter_mut().enumerate() {
                    let (mut st, mut sc) = (0.0, 0.0);
                    for i in 0..n {
                        if mask >> i & 1 == 1 {
                            st += xs[(i, j)];
                        } else {
                            sc += xs[(i, j)];
                        }
                    }
                    *dj = st / n1 as f64 - sc / (n - n1) as f64;
                }
                values.push(delta);
            }
            let moments = |f: &dyn Fn(&[f64]) -> f64| {
                let v: Vec<f64> = values.iter().map(|d| f(d)).collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
                (m, var)
            };
            let mut compare = |(mean, var): (f64, f64), formula: f64| {
                worst_rel = worst_rel.max(rel_err(var, formula));
                worst_mean = worst_mean.max(mean.abs());
                checks += 1;
            };
            for j in 0..p {
                compare(moments(&|d| d[j]), report.var_delta_j[j]);
            }
            compare(moments(&|d| d.iter().sum()), report.var_delta_uw);
            compare(
                moments(&|d| d.iter().zip(&w).map(|(a, b)| a * b).sum()),
                report.var_delta_rw_conditional,
            );
        }
    }
    outcome(
        worst_rel < 1e-10 && worst_mean < 1e-10,
        format!("{checks} variances over 200 instances; max rel err {worst_rel:.2e}, max |mean| {worst_mean:.2e} (tol 1e-10)"),
    )
}

fn rw_identity() -> Outcome {
    let mut rng = rng::stream(202, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(40..200);
        let p = rng.random_range(1..6);
        let x = random_matrix(&mut rng, n, p);
        let beta: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 + (0..p).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + normal(&mut rng))
            .collect();
        let n1 = rng.random_range(n / 4..3 * n / 4);
        let mut z: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
        for i in (1..n).rev() {
            z.swap(i, rng.random_range(0..=i));
        }
        let d = Dataset::from_parts(x.clone(), z.clone(), y.clone()).unwrap();

        let control: Vec<usize> = (0..n).filter(|&i| z[i] == 0).collect();
        let rows: Vec<Vec<f64>> = control.iter().map(|&i| x.row(i).to_vec()).collect();
        let yc: Vec<f64> = control.iter().map(|&i| y[i]).collect();
        let b = normal_equation_slopes(&rows, &yc);
        let arm_mean = |arm: u8, f: &dyn Fn(usize) -> f64| {
            let idx: Vec<usize> = (0..n).filter(|&i| z[i] == arm).collect();
            idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64
        };
        let weighted: f64 = (0..p)
            .map(|j| b[j] * (arm_mean(1, &|i| x[(i, j)]) - arm_mean(0, &|i| x[(i, j)])))
            .sum();
        let fitted = |i: usize| (0..p).map(|j| b[j] * x[(i, j)]).sum::<f64>();
        let fitted_diff = arm_mean(1, &fitted) - arm_mean(0, &fitted);

        let r = balance_report(&d, Scale::Raw).unwrap();
        let scale = weighted.abs().max(1.0);
        for v in [fitted_diff, r.delta_rw, r.delta_rw_fitted_mean] {
            worst = worst.max((v - weighted).abs() / scale);
        }
    }
    outcome(
        worst < 1e-10,
        format!("1000 datasets; max |weighted sum - fitted-mean difference| {worst:.2e} (tol 1e-10)"),
    )
}

fn fwl_identity() -> Outcome {
    let mut rng = rng::stream(303, 0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(30..200);
        let p = rng.random_range(2..7);
        let mut x = random_matrix(&mut rng, n, p);
        x = Matrix::from_fn(n, p, |i, j| x[(i, j)] + if j > 0 { 0.3 * x[(i, j - 1)] } else { 0.0 });
        let y: Vec<f64> = (0..n)
            .map(|i| (0..p).map(|j| (j as f64 - 1.0) * x[(i, j)]).sum::<f64>() + normal(&mut rng))
            .collect();
        let fit = fit_ols(&x, &y, true).unwrap();
        for j in 0..p {
            let others: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..p).filter(|&k| k != j).map(|k| x[(i, k)]).collect())
                .collect();
            let xj = x.column(j);
            let g = normal_equation_slopes(&others, &xj);
            let gi = xj.iter().sum::<f64>() / n as f64
                - (0..p - 1)
                    .map(|k| g[k] * others.iter().map(|r| r[k]).sum::<f64>() / n as f64)
                    .sum::<f64>();
            let resid: Vec<f64> = (0..n)
                .map(|i| xj[i] - gi - others[i].iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let slope =
                resid.iter().zip(&y).map(|(r, y)| r * y).sum::<f64>() / resid.iter().map(|r| r * r).sum::<f64>();
            worst = worst.max((fit.coefficients[j] - slope).abs() / slope.abs().max(1e-3));
        }
    }
    outcome(worst < 1e-8, format!("200 designs; max rel err {worst:.2e} (tol 1e-8)"))
}

fn rate(r: &PowerStudyResult, s: StatisticKind) -> (f64, f64) {
    let x = r.rate(s).unwrap();
    (x.rejection_rate, x.mc_standard_error)
}

fn rates_line(r: &PowerStudyResult) -> String {
    StatisticKind::ALL
        .iter()
        .map(|&s| {
            let (v, se) = rate(r, s);
            format!("{s} {v:.3}±{se:.3}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn null_calibration() -> Outcome {
    let cfg = DgpConfig::null(rng::derive_seed(404, 0));
    let opts = StudyOptions {
        replicates: 500,
        permutations: 200,
        ..StudyOptions::desk_default()
    };
    let cell = GridCell {
        imbalanced_covariate: 0,
        imbalance: 0.0,
        prognosis: 0.0,
    };
    let r = run_cell(cell, &cfg, &opts).unwrap();
    let pass = r.rates.iter().all(|x| (0.03..=0.07).contains(&x.rejection_rate));
    outcome(
        pass,
        format!("n=500, 500 replicates, B=200: {} (want [0.03, 0.07])", rates_line(&r)),
    )
}

fn beyond(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 - b.0 > 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn within(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn imbalance_cells() -> Vec<PowerStudyResult> {
    let grid = StudyGrid {
        imbalance_levels: vec![0.2],
        prognosis_levels: vec![0.0, 0.3],
        ..StudyGrid::desk_default(505)
    };
    let opts = StudyOptions::desk_default();
    balance_lab::run_power_study(&grid.cells().unwrap(), &opts).unwrap()
}

fn specificity(cells: &[PowerStudyResult]) -> Outcome {
    let r = &cells[0];
    let (uw, rw, t2) = (
        rate(r, StatisticKind::Uw),
        rate(r, StatisticKind::Rw),
        rate(r, StatisticKind::Hotelling),
    );
    let pass = t2.0 >= 0.90
        && (0.60..=0.90).contains(&uw.0)
        && (0.35..=0.65).contains(&rw.0)
        && beyond(uw, rw)
        && beyond(t2, uw);
    outcome(
        pass,
        format!(
            "imbalance 0.2 on X1, prognosis 0, 300 replicates, B=200: {}",
            rates_line(r)
        ),
    )
}

fn sensitivity(cells: &[PowerStudyResult]) -> Outcome {
    let (lo, hi) = (&cells[0], &cells[1]);
    let rw = beyond(rate(hi, StatisticKind::Rw), rate(lo, StatisticKind::Rw));
    let uw = within(rate(hi, StatisticKind::Uw), rate(lo, StatisticKind::Uw));
    let t2 = within(rate(hi, StatisticKind::Hotelling), rate(lo, StatisticKind::Hotelling));
    outcome(
        rw && uw && t2,
        format!("prognosis 0: {} | prognosis 0.3: {}", rates_line(lo), rates_line(hi)),
    )
}

fn p_value_validity() -> Outcome {
    let cfg = DgpConfig::null(rng::derive_seed(606, 0));
    let opts = StudyOptions {
        replicates: 500,
        permutations: 200,
        ..StudyOptions::desk_default()
    };
    let p: Vec<Vec<f64>> = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(&cfg, r, &opts).unwrap().p_values)
        .collect();
    let mut pass = true;
    let mut worst = 0.0f64;
    for k in 0..opts.statistics.len() {
        for t in [0.05, 0.10, 0.25, 0.5] {
            let ecdf = p.iter().filter(|v| v[k] <= t).count() as f64 / p.len() as f64;
            let se = (t * (1.0 - t) / p.len() as f64).sqrt();
            let z = (ecdf - t).abs() / se;
            worst = worst.max(z);
            pass &= z < 3.0;
        }
    }
    outcome(
        pass,
        format!("500 null replicates, B=200; max |ECDF - t| = {worst:.2} MC SEs at t in {{0.05, 0.1, 0.25, 0.5}} (want < 3)"),
    )
}

const DETERMINISM_STUDY: &str = "\
seed = 707
replicates = 40
permutations = 100
n = 100
imbalance = [0.0, 0.2]
prognosis = [0.0, 0.25, 0.5]
";

fn simulate(config: &Path, out: &Path, threads: &str, extra: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_balance-lab"))
        .args(["simulate", "--config"])
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(["--threads", threads])
        .args(extra)
        .env_remove("BALANCE_LAB_THREADS")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(&config, DETERMINISM_STUDY).unwrap();
    let read = |name: &str| std::fs::read(dir.path().join(name).join("results.csv")).ok();

    let mut ok = true;
    for t in ["1", "4", "8"] {
        ok &= simulate(&config, &dir.path().join(format!("t{t}")), t, &[]);
    }
    let reference = read("t1");
    let threads_equal = ok && reference.is_some() && read("t4") == reference && read("t8") == reference;

    // a run stopped after 2 of 6 cells, then resumed
    let stopped = dir.path().join("stopped");
    ok &= simulate(&config, &stopped, "4", &["--stop-after", "2"]);
    ok &= !stopped.join("results.csv").exists();
    ok &= simulate(&config, &stopped, "4", &["--resume"]);
    let stop_equal = ok && read("stopped") == reference;

    // losing four checkpoints of a finished run, then resuming
    let ckpt = dir.path().join("t8").join("checkpoints");
    for k in [1, 2, 4, 5] {
        let _ = std::fs::remove_file(ckpt.join(format!("cell_{k:04}.json")));
    }
    let _ = std::fs::remove_file(dir.path().join("t8").join("results.csv"));
    ok &= simulate(&config, &dir.path().join("t8"), "2", &["--resume"]);
    let resume_equal = ok && read("t8") == reference;

    outcome(
        threads_equal && stop_equal && resume_equal,
        format!(
            "6 cells; identical across 1/4/8 threads: {threads_equal}; stop after 2 + resume: {stop_equal}; 4 checkpoints deleted + resume: {resume_equal}"
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failures += usize::from(!o.pass);
    };
    report("exact-variance", &exact_variance);
    report("rw-identity", &rw_identity);
    report("fwl-identity", &fwl_identity);
    report("null-calibration", &null_calibration);
    let cells = imbalance_cells();
    report("specificity-ordering", &|| specificity(&cells));
    report("sensitivity-monotonicity", &|| sensitivity(&cells));
    report("p-value-validity", &p_value_validity);
    report("determinism", &determinism);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
