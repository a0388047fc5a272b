//! Tables and plots for power-study results.

use std::fmt::Write as _;

use balance_lab::PowerStudyResult;

use crate::error::{CliError, Result};

pub const RESULT_COLUMNS: [&str; 9] = [
    "imbalance",
    "prognosis",
    "statistic",
    "rejection_rate",
    "mc_se",
    "std_bias",
    "replicates",
    "b",
    "imbalanced_covariate",
];

fn writer(delimiter: u8) -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Output(e.to_string())
}

/// One row per (cell, statistic).
pub fn results_table(results: &[PowerStudyResult], delimiter: u8) -> Result<Vec<u8>> {
    let mut w = writer(delimiter);
    w.write_record(RESULT_COLUMNS).map_err(csv_err)?;
    for r in results {
        for rate in &r.rates {
            w.write_record([
                r.cell.imbalance.to_string(),
                r.cell.prognosis.to_string(),
                rate.statistic.name().to_string(),
                rate.rejection_rate.to_string(),
                rate.mc_standard_error.to_string(),
                r.standardized_bias.to_string(),
                r.replicates.to_string(),
                r.permutations_per_replicate.to_string(),
                (r.cell.imbalanced_covariate + 1).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

fn facet_label(covariate: usize, imbalance: f64) -> String {
    format!("X{} imbalance {}", covariate + 1, imbalance)
}

/// Long format: one row per facet, x position and series.
pub fn plot_data(results: &[PowerStudyResult], delimiter: u8) -> Result<Vec<u8>> {
    let mut w = writer(delimiter);
    w.write_record([
        "facet",
        "imbalanced_covariate",
        "imbalance",
        "prognosis",
        "series",
        "value",
        "mc_se",
    ])
    .map_err(csv_err)?;
    for r in results {
        let facet = facet_label(r.cell.imbalanced_covariate, r.cell.imbalance);
        let mut row = |series: &str, value: f64, se: f64| {
            w.write_record([
                facet.clone(),
                (r.cell.imbalanced_covariate + 1).to_string(),
                r.cell.imbalance.to_string(),
                r.cell.prognosis.to_string(),
                series.to_string(),
                value.to_string(),
                se.to_string(),
            ])
        };
        for rate in &r.rates {
            row(rate.statistic.name(), rate.rejection_rate, rate.mc_standard_error).map_err(csv_err)?;
        }
        row("std_bias", r.standardized_bias, r.bias_mc_standard_error).map_err(csv_err)?;
    }
    finish(w)
}

pub struct Facet {
    pub file_stem: String,
    pub svg: String,
}

const COLORS: [&str; 4] = ["#1b6ca8", "#d1495b", "#2e933c", "#555555"];

/// One SVG per (imbalanced covariate, imbalance level): rejection rate and
/// standardized bias against prognosis.
pub fn facet_svgs(results: &[PowerStudyResult]) -> Vec<Facet> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for r in results {
        let k = (r.cell.imbalanced_covariate, r.cell.imbalance);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(cov, imb)| {
            let mut cells: Vec<&PowerStudyResult> = results
                .iter()
                .filter(|r| r.cell.imbalanced_covariate == cov && r.cell.imbalance == imb)
                .collect();
            cells.sort_by(|a, b| a.cell.prognosis.total_cmp(&b.cell.prognosis));
            Facet {
                file_stem: format!("facet_x{}_imbalance_{}", cov + 1, imb),
                svg: render_facet(&facet_label(cov, imb), &cells),
            }
        })
        .collect()
}

fn render_facet(title: &str, cells: &[&PowerStudyResult]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const L: f64 = 56.0;
    const R: f64 = 120.0;
    const T: f64 = 32.0;
    const B: f64 = 44.0;

    let xs: Vec<f64> = cells.iter().map(|c| c.cell.prognosis).collect();
    let (x0, mut x1) = (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let bias_min = cells.iter().map(|c| c.standardized_bias).fold(0.0, f64::min);
    let bias_max = cells.iter().map(|c| c.standardized_bias).fold(1.0, f64::max);
    let (y0, y1) = (bias_min.min(0.0), bias_max.max(1.0));
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#,
        (L + W - R) / 2.0
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{L:.1} {T:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            L - 6.0,
            py(y) + 4.0
        );
    }
    for &x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            px(x),
            H - B + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">prognosis</text>"#,
        (L + W - R) / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(14 {:.1}) rotate(-90)" text-anchor="middle">rejection rate</text>"#,
        (T + H - B) / 2.0
    );
    if let Some(alpha) = cells.first().map(|c| c.alpha) {
        let _ = writeln!(
            s,
            r##"<line x1="{L:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#999999" stroke-dasharray="2 3"/>"##,
            W - R,
            py(alpha),
            py(alpha)
        );
    }
    if y0 < 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{L:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#bbbbbb"/>"##,
            W - R,
            py(0.0),
            py(0.0)
        );
    }

    let mut series: Vec<(String, Vec<f64>, bool)> = Vec::new();
    if let Some(first) = cells.first() {
        for (k, rate) in first.rates.iter().enumerate() {
            let ys = cells.iter().map(|c| c.rates[k].rejection_rate).collect();
            series.push((rate.statistic.name().to_string(), ys, false));
        }
    }
    series.push((
        "std bias".to_string(),
        cells.iter().map(|c| c.standardized_bias).collect(),
        true,
    ));

    for (k, (name, ys, dashed)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let dash = if *dashed { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            points.join(" ")
        );
        let ly = T + 14.0 * k as f64 + 6.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            W - R + 10.0,
            W - R + 30.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, W - R + 36.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}
