//! Report structures and their CSV/JSON renderings. Files carry full
//! round-trip precision; the human tables round to six significant digits.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::Result;
use crate::estimators::PropensityDiagnostics;
use crate::simulation::{DemoReport, MonteCarloReport};

/// Format with `sig` significant digits for human-facing tables.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let dec = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{x:.dec$}")
}

/// Shortest representation that parses back to the same bits.
fn full(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub d: usize,
    pub variant: String,
    pub beta: f64,
    pub se: f64,
    pub t_value: f64,
    pub se_method: String,
    pub n_sub: usize,
    pub pi_min: f64,
    pub pi_median: f64,
    pub pi_max: f64,
    pub n_pi_below_001: usize,
    pub n_pi_above_099: usize,
}

impl EstimateRow {
    pub fn new(
        d: usize,
        variant: &str,
        beta: f64,
        se: f64,
        se_method: &str,
        n_sub: usize,
        diag: &PropensityDiagnostics,
    ) -> Self {
        Self {
            d,
            variant: variant.to_string(),
            beta,
            se,
            t_value: beta / se,
            se_method: se_method.to_string(),
            n_sub,
            pi_min: diag.min,
            pi_median: diag.median,
            pi_max: diag.max,
            n_pi_below_001: diag.n_below_001,
            n_pi_above_099: diag.n_above_099,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceBlock {
    pub variant: String,
    pub d: Vec<usize>,
    /// Covariance matrix of sqrt(N) times the estimation errors.
    pub matrix: Vec<Vec<f64>>,
    pub wald: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub model: String,
    pub rows: Vec<EstimateRow>,
    pub covariances: Vec<CovarianceBlock>,
}

pub fn estimate_to_csv(report: &EstimateReport, w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "d",
        "variant",
        "beta",
        "se",
        "t_value",
        "se_method",
        "n_sub",
        "pi_min",
        "pi_median",
        "pi_max",
        "n_pi_below_001",
        "n_pi_above_099",
    ])?;
    for r in &report.rows {
        wtr.write_record([
            r.d.to_string(),
            r.variant.clone(),
            full(r.beta),
            full(r.se),
            full(r.t_value),
            r.se_method.clone(),
            r.n_sub.to_string(),
            full(r.pi_min),
            full(r.pi_median),
            full(r.pi_max),
            r.n_pi_below_001.to_string(),
            r.n_pi_above_099.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Long-format covariance file: one row per matrix entry plus one Wald row
/// per block.
pub fn covariances_to_csv(blocks: &[CovarianceBlock], w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["variant", "stat", "d_row", "d_col", "value"])?;
    for b in blocks {
        for (i, &di) in b.d.iter().enumerate() {
            for (j, &dj) in b.d.iter().enumerate() {
                wtr.write_record([
                    b.variant.clone(),
                    "cov".into(),
                    di.to_string(),
                    dj.to_string(),
                    full(b.matrix[i][j]),
                ])?;
            }
        }
        if let Some(wald) = b.wald {
            wtr.write_record([b.variant.clone(), "wald".into(), String::new(), String::new(), full(wald)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn mc_to_csv(report: &MonteCarloReport, w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["estimator", "d", "abs_bias", "sd", "sd_asy", "rmse"])?;
    for r in &report.rows {
        wtr.write_record([
            r.estimator.clone(),
            r.d.to_string(),
            full(r.abs_bias),
            full(r.sd),
            full(r.sd_asy),
            full(r.rmse),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T, w: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Write a dataset as CSV with the given covariate names.
pub fn dataset_to_csv(ds: &Dataset, cov_names: &[String], w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["y".to_string(), "d".to_string()];
    header.extend(cov_names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![full(ds.y()[i]), ds.d()[i].to_string()];
        for k in 0..ds.x().ncols() {
            rec.push(full(ds.x()[[i, k]]));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_file<F: FnOnce(&mut dyn Write) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    f(&mut file)?;
    Ok(())
}

pub fn render_mc_table(report: &MonteCarloReport) -> String {
    let mut out = String::new();
    let header = match (&report.table, report.panel) {
        (Some(t), Some(p)) => format!("simulation study: {t} design, panel {p}"),
        _ => format!("simulation study: {} design", report.family),
    };
    out.push_str(&format!(
        "{header}  (n = {}, reps = {}, failed = {}, seed = {})\n",
        report.n, report.reps, report.failed, report.seed
    ));
    out.push_str(&format!(
        "{:<10} {:>3} {:>10} {:>10} {:>10} {:>10}\n",
        "estimator", "d", "|bias|", "sd", "sd_asy", "rmse"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:<10} {:>3} {:>10} {:>10} {:>10} {:>10}\n",
            r.estimator,
            r.d,
            fmt_sig(r.abs_bias, 6),
            fmt_sig(r.sd, 6),
            fmt_sig(r.sd_asy, 6),
            fmt_sig(r.rmse, 6)
        ));
    }
    out
}

pub fn render_estimate(report: &EstimateReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("model: {}  (n = {})\n", report.model, report.n));
    out.push_str(&format!(
        "{:<3} {:<10} {:>12} {:>12} {:>9} {:>7}  {:>24} {:>9}\n",
        "d", "variant", "beta", "se", "t", "n_sub", "pair propensity (min/med/max)", "extreme"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:<3} {:<10} {:>12} {:>12} {:>9} {:>7}  {:>7}/{:>7}/{:>7} {:>6}\n",
            r.d,
            r.variant,
            fmt_sig(r.beta, 6),
            fmt_sig(r.se, 6),
            fmt_sig(r.t_value, 4),
            r.n_sub,
            fmt_sig(r.pi_min, 3),
            fmt_sig(r.pi_median, 3),
            fmt_sig(r.pi_max, 3),
            r.n_pi_below_001 + r.n_pi_above_099,
        ));
    }
    for b in &report.covariances {
        out.push_str(&format!("covariance ({}, targets {:?})", b.variant, b.d));
        if let Some(w) = b.wald {
            out.push_str(&format!(", joint Wald = {}", fmt_sig(w, 6)));
        }
        out.push('\n');
        for row in &b.matrix {
            out.push_str("  ");
            for v in row {
                out.push_str(&format!("{:>12} ", fmt_sig(*v, 6)));
            }
            out.push('\n');
        }
    }
    out
}

pub fn render_demo(report: &DemoReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "usual-OLS demonstration  (n = {}, seed = {})\n\n",
        report.n, report.seed
    ));
    out.push_str(&format!(
        "{:<8} {:>12} {:>10} {:>12} {:>14}\n",
        "column", "OLS coef", "t", "naive hope", "weight-implied"
    ));
    for (k, label) in report.labels.iter().enumerate() {
        let implied = match k {
            1 => fmt_sig(report.estimand[0], 6),
            2 => fmt_sig(report.estimand[1], 6),
            _ => "-".into(),
        };
        out.push_str(&format!(
            "{:<8} {:>12} {:>10} {:>12} {:>14}\n",
            label,
            fmt_sig(report.ols_coef[k], 6),
            fmt_sig(report.ols_t[k], 4),
            fmt_sig(report.naive[k], 6),
            implied,
        ));
    }
    out.push_str("\nThe dummy slopes track the weight-implied estimand, not the naive hope:\n");
    out.push_str(&format!(
        "slope gap for D1: |{} - {}| = {}\n",
        fmt_sig(report.ols_coef[1], 4),
        fmt_sig(report.naive[1], 4),
        fmt_sig((report.ols_coef[1] - report.naive[1]).abs(), 4)
    ));
    out
}
