//! Command-line front end. Four subcommands: `estimate` runs the subsample
//! residual regression on CSV data, `simulate` drives the built-in Monte
//! Carlo designs, `demo` prints the usual-OLS contamination demonstration,
//! and `weights` exports per-observation weights.
//!
//! Exit codes: 0 success, 2 input or validation problem, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};

use crate::data::Dataset;
use crate::error::{HetfxError, Result};
use crate::estimators::{estimate, overlap_weights, subsample_mask, CenteringVariant};
use crate::inference::{asy_covariance, asy_variance, bootstrap_se};
use crate::pipeline::{fit_propensity, PipelineConfig, PropensityConfig};
use crate::propensity::MnlSpec;
use crate::report::{
    covariances_to_csv, dataset_to_csv, estimate_to_csv, fmt_sig, mc_to_csv, render_demo,
    render_estimate, render_mc_table, to_json_pretty, write_file, CovarianceBlock, EstimateReport,
    EstimateRow,
};
use crate::seeding::derive_seed;
use crate::simulation::{
    generate, run_monte_carlo, usual_ols_demo, DgpFamily, DgpSpec, McConfig, Table,
};

const VARIANT_HELP: &str = "Variant mapping: raw = center the outcome at its subsample mean; \
covpoly = residualize on a degree-q covariate polynomial; indexpoly = residualize on a degree-q \
polynomial in the fitted treatment-model indices (recommended, robust to a misspecified \
treatment model).";

#[derive(Parser)]
#[command(
    name = "hetfx",
    about = "Heterogeneous multiple-treatment effects via subsample least squares on propensity-score residuals",
    after_help = VARIANT_HELP,
    version
)]
struct Cli {
    /// Worker threads for parallel sections (falls back to HETFX_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-category effects from a CSV file.
    Estimate(EstimateArgs),
    /// Run a panel of the built-in simulation study.
    Simulate(SimulateArgs),
    /// Show that the usual multi-dummy OLS estimates contaminated averages.
    Demo(DemoArgs),
    /// Export overlap weights (and contamination weights on discrete data).
    Weights(WeightsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelChoice {
    OrderedProbit,
    Mnl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatChoice {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeChoice {
    Asymptotic,
    Bootstrap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableChoice {
    Ordinal,
    Multinomial,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV (header row required, no missing values in bound columns).
    #[arg(long)]
    input: PathBuf,
    /// Outcome column name.
    #[arg(long)]
    outcome: String,
    /// Treatment column name, integer-coded from 0.
    #[arg(long)]
    treatment: String,
    /// Covariate column names, comma separated.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Number of non-control categories; inferred from the data when absent.
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long, value_enum, default_value = "ordered-probit")]
    model: ModelChoice,
    /// Centering variants to run (comma separated): raw, covpoly, indexpoly.
    #[arg(long = "variant", value_delimiter = ',', default_value = "indexpoly")]
    variants: Vec<String>,
    /// Polynomial order of the centering basis.
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Target categories, comma separated.
    #[arg(long = "d-targets", value_delimiter = ',', default_value = "1")]
    d_targets: Vec<usize>,
    #[arg(long, value_enum, default_value = "asymptotic")]
    se: SeChoice,
    /// Bootstrap replicates when --se bootstrap.
    #[arg(long, default_value_t = 200)]
    bootstrap_b: usize,
    /// Seed for the bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    output: FormatChoice,
    /// Report file; when --output csv and several targets are requested, a
    /// sibling <out>.cov.csv holds the joint covariance matrices.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    table: TableChoice,
    /// Panel 1..=4: correct model; wrong error distribution; wrong
    /// regression function; both wrong.
    #[arg(long)]
    panel: u8,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Repetitions (desk-scale default; see --full).
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Full-fidelity mode: 5000 repetitions.
    #[arg(long, default_value_t = false)]
    full: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long = "variant", value_delimiter = ',', default_value = "raw,covpoly,indexpoly")]
    variants: Vec<String>,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long = "d-targets", value_delimiter = ',', default_value = "1,2")]
    d_targets: Vec<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    output: FormatChoice,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the first repetition's generated sample to this CSV.
    #[arg(long)]
    emit_data: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long, value_enum, default_value = "ordered-probit")]
    model: ModelChoice,
    /// Target category for the overlap weights.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Also export contamination weights (discrete covariates only).
    #[arg(long, default_value_t = false)]
    contamination: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("HETFX_THREADS").ok().and_then(|s| s.parse().ok()));
    let result = match threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(HetfxError::InvalidConfig(format!("thread pool: {e}"))),
        },
        _ => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Demo(args) => cmd_demo(args),
        Command::Weights(args) => cmd_weights(args),
    }
}

fn read_dataset(
    input: &Path,
    outcome: &str,
    treatment: &str,
    covariates: &[String],
    categories: Option<usize>,
) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(input)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HetfxError::InvalidData(format!("column '{name}' not found in {input:?}")))
    };
    let y_col = col(outcome)?;
    let d_col = col(treatment)?;
    let x_cols: Vec<usize> = covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut x_flat = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = row_idx + 2; // 1-based, after the header
        let parse_f64 = |col: usize, name: &str| -> Result<f64> {
            record
                .get(col)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    HetfxError::InvalidData(format!(
                        "column '{name}', row {row_no}: expected a finite number, got '{}'",
                        record.get(col).unwrap_or("")
                    ))
                })
        };
        y.push(parse_f64(y_col, outcome)?);
        let d_raw = parse_f64(d_col, treatment)?;
        if d_raw < 0.0 || d_raw.fract() != 0.0 {
            return Err(HetfxError::InvalidData(format!(
                "column '{treatment}', row {row_no}: treatment must be integer-coded from 0, got {d_raw}"
            )));
        }
        d.push(d_raw as usize);
        for (&c, name) in x_cols.iter().zip(covariates) {
            x_flat.push(parse_f64(c, name)?);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(HetfxError::InvalidData("no data rows".into()));
    }
    let j = match categories {
        Some(j) => j,
        None => *d.iter().max().unwrap_or(&0),
    };
    if let Some(&bad) = d.iter().find(|&&v| v > j) {
        return Err(HetfxError::OutOfRangeCategory { found: bad, max: j });
    }
    let x = Array2::from_shape_vec((n, covariates.len()), x_flat)
        .map_err(|e| HetfxError::InvalidData(e.to_string()))?;
    Dataset::new(Array1::from(y), d, x, j)
}

fn model_config(choice: ModelChoice, ds: &Dataset) -> PropensityConfig {
    match choice {
        ModelChoice::OrderedProbit => PropensityConfig::OrderedProbit { with_intercept: true },
        ModelChoice::Mnl => {
            PropensityConfig::Mnl { spec: MnlSpec::standard(ds.j(), ds.x().ncols()) }
        }
    }
}

fn model_label(choice: ModelChoice) -> &'static str {
    match choice {
        ModelChoice::OrderedProbit => "ordered-probit",
        ModelChoice::Mnl => "mnl",
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let ds = read_dataset(&args.input, &args.outcome, &args.treatment, &args.covariates, args.categories)?;
    let variants: Vec<CenteringVariant> = args
        .variants
        .iter()
        .map(|s| CenteringVariant::parse(s, args.q))
        .collect::<Result<_>>()?;
    for &d in &args.d_targets {
        if d < 1 || d > ds.j() {
            return Err(HetfxError::BadCategory(d));
        }
    }
    let model = model_config(args.model, &ds);
    let fit = fit_propensity(&ds, &model)?;

    let mut rows = Vec::new();
    let mut covariances = Vec::new();
    for &variant in &variants {
        let mut ests = Vec::new();
        for &d in &args.d_targets {
            let mut est = estimate(&ds, &fit, d, variant)?;
            let se = match args.se {
                SeChoice::Asymptotic => asy_variance(&est, &fit, &ds)?.asy_sd,
                SeChoice::Bootstrap => {
                    let cfg = PipelineConfig { model: model.clone(), variant, d };
                    let boot = bootstrap_se(&ds, &cfg, args.bootstrap_b, args.seed)?;
                    if boot.high_drop_rate {
                        eprintln!(
                            "warning: {} of {} bootstrap replicates failed",
                            boot.dropped, args.bootstrap_b
                        );
                    }
                    boot.se
                }
            };
            est.asy_sd = Some(se);
            rows.push(EstimateRow::new(
                d,
                variant.label(),
                est.beta_hat,
                se,
                match args.se {
                    SeChoice::Asymptotic => "asymptotic",
                    SeChoice::Bootstrap => "bootstrap",
                },
                est.n_sub,
                &est.diagnostics,
            ));
            ests.push(est);
        }
        if ests.len() >= 2 {
            let refs: Vec<&_> = ests.iter().collect();
            let cov = asy_covariance(&refs, &fit, &ds)?;
            covariances.push(CovarianceBlock {
                variant: variant.label().to_string(),
                d: args.d_targets.clone(),
                matrix: (0..cov.cov.nrows())
                    .map(|i| cov.cov.row(i).to_vec())
                    .collect(),
                wald: cov.wald,
            });
        }
    }

    let report = EstimateReport {
        n: ds.n(),
        model: model_label(args.model).to_string(),
        rows,
        covariances,
    };
    print!("{}", render_estimate(&report));
    if let Some(out) = &args.out {
        match args.output {
            FormatChoice::Json => write_file(out, |w| to_json_pretty(&report, w))?,
            FormatChoice::Csv => {
                write_file(out, |w| estimate_to_csv(&report, w))?;
                if !report.covariances.is_empty() {
                    let cov_path = out.with_extension("cov.csv");
                    write_file(&cov_path, |w| covariances_to_csv(&report.covariances, w))?;
                }
            }
        }
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn family_cov_names(family: DgpFamily) -> Vec<String> {
    match family {
        DgpFamily::OrdinalBinaryX => vec!["const".into(), "x2".into()],
        DgpFamily::OrdinalContinuous => vec!["x2".into(), "x3".into()],
        DgpFamily::Multinomial | DgpFamily::MultinomialAbs => {
            vec!["x0".into(), "x1".into(), "x2".into(), "x3".into()]
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let table = match args.table {
        TableChoice::Ordinal => Table::Ordinal,
        TableChoice::Multinomial => Table::Multinomial,
    };
    let reps = if args.full { 5000 } else { args.reps };
    let spec = DgpSpec::from_panel(table, args.panel, args.n, args.seed)?;
    if let Some(path) = &args.emit_data {
        let mut first = spec.clone();
        first.seed = derive_seed(args.seed, 0);
        let sample = generate(&first)?;
        let names = family_cov_names(spec.family);
        write_file(path, |w| dataset_to_csv(&sample.dataset, &names, w))?;
        println!("sample written to {}", path.display());
    }
    let variants: Vec<CenteringVariant> = args
        .variants
        .iter()
        .map(|s| CenteringVariant::parse(s, args.q))
        .collect::<Result<_>>()?;
    let cfg = McConfig { spec, variants, d_targets: args.d_targets.clone(), reps };
    let mut report = run_monte_carlo(&cfg)?;
    report.table = Some(table.label().to_string());
    report.panel = Some(args.panel);
    print!("{}", render_mc_table(&report));
    if let Some(out) = &args.out {
        match args.output {
            FormatChoice::Json => write_file(out, |w| to_json_pretty(&report, w))?,
            FormatChoice::Csv => write_file(out, |w| mc_to_csv(&report, w))?,
        }
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn cmd_demo(args: DemoArgs) -> Result<()> {
    let report = usual_ols_demo(args.n, args.seed)?;
    print!("{}", render_demo(&report));
    if let Some(out) = &args.out {
        write_file(out, |w| to_json_pretty(&report, w))?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> Result<()> {
    let ds = read_dataset(&args.input, &args.outcome, &args.treatment, &args.covariates, args.categories)?;
    if args.d < 1 || args.d > ds.j() {
        return Err(HetfxError::BadCategory(args.d));
    }
    let model = model_config(args.model, &ds);
    let fit = fit_propensity(&ds, &model)?;
    let mask = subsample_mask(&ds, args.d)?;
    let ow = overlap_weights(&fit, args.d, &mask)?;

    let contamination = if args.contamination {
        let cells = crate::contamination::CellPartition::from_covariate_rows(ds.x())?;
        let cov = crate::contamination::ConditionalCov::from_data(&ds, &cells)?;
        Some(crate::contamination::contamination_weights(&cov)?)
    } else {
        None
    };

    // Quantile summary of the overlap weights.
    let mut sorted = ow.w.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    println!(
        "overlap weights over the D in {{0,{}}} subsample (n_sub = {}): min {} q1 {} median {} q3 {} max {}",
        args.d,
        mask.len(),
        fmt_sig(q(0.0), 6),
        fmt_sig(q(0.25), 6),
        fmt_sig(q(0.5), 6),
        fmt_sig(q(0.75), 6),
        fmt_sig(q(1.0), 6),
    );

    let write_weights = |w: &mut dyn std::io::Write| -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let j = ds.j();
        let mut header = vec!["obs".to_string(), "d".to_string(), "in_pair".to_string(), "overlap_w".to_string()];
        if contamination.is_some() {
            for k in 1..=j {
                for jj in 1..=j {
                    header.push(format!("omega_{k}_{jj}"));
                }
            }
        }
        wtr.write_record(&header)?;
        let mut in_pair_pos = vec![None; ds.n()];
        for (pos, &i) in ow.index.iter().enumerate() {
            in_pair_pos[i] = Some(pos);
        }
        for i in 0..ds.n() {
            let mut rec = vec![i.to_string(), ds.d()[i].to_string()];
            match in_pair_pos[i] {
                Some(pos) => {
                    rec.push("1".into());
                    rec.push(format!("{}", ow.w[pos]));
                }
                None => {
                    rec.push("0".into());
                    rec.push(String::new());
                }
            }
            if let Some(cw) = &contamination {
                let omega = cw.omega_at(i).expect("weights built from data");
                for k in 0..j {
                    for jj in 0..j {
                        rec.push(format!("{}", omega[[k, jj]]));
                    }
                }
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    };
    match &args.out {
        Some(out) => {
            write_file(out, write_weights)?;
            println!("weights written to {}", out.display());
        }
        None => write_weights(&mut std::io::stdout())?,
    }
    Ok(())
}
