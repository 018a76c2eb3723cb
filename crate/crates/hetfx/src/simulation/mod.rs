//! Built-in simulation designs: two ordinal designs driven by a latent index
//! with cutoffs at 0 and 1, and a three-category multinomial design with
//! alternative-specific indices. Each design carries closed-form true
//! category probabilities and true heterogeneous effects, so the harness can
//! measure bias against a per-sample overlap-weighted truth.

mod harness;

pub use harness::{run_monte_carlo, McConfig, McRow, MonteCarloReport};

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::contamination::{
    contamination_estimand_cells, contamination_weights, ConditionalCov,
};
use crate::data::Dataset;
use crate::error::{HetfxError, Result};
use crate::pipeline::PropensityConfig;
use crate::propensity::{MnlSpec, WElem};
use crate::regress::{fit_ols, DesignMatrix};

/// Which design generates the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DgpFamily {
    /// Ordinal treatment driven by a binary covariate; the design used to
    /// demonstrate the contamination of the usual multi-dummy OLS.
    OrdinalBinaryX,
    /// Ordinal treatment with one normal and one uniform covariate.
    OrdinalContinuous,
    /// Three-category logit with alternative-specific regressors.
    Multinomial,
    /// Same indices, but category probabilities proportional to their
    /// absolute values: a grossly non-logit distribution.
    MultinomialAbs,
}

impl DgpFamily {
    pub fn label(&self) -> &'static str {
        match self {
            DgpFamily::OrdinalBinaryX => "ordinal-binary-x",
            DgpFamily::OrdinalContinuous => "ordinal",
            DgpFamily::Multinomial => "multinomial",
            DgpFamily::MultinomialAbs => "multinomial-abs",
        }
    }
}

/// Latent-error distribution for the ordinal designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorDist {
    Normal,
    /// Chi-squared with 3 degrees of freedom, standardized to mean zero and
    /// unit variance; an ordered probit then misspecifies the distribution.
    StdChi3,
}

impl ErrorDist {
    pub fn label(&self) -> &'static str {
        match self {
            ErrorDist::Normal => "normal",
            ErrorDist::StdChi3 => "stdchi3",
        }
    }
}

/// A fully pinned-down simulation design.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub family: DgpFamily,
    pub error_dist: ErrorDist,
    /// When set, the data-generating index contains a term the fitted
    /// treatment model omits: x2^2 with slope one in the ordinal design, and
    /// an exp(x3) regressor with slopes (2, 2) in the multinomial design.
    pub regression_misspec: bool,
    pub n: usize,
    pub seed: u64,
}

/// The two built-in simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Ordinal,
    Multinomial,
}

impl Table {
    pub fn label(&self) -> &'static str {
        match self {
            Table::Ordinal => "ordinal",
            Table::Multinomial => "multinomial",
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(HetfxError::InvalidSpecCombination("need at least 10 observations".into()));
        }
        match self.family {
            DgpFamily::OrdinalBinaryX => {
                if self.error_dist != ErrorDist::Normal || self.regression_misspec {
                    return Err(HetfxError::InvalidSpecCombination(
                        "the binary-covariate ordinal design has no error or regression variants".into(),
                    ));
                }
            }
            DgpFamily::OrdinalContinuous => {}
            DgpFamily::Multinomial | DgpFamily::MultinomialAbs => {
                if self.error_dist != ErrorDist::Normal {
                    return Err(HetfxError::InvalidSpecCombination(
                        "multinomial designs carry their own error structure; distribution misspecification is the abs-value family".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Panel layout of the two simulation studies: (1) correct model,
    /// (2) wrong error distribution, (3) wrong regression function,
    /// (4) both wrong.
    pub fn from_panel(table: Table, panel: u8, n: usize, seed: u64) -> Result<Self> {
        let (family, error_dist, misspec) = match (table, panel) {
            (Table::Ordinal, 1) => (DgpFamily::OrdinalContinuous, ErrorDist::Normal, false),
            (Table::Ordinal, 2) => (DgpFamily::OrdinalContinuous, ErrorDist::StdChi3, false),
            (Table::Ordinal, 3) => (DgpFamily::OrdinalContinuous, ErrorDist::Normal, true),
            (Table::Ordinal, 4) => (DgpFamily::OrdinalContinuous, ErrorDist::StdChi3, true),
            (Table::Multinomial, 1) => (DgpFamily::Multinomial, ErrorDist::Normal, false),
            (Table::Multinomial, 2) => (DgpFamily::MultinomialAbs, ErrorDist::Normal, false),
            (Table::Multinomial, 3) => (DgpFamily::Multinomial, ErrorDist::Normal, true),
            (Table::Multinomial, 4) => (DgpFamily::MultinomialAbs, ErrorDist::Normal, true),
            (_, p) => {
                return Err(HetfxError::InvalidSpecCombination(format!(
                    "panel must be 1..=4, got {p}"
                )))
            }
        };
        let spec = DgpSpec { family, error_dist, regression_misspec: misspec, n, seed };
        spec.validate()?;
        Ok(spec)
    }
}

/// A generated sample along with the quantities only a simulation knows.
#[derive(Debug, Clone)]
pub struct SimulatedSample {
    pub dataset: Dataset,
    /// Closed-form category probabilities of the generating process.
    pub true_probs: Array2<f64>,
    /// True heterogeneous effects, one column per non-control category.
    pub true_mu: Array2<f64>,
    /// True index functions (one column for ordinal designs, one per
    /// alternative for multinomial ones).
    pub true_indices: Array2<f64>,
    /// Control-arm potential outcome.
    pub y0: Array1<f64>,
}

/// Standardize raw chi-squared(3) draws to mean zero and unit variance.
pub fn standardize_chi3(draws: &[f64]) -> Vec<f64> {
    draws.iter().map(|x| (x - 3.0) / 6.0_f64.sqrt()).collect()
}

fn draw_error(rng: &mut ChaCha8Rng, dist: ErrorDist) -> f64 {
    match dist {
        ErrorDist::Normal => StandardNormal.sample(rng),
        ErrorDist::StdChi3 => {
            let mut s = 0.0;
            for _ in 0..3 {
                let z: f64 = StandardNormal.sample(rng);
                s += z * z;
            }
            (s - 3.0) / 6.0_f64.sqrt()
        }
    }
}

/// CDF of the (possibly standardized chi-squared) latent error.
fn error_cdf(dist: ErrorDist, t: f64) -> f64 {
    match dist {
        ErrorDist::Normal => Normal::new(0.0, 1.0).unwrap().cdf(t),
        ErrorDist::StdChi3 => {
            let raw = t * 6.0_f64.sqrt() + 3.0;
            if raw <= 0.0 {
                0.0
            } else {
                ChiSquared::new(3.0).unwrap().cdf(raw)
            }
        }
    }
}

/// Category probabilities at latent index z with cutoffs 0 and 1.
fn ordinal_probs(dist: ErrorDist, z: f64) -> [f64; 3] {
    let f0 = error_cdf(dist, 0.0 - z);
    let f1 = error_cdf(dist, 1.0 - z);
    [f0, f1 - f0, 1.0 - f1]
}

/// Exact category probabilities of the binary-covariate ordinal design,
/// whose latent error has standard deviation one half.
pub fn ordinal_binary_cell_probs(x2: f64) -> [f64; 3] {
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let f0 = n01.cdf((0.0 - x2) / 0.5);
    let f1 = n01.cdf((1.0 - x2) / 0.5);
    [f0, f1 - f0, 1.0 - f1]
}

/// Index layout of the multinomial design: one alternative-varying regressor
/// per category and an alternative-constant regressor with distinct slopes.
pub fn multinomial_w_spec() -> MnlSpec {
    MnlSpec::new(vec![
        vec![WElem::NegX(0), WElem::X(1), WElem::Zero, WElem::X(3), WElem::Zero],
        vec![WElem::NegX(0), WElem::Zero, WElem::X(2), WElem::Zero, WElem::X(3)],
    ])
    .expect("static layout is well formed")
}

/// The treatment model the estimation pipeline fits for each design. For the
/// misspecified variants this is exactly the model that omits the extra term.
pub fn estimator_propensity_config(family: DgpFamily) -> PropensityConfig {
    match family {
        // The binary-covariate design already carries a constant column.
        DgpFamily::OrdinalBinaryX => PropensityConfig::OrderedProbit { with_intercept: false },
        DgpFamily::OrdinalContinuous => PropensityConfig::OrderedProbit { with_intercept: true },
        DgpFamily::Multinomial | DgpFamily::MultinomialAbs => {
            PropensityConfig::Mnl { spec: multinomial_w_spec() }
        }
    }
}

/// Draw one sample from the design.
pub fn generate(spec: &DgpSpec) -> Result<SimulatedSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    match spec.family {
        DgpFamily::OrdinalBinaryX => {
            let mut x = Array2::zeros((n, 2));
            let mut d = Vec::with_capacity(n);
            let mut y = Array1::zeros(n);
            let mut y0 = Array1::zeros(n);
            let mut probs = Array2::zeros((n, 3));
            let mut mu = Array2::zeros((n, 2));
            let mut indices = Array2::zeros((n, 1));
            for i in 0..n {
                let u: f64 = rng.random();
                let x2 = if u < 0.7 { 1.0 } else { 0.0 };
                let eps: f64 = { let z: f64 = StandardNormal.sample(&mut rng); 0.5 * z };
                let latent = x2 + eps;
                let di = (latent >= 0.0) as usize + (latent >= 1.0) as usize;
                let uo: f64 = StandardNormal.sample(&mut rng);
                let y0i = 1.0 + x2 + uo;
                x[[i, 0]] = 1.0;
                x[[i, 1]] = x2;
                let p = ordinal_binary_cell_probs(x2);
                probs[[i, 0]] = p[0];
                probs[[i, 1]] = p[1];
                probs[[i, 2]] = p[2];
                mu[[i, 0]] = x2;
                mu[[i, 1]] = 2.0 * x2;
                indices[[i, 0]] = x2;
                y0[i] = y0i;
                y[i] = y0i + di as f64 * x2;
                d.push(di);
            }
            let dataset = Dataset::new(y, d, x, 2)?;
            Ok(SimulatedSample { dataset, true_probs: probs, true_mu: mu, true_indices: indices, y0 })
        }
        DgpFamily::OrdinalContinuous => {
            let mut x = Array2::zeros((n, 2));
            let mut d = Vec::with_capacity(n);
            let mut y = Array1::zeros(n);
            let mut y0 = Array1::zeros(n);
            let mut probs = Array2::zeros((n, 3));
            let mut mu = Array2::zeros((n, 2));
            let mut indices = Array2::zeros((n, 1));
            for i in 0..n {
                let x2: f64 = StandardNormal.sample(&mut rng);
                let x3: f64 = 2.0 * rng.random::<f64>();
                let eps = draw_error(&mut rng, spec.error_dist);
                let idx = x2 + x3 + if spec.regression_misspec { x2 * x2 } else { 0.0 };
                let latent = idx + eps;
                let di = (latent >= 0.0) as usize + (latent >= 1.0) as usize;
                let uo: f64 = StandardNormal.sample(&mut rng);
                let y0i = 1.0 + x2 + x3 + uo;
                x[[i, 0]] = x2;
                x[[i, 1]] = x3;
                let p = ordinal_probs(spec.error_dist, idx);
                probs[[i, 0]] = p[0];
                probs[[i, 1]] = p[1];
                probs[[i, 2]] = p[2];
                mu[[i, 0]] = x3;
                mu[[i, 1]] = 2.0 * x3;
                indices[[i, 0]] = idx;
                y0[i] = y0i;
                y[i] = y0i + di as f64 * x3;
                d.push(di);
            }
            let dataset = Dataset::new(y, d, x, 2)?;
            Ok(SimulatedSample { dataset, true_probs: probs, true_mu: mu, true_indices: indices, y0 })
        }
        DgpFamily::Multinomial | DgpFamily::MultinomialAbs => {
            let abs_variant = spec.family == DgpFamily::MultinomialAbs;
            let mut x = Array2::zeros((n, 4));
            let mut d = Vec::with_capacity(n);
            let mut y = Array1::zeros(n);
            let mut y0 = Array1::zeros(n);
            let mut probs = Array2::zeros((n, 3));
            let mut mu = Array2::zeros((n, 2));
            let mut indices = Array2::zeros((n, 2));
            for i in 0..n {
                let x0: f64 = StandardNormal.sample(&mut rng);
                let x1: f64 = StandardNormal.sample(&mut rng);
                let x2: f64 = StandardNormal.sample(&mut rng);
                let x3: f64 = 2.0 * rng.random::<f64>();
                let (i1, i2) = if spec.regression_misspec {
                    let e3 = x3.exp();
                    (-x0 + x1 + x3 + 2.0 * e3, -x0 + x2 + x3 + 2.0 * e3)
                } else {
                    (-x0 + x1 + x3, -x0 + x2 + 2.0 * x3)
                };
                let (p0, p1, p2) = if abs_variant {
                    let denom = 1.0 + i1.abs() + i2.abs();
                    (1.0 / denom, i1.abs() / denom, i2.abs() / denom)
                } else {
                    let m = i1.max(i2).max(0.0);
                    let e0 = (-m).exp();
                    let e1 = (i1 - m).exp();
                    let e2 = (i2 - m).exp();
                    let denom = e0 + e1 + e2;
                    (e0 / denom, e1 / denom, e2 / denom)
                };
                let u: f64 = rng.random();
                let di = if u < p0 {
                    0
                } else if u < p0 + p1 {
                    1
                } else {
                    2
                };
                let uo: f64 = StandardNormal.sample(&mut rng);
                let y0i = 1.0 + x3 + uo;
                x[[i, 0]] = x0;
                x[[i, 1]] = x1;
                x[[i, 2]] = x2;
                x[[i, 3]] = x3;
                probs[[i, 0]] = p0;
                probs[[i, 1]] = p1;
                probs[[i, 2]] = p2;
                mu[[i, 0]] = x3;
                mu[[i, 1]] = 2.0 * x3;
                indices[[i, 0]] = i1;
                indices[[i, 1]] = i2;
                y0[i] = y0i;
                y[i] = y0i + di as f64 * x3;
                d.push(di);
            }
            let dataset = Dataset::new(y, d, x, 2)?;
            Ok(SimulatedSample { dataset, true_probs: probs, true_mu: mu, true_indices: indices, y0 })
        }
    }
}

/// Side-by-side demonstration that the usual multi-dummy OLS estimates the
/// contaminated weight average, not the naive per-category means.
#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub n: usize,
    pub seed: u64,
    pub labels: Vec<String>,
    /// OLS of the outcome on (1, D1, D2, X2).
    pub ols_coef: Vec<f64>,
    pub ols_t: Vec<f64>,
    /// Estimand implied by the contamination weights with exact cell
    /// probabilities.
    pub estimand: Vec<f64>,
    /// What one would naively hope the regression estimates.
    pub naive: Vec<f64>,
    /// Sample means of the weight matrix entries (identity in expectation).
    pub weight_means: Vec<Vec<f64>>,
}

pub fn usual_ols_demo(n: usize, seed: u64) -> Result<DemoReport> {
    let spec = DgpSpec {
        family: DgpFamily::OrdinalBinaryX,
        error_dist: ErrorDist::Normal,
        regression_misspec: false,
        n,
        seed,
    };
    let sample = generate(&spec)?;
    let ds = &sample.dataset;
    let dummies = ds.dummies();
    let mut columns = Array2::zeros((ds.n(), 4));
    columns.column_mut(0).assign(&ds.x().column(0));
    columns.column_mut(1).assign(&dummies.column(0));
    columns.column_mut(2).assign(&dummies.column(1));
    columns.column_mut(3).assign(&ds.x().column(1));
    let labels = vec!["const".into(), "D1".into(), "D2".into(), "x2".into()];
    let design = DesignMatrix::new(columns, labels.clone())?;
    let fit = fit_ols(&design, ds.y())?;
    let se = fit.classical_se();
    let ols_t = fit.coef.iter().zip(se.iter()).map(|(c, s)| c / s).collect();

    let cell_probs = vec![
        ordinal_binary_cell_probs(0.0).to_vec(),
        ordinal_binary_cell_probs(1.0).to_vec(),
    ];
    let cov = ConditionalCov::from_exact(&[0.3, 0.7], &cell_probs)?;
    let weights = contamination_weights(&cov)?;
    let mu_by_cell = ndarray::array![[0.0, 0.0], [1.0, 2.0]];
    let estimand = contamination_estimand_cells(&weights, &mu_by_cell)?;

    Ok(DemoReport {
        n,
        seed,
        labels,
        ols_coef: fit.coef.to_vec(),
        ols_t,
        estimand: estimand.to_vec(),
        naive: vec![1.0, 0.7, 1.4, 1.0],
        weight_means: vec![
            weights.weight_means.row(0).to_vec(),
            weights.weight_means.row(1).to_vec(),
        ],
    })
}
