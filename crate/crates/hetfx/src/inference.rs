//! Asymptotic inference for the subsample residual regression.
//!
//! The estimate solves a sample moment condition that also involves the
//! first-step treatment-model parameters, so its variance combines the
//! moment's own spread with a correction for first-step estimation noise:
//! a numerical derivative of the averaged moment with respect to the
//! treatment parameters, paired with the influence of the maximum-likelihood
//! scores. The centering coefficients need no correction because the moment's
//! derivative in them is zero at the truth, mirroring the orthogonality that
//! makes centering estimand-irrelevant.

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{HetfxError, Result};
use crate::estimators::{index_poly_basis, CenteringVariant, SubsampleEstimate};
use crate::linalg::{cholesky, cholesky_solve, solve_small};
use crate::pipeline::{run, PipelineConfig};
use crate::propensity::PropensityFit;
use crate::regress::take;
use crate::seeding::derive_seed;

/// Variance decomposition for one estimate.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    /// Asymptotic variance of sqrt(N) times the estimation error.
    pub omega_hat: f64,
    /// sqrt(omega_hat / N).
    pub asy_sd: f64,
    /// Derivative of the averaged moment in the treatment parameters.
    pub l_hat: Array1<f64>,
    /// Influence vectors of the treatment-model fit, one row per observation.
    pub eta: Array2<f64>,
    /// Standard deviation when first-step noise is ignored.
    pub asy_sd_no_first_step: f64,
}

/// Joint asymptotic covariance of several estimates on the same sample.
#[derive(Debug, Clone)]
pub struct CovarianceReport {
    /// Covariance matrix of sqrt(N) times the estimation errors.
    pub cov: Array2<f64>,
    /// Wald statistic for all targets jointly zero, when the matrix inverts.
    pub wald: Option<f64>,
}

/// Pair-propensity residuals on the subsample, at arbitrary treatment
/// parameters.
fn eps_at(est: &SubsampleEstimate, fit: &PropensityFit, ds: &Dataset, alpha: &Array1<f64>) -> Array1<f64> {
    let probs = fit.probs_at(alpha);
    let mut eps = Array1::zeros(est.mask.len());
    for (pos, &i) in est.mask.iter().enumerate() {
        let p0 = probs[[i, 0]];
        let pd = probs[[i, est.d]];
        let dummy = if ds.d()[i] == est.d { 1.0 } else { 0.0 };
        eps[pos] = dummy - pd / (p0 + pd);
    }
    eps
}

/// Centering predictor on the subsample at arbitrary parameters. Only the
/// index-based variant depends on the treatment parameters.
fn predictor_at(
    est: &SubsampleEstimate,
    fit: &PropensityFit,
    alpha: &Array1<f64>,
    gamma: &Array1<f64>,
) -> Array1<f64> {
    match est.variant {
        CenteringVariant::IndexPoly { q } => {
            let basis = index_poly_basis(&fit.indices_at(alpha), &est.mask, q);
            basis.columns.dot(gamma)
        }
        _ => est.centering_basis.dot(gamma),
    }
}

/// The estimating moment for a single observation; zero off the subsample.
pub fn moment_fn(
    est: &SubsampleEstimate,
    fit: &PropensityFit,
    ds: &Dataset,
    i: usize,
    b: f64,
    alpha: &Array1<f64>,
    gamma: &Array1<f64>,
) -> f64 {
    match est.mask.binary_search(&i) {
        Err(_) => 0.0,
        Ok(pos) => {
            let eps = eps_at(est, fit, ds, alpha);
            let g = predictor_at(est, fit, alpha, gamma);
            (ds.y()[i] - g[pos] - b * eps[pos]) * eps[pos]
        }
    }
}

/// Sample average of the moment over the full sample (off-subsample
/// observations contribute zero).
pub fn moment_mean(
    est: &SubsampleEstimate,
    fit: &PropensityFit,
    ds: &Dataset,
    b: f64,
    alpha: &Array1<f64>,
    gamma: &Array1<f64>,
) -> f64 {
    let eps = eps_at(est, fit, ds, alpha);
    let g = predictor_at(est, fit, alpha, gamma);
    let y = take(ds.y(), &est.mask);
    let mut sum = 0.0;
    for pos in 0..est.mask.len() {
        sum += (y[pos] - g[pos] - b * eps[pos]) * eps[pos];
    }
    sum / ds.n() as f64
}

/// Central finite differences of the averaged moment in each treatment
/// parameter, step 1e-5 * max(1, |a_k|).
pub fn numeric_l(est: &SubsampleEstimate, fit: &PropensityFit, ds: &Dataset) -> Array1<f64> {
    numeric_l_with_step(est, fit, ds, 1e-5)
}

pub fn numeric_l_with_step(
    est: &SubsampleEstimate,
    fit: &PropensityFit,
    ds: &Dataset,
    rel_step: f64,
) -> Array1<f64> {
    let p = fit.alpha.len();
    let mut l = Array1::zeros(p);
    for k in 0..p {
        let h = rel_step * fit.alpha[k].abs().max(1.0);
        let mut hi = fit.alpha.clone();
        hi[k] += h;
        let mut lo = fit.alpha.clone();
        lo[k] -= h;
        let m_hi = moment_mean(est, fit, ds, est.beta_hat, &hi, &est.gamma_hat);
        let m_lo = moment_mean(est, fit, ds, est.beta_hat, &lo, &est.gamma_hat);
        l[k] = (m_hi - m_lo) / (2.0 * h);
    }
    l
}

/// Influence vectors of the treatment fit: (mean score outer product)^-1
/// applied to each observation's score.
fn influence(fit: &PropensityFit) -> Result<Array2<f64>> {
    let p = fit.alpha.len();
    let n = fit.n();
    if p == 0 {
        return Ok(Array2::zeros((n, 0)));
    }
    let b = fit.scores.t().dot(&fit.scores) / n as f64;
    let l = cholesky(&b).ok_or(HetfxError::SingularScoreOuterProduct)?;
    // B^-1 once, then one matrix product.
    let mut b_inv = Array2::zeros((p, p));
    for k in 0..p {
        let mut e = Array1::zeros(p);
        e[k] = 1.0;
        b_inv.column_mut(k).assign(&cholesky_solve(&l, &e));
    }
    Ok(fit.scores.dot(&b_inv))
}

struct Composite {
    denom: f64,
    values: Array1<f64>,
    values_no_first_step: Array1<f64>,
    l_hat: Array1<f64>,
    eta: Array2<f64>,
}

fn composite(est: &SubsampleEstimate, fit: &PropensityFit, ds: &Dataset) -> Result<Composite> {
    let n = ds.n();
    let denom = est.psr.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if denom <= 0.0 {
        return Err(HetfxError::DegeneratePsr);
    }
    let l_hat = numeric_l(est, fit, ds);
    let eta = influence(fit)?;

    let mut base = Array1::zeros(n);
    for (pos, &i) in est.mask.iter().enumerate() {
        let v = est.centered_y[pos] - est.beta_hat * est.psr[pos];
        base[i] = v * est.psr[pos];
    }
    let mut values = base.clone();
    if fit.alpha.len() > 0 {
        let correction = eta.dot(&l_hat);
        values = values + &correction;
    }
    Ok(Composite { denom, values, values_no_first_step: base, l_hat, eta })
}

/// Two-step asymptotic variance of one estimate.
pub fn asy_variance(
    est: &SubsampleEstimate,
    fit: &PropensityFit,
    ds: &Dataset,
) -> Result<VarianceReport> {
    let n = ds.n() as f64;
    let c = composite(est, fit, ds)?;
    let mid = c.values.iter().map(|v| v * v).sum::<f64>() / n;
    let omega_hat = mid / (c.denom * c.denom);
    let mid0 = c.values_no_first_step.iter().map(|v| v * v).sum::<f64>() / n;
    let omega0 = mid0 / (c.denom * c.denom);
    Ok(VarianceReport {
        omega_hat,
        asy_sd: (omega_hat / n).sqrt(),
        l_hat: c.l_hat,
        eta: c.eta,
        asy_sd_no_first_step: (omega0 / n).sqrt(),
    })
}

/// Joint covariance matrix across estimates sharing the sample and the
/// treatment fit; the diagonal reproduces `asy_variance`.
pub fn asy_covariance(
    ests: &[&SubsampleEstimate],
    fit: &PropensityFit,
    ds: &Dataset,
) -> Result<CovarianceReport> {
    let n = ds.n() as f64;
    let k = ests.len();
    let mut parts = Vec::with_capacity(k);
    for est in ests {
        parts.push(composite(est, fit, ds)?);
    }
    let mut cov = Array2::zeros((k, k));
    for a in 0..k {
        for b in a..k {
            let mid = parts[a]
                .values
                .iter()
                .zip(parts[b].values.iter())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / n;
            let v = mid / (parts[a].denom * parts[b].denom);
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }
    // Wald statistic for all targets jointly zero.
    let beta = Array1::from_iter(ests.iter().map(|e| e.beta_hat));
    let var_beta = cov.mapv(|v| v / n);
    let wald = solve_small(&var_beta, &beta.clone().insert_axis(ndarray::Axis(1)))
        .map(|sol| beta.dot(&sol.column(0).to_owned()));
    Ok(CovarianceReport { cov, wald })
}

/// Bootstrap standard error.
#[derive(Debug, Clone)]
pub struct BootstrapSe {
    pub se: f64,
    /// Replicates that produced an estimate.
    pub used: usize,
    pub dropped: usize,
    /// Set when more than 5% of replicates failed.
    pub high_drop_rate: bool,
}

/// Nonparametric pairs bootstrap: resample whole observations, refit the
/// treatment model and the centering each time, and take the standard
/// deviation of the replicated estimates. Deterministic in (seed, b) at any
/// parallelism.
pub fn bootstrap_se(ds: &Dataset, cfg: &PipelineConfig, b: usize, seed: u64) -> Result<BootstrapSe> {
    if b < 100 {
        return Err(HetfxError::InvalidConfig(format!(
            "bootstrap needs at least 100 replicates, got {b}"
        )));
    }
    let n = ds.n();
    let replicates: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, rep as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let y = take(ds.y(), &idx);
            let x = crate::regress::take_rows(ds.x(), &idx);
            let d: Vec<usize> = idx.iter().map(|&i| ds.d()[i]).collect();
            let resampled = Dataset::new(y, d, x, ds.j()).ok()?;
            run(&resampled, cfg).ok().map(|est| est.beta_hat)
        })
        .collect();

    let betas: Vec<f64> = replicates.iter().flatten().copied().collect();
    let dropped = b - betas.len();
    if betas.len() < 2 {
        return Err(HetfxError::ExcessRepFailures { failed: dropped, total: b });
    }
    let mean = betas.iter().sum::<f64>() / betas.len() as f64;
    let var = betas.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (betas.len() - 1) as f64;
    Ok(BootstrapSe {
        se: var.sqrt(),
        used: betas.len(),
        dropped,
        high_drop_rate: dropped * 20 > b,
    })
}
