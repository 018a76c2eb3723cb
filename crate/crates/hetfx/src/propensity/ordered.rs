//! Ordered probit: latent index with standard normal error and ordered cutoffs.
//!
//! Normalization: unit error scale and first cutoff fixed at zero. The
//! covariate matrix is taken as given; include a constant column to absorb a
//! nonzero first cutoff. The identified parameter vector is
//! (slopes..., cutoff_2, ..., cutoff_J).

use ndarray::{Array1, Array2};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::newton::{maximize, NewtonControl};
use super::{check_all_categories_observed, check_separation, safe_ln, ModelRepr, PropensityFit};
use crate::error::{HetfxError, Result};

#[derive(Debug, Clone)]
pub struct OrderedProbitSpec {
    x: Array2<f64>,
    j: usize,
}

impl OrderedProbitSpec {
    pub fn new(x: Array2<f64>, j: usize) -> Result<Self> {
        if j < 1 {
            return Err(HetfxError::InvalidData("need at least one cutoff".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HetfxError::InvalidData("covariates contain non-finite values".into()));
        }
        Ok(Self { x, j })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn alpha_len(&self) -> usize {
        self.x.ncols() + self.j - 1
    }
}

fn normal01() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Cutoffs tau_1..tau_J with tau_1 = 0; the free ones live at the tail of
/// alpha.
fn cutoffs(spec: &OrderedProbitSpec, alpha: &Array1<f64>) -> Vec<f64> {
    let nu = spec.x.ncols();
    let mut tau = vec![0.0; spec.j];
    for m in 1..spec.j {
        tau[m] = alpha[nu + m - 1];
    }
    tau
}

pub(crate) fn indices_at(spec: &OrderedProbitSpec, alpha: &Array1<f64>) -> Array2<f64> {
    let nu = spec.x.ncols();
    let kappa = alpha.slice(ndarray::s![..nu]).to_owned();
    let idx = spec.x.dot(&kappa);
    idx.insert_axis(ndarray::Axis(1))
}

pub(crate) fn probs_at(spec: &OrderedProbitSpec, alpha: &Array1<f64>) -> Array2<f64> {
    let n01 = normal01();
    let n = spec.x.nrows();
    let j = spec.j;
    let tau = cutoffs(spec, alpha);
    let idx = indices_at(spec, alpha);
    let mut probs = Array2::zeros((n, j + 1));
    for i in 0..n {
        let z = idx[[i, 0]];
        let mut lower = 0.0; // P(D < 0) = 0
        for c in 0..=j {
            let upper = if c == j { 1.0 } else { n01.cdf(tau[c] - z) };
            probs[[i, c]] = upper - lower;
            lower = upper;
        }
    }
    probs
}

fn loglik(spec: &OrderedProbitSpec, d: &[usize], alpha: &Array1<f64>) -> f64 {
    let n01 = normal01();
    let tau = cutoffs(spec, alpha);
    let idx = indices_at(spec, alpha);
    let j = spec.j;
    let mut ll = 0.0;
    for (i, &c) in d.iter().enumerate() {
        let z = idx[[i, 0]];
        let lower = if c == 0 { 0.0 } else { n01.cdf(tau[c - 1] - z) };
        let upper = if c == j { 1.0 } else { n01.cdf(tau[c] - z) };
        ll += safe_ln(upper - lower);
    }
    ll
}

/// Per-observation gradients in alpha space (N x len(alpha)).
pub(crate) fn scores_at(spec: &OrderedProbitSpec, d: &[usize], alpha: &Array1<f64>) -> Array2<f64> {
    let n01 = normal01();
    let nu = spec.x.ncols();
    let j = spec.j;
    let tau = cutoffs(spec, alpha);
    let idx = indices_at(spec, alpha);
    let mut scores = Array2::zeros((d.len(), spec.alpha_len()));
    for (i, &c) in d.iter().enumerate() {
        let z = idx[[i, 0]];
        let (cdf_lo, pdf_lo) = if c == 0 {
            (0.0, 0.0)
        } else {
            let u = tau[c - 1] - z;
            (n01.cdf(u), n01.pdf(u))
        };
        let (cdf_hi, pdf_hi) = if c == j {
            (1.0, 0.0)
        } else {
            let u = tau[c] - z;
            (n01.cdf(u), n01.pdf(u))
        };
        let p = (cdf_hi - cdf_lo).max(1e-300);
        let slope_factor = (pdf_lo - pdf_hi) / p;
        for k in 0..nu {
            scores[[i, k]] = slope_factor * spec.x[[i, k]];
        }
        // Free cutoff tau_m sits at alpha index nu + m - 2 for m = 2..=J.
        // The upper bound of category c is tau_{c+1}, free when 1 <= c < J;
        // the lower bound is tau_c, free when c >= 2.
        if c >= 1 && c < j {
            scores[[i, nu + c - 1]] += pdf_hi / p;
        }
        if c >= 2 {
            scores[[i, nu + c - 2]] -= pdf_lo / p;
        }
    }
    scores
}

fn grad_alpha(spec: &OrderedProbitSpec, d: &[usize], alpha: &Array1<f64>) -> Array1<f64> {
    let s = scores_at(spec, d, alpha);
    s.sum_axis(ndarray::Axis(0))
}

/// Free parameters during optimization: slopes, the second cutoff, then log
/// gaps between consecutive cutoffs, which keeps them ordered.
fn alpha_from_psi(spec: &OrderedProbitSpec, psi: &Array1<f64>) -> Array1<f64> {
    let nu = spec.x.ncols();
    let j = spec.j;
    let mut alpha = Array1::zeros(spec.alpha_len());
    for k in 0..nu {
        alpha[k] = psi[k];
    }
    if j >= 2 {
        alpha[nu] = psi[nu];
        let mut prev = psi[nu];
        for m in 3..=j {
            prev += psi[nu + m - 2].exp();
            alpha[nu + m - 2] = prev;
        }
    }
    alpha
}

fn grad_psi(spec: &OrderedProbitSpec, psi: &Array1<f64>, g_alpha: &Array1<f64>) -> Array1<f64> {
    let nu = spec.x.ncols();
    let j = spec.j;
    let mut g = Array1::zeros(psi.len());
    for k in 0..nu {
        g[k] = g_alpha[k];
    }
    if j >= 2 {
        // tau_m = t2 + sum of gaps up to m; the chain rule accumulates
        // suffix sums of cutoff gradients.
        let mut suffix = 0.0;
        for m in (2..=j).rev() {
            suffix += g_alpha[nu + m - 2];
            if m == 2 {
                g[nu] = suffix;
            } else {
                g[nu + m - 2] = psi[nu + m - 2].exp() * suffix;
            }
        }
    }
    g
}

fn start_psi(spec: &OrderedProbitSpec, d: &[usize]) -> Array1<f64> {
    let nu = spec.x.ncols();
    let j = spec.j;
    let n = d.len() as f64;
    let mut psi = Array1::zeros(nu + j - 1);
    if j >= 2 {
        let n01 = normal01();
        // Cutoffs matching the marginal category shares, shifted so the
        // first one is zero.
        let mut counts = vec![0usize; j + 1];
        for &c in d {
            counts[c] += 1;
        }
        let mut cum = 0.0;
        let mut raw = Vec::with_capacity(j);
        for c in 0..j {
            cum += counts[c] as f64;
            raw.push(n01.inverse_cdf((cum / n).clamp(1e-12, 1.0 - 1e-12)));
        }
        let shift = raw[0];
        psi[nu] = raw[1] - shift;
        let mut prev = raw[1] - shift;
        for m in 3..=j {
            let tau_m = raw[m - 1] - shift;
            psi[nu + m - 2] = (tau_m - prev).max(1e-6).ln();
            prev = tau_m;
        }
    }
    psi
}

/// Maximum likelihood fit of the ordered probit.
pub fn fit_ordered_probit(spec: &OrderedProbitSpec, d: &[usize]) -> Result<PropensityFit> {
    let n = spec.x.nrows();
    if d.len() != n {
        return Err(HetfxError::DimensionMismatch(format!(
            "{} treatments for {} covariate rows",
            d.len(),
            n
        )));
    }
    check_all_categories_observed(d, spec.j)?;

    let ll = |psi: &Array1<f64>| loglik(spec, d, &alpha_from_psi(spec, psi));
    let gr = |psi: &Array1<f64>| {
        let alpha = alpha_from_psi(spec, psi);
        grad_psi(spec, psi, &grad_alpha(spec, d, &alpha))
    };
    let (psi_hat, iterations) =
        maximize(start_psi(spec, d), n, &ll, &gr, None, &NewtonControl::default())?;

    let alpha = alpha_from_psi(spec, &psi_hat);
    let probs = probs_at(spec, &alpha);
    check_separation(&probs, d)?;
    let scores = scores_at(spec, d, &alpha);
    let indices = indices_at(spec, &alpha);
    let loglik = loglik(spec, d, &alpha);
    Ok(PropensityFit {
        model: ModelRepr::Ordered(spec.clone()),
        alpha,
        probs,
        indices,
        scores,
        loglik,
        converged: true,
        iterations,
    })
}
