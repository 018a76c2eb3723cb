//! Multinomial logit with alternative-specific index vectors. Each
//! non-control alternative j gets an index W_j'alpha, where W_j is assembled
//! from covariate columns (possibly negated), literal ones, and zeros; the
//! control alternative contributes a fixed 1 to the denominator.

use ndarray::{Array1, Array2};

use super::newton::{maximize, NewtonControl};
use super::{check_all_categories_observed, check_separation, safe_ln, ModelRepr, PropensityFit};
use crate::error::{HetfxError, Result};

/// One slot of an alternative's index vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WElem {
    Zero,
    One,
    /// Covariate column by 0-based index.
    X(usize),
    /// Negated covariate column.
    NegX(usize),
}

impl WElem {
    fn value(&self, x_row: ndarray::ArrayView1<'_, f64>) -> f64 {
        match *self {
            WElem::Zero => 0.0,
            WElem::One => 1.0,
            WElem::X(k) => x_row[k],
            WElem::NegX(k) => -x_row[k],
        }
    }
}

/// Declarative layout of the index vectors W_1..W_J over a shared parameter
/// vector.
#[derive(Debug, Clone)]
pub struct MnlSpec {
    entries: Vec<Vec<WElem>>,
    alpha_len: usize,
}

impl MnlSpec {
    pub fn new(entries: Vec<Vec<WElem>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(HetfxError::InvalidData("need at least one alternative".into()));
        }
        let alpha_len = entries[0].len();
        if alpha_len == 0 || entries.iter().any(|row| row.len() != alpha_len) {
            return Err(HetfxError::DimensionMismatch(
                "every alternative needs the same nonzero number of slots".into(),
            ));
        }
        Ok(Self { entries, alpha_len })
    }

    /// Textbook layout: each alternative gets its own intercept and slopes,
    /// i.e. W_j has a block (1, x_1..x_k) in position j and zeros elsewhere.
    pub fn standard(j: usize, n_cov: usize) -> Self {
        let block = n_cov + 1;
        let mut entries = Vec::with_capacity(j);
        for alt in 0..j {
            let mut row = vec![WElem::Zero; j * block];
            row[alt * block] = WElem::One;
            for k in 0..n_cov {
                row[alt * block + 1 + k] = WElem::X(k);
            }
            entries.push(row);
        }
        Self { entries, alpha_len: j * block }
    }

    pub fn j(&self) -> usize {
        self.entries.len()
    }

    pub fn alpha_len(&self) -> usize {
        self.alpha_len
    }

    fn max_x_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .flatten()
            .filter_map(|e| match e {
                WElem::X(k) | WElem::NegX(k) => Some(*k),
                _ => None,
            })
            .max()
    }

    fn fill_w(&self, alt: usize, x_row: ndarray::ArrayView1<'_, f64>, buf: &mut [f64]) {
        for (slot, elem) in self.entries[alt].iter().enumerate() {
            buf[slot] = elem.value(x_row);
        }
    }
}

pub(crate) fn indices_at(spec: &MnlSpec, x: &Array2<f64>, alpha: &Array1<f64>) -> Array2<f64> {
    let n = x.nrows();
    let j = spec.j();
    let mut idx = Array2::zeros((n, j));
    let mut w = vec![0.0; spec.alpha_len];
    for i in 0..n {
        for alt in 0..j {
            spec.fill_w(alt, x.row(i), &mut w);
            idx[[i, alt]] = w.iter().zip(alpha.iter()).map(|(a, b)| a * b).sum();
        }
    }
    idx
}

pub(crate) fn probs_at(spec: &MnlSpec, x: &Array2<f64>, alpha: &Array1<f64>) -> Array2<f64> {
    let idx = indices_at(spec, x, alpha);
    probs_from_indices(&idx)
}

pub(crate) fn probs_from_indices(idx: &Array2<f64>) -> Array2<f64> {
    let n = idx.nrows();
    let j = idx.ncols();
    let mut probs = Array2::zeros((n, j + 1));
    for i in 0..n {
        let m = idx.row(i).iter().fold(0.0_f64, |a, &b| a.max(b));
        let e0 = (-m).exp();
        let mut denom = e0;
        for alt in 0..j {
            denom += (idx[[i, alt]] - m).exp();
        }
        probs[[i, 0]] = e0 / denom;
        for alt in 0..j {
            probs[[i, alt + 1]] = (idx[[i, alt]] - m).exp() / denom;
        }
    }
    probs
}

fn loglik(spec: &MnlSpec, x: &Array2<f64>, d: &[usize], alpha: &Array1<f64>) -> f64 {
    let probs = probs_at(spec, x, alpha);
    d.iter().enumerate().map(|(i, &c)| safe_ln(probs[[i, c]])).sum()
}

pub(crate) fn scores_at(
    spec: &MnlSpec,
    x: &Array2<f64>,
    d: &[usize],
    alpha: &Array1<f64>,
) -> Array2<f64> {
    let n = x.nrows();
    let j = spec.j();
    let p_len = spec.alpha_len;
    let probs = probs_at(spec, x, alpha);
    let mut scores = Array2::zeros((n, p_len));
    let mut w = vec![0.0; p_len];
    for i in 0..n {
        for alt in 0..j {
            spec.fill_w(alt, x.row(i), &mut w);
            let weight = if d[i] == alt + 1 { 1.0 - probs[[i, alt + 1]] } else { -probs[[i, alt + 1]] };
            for k in 0..p_len {
                scores[[i, k]] += weight * w[k];
            }
        }
    }
    scores
}

fn hessian(spec: &MnlSpec, x: &Array2<f64>, alpha: &Array1<f64>) -> Array2<f64> {
    let n = x.nrows();
    let j = spec.j();
    let p = spec.alpha_len;
    let probs = probs_at(spec, x, alpha);
    let mut h = Array2::zeros((p, p));
    let mut w = vec![0.0; p];
    let mut wbar = vec![0.0; p];
    for i in 0..n {
        wbar.iter_mut().for_each(|v| *v = 0.0);
        let mut outer: Array2<f64> = Array2::zeros((p, p));
        for alt in 0..j {
            spec.fill_w(alt, x.row(i), &mut w);
            let pj = probs[[i, alt + 1]];
            for a in 0..p {
                wbar[a] += pj * w[a];
                for b in 0..p {
                    outer[[a, b]] += pj * w[a] * w[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..p {
                h[[a, b]] -= outer[[a, b]] - wbar[a] * wbar[b];
            }
        }
    }
    h
}

/// Maximum likelihood fit of the multinomial logit. The log-likelihood is
/// globally concave, so Newton from the zero vector is reliable.
pub fn fit_mnl(spec: &MnlSpec, x: &Array2<f64>, d: &[usize]) -> Result<PropensityFit> {
    let n = x.nrows();
    if d.len() != n {
        return Err(HetfxError::DimensionMismatch(format!(
            "{} treatments for {} covariate rows",
            d.len(),
            n
        )));
    }
    if let Some(max_k) = spec.max_x_index() {
        if max_k >= x.ncols() {
            return Err(HetfxError::InvalidConfig(format!(
                "index layout references covariate column {max_k} but data has {}",
                x.ncols()
            )));
        }
    }
    check_all_categories_observed(d, spec.j())?;

    let ll = |a: &Array1<f64>| loglik(spec, x, d, a);
    let gr = |a: &Array1<f64>| scores_at(spec, x, d, a).sum_axis(ndarray::Axis(0));
    let he = |a: &Array1<f64>| hessian(spec, x, a);
    let (alpha, iterations) = maximize(
        Array1::zeros(spec.alpha_len),
        n,
        &ll,
        &gr,
        Some(&he),
        &NewtonControl::default(),
    )?;

    let probs = probs_at(spec, x, &alpha);
    check_separation(&probs, d)?;
    let scores = scores_at(spec, x, d, &alpha);
    let indices = indices_at(spec, x, &alpha);
    let loglik = loglik(spec, x, d, &alpha);
    Ok(PropensityFit {
        model: ModelRepr::Mnl { spec: spec.clone(), x: x.clone() },
        alpha,
        probs,
        indices,
        scores,
        loglik,
        converged: true,
        iterations,
    })
}
