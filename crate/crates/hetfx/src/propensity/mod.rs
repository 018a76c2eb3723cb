//! Treatment-model fitting by maximum likelihood: an ordered probit for
//! ordinal categories and a multinomial logit for unordered ones. The fitted
//! object carries per-observation category probabilities, index functions,
//! and score vectors, which the downstream variance machinery consumes.

mod mnl;
mod newton;
mod ordered;

pub use mnl::{fit_mnl, MnlSpec, WElem};
pub use ordered::{fit_ordered_probit, OrderedProbitSpec};

use ndarray::{Array1, Array2};

use crate::error::{HetfxError, Result};
use crate::linalg::{cholesky, cholesky_solve};

#[derive(Debug, Clone)]
pub(crate) enum ModelRepr {
    Ordered(OrderedProbitSpec),
    Mnl { spec: MnlSpec, x: Array2<f64> },
    /// Probabilities injected by the caller (no estimated parameters).
    Known,
}

/// A fitted treatment model.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub(crate) model: ModelRepr,
    pub alpha: Array1<f64>,
    /// N x (J+1) category probabilities at the fitted parameters.
    pub probs: Array2<f64>,
    /// Index functions: N x 1 for the ordered model, N x J for the logit.
    pub indices: Array2<f64>,
    /// N x len(alpha) per-observation log-likelihood gradients.
    pub scores: Array2<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PropensityFit {
    pub fn n(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_categories(&self) -> usize {
        self.probs.ncols()
    }

    pub fn j(&self) -> usize {
        self.probs.ncols() - 1
    }

    /// Wraps externally known probabilities (for instance the exact ones of a
    /// simulation design) so the estimation pipeline can run without a first
    /// step. The index matrix feeds index-based centering.
    pub fn from_known_probs(probs: Array2<f64>, indices: Array2<f64>) -> Result<Self> {
        let n = probs.nrows();
        if indices.nrows() != n {
            return Err(HetfxError::DimensionMismatch(
                "probability and index row counts differ".into(),
            ));
        }
        if probs.ncols() < 2 {
            return Err(HetfxError::InvalidData("need at least two categories".into()));
        }
        for i in 0..n {
            let row = probs.row(i);
            let sum: f64 = row.sum();
            if !sum.is_finite() || (sum - 1.0).abs() > 1e-8 || row.iter().any(|&p| p < 0.0) {
                return Err(HetfxError::InvalidData(format!(
                    "probability row {i} is not a distribution"
                )));
            }
        }
        Ok(Self {
            model: ModelRepr::Known,
            alpha: Array1::zeros(0),
            scores: Array2::zeros((n, 0)),
            loglik: f64::NAN,
            converged: true,
            iterations: 0,
            probs,
            indices,
        })
    }

    /// Column j of the probability matrix.
    pub fn category_probs(&self, j: usize) -> Result<Array1<f64>> {
        if j >= self.n_categories() {
            return Err(HetfxError::BadCategory(j));
        }
        Ok(self.probs.column(j).to_owned())
    }

    /// Conditional treatment probability within the {control, d} pair:
    /// P_d / (P_0 + P_d) per observation.
    pub fn pairwise_propensity(&self, d: usize) -> Result<Array1<f64>> {
        if d < 1 || d >= self.n_categories() {
            return Err(HetfxError::BadCategory(d));
        }
        let mut out = Array1::zeros(self.n());
        for i in 0..self.n() {
            let p0 = self.probs[[i, 0]];
            let pd = self.probs[[i, d]];
            let denom = p0 + pd;
            if denom < 1e-12 {
                return Err(HetfxError::DegenerateDenominator(i));
            }
            out[i] = pd / denom;
        }
        Ok(out)
    }

    pub fn score_vectors(&self) -> &Array2<f64> {
        &self.scores
    }

    /// Standard errors of the fitted parameters from the averaged outer
    /// product of scores.
    pub fn alpha_se(&self) -> Result<Array1<f64>> {
        let p = self.alpha.len();
        let n = self.n() as f64;
        let b = self.scores.t().dot(&self.scores) / n;
        let l = cholesky(&b).ok_or(HetfxError::SingularScoreOuterProduct)?;
        let mut se = Array1::zeros(p);
        for k in 0..p {
            let mut e = Array1::zeros(p);
            e[k] = 1.0;
            let col = cholesky_solve(&l, &e);
            se[k] = (col[k] / n).sqrt();
        }
        Ok(se)
    }

    /// Probabilities re-evaluated at an arbitrary parameter vector.
    pub(crate) fn probs_at(&self, alpha: &Array1<f64>) -> Array2<f64> {
        match &self.model {
            ModelRepr::Ordered(spec) => ordered::probs_at(spec, alpha),
            ModelRepr::Mnl { spec, x } => mnl::probs_at(spec, x, alpha),
            ModelRepr::Known => self.probs.clone(),
        }
    }

    /// Index functions re-evaluated at an arbitrary parameter vector.
    pub(crate) fn indices_at(&self, alpha: &Array1<f64>) -> Array2<f64> {
        match &self.model {
            ModelRepr::Ordered(spec) => ordered::indices_at(spec, alpha),
            ModelRepr::Mnl { spec, x } => mnl::indices_at(spec, x, alpha),
            ModelRepr::Known => self.indices.clone(),
        }
    }
}

pub(crate) fn check_all_categories_observed(d: &[usize], j: usize) -> Result<()> {
    let mut seen = vec![false; j + 1];
    for &di in d {
        if di > j {
            return Err(HetfxError::OutOfRangeCategory { found: di, max: j });
        }
        seen[di] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(HetfxError::MissingCategory(missing));
    }
    Ok(())
}

/// Log-likelihood floor; applied during optimization only so line searches
/// survive a zero probability, never to reported probabilities.
pub(crate) fn safe_ln(p: f64) -> f64 {
    p.max(1e-300).ln()
}

pub(crate) fn check_separation(probs: &Array2<f64>, d: &[usize]) -> Result<()> {
    for (i, &di) in d.iter().enumerate() {
        if probs[[i, di]] < 1e-12 {
            return Err(HetfxError::SeparationSuspected);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    fn n01() -> Normal {
        Normal::new(0.0, 1.0).unwrap()
    }

    /// Ordinal data with latent index x2 + x3, cutoffs (0, 1), normal error.
    fn ordinal_sample(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 3));
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let x2: f64 = StandardNormal.sample(&mut rng);
            let x3: f64 = 2.0 * rng.random::<f64>();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let latent = x2 + x3 + eps;
            x[[i, 0]] = 1.0;
            x[[i, 1]] = x2;
            x[[i, 2]] = x3;
            d.push((latent >= 0.0) as usize + (latent >= 1.0) as usize);
        }
        (x, d)
    }

    fn binary_sample(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let xv: f64 = StandardNormal.sample(&mut rng);
            let eps: f64 = StandardNormal.sample(&mut rng);
            x[[i, 0]] = 1.0;
            x[[i, 1]] = xv;
            d.push(((-0.3 + 0.8 * xv + eps) >= 0.0) as usize);
        }
        (x, d)
    }

    /// Independent binary probit MLE: Newton on the textbook gradient and a
    /// finite-difference Hessian, written from scratch as an oracle.
    fn oracle_binary_probit(x: &Array2<f64>, d: &[usize]) -> Array1<f64> {
        let p = x.ncols();
        let grad = |k: &Array1<f64>| -> Array1<f64> {
            let mut g = Array1::zeros(p);
            for i in 0..x.nrows() {
                let z: f64 = x.row(i).dot(k);
                let cdf = n01().cdf(z).clamp(1e-12, 1.0 - 1e-12);
                let pdf = n01().pdf(z);
                let w = if d[i] == 1 { pdf / cdf } else { -pdf / (1.0 - cdf) };
                for a in 0..p {
                    g[a] += w * x[[i, a]];
                }
            }
            g
        };
        let mut k = Array1::zeros(p);
        for _ in 0..200 {
            let g = grad(&k);
            if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10 * x.nrows() as f64 {
                break;
            }
            let mut h = Array2::zeros((p, p));
            for a in 0..p {
                let hstep = 1e-6;
                let mut hi = k.clone();
                hi[a] += hstep;
                let mut lo = k.clone();
                lo[a] -= hstep;
                let col = (grad(&hi) - grad(&lo)) / (2.0 * hstep);
                h.column_mut(a).assign(&col);
            }
            let neg_h = h.mapv(|v| -v);
            let delta = crate::linalg::solve_small(&neg_h, &g.clone().insert_axis(ndarray::Axis(1)))
                .expect("oracle Hessian invertible");
            k = &k + &delta.column(0).to_owned();
        }
        k
    }

    /// Independent binary logit MLE.
    fn oracle_binary_logit(x: &Array2<f64>, d: &[usize]) -> Array1<f64> {
        let p = x.ncols();
        let mut k: Array1<f64> = Array1::zeros(p);
        for _ in 0..200 {
            let mut g: Array1<f64> = Array1::zeros(p);
            let mut h: Array2<f64> = Array2::zeros((p, p));
            for i in 0..x.nrows() {
                let z: f64 = x.row(i).dot(&k);
                let pr = 1.0 / (1.0 + (-z).exp());
                let w = d[i] as f64 - pr;
                for a in 0..p {
                    g[a] += w * x[[i, a]];
                    for b in 0..p {
                        h[[a, b]] += pr * (1.0 - pr) * x[[i, a]] * x[[i, b]];
                    }
                }
            }
            if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10 * x.nrows() as f64 {
                break;
            }
            let delta = crate::linalg::solve_small(&h, &g.clone().insert_axis(ndarray::Axis(1)))
                .expect("oracle Hessian invertible");
            k = &k + &delta.column(0).to_owned();
        }
        k
    }

    #[test]
    fn ordered_probit_recovers_truth_within_three_se() {
        let (x, d) = ordinal_sample(4000, 11);
        let spec = OrderedProbitSpec::new(x, 2).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();
        let se = fit.alpha_se().unwrap();
        let truth = [0.0, 1.0, 1.0, 1.0]; // constant, two slopes, second cutoff
        for k in 0..4 {
            let dev = (fit.alpha[k] - truth[k]).abs() / se[k];
            assert!(dev < 3.0, "component {k}: {} vs {} (dev {dev:.2} se)", fit.alpha[k], truth[k]);
        }
        assert!(fit.converged);
    }

    #[test]
    fn irrelevant_regressor_slope_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, d) = ordinal_sample(4000, 12);
        let mut with_noise = Array2::zeros((4000, 4));
        for i in 0..4000 {
            for k in 0..3 {
                with_noise[[i, k]] = x[[i, k]];
            }
            with_noise[[i, 3]] = StandardNormal.sample(&mut rng);
        }
        let spec = OrderedProbitSpec::new(with_noise, 2).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();
        let se = fit.alpha_se().unwrap();
        assert!(fit.alpha[3].abs() < 3.0 * se[3]);
    }

    #[test]
    fn binary_reduction_matches_probit_oracle() {
        let (x, d) = binary_sample(1500, 21);
        let spec = OrderedProbitSpec::new(x.clone(), 1).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();
        let oracle = oracle_binary_probit(&x, &d);
        for k in 0..2 {
            assert!(
                (fit.alpha[k] - oracle[k]).abs() < 1e-6,
                "probit component {k}: {} vs oracle {}",
                fit.alpha[k],
                oracle[k]
            );
        }
    }

    #[test]
    fn mnl_binary_reduction_matches_logit_oracle() {
        let (x, d) = binary_sample(1500, 22);
        let spec = MnlSpec::new(vec![vec![WElem::One, WElem::X(1)]]).unwrap();
        let fit = fit_mnl(&spec, &x, &d).unwrap();
        let design = x.clone();
        let oracle = oracle_binary_logit(&design, &d);
        for k in 0..2 {
            assert!(
                (fit.alpha[k] - oracle[k]).abs() < 1e-6,
                "logit component {k}: {} vs oracle {}",
                fit.alpha[k],
                oracle[k]
            );
        }
    }

    #[test]
    fn probability_rows_sum_to_one_and_scores_average_zero() {
        let (x, d) = ordinal_sample(2000, 31);
        let spec = OrderedProbitSpec::new(x, 2).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();
        for i in 0..fit.n() {
            let s: f64 = fit.probs.row(i).sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(fit.probs.row(i).iter().all(|&p| p > 0.0 && p < 1.0));
        }
        let mean_score = fit.scores.sum_axis(ndarray::Axis(0)) / fit.n() as f64;
        let scale = 1.0 + fit.alpha.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(mean_score.iter().all(|v| v.abs() <= 1e-6 * scale));
    }

    #[test]
    fn analytic_scores_match_finite_differences() {
        let (x, d) = ordinal_sample(50, 41);
        let spec = OrderedProbitSpec::new(x, 2).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();
        let scale = 1.0 + fit.alpha.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let h = 1e-6 * scale;
        for i in 0..10 {
            for k in 0..fit.alpha.len() {
                let mut hi = fit.alpha.clone();
                hi[k] += h;
                let mut lo = fit.alpha.clone();
                lo[k] -= h;
                let p_hi = ordered::probs_at(&spec_of(&fit), &hi)[[i, d[i]]];
                let p_lo = ordered::probs_at(&spec_of(&fit), &lo)[[i, d[i]]];
                let fd = (p_hi.ln() - p_lo.ln()) / (2.0 * h);
                assert!(
                    (fd - fit.scores[[i, k]]).abs() <= 1e-5,
                    "obs {i} component {k}: fd {fd} vs analytic {}",
                    fit.scores[[i, k]]
                );
            }
        }
    }

    fn spec_of(fit: &PropensityFit) -> OrderedProbitSpec {
        match &fit.model {
            ModelRepr::Ordered(s) => s.clone(),
            _ => panic!("not an ordered fit"),
        }
    }

    #[test]
    fn mnl_scores_match_finite_differences() {
        let (x, d) = ordinal_sample(50, 43);
        let spec = MnlSpec::standard(2, 2);
        let xcov = x.slice(ndarray::s![.., 1..]).to_owned();
        let fit = fit_mnl(&spec, &xcov, &d).unwrap();
        let scale = 1.0 + fit.alpha.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let h = 1e-6 * scale;
        for i in 0..10 {
            for k in 0..fit.alpha.len() {
                let mut hi = fit.alpha.clone();
                hi[k] += h;
                let mut lo = fit.alpha.clone();
                lo[k] -= h;
                let p_hi = mnl::probs_at(&spec, &xcov, &hi)[[i, d[i]]];
                let p_lo = mnl::probs_at(&spec, &xcov, &lo)[[i, d[i]]];
                let fd = (p_hi.ln() - p_lo.ln()) / (2.0 * h);
                assert!((fd - fit.scores[[i, k]]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn single_observation_binary_probit_score_matches_hand_formula() {
        let x = array![[1.0, 0.7]];
        let spec = OrderedProbitSpec::new(x.clone(), 1).unwrap();
        let alpha = array![0.4, -0.9];
        let z = 0.4 - 0.9 * 0.7;
        for (d, sign) in [(1usize, 1.0), (0usize, -1.0)] {
            let s = ordered::scores_at(&spec, &[d], &alpha);
            let cdf = n01().cdf(z);
            let pdf = n01().pdf(z);
            let expected = if d == 1 { pdf / cdf } else { -pdf / (1.0 - cdf) };
            assert!((s[[0, 0]] - expected).abs() < 1e-12);
            assert!((s[[0, 1]] - 0.7 * expected).abs() < 1e-12);
            let _ = sign;
        }
    }

    #[test]
    fn fit_is_invariant_to_observation_order() {
        let (x, d) = ordinal_sample(800, 51);
        let spec = OrderedProbitSpec::new(x.clone(), 2).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();

        let n = d.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = crate::regress::take_rows(&x, &perm);
        let dp: Vec<usize> = perm.iter().map(|&i| d[i]).collect();
        let spec_p = OrderedProbitSpec::new(xp, 2).unwrap();
        let fit_p = fit_ordered_probit(&spec_p, &dp).unwrap();
        for k in 0..fit.alpha.len() {
            assert!(
                (fit.alpha[k] - fit_p.alpha[k]).abs() < 1e-8,
                "component {k} changed under permutation"
            );
        }
    }

    #[test]
    fn cumulative_probabilities_are_monotone() {
        let (x, d) = ordinal_sample(500, 61);
        let spec = OrderedProbitSpec::new(x, 2).unwrap();
        let fit = fit_ordered_probit(&spec, &d).unwrap();
        for i in 0..fit.n() {
            let p = fit.probs.row(i);
            assert!(p[0] <= p[0] + p[1] && p[0] + p[1] <= 1.0 + 1e-12);
        }
        // With positive slopes, the control probability falls in the index.
        let order: Vec<usize> = {
            let idx = fit.indices.column(0).to_owned();
            let mut pairs: Vec<(usize, f64)> = idx.iter().copied().enumerate().collect();
            pairs.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            pairs.into_iter().map(|(i, _)| i).collect()
        };
        let first = order[0];
        let last = order[order.len() - 1];
        assert!(fit.probs[[first, 0]] > fit.probs[[last, 0]]);
    }

    #[test]
    fn mnl_with_all_zero_slots_is_uniform() {
        let x = Array2::zeros((30, 1));
        let d: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let spec = MnlSpec::new(vec![vec![WElem::Zero], vec![WElem::Zero]]).unwrap();
        let fit = fit_mnl(&spec, &x, &d).unwrap();
        for i in 0..30 {
            for c in 0..3 {
                assert!((fit.probs[[i, c]] - 1.0 / 3.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pairwise_propensity_definition_and_limits() {
        let probs = array![[0.25, 0.25, 0.5], [0.4, 0.4, 0.2], [1e-9, 0.6, 0.4 - 1e-9]];
        let indices = Array2::zeros((3, 1));
        let fit = PropensityFit::from_known_probs(probs, indices).unwrap();
        let pi = fit.pairwise_propensity(1).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);
        assert!((pi[1] - 0.5).abs() < 1e-12);
        assert!(pi[2] > 1.0 - 1e-6);
        assert!(matches!(fit.pairwise_propensity(0), Err(HetfxError::BadCategory(0))));
        assert!(matches!(fit.category_probs(5), Err(HetfxError::BadCategory(5))));
    }

    #[test]
    fn pairwise_propensity_rejects_degenerate_pairs() {
        let probs = array![[1e-13, 2e-13, 1.0 - 3e-13]];
        let fit = PropensityFit::from_known_probs(probs, Array2::zeros((1, 1))).unwrap();
        match fit.pairwise_propensity(1) {
            Err(HetfxError::DegenerateDenominator(0)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn missing_category_is_rejected() {
        let (x, mut d) = ordinal_sample(200, 71);
        for v in d.iter_mut() {
            if *v == 2 {
                *v = 1;
            }
        }
        let spec = OrderedProbitSpec::new(x, 2).unwrap();
        match fit_ordered_probit(&spec, &d) {
            Err(HetfxError::MissingCategory(2)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn exact_pair_propensity_of_the_binary_design() {
        // At x2 = 0 the design's exact probabilities give
        // pi^1 = (Phi(2) - Phi(0)) / Phi(2).
        let p = crate::simulation::ordinal_binary_cell_probs(0.0);
        let probs = array![[p[0], p[1], p[2]]];
        let fit = PropensityFit::from_known_probs(probs, Array2::zeros((1, 1))).unwrap();
        let pi = fit.pairwise_propensity(1).unwrap();
        let phi2 = n01().cdf(2.0);
        assert!((pi[0] - (phi2 - 0.5) / phi2).abs() < 1e-12);
    }
}
