//! Pareto-smoothed importance sampling leave-one-out cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp_slice, variance};
use crate::model::{HierarchicalModel, Priors};
use crate::sampler::PosteriorDraws;

/// Pareto k above this marks an unreliable pointwise estimate.
pub const PARETO_K_WARN: f64 = 0.7;

/// Draws x points matrix of pointwise log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    n_draws: usize,
    n_points: usize,
    /// Row-major by draw.
    values: Vec<f64>,
}

impl LogLikMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_draws = rows.len();
        let n_points = rows.first().map_or(0, Vec::len);
        if n_draws == 0 || n_points == 0 {
            return Err(Error::Shape("log-likelihood matrix is empty".into()));
        }
        if rows.iter().any(|r| r.len() != n_points) {
            return Err(Error::Shape("ragged log-likelihood rows".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite log-likelihood value".into()));
        }
        Ok(LogLikMatrix {
            n_draws,
            n_points,
            values,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn get(&self, draw: usize, point: usize) -> f64 {
        self.values[draw * self.n_points + point]
    }

    pub fn column(&self, point: usize) -> Vec<f64> {
        (0..self.n_draws).map(|q| self.get(q, point)).collect()
    }

    pub fn row(&self, draw: usize) -> &[f64] {
        &self.values[draw * self.n_points..(draw + 1) * self.n_points]
    }
}

/// Log-likelihood of every subject under every posterior draw.
pub fn pointwise_loglik(draws: &PosteriorDraws, data: &Dataset, bases: &[BasisSet]) -> Result<LogLikMatrix> {
    let model = HierarchicalModel::new(data, bases, Priors::default())?;
    if draws.shape() != model.shape() {
        return Err(Error::Shape("draws do not match the data and bases".into()));
    }
    let states: Vec<_> = draws.iter().collect();
    let rows = states.par_iter().map(|s| model.pointwise_log_likelihood(s)).collect();
    LogLikMatrix::from_rows(rows)
}

/// Generalized Pareto fit by the Zhang-Stephens empirical Bayes method
/// with a weakly informative prior pulling the shape toward 0.5.
/// `x` must be sorted ascending and positive. Returns `(shape, scale)`.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let nf = n as f64;
    let prior = 3.0;
    let m = 30 + (nf.sqrt()) as usize;
    let xstar = x[((nf / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&v| (-t * v).ln_1p()).sum::<f64>() / nf;
            nf * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let lse = log_sum_exp_slice(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - lse).exp()).sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / nf;
    let sigma = -k / theta_hat;
    let k = (k * nf + 0.5 * 10.0) / (nf + 10.0);
    (k, sigma)
}

/// Quantile function of the generalized Pareto distribution at location 0.
pub fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k == 0.0 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Tail length used for the Pareto fit.
pub fn tail_length(n_draws: usize) -> usize {
    let s = n_draws as f64;
    ((0.2 * s).ceil() as usize).min((3.0 * s.sqrt()).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsisResult {
    /// Smoothed log weights, shifted so the raw maximum is 0.
    pub log_weights_unnormalized: Vec<f64>,
    /// Self-normalized weights.
    pub weights: Vec<f64>,
    /// `None` when the tail is too short or degenerate to fit.
    pub pareto_k: Option<f64>,
}

/// Pareto-smooths importance log-ratios.
pub fn psis_smooth(log_ratios: &[f64]) -> Result<PsisResult> {
    let s = log_ratios.len();
    if s == 0 || log_ratios.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("log ratios must be finite and non-empty".into()));
    }
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();
    let m = tail_length(s);
    let mut pareto_k = None;
    if m >= 5 && m < s {
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        let tail = &order[s - m..];
        let cutoff = lw[order[s - m - 1]];
        let first = lw[tail[0]];
        if tail.iter().any(|&i| lw[i] != first) {
            let exp_cutoff = cutoff.exp();
            let x: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
            let (k, sigma) = gpd_fit(&x);
            if k.is_finite() && sigma.is_finite() && sigma > 0.0 {
                for (j, &i) in tail.iter().enumerate() {
                    let p = (j as f64 + 0.5) / m as f64;
                    lw[i] = (gpd_quantile(p, k, sigma) + exp_cutoff).ln().min(0.0);
                }
                pareto_k = Some(k);
            }
        }
    }
    let lse = log_sum_exp_slice(&lw);
    let weights = lw.iter().map(|v| (v - lse).exp()).collect();
    Ok(PsisResult {
        log_weights_unnormalized: lw,
        weights,
        pareto_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub n_points: usize,
    pub n_draws: usize,
    pub elpd_loo: f64,
    pub se_elpd_loo: f64,
    pub loo_ic: f64,
    pub se_loo_ic: f64,
    /// In-sample log pointwise predictive density.
    pub lppd: f64,
    pub p_loo: f64,
    pub pointwise_elpd: Vec<f64>,
    pub pareto_k: Vec<Option<f64>>,
    pub n_high_k: usize,
}

/// PSIS-LOO from a log-likelihood matrix.
pub fn loo(matrix: &LogLikMatrix) -> Result<LooResult> {
    let n = matrix.n_points();
    let q = matrix.n_draws();
    let per_point: Vec<(f64, f64, Option<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ll = matrix.column(i);
            let neg: Vec<f64> = ll.iter().map(|v| -v).collect();
            let psis = psis_smooth(&neg)?;
            let lse = log_sum_exp_slice(&psis.log_weights_unnormalized);
            let terms: Vec<f64> = psis
                .log_weights_unnormalized
                .iter()
                .zip(&ll)
                .map(|(w, l)| w - lse + l)
                .collect();
            let elpd = log_sum_exp_slice(&terms);
            let lppd = log_sum_exp_slice(&ll) - (q as f64).ln();
            Ok((elpd, lppd, psis.pareto_k))
        })
        .collect::<Result<_>>()?;
    let pointwise_elpd: Vec<f64> = per_point.iter().map(|p| p.0).collect();
    let elpd_loo: f64 = pointwise_elpd.iter().sum();
    let lppd: f64 = per_point.iter().map(|p| p.1).sum();
    let se = if n > 1 {
        (n as f64 * variance(&pointwise_elpd)).sqrt()
    } else {
        0.0
    };
    let pareto_k: Vec<Option<f64>> = per_point.iter().map(|p| p.2).collect();
    Ok(LooResult {
        n_points: n,
        n_draws: q,
        elpd_loo,
        se_elpd_loo: se,
        loo_ic: -2.0 * elpd_loo,
        se_loo_ic: 2.0 * se,
        lppd,
        p_loo: lppd - elpd_loo,
        n_high_k: pareto_k.iter().flatten().filter(|&&k| k > PARETO_K_WARN).count(),
        pointwise_elpd,
        pareto_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub loo_ic: f64,
    pub se_loo_ic: f64,
    pub elpd_loo: f64,
    /// `elpd_loo - elpd_loo(best)`; zero for the best model.
    pub elpd_diff: f64,
    pub se_diff: f64,
    pub n_high_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    /// Sorted by LOO-IC, best first.
    pub ranking: Vec<ComparisonRow>,
    /// Index into the input order chosen by the stopping rule.
    pub selected: usize,
    pub selected_label: String,
    /// False when LOO-IC never stopped decreasing, in which case the last
    /// candidate is selected.
    pub increase_observed: bool,
}

/// Standard error of the summed pointwise difference between two fits.
pub fn se_difference(a: &LooResult, b: &LooResult) -> Result<f64> {
    if a.n_points != b.n_points {
        return Err(Error::Shape("results cover different numbers of points".into()));
    }
    let d: Vec<f64> = a
        .pointwise_elpd
        .iter()
        .zip(&b.pointwise_elpd)
        .map(|(x, y)| x - y)
        .collect();
    Ok(if d.len() > 1 {
        (d.len() as f64 * variance(&d)).sqrt()
    } else {
        0.0
    })
}

/// Ranks candidates (given in increasing complexity) and applies the
/// stopping rule: keep adding knots while LOO-IC decreases, and select the
/// candidate just before the first non-decrease.
pub fn compare_models(labels: &[String], results: &[LooResult]) -> Result<ModelComparison> {
    if results.is_empty() || labels.len() != results.len() {
        return Err(Error::Shape("one label per LOO result is required".into()));
    }
    let n = results[0].n_points;
    if results.iter().any(|r| r.n_points != n) {
        return Err(Error::Shape("LOO results cover different numbers of points".into()));
    }
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[a].loo_ic.total_cmp(&results[b].loo_ic));
    let best = &results[order[0]];
    let ranking = order
        .iter()
        .map(|&i| {
            let r = &results[i];
            Ok(ComparisonRow {
                label: labels[i].clone(),
                loo_ic: r.loo_ic,
                se_loo_ic: r.se_loo_ic,
                elpd_loo: r.elpd_loo,
                elpd_diff: r.elpd_loo - best.elpd_loo,
                se_diff: se_difference(r, best)?,
                n_high_k: r.n_high_k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ics: Vec<f64> = results.iter().map(|r| r.loo_ic).collect();
    let (selected, increase_observed) = stopping_rule(&ics);
    Ok(ModelComparison {
        ranking,
        selected,
        selected_label: labels[selected].clone(),
        increase_observed,
    })
}

/// Index of the last candidate before LOO-IC first fails to decrease.
pub fn stopping_rule(loo_ics: &[f64]) -> (usize, bool) {
    for i in 0..loo_ics.len().saturating_sub(1) {
        if loo_ics[i + 1] >= loo_ics[i] {
            return (i, true);
        }
    }
    (loo_ics.len().saturating_sub(1), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Uniform};

    #[test]
    fn constant_ratios_give_uniform_weights() {
        let r = psis_smooth(&[0.3; 1000]).unwrap();
        assert_eq!(r.pareto_k, None);
        for w in &r.weights {
            assert!((w - 1e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_length_rule() {
        assert_eq!(tail_length(100), 20);
        assert_eq!(tail_length(4000), 190);
        assert_eq!(tail_length(10), 2);
    }

    #[test]
    fn gpd_fit_recovers_shape() {
        // GPD(k = 0.5, sigma = 1) by inversion
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let mut x: Vec<f64> = (0..5000).map(|_| gpd_quantile(u.sample(&mut rng), 0.5, 1.0)).collect();
        x.sort_by(f64::total_cmp);
        let (k, sigma) = gpd_fit(&x);
        assert!((k - 0.5).abs() < 0.06, "{k}");
        assert!((sigma - 1.0).abs() < 0.1, "{sigma}");
    }

    #[test]
    fn exponential_tail_has_small_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = Exp::new(1.0).unwrap();
        let r: Vec<f64> = (0..4000).map(|_| -e.sample(&mut rng)).collect();
        let res = psis_smooth(&r).unwrap();
        assert!(res.pareto_k.unwrap() < 0.5);
        assert!((res.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stopping_rule_cases() {
        assert_eq!(stopping_rule(&[3431.0, 3416.0, 3423.0]), (1, true));
        assert_eq!(stopping_rule(&[5.0, 4.0, 3.0]), (2, false));
        assert_eq!(stopping_rule(&[5.0]), (0, false));
    }

    #[test]
    fn self_comparison_has_zero_difference() {
        let m = LogLikMatrix::from_rows(vec![vec![-0.5, -1.0, -0.2]; 200]).unwrap();
        let a = loo(&m).unwrap();
        let cmp = compare_models(&["a".into(), "b".into()], &[a.clone(), a]).unwrap();
        for row in &cmp.ranking {
            assert_eq!(row.elpd_diff, 0.0);
            assert_eq!(row.se_diff, 0.0);
        }
    }

    #[test]
    fn rejects_mismatched_points() {
        let a = loo(&LogLikMatrix::from_rows(vec![vec![-0.5, -1.0]; 50]).unwrap()).unwrap();
        let b = loo(&LogLikMatrix::from_rows(vec![vec![-0.5]; 50]).unwrap()).unwrap();
        assert!(compare_models(&["a".into(), "b".into()], &[a, b]).is_err());
    }
}
