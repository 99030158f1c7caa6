//! Rank-normalized split R-hat and effective sample sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::math::{mean, quantile_sorted, sort_floats, variance};
use crate::sampler::PosteriorDraws;

/// Parameters with R-hat at or above this value are flagged.
pub const RHAT_THRESHOLD: f64 = 1.1;

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Average ranks (1-based) of all values pooled across chains.
fn pooled_ranks(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<f64> = chains.iter().flatten().copied().collect();
    let mut idx: Vec<usize> = (0..flat.len()).collect();
    idx.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut ranks = vec![0.0; flat.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && flat[idx[j + 1]] == flat[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0;
    for c in chains {
        out.push(ranks[k..k + c.len()].to_vec());
        k += c.len();
    }
    out
}

fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = chains.iter().map(Vec::len).sum::<usize>() as f64;
    let normal = Normal::standard();
    pooled_ranks(chains)
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|r| normal.inverse_cdf((r - 0.375) / (s + 0.25)))
                .collect()
        })
        .collect()
}

fn fold(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut flat: Vec<f64> = chains.iter().flatten().copied().collect();
    sort_floats(&mut flat);
    let med = quantile_sorted(&flat, 0.5);
    chains
        .iter()
        .map(|c| c.iter().map(|v| (v - med).abs()).collect())
        .collect()
}

/// Classic R-hat of equal-length chains; `None` when within-chain
/// variance vanishes.
fn basic_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    if !(w > 0.0) || !w.is_finite() {
        return None;
    }
    let b_over_n = variance(&means);
    let var_hat = (n - 1.0) / n * w + b_over_n;
    Some((var_hat / w).sqrt())
}

fn valid_shape(chains: &[Vec<f64>]) -> bool {
    chains.len() >= 2
        && chains[0].len() >= 4
        && chains.iter().all(|c| c.len() == chains[0].len())
        && chains.iter().flatten().all(|v| v.is_finite())
}

/// Rank-normalized split R-hat: the larger of the bulk and folded-tail
/// values. Needs at least 2 chains of at least 4 equal-length draws.
pub fn rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if !valid_shape(chains) {
        return None;
    }
    let s = split(chains);
    let bulk = basic_rhat(&rank_normalize(&s))?;
    let tail = basic_rhat(&rank_normalize(&fold(&s)))?;
    Some(bulk.max(tail))
}

/// Split R-hat on the raw values, without rank normalization. Unlike
/// [`rhat`] it is unbounded as chains separate.
pub fn rhat_classic(chains: &[Vec<f64>]) -> Option<f64> {
    if !valid_shape(chains) {
        return None;
    }
    basic_rhat(&split(chains))
}

/// Biased autocovariance at lag `t`.
fn autocov(c: &[f64], m: f64, t: usize) -> f64 {
    let n = c.len();
    (0..n - t).map(|i| (c[i] - m) * (c[i + t] - m)).sum::<f64>() / n as f64
}

/// Effective sample size via Geyer's initial monotone sequence.
fn ess_raw(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains[0].len();
    if n < 4 {
        return None;
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov =
        |t: usize| -> f64 { chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, t)).sum::<f64>() / m as f64 };
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += variance(&means);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return None;
    }
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t < n - 3 && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t - 2;
    if rho_even > 0.0 {
        rho[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho[max_t + 1]).max(1.0 / total.log10());
    // capped at the number of draws
    Some((total / tau).min(total))
}

/// Bulk effective sample size on rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Option<f64> {
    if !valid_shape(chains) {
        return None;
    }
    ess_raw(&rank_normalize(&split(chains)))
}

/// Tail effective sample size: the smaller ESS of the 5% and 95%
/// quantile indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> Option<f64> {
    if !valid_shape(chains) {
        return None;
    }
    let s = split(chains);
    let mut flat: Vec<f64> = s.iter().flatten().copied().collect();
    sort_floats(&mut flat);
    let indicator = |q: f64| -> Vec<Vec<f64>> {
        let cut = quantile_sorted(&flat, q);
        s.iter()
            .map(|c| c.iter().map(|&v| if v <= cut { 1.0 } else { 0.0 }).collect())
            .collect()
    };
    let lo = ess_raw(&indicator(0.05))?;
    let hi = ess_raw(&indicator(0.95))?;
    Some(lo.min(hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` when undefined, e.g. for a constant chain.
    pub rhat: Option<f64>,
    pub rhat_classic: Option<f64>,
    pub ess_bulk: Option<f64>,
    pub ess_tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub parameters: Vec<ParameterDiagnostics>,
    pub total_draws: usize,
    pub divergences: usize,
    pub max_tree_depth_hits: usize,
    pub rhat_threshold: f64,
    /// Parameters with R-hat at or above the threshold, or undefined.
    pub flagged: Vec<String>,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.parameters
            .iter()
            .filter_map(|p| p.rhat)
            .max_by(|a, b| a.total_cmp(b))
    }
}

/// Diagnostics for named parameters given as `values[p][chain][draw]`.
pub fn diagnose(names: &[String], values: &[Vec<Vec<f64>>]) -> Result<Vec<ParameterDiagnostics>> {
    if names.len() != values.len() {
        return Err(Error::Shape("names and parameter chains differ in length".into()));
    }
    for v in values {
        if v.len() < 2 || v[0].len() < 4 || v.iter().any(|c| c.len() != v[0].len()) {
            return Err(Error::Shape(
                "convergence diagnostics need at least 2 chains of at least 4 equal-length draws".into(),
            ));
        }
    }
    Ok(names
        .iter()
        .zip(values)
        .map(|(name, chains)| {
            let flat: Vec<f64> = chains.iter().flatten().copied().collect();
            ParameterDiagnostics {
                name: name.clone(),
                mean: mean(&flat),
                sd: variance(&flat).sqrt(),
                rhat: rhat(chains),
                rhat_classic: rhat_classic(chains),
                ess_bulk: ess_bulk(chains),
                ess_tail: ess_tail(chains),
            }
        })
        .collect())
}

/// Convergence report over every constrained parameter. Unit-diagonal
/// correlation entries are not stored, so every reported scalar varies.
pub fn split_rhat(draws: &PosteriorDraws, max_tree_depth: usize) -> Result<ConvergenceReport> {
    let parameters = diagnose(draws.parameter_names(), &draws.parameter_chains())?;
    let flagged = parameters
        .iter()
        .filter(|p| p.rhat.is_none_or(|r| r >= RHAT_THRESHOLD))
        .map(|p| p.name.clone())
        .collect();
    let stats = draws.stats().iter().flatten();
    Ok(ConvergenceReport {
        total_draws: draws.total_draws(),
        divergences: draws.divergences(),
        max_tree_depth_hits: stats.filter(|s| s.tree_depth >= max_tree_depth.max(1)).count(),
        rhat_threshold: RHAT_THRESHOLD,
        parameters,
        flagged,
    })
}
