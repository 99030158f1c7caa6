//! Posterior predictive checks with replicated binary outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{mean, quantile_sorted, sort_floats};
use crate::model::{HierarchicalModel, Priors};
use crate::sampler::PosteriorDraws;

/// A scalar summary of a binary outcome vector.
pub trait TestStatistic: Send + Sync {
    fn name(&self) -> String;

    /// `None` when the statistic is undefined for this dataset.
    fn compute(&self, data: &Dataset, outcomes: &[bool]) -> Option<f64>;
}

/// Outcome proportion among subjects assigned to one treatment group
/// (`None` is placebo).
#[derive(Debug, Clone)]
pub struct GroupProportion {
    pub drug: Option<usize>,
    pub label: String,
}

impl TestStatistic for GroupProportion {
    fn name(&self) -> String {
        format!("proportion.{}", self.label)
    }

    fn compute(&self, data: &Dataset, outcomes: &[bool]) -> Option<f64> {
        let (mut n, mut k) = (0usize, 0usize);
        for (s, &y) in data.subjects().iter().zip(outcomes) {
            if s.treatment() == self.drug {
                n += 1;
                k += y as usize;
            }
        }
        (n > 0).then(|| k as f64 / n as f64)
    }
}

fn trial_proportions(data: &Dataset, outcomes: &[bool]) -> Vec<f64> {
    let mut n = vec![0usize; data.n_trials()];
    let mut k = vec![0usize; data.n_trials()];
    for (s, &y) in data.subjects().iter().zip(outcomes) {
        n[s.trial] += 1;
        k[s.trial] += y as usize;
    }
    n.iter()
        .zip(&k)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &k)| k as f64 / n as f64)
        .collect()
}

/// Largest outcome proportion across trials.
#[derive(Debug, Clone, Copy)]
pub struct MaxTrialProportion;

impl TestStatistic for MaxTrialProportion {
    fn name(&self) -> String {
        "max_trial_proportion".into()
    }

    fn compute(&self, data: &Dataset, outcomes: &[bool]) -> Option<f64> {
        trial_proportions(data, outcomes).into_iter().reduce(f64::max)
    }
}

/// Smallest outcome proportion across trials.
#[derive(Debug, Clone, Copy)]
pub struct MinTrialProportion;

impl TestStatistic for MinTrialProportion {
    fn name(&self) -> String {
        "min_trial_proportion".into()
    }

    fn compute(&self, data: &Dataset, outcomes: &[bool]) -> Option<f64> {
        trial_proportions(data, outcomes).into_iter().reduce(f64::min)
    }
}

/// Per-group proportions (placebo and each drug), then the cross-trial
/// maximum and minimum.
pub fn default_statistics(data: &Dataset) -> Vec<Box<dyn TestStatistic>> {
    let mut out: Vec<Box<dyn TestStatistic>> = vec![Box::new(GroupProportion {
        drug: None,
        label: "placebo".into(),
    })];
    for (k, name) in data.drug_names().iter().enumerate() {
        out.push(Box::new(GroupProportion {
            drug: Some(k),
            label: name.clone(),
        }));
    }
    out.push(Box::new(MaxTrialProportion));
    out.push(Box::new(MinTrialProportion));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcEntry {
    pub statistic: String,
    pub observed: f64,
    pub replicated_mean: f64,
    pub replicated_lower: f64,
    pub replicated_upper: f64,
    /// `P(T_rep > T_obs) + P(T_rep = T_obs) / 2`.
    pub p_value: f64,
    pub warning: Option<String>,
    #[serde(skip)]
    pub replicated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReport {
    pub seed: u64,
    pub n_replications: usize,
    pub entries: Vec<PpcEntry>,
}

impl PpcReport {
    pub fn entry(&self, statistic: &str) -> Option<&PpcEntry> {
        self.entries.iter().find(|e| e.statistic == statistic)
    }
}

/// Mid-p posterior predictive p-value.
pub fn predictive_p_value(observed: f64, replicated: &[f64]) -> f64 {
    let above = replicated.iter().filter(|&&t| t > observed).count() as f64;
    let equal = replicated.iter().filter(|&&t| t == observed).count() as f64;
    (above + 0.5 * equal) / replicated.len() as f64
}

/// Replicates outcomes once per posterior draw, conditioning on the fitted
/// trial effects, and compares each statistic to its observed value.
pub fn posterior_predictive_check(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    statistics: &[Box<dyn TestStatistic>],
    seed: u64,
) -> Result<PpcReport> {
    let model = HierarchicalModel::new(data, bases, Priors::default())?;
    if draws.shape() != model.shape() {
        return Err(Error::Shape("draws do not match the data and bases".into()));
    }
    if draws.total_draws() == 0 {
        return Err(Error::Shape("no posterior draws".into()));
    }
    let observed_y: Vec<bool> = data.subjects().iter().map(|s| s.outcome).collect();
    let states: Vec<_> = draws.iter().collect();
    let replicated: Vec<Vec<Option<f64>>> = states
        .par_iter()
        .enumerate()
        .map(|(q, state)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(q as u64);
            let y: Vec<bool> = model
                .fitted_probabilities(state)
                .into_iter()
                .map(|p| rng.random::<f64>() < p)
                .collect();
            statistics.iter().map(|s| s.compute(data, &y)).collect()
        })
        .collect();

    let mut entries = Vec::new();
    for (i, stat) in statistics.iter().enumerate() {
        let Some(observed) = stat.compute(data, &observed_y) else {
            continue;
        };
        let rep: Vec<f64> = replicated.iter().filter_map(|r| r[i]).collect();
        if rep.is_empty() {
            continue;
        }
        let mut sorted = rep.clone();
        sort_floats(&mut sorted);
        let p_value = predictive_p_value(observed, &rep);
        let warning = if observed > sorted[sorted.len() - 1] || observed < sorted[0] {
            Some(format!(
                "observed {} lies outside the replicated range [{}, {}]",
                observed,
                sorted[0],
                sorted[sorted.len() - 1]
            ))
        } else {
            None
        };
        entries.push(PpcEntry {
            statistic: stat.name(),
            observed,
            replicated_mean: mean(&rep),
            replicated_lower: quantile_sorted(&sorted, 0.025),
            replicated_upper: quantile_sorted(&sorted, 0.975),
            p_value,
            warning,
            replicated: rep,
        });
    }
    Ok(PpcReport {
        seed,
        n_replications: states.len(),
        entries,
    })
}
