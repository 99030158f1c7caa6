//! Synthetic multi-trial data with known dose-response curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::math::inv_logit;
use crate::model::{linear_predictor, ParameterState};

/// A treatment curve on the logit scale with `g(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurveSpec {
    Zero,
    Linear {
        slope: f64,
    },
    /// `emax * (s(k (d - ed50)) - s(-k ed50))` with `s` the logistic
    /// function: sigmoid rise to a plateau near `emax`.
    Logistic {
        emax: f64,
        ed50: f64,
        steepness: f64,
    },
}

impl CurveSpec {
    pub fn eval(&self, dose: f64) -> f64 {
        match *self {
            CurveSpec::Zero => 0.0,
            CurveSpec::Linear { slope } => slope * dose,
            CurveSpec::Logistic { emax, ed50, steepness } => {
                emax * (inv_logit(steepness * (dose - ed50)) - inv_logit(-steepness * ed50))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateDistribution {
    StandardNormal,
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub distribution: CovariateDistribution,
    /// Log-odds effect per unit.
    pub effect: f64,
}

/// One randomized arm. Cumulative dose is the daily dose times the days
/// completed before dropout, times adherence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    /// `None` for placebo.
    pub drug: Option<usize>,
    pub n_subjects: usize,
    /// Daily dose drawn uniformly from `[low, high]`.
    pub daily_dose: (f64, f64),
    pub n_periods: usize,
    pub period_days: f64,
    /// Probability of dropping out before each period.
    pub dropout_hazard: f64,
    /// Beta parameters of the adherence fraction; full adherence if absent.
    pub adherence: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub arms: Vec<ArmSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub drug_names: Vec<String>,
    pub trials: Vec<TrialSpec>,
    /// Pooled intercept (logit of the untreated rate at covariates 0).
    pub mu_alpha: f64,
    /// Between-trial sd of intercepts.
    pub sigma_alpha: f64,
    /// Between-trial relative sd of curve heights.
    pub sigma_curve: f64,
    pub curves: Vec<CurveSpec>,
    /// Extra curve for moderator-positive subjects, shared across trials.
    pub moderator_curves: Vec<CurveSpec>,
    pub moderator_prevalence: f64,
    pub covariates: Vec<CovariateSpec>,
    pub seed: u64,
}

/// Realized trial-level truth of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub drug_names: Vec<String>,
    pub mu_alpha: f64,
    pub trial_intercepts: Vec<f64>,
    /// `curve_multipliers[j][k]` scales drug `k`'s curve in trial `j`.
    pub curve_multipliers: Vec<Vec<f64>>,
    pub curves: Vec<CurveSpec>,
    pub moderator_curves: Vec<CurveSpec>,
    pub covariate_effects: Vec<f64>,
}

impl GroundTruth {
    /// Outcome probability of a typical subject (covariates 0) at the
    /// pooled curve.
    pub fn pooled_probability(&self, drug: usize, dose: f64, moderator: bool) -> f64 {
        let h = if moderator {
            self.moderator_curves[drug].eval(dose)
        } else {
            0.0
        };
        inv_logit(self.mu_alpha + self.curves[drug].eval(dose) + h)
    }

    /// Pooled moderator-present minus moderator-absent probability.
    pub fn difference(&self, drug: usize, dose: f64) -> f64 {
        self.pooled_probability(drug, dose, true) - self.pooled_probability(drug, dose, false)
    }

    /// True outcome probability of a simulated subject.
    pub fn subject_probability(&self, s: &SubjectRecord) -> f64 {
        let mut eta = self.trial_intercepts[s.trial];
        for (k, &d) in s.doses.iter().enumerate() {
            if d > 0.0 {
                eta += self.curve_multipliers[s.trial][k] * self.curves[k].eval(d);
                if s.moderator {
                    eta += self.moderator_curves[k].eval(d);
                }
            }
        }
        eta += self
            .covariate_effects
            .iter()
            .zip(&s.covariates)
            .map(|(b, x)| b * x)
            .sum::<f64>();
        inv_logit(eta)
    }
}

impl SimScenario {
    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.drug_names.len();
        let bad = |m: String| Err(Error::Config(m));
        if k == 0 || self.trials.is_empty() {
            return bad("scenario needs at least one drug and one trial".into());
        }
        if self.curves.len() != k || self.moderator_curves.len() != k {
            return bad(format!("expected {k} curves and {k} moderator curves"));
        }
        if !(self.sigma_alpha >= 0.0 && self.sigma_curve >= 0.0) {
            return bad("between-trial scales must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.moderator_prevalence) {
            return bad("moderator prevalence must lie in [0, 1]".into());
        }
        for c in &self.covariates {
            if let CovariateDistribution::Bernoulli { p } = c.distribution {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("covariate {}: p outside [0, 1]", c.name));
                }
            }
        }
        for (j, t) in self.trials.iter().enumerate() {
            for a in &t.arms {
                if a.n_subjects == 0 {
                    return bad(format!("trial {j}: arm sizes must be at least 1"));
                }
                if a.drug.is_some_and(|d| d >= k) {
                    return bad(format!("trial {j}: arm drug index out of range"));
                }
                if !(0.0..=1.0).contains(&a.dropout_hazard) {
                    return bad(format!("trial {j}: dropout hazard outside [0, 1]"));
                }
                let (lo, hi) = a.daily_dose;
                if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || !(a.period_days >= 0.0) {
                    return bad(format!("trial {j}: invalid daily dose range or period length"));
                }
                if let Some((x, y)) = a.adherence {
                    if !(x > 0.0 && y > 0.0) {
                        return bad(format!("trial {j}: adherence Beta parameters must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Two drugs in six trials of placebo and two active arms, 100
    /// subjects each. Placebo outcome rate is near 4.8% and the drug A
    /// arm near 17%; drug A has a moderator effect.
    pub fn default_two_drug() -> Self {
        let arm = |drug: Option<usize>, daily: (f64, f64)| ArmSpec {
            drug,
            n_subjects: 100,
            daily_dose: daily,
            n_periods: 8,
            period_days: 7.0,
            dropout_hazard: 0.08,
            adherence: Some((8.0, 2.0)),
        };
        SimScenario {
            drug_names: vec!["drug_a".into(), "drug_b".into()],
            trials: (0..6)
                .map(|_| TrialSpec {
                    arms: vec![
                        arm(None, (0.0, 0.0)),
                        arm(Some(0), (0.05, 0.2)),
                        arm(Some(1), (0.05, 0.3)),
                    ],
                })
                .collect(),
            mu_alpha: -3.05,
            sigma_alpha: 0.2,
            sigma_curve: 0.1,
            curves: vec![
                CurveSpec::Logistic {
                    emax: 1.7,
                    ed50: 3.0,
                    steepness: 0.8,
                },
                CurveSpec::Logistic {
                    emax: 0.9,
                    ed50: 4.0,
                    steepness: 0.6,
                },
            ],
            moderator_curves: vec![
                CurveSpec::Logistic {
                    emax: 1.0,
                    ed50: 6.0,
                    steepness: 1.0,
                },
                CurveSpec::Zero,
            ],
            moderator_prevalence: 0.5,
            covariates: vec![
                CovariateSpec {
                    name: "age".into(),
                    distribution: CovariateDistribution::StandardNormal,
                    effect: 0.2,
                },
                CovariateSpec {
                    name: "female".into(),
                    distribution: CovariateDistribution::Bernoulli { p: 0.4 },
                    effect: 0.1,
                },
            ],
            seed: 2024,
        }
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cumulative_dose<R: Rng>(arm: &ArmSpec, rng: &mut R) -> Result<f64> {
    let (lo, hi) = arm.daily_dose;
    let daily = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut completed = 0usize;
    for _ in 0..arm.n_periods {
        if rng.random::<f64>() < arm.dropout_hazard {
            break;
        }
        completed += 1;
    }
    let adherence = match arm.adherence {
        Some((a, b)) => Beta::new(a, b)
            .map_err(|e| Error::Config(format!("adherence distribution: {e}")))?
            .sample(rng),
        None => 1.0,
    };
    Ok(daily * completed as f64 * arm.period_days * adherence)
}

/// Draws a dataset and its ground truth. Trial-level effects come from
/// stream 0 of the seed; trial `j` uses stream `j + 1`.
pub fn simulate(scenario: &SimScenario) -> Result<(Dataset, GroundTruth)> {
    scenario.validate()?;
    let k = scenario.drug_names.len();
    let j_count = scenario.n_trials();
    let mut rng = sub_rng(scenario.seed, 0);
    let mut trial_intercepts = Vec::with_capacity(j_count);
    let mut curve_multipliers = Vec::with_capacity(j_count);
    for _ in 0..j_count {
        let e: f64 = StandardNormal.sample(&mut rng);
        trial_intercepts.push(scenario.mu_alpha + scenario.sigma_alpha * e);
        curve_multipliers.push(
            (0..k)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    1.0 + scenario.sigma_curve * e
                })
                .collect::<Vec<f64>>(),
        );
    }
    let truth = GroundTruth {
        drug_names: scenario.drug_names.clone(),
        mu_alpha: scenario.mu_alpha,
        trial_intercepts,
        curve_multipliers,
        curves: scenario.curves.clone(),
        moderator_curves: scenario.moderator_curves.clone(),
        covariate_effects: scenario.covariates.iter().map(|c| c.effect).collect(),
    };

    let per_trial: Vec<Vec<SubjectRecord>> = scenario
        .trials
        .par_iter()
        .enumerate()
        .map(|(j, trial)| {
            let mut rng = sub_rng(scenario.seed, j as u64 + 1);
            let mut out = Vec::new();
            for arm in &trial.arms {
                for _ in 0..arm.n_subjects {
                    let mut doses = vec![0.0; k];
                    if let Some(d) = arm.drug {
                        doses[d] = cumulative_dose(arm, &mut rng)?;
                    }
                    let covariates = scenario
                        .covariates
                        .iter()
                        .map(|c| match c.distribution {
                            CovariateDistribution::StandardNormal => StandardNormal.sample(&mut rng),
                            CovariateDistribution::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
                        })
                        .collect();
                    let moderator = rng.random::<f64>() < scenario.moderator_prevalence;
                    let mut s = SubjectRecord {
                        trial: j,
                        doses,
                        outcome: false,
                        covariates,
                        moderator,
                    };
                    s.outcome = rng.random::<f64>() < truth.subject_probability(&s);
                    out.push(s);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let data = Dataset::new(
        scenario.drug_names.clone(),
        scenario.covariates.iter().map(|c| c.name.clone()).collect(),
        j_count,
        per_trial.into_iter().flatten().collect(),
    )?;
    Ok((data, truth))
}

/// Copy of `data` with outcomes redrawn from the model at `state`.
pub fn resample_outcomes(data: &Dataset, bases: &[BasisSet], state: &ParameterState, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = data
        .subjects()
        .iter()
        .map(|s| {
            let p = inv_logit(linear_predictor(state, s, bases)?);
            let mut s = s.clone();
            s.outcome = rng.random::<f64>() < p;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        data.drug_names().to_vec(),
        data.covariate_names().to_vec(),
        data.n_trials(),
        subjects,
    )
}
