//! Subject-level pooled trial data.

use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, BasisSet, CUBIC};
use crate::error::{Error, Result};

/// One trial participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub trial: usize,
    /// Cumulative dose per drug, in units of 100mg olanzapine equivalents.
    pub doses: Vec<f64>,
    pub outcome: bool,
    pub covariates: Vec<f64>,
    pub moderator: bool,
}

impl SubjectRecord {
    /// The drug this subject received, or `None` for placebo.
    pub fn treatment(&self) -> Option<usize> {
        self.doses.iter().position(|&d| d > 0.0)
    }
}

/// Validated collection of subjects from `n_trials` trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    drug_names: Vec<String>,
    covariate_names: Vec<String>,
    n_trials: usize,
    subjects: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(
        drug_names: Vec<String>,
        covariate_names: Vec<String>,
        n_trials: usize,
        subjects: Vec<SubjectRecord>,
    ) -> Result<Self> {
        if drug_names.is_empty() {
            return Err(Error::Data("at least one drug is required".into()));
        }
        let k = drug_names.len();
        let p = covariate_names.len();
        for (i, s) in subjects.iter().enumerate() {
            if s.trial >= n_trials {
                return Err(Error::Data(format!(
                    "subject {i}: trial {} outside [0, {n_trials})",
                    s.trial
                )));
            }
            if s.doses.len() != k {
                return Err(Error::Shape(format!(
                    "subject {i}: {} doses for {k} drugs",
                    s.doses.len()
                )));
            }
            if s.covariates.len() != p {
                return Err(Error::Shape(format!(
                    "subject {i}: {} covariates, expected {p}",
                    s.covariates.len()
                )));
            }
            if let Some(d) = s.doses.iter().find(|d| !d.is_finite() || **d < 0.0) {
                return Err(Error::Data(format!("subject {i}: invalid dose {d}")));
            }
            if s.doses.iter().filter(|&&d| d > 0.0).count() > 1 {
                return Err(Error::Data(format!(
                    "subject {i}: more than one drug with positive dose"
                )));
            }
            if let Some(x) = s.covariates.iter().find(|x| !x.is_finite()) {
                return Err(Error::Data(format!("subject {i}: non-finite covariate {x}")));
            }
        }
        Ok(Dataset {
            drug_names,
            covariate_names,
            n_trials,
            subjects,
        })
    }

    pub fn drug_names(&self) -> &[String] {
        &self.drug_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn n_drugs(&self) -> usize {
        self.drug_names.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Copy of the dataset without subject `index`; used by exact
    /// leave-one-out refits.
    pub fn without_subject(&self, index: usize) -> Dataset {
        let mut out = self.clone();
        out.subjects.remove(index);
        out
    }

    /// Observed doses of drug `k`, grouped by trial.
    pub fn doses_by_trial(&self, k: usize) -> Vec<Vec<f64>> {
        let mut by_trial = vec![Vec::new(); self.n_trials];
        for s in &self.subjects {
            by_trial[s.trial].push(s.doses[k]);
        }
        by_trial
    }

    /// Cubic bases with `n_interior_knots` knots for every drug.
    pub fn build_bases(&self, n_interior_knots: usize) -> Result<Vec<BasisSet>> {
        (0..self.n_drugs())
            .map(|k| {
                build_basis(k, &self.doses_by_trial(k), n_interior_knots, CUBIC)
                    .map_err(|e| Error::Basis(format!("drug `{}`: {e}", self.drug_names[k])))
            })
            .collect()
    }

    /// Centers and scales every covariate column that is not strictly 0/1.
    /// Returns the (mean, sd) applied per column; binary columns get (0, 1).
    pub fn standardize_covariates(&mut self) -> Vec<(f64, f64)> {
        let n = self.subjects.len() as f64;
        (0..self.n_covariates())
            .map(|p| {
                let binary = self
                    .subjects
                    .iter()
                    .all(|s| s.covariates[p] == 0.0 || s.covariates[p] == 1.0);
                if binary || self.subjects.len() < 2 {
                    return (0.0, 1.0);
                }
                let mean = self.subjects.iter().map(|s| s.covariates[p]).sum::<f64>() / n;
                let var = self
                    .subjects
                    .iter()
                    .map(|s| (s.covariates[p] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                for s in &mut self.subjects {
                    s.covariates[p] = (s.covariates[p] - mean) / sd;
                }
                (mean, sd)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(trial: usize, doses: Vec<f64>) -> SubjectRecord {
        SubjectRecord {
            trial,
            doses,
            outcome: false,
            covariates: vec![1.5],
            moderator: false,
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_two_positive_doses() {
        let err = Dataset::new(names(&["a", "b"]), names(&["x"]), 1, vec![subject(0, vec![1.0, 2.0])]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn rejects_out_of_range_trial_and_shape() {
        assert!(Dataset::new(names(&["a"]), names(&["x"]), 1, vec![subject(1, vec![0.0])]).is_err());
        assert!(matches!(
            Dataset::new(names(&["a"]), names(&["x"]), 1, vec![subject(0, vec![0.0, 1.0])]),
            Err(Error::Shape(_))
        ));
        assert!(Dataset::new(names(&["a"]), names(&["x"]), 1, vec![subject(0, vec![-1.0])]).is_err());
    }

    #[test]
    fn standardizes_continuous_only() {
        let mut subjects = vec![subject(0, vec![0.0]), subject(0, vec![1.0]), subject(0, vec![2.0])];
        for (i, s) in subjects.iter_mut().enumerate() {
            s.covariates = vec![10.0 + i as f64, (i % 2) as f64];
        }
        let mut data = Dataset::new(names(&["a"]), names(&["age", "female"]), 1, subjects).unwrap();
        let scales = data.standardize_covariates();
        assert_eq!(scales[0], (11.0, 1.0));
        assert_eq!(scales[1], (0.0, 1.0));
        let col: Vec<f64> = data.subjects().iter().map(|s| s.covariates[0]).collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn treatment_group() {
        assert_eq!(subject(0, vec![0.0, 0.0]).treatment(), None);
        assert_eq!(subject(0, vec![0.0, 3.0]).treatment(), Some(1));
    }
}
