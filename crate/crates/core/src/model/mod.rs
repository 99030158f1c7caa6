//! Hierarchical B-spline logistic model.
//!
//! For subject `i` in trial `j`:
//!
//! ```text
//! logit P(Y = 1) = alpha_j + sum_k row_k(T_k) . (phi_jk + M theta_k) + beta . X
//! [alpha_j, phi_j] ~ N(mu, D(sigma) Omega D(sigma))
//! ```
//!
//! with `mu_alpha` flat, `mu_phi`, `beta`, `theta` ~ t5(0, 2.5),
//! `sigma` ~ half-Cauchy(0, 0.1) and `Omega` ~ LKJ(3). Trial effects are
//! sampled non-centered: `[alpha_j, phi_j] = mu + D(sigma) chol(Omega) z_j`
//! with `z_j ~ N(0, I)`.

mod corr;
mod params;

use serde::{Deserialize, Serialize};

pub use corr::{lkj_corr_lpdf, lkj_log_normalizer, n_corr_coords};
pub use params::{ModelShape, ParameterState, ParameterValues};

use crate::basis::{eval_row_unchecked, BasisSet};
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::math::{
    bernoulli_logit_lpmf, half_cauchy_lpdf, inv_logit, std_normal_lpdf, student_t_lpdf, student_t_lpdf_dx,
};
use corr::CorrTransform;

/// Prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Degrees of freedom of the Student-t on `mu_phi`, `beta`, `theta`.
    pub t_df: f64,
    pub t_scale: f64,
    pub sigma_scale: f64,
    pub lkj_eta: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            t_df: 5.0,
            t_scale: 2.5,
            sigma_scale: 0.1,
            lkj_eta: 3.0,
        }
    }
}

/// Model shape implied by a dataset and its bases.
pub fn model_shape(data: &Dataset, bases: &[BasisSet]) -> Result<ModelShape> {
    if bases.len() != data.n_drugs() {
        return Err(Error::Shape(format!(
            "{} bases for {} drugs",
            bases.len(),
            data.n_drugs()
        )));
    }
    for (k, b) in bases.iter().enumerate() {
        if b.drug_index() != k {
            return Err(Error::Shape(format!("basis {k} is for drug {}", b.drug_index())));
        }
    }
    Ok(ModelShape {
        n_trials: data.n_trials(),
        columns_per_drug: bases.iter().map(BasisSet::n_columns).collect(),
        n_covariates: data.n_covariates(),
    })
}

/// `alpha_j + sum_k row_k(T_k) . (phi_jk + M theta_k) + beta . X`.
pub fn linear_predictor(state: &ParameterState, subject: &SubjectRecord, bases: &[BasisSet]) -> Result<f64> {
    let shape = state.shape();
    if subject.trial >= shape.n_trials
        || subject.doses.len() != shape.n_drugs()
        || subject.covariates.len() != shape.n_covariates
        || bases.len() != shape.n_drugs()
    {
        return Err(Error::Shape(
            "subject, bases and parameters disagree on dimensions".into(),
        ));
    }
    let mut eta = state.alpha(subject.trial);
    for (k, basis) in bases.iter().enumerate() {
        if basis.n_columns() != shape.columns_per_drug[k] {
            return Err(Error::Shape(format!("basis {k} has wrong column count")));
        }
        let row = crate::basis::eval_row(basis, subject.doses[k])?;
        let phi = state.phi_block(subject.trial, k);
        let theta = state.theta_block(k);
        for (c, r) in row.iter().enumerate() {
            let coef = phi[c] + if subject.moderator { theta[c] } else { 0.0 };
            eta += r * coef;
        }
    }
    eta += state
        .beta()
        .iter()
        .zip(&subject.covariates)
        .map(|(b, x)| b * x)
        .sum::<f64>();
    Ok(eta)
}

/// Log posterior split into its components (all on the unconstrained
/// scale, Jacobians included in the prior terms they belong to).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogPosteriorTerms {
    pub likelihood: f64,
    pub offsets: f64,
    pub coefficients: f64,
    pub scales: f64,
    pub correlation: f64,
}

impl LogPosteriorTerms {
    pub fn total(&self) -> f64 {
        self.likelihood + self.offsets + self.coefficients + self.scales + self.correlation
    }
}

/// Subject data with design rows evaluated once.
#[derive(Debug, Clone)]
struct PreparedSubject {
    trial: usize,
    outcome: bool,
    moderator: bool,
    /// Range into `entries`.
    start: usize,
    end: usize,
}

/// The joint density over the unconstrained parameter vector, with the
/// design matrix precomputed. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    shape: ModelShape,
    priors: Priors,
    subjects: Vec<PreparedSubject>,
    /// Nonzero design entries `(coefficient index, value)`.
    entries: Vec<(usize, f64)>,
    /// Row-major `n x P`.
    covariates: Vec<f64>,
}

impl HierarchicalModel {
    pub fn new(data: &Dataset, bases: &[BasisSet], priors: Priors) -> Result<Self> {
        let shape = model_shape(data, bases)?;
        let mut subjects = Vec::with_capacity(data.n_subjects());
        let mut entries = Vec::new();
        let mut covariates = Vec::with_capacity(data.n_subjects() * data.n_covariates());
        for s in data.subjects() {
            let start = entries.len();
            for (k, basis) in bases.iter().enumerate() {
                if s.doses[k] > 0.0 {
                    let off = shape.drug_offset(k);
                    for (c, v) in eval_row_unchecked(basis, s.doses[k]).into_iter().enumerate() {
                        if v != 0.0 {
                            entries.push((off + c, v));
                        }
                    }
                }
            }
            subjects.push(PreparedSubject {
                trial: s.trial,
                outcome: s.outcome,
                moderator: s.moderator,
                start,
                end: entries.len(),
            });
            covariates.extend_from_slice(&s.covariates);
        }
        Ok(HierarchicalModel {
            shape,
            priors,
            subjects,
            entries,
            covariates,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn n_params(&self) -> usize {
        self.shape.n_params()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn log_posterior(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.evaluate(u, None).total())
    }

    pub fn log_posterior_terms(&self, u: &[f64]) -> Result<LogPosteriorTerms> {
        self.check_len(u)?;
        Ok(self.evaluate(u, None))
    }

    pub fn log_posterior_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut g = vec![0.0; u.len()];
        self.evaluate(u, Some(&mut g));
        Ok(g)
    }

    /// Log posterior and gradient in one pass; `grad` is overwritten.
    pub fn log_posterior_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(u)?;
        if grad.len() != u.len() {
            return Err(Error::Shape("gradient buffer length".into()));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        Ok(self.evaluate(u, Some(grad)).total())
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.shape.n_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, expected {}",
                u.len(),
                self.shape.n_params()
            )));
        }
        Ok(())
    }

    fn subject_eta(&self, i: usize, effects: &[f64], beta: &[f64], theta: &[f64]) -> f64 {
        let s = &self.subjects[i];
        let mut eta = effects[0];
        for &(c, v) in &self.entries[s.start..s.end] {
            let coef = effects[1 + c] + if s.moderator { theta[c] } else { 0.0 };
            eta += v * coef;
        }
        let p = self.shape.n_covariates;
        let x = &self.covariates[i * p..(i + 1) * p];
        eta + beta.iter().zip(x).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Pointwise log-likelihood of every subject under `state`.
    pub fn pointwise_log_likelihood(&self, state: &ParameterState) -> Vec<f64> {
        (0..self.subjects.len())
            .map(|i| {
                let s = &self.subjects[i];
                let eta = self.subject_eta(i, state.trial_effect(s.trial), state.beta(), state.theta());
                bernoulli_logit_lpmf(s.outcome, eta)
            })
            .collect()
    }

    /// Outcome probabilities of every subject at its observed design.
    pub fn fitted_probabilities(&self, state: &ParameterState) -> Vec<f64> {
        (0..self.subjects.len())
            .map(|i| {
                let s = &self.subjects[i];
                inv_logit(self.subject_eta(i, state.trial_effect(s.trial), state.beta(), state.theta()))
            })
            .collect()
    }

    fn evaluate(&self, u: &[f64], grad: Option<&mut [f64]>) -> LogPosteriorTerms {
        let shape = &self.shape;
        let o = shape.offsets();
        let d = shape.effect_dim();
        let j_count = shape.n_trials;
        let pri = &self.priors;

        let mu_phi = &u[o.mu_phi..o.sigma];
        let log_sigma = &u[o.sigma..o.corr];
        let sigma: Vec<f64> = log_sigma.iter().map(|v| v.exp()).collect();
        let corr = CorrTransform::forward(&u[o.corr..o.z], d);
        let l = &corr.factor;
        let z = &u[o.z..o.beta];
        let beta = &u[o.beta..o.theta];
        let theta = &u[o.theta..o.end];

        // trial effects e_j = mu + sigma o (L z_j)
        let mut w = vec![0.0; j_count * d];
        let mut effects = vec![0.0; j_count * d];
        for j in 0..j_count {
            let zj = &z[j * d..(j + 1) * d];
            for a in 0..d {
                let wa: f64 = (0..=a).map(|b| l[a * d + b] * zj[b]).sum();
                w[j * d + a] = wa;
                let mean = if a == 0 { u[0] } else { mu_phi[a - 1] };
                effects[j * d + a] = mean + sigma[a] * wa;
            }
        }

        let mut terms = LogPosteriorTerms::default();
        let want_grad = grad.is_some();
        let mut g_effects = vec![0.0; if want_grad { j_count * d } else { 0 }];
        let mut g_beta = vec![0.0; if want_grad { beta.len() } else { 0 }];
        let mut g_theta = vec![0.0; if want_grad { theta.len() } else { 0 }];
        let p = shape.n_covariates;

        for (i, s) in self.subjects.iter().enumerate() {
            let e = &effects[s.trial * d..(s.trial + 1) * d];
            let eta = self.subject_eta(i, e, beta, theta);
            terms.likelihood += bernoulli_logit_lpmf(s.outcome, eta);
            if want_grad {
                let resid = if s.outcome { 1.0 } else { 0.0 } - inv_logit(eta);
                let ge = &mut g_effects[s.trial * d..(s.trial + 1) * d];
                ge[0] += resid;
                for &(c, v) in &self.entries[s.start..s.end] {
                    ge[1 + c] += resid * v;
                    if s.moderator {
                        g_theta[c] += resid * v;
                    }
                }
                let x = &self.covariates[i * p..(i + 1) * p];
                for (gb, xv) in g_beta.iter_mut().zip(x) {
                    *gb += resid * xv;
                }
            }
        }

        terms.offsets = z.iter().map(|&v| std_normal_lpdf(v)).sum();
        terms.coefficients = mu_phi
            .iter()
            .chain(beta)
            .chain(theta)
            .map(|&v| student_t_lpdf(v, pri.t_df, pri.t_scale))
            .sum();
        // half-Cauchy on sigma plus log-Jacobian of sigma = exp(u)
        terms.scales = sigma
            .iter()
            .zip(log_sigma)
            .map(|(&s, &ls)| half_cauchy_lpdf(s, pri.sigma_scale) + ls)
            .sum();
        terms.correlation = corr.log_density(pri.lkj_eta);

        let Some(g) = grad else {
            return terms;
        };

        // mu_alpha: flat prior, likelihood only
        let mut l_adj = vec![0.0; d * d];
        for j in 0..j_count {
            let ge = &g_effects[j * d..(j + 1) * d];
            let zj = &z[j * d..(j + 1) * d];
            g[0] += ge[0];
            for a in 1..d {
                g[o.mu_phi + a - 1] += ge[a];
            }
            for a in 0..d {
                g[o.sigma + a] += ge[a] * w[j * d + a] * sigma[a];
            }
            // h = sigma o ge; dz = L^T h; dL += h z^T
            for a in 0..d {
                let h = sigma[a] * ge[a];
                for b in 0..=a {
                    g[o.z + j * d + b] += l[a * d + b] * h;
                    l_adj[a * d + b] += h * zj[b];
                }
            }
        }
        for (k, &v) in z.iter().enumerate() {
            g[o.z + k] -= v;
        }
        for (k, &v) in mu_phi.iter().enumerate() {
            g[o.mu_phi + k] += student_t_lpdf_dx(v, pri.t_df, pri.t_scale);
        }
        for (k, &v) in beta.iter().enumerate() {
            g[o.beta + k] += g_beta[k] + student_t_lpdf_dx(v, pri.t_df, pri.t_scale);
        }
        for (k, &v) in theta.iter().enumerate() {
            g[o.theta + k] += g_theta[k] + student_t_lpdf_dx(v, pri.t_df, pri.t_scale);
        }
        let s2 = pri.sigma_scale * pri.sigma_scale;
        for (a, &s) in sigma.iter().enumerate() {
            g[o.sigma + a] += 1.0 - 2.0 * s * s / (s2 + s * s);
        }
        corr.backprop(pri.lkj_eta, &l_adj, &mut g[o.corr..o.z]);
        terms
    }
}

#[cfg(test)]
mod tests;
