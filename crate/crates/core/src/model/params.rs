//! Parameter layout and the constrained/unconstrained maps.

use serde::{Deserialize, Serialize};

use super::corr::{n_corr_coords, unconstrain_factor, CorrTransform};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, lower_mul_vec, lower_times_transpose};

/// Dimensions of a model instance.
///
/// Hierarchical effects per trial are `[alpha_j, phi_j]`, of length
/// `effect_dim() = 1 + sum(columns_per_drug)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_trials: usize,
    pub columns_per_drug: Vec<usize>,
    pub n_covariates: usize,
}

/// Offsets of each parameter block in the flat vector. The constrained
/// and unconstrained vectors share this layout.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Offsets {
    pub mu_phi: usize,
    pub sigma: usize,
    pub corr: usize,
    pub z: usize,
    pub beta: usize,
    pub theta: usize,
    pub end: usize,
}

impl ModelShape {
    pub fn n_drugs(&self) -> usize {
        self.columns_per_drug.len()
    }

    /// Total spline coefficients across drugs (`KL`).
    pub fn n_coefficients(&self) -> usize {
        self.columns_per_drug.iter().sum()
    }

    /// Length of one trial's effect vector (`KL + 1`).
    pub fn effect_dim(&self) -> usize {
        self.n_coefficients() + 1
    }

    /// Start of drug `k`'s block within a coefficient vector.
    pub fn drug_offset(&self, k: usize) -> usize {
        self.columns_per_drug[..k].iter().sum()
    }

    pub(crate) fn offsets(&self) -> Offsets {
        let c = self.n_coefficients();
        let d = self.effect_dim();
        let mu_phi = 1;
        let sigma = mu_phi + c;
        let corr = sigma + d;
        let z = corr + n_corr_coords(d);
        let beta = z + self.n_trials * d;
        let theta = beta + self.n_covariates;
        Offsets {
            mu_phi,
            sigma,
            corr,
            z,
            beta,
            theta,
            end: theta + c,
        }
    }

    /// Length of the (un)constrained parameter vector.
    pub fn n_params(&self) -> usize {
        self.offsets().end
    }

    /// Column names of the constrained vector, e.g. `mu_phi.olz.2`.
    pub fn parameter_names(&self, drug_names: &[String], covariate_names: &[String]) -> Vec<String> {
        let coef: Vec<String> = self
            .columns_per_drug
            .iter()
            .enumerate()
            .flat_map(|(k, &l)| {
                let drug = drug_names.get(k).cloned().unwrap_or_else(|| format!("drug{k}"));
                (1..=l).map(move |c| format!("{drug}.{c}"))
            })
            .collect();
        let effects: Vec<String> = std::iter::once("alpha".to_string())
            .chain(coef.iter().cloned())
            .collect();
        let d = self.effect_dim();
        let mut names = vec!["mu_alpha".to_string()];
        names.extend(coef.iter().map(|c| format!("mu_phi.{c}")));
        names.extend(effects.iter().map(|e| format!("sigma.{e}")));
        for i in 1..d {
            for j in 0..i {
                names.push(format!("omega.{}.{}", effects[i], effects[j]));
            }
        }
        for t in 0..self.n_trials {
            names.extend(effects.iter().map(|e| format!("z.{t}.{e}")));
        }
        for p in 0..self.n_covariates {
            let cov = covariate_names.get(p).cloned().unwrap_or_else(|| format!("x{p}"));
            names.push(format!("beta.{cov}"));
        }
        names.extend(coef.iter().map(|c| format!("theta.{c}")));
        names
    }
}

/// Full parameter set in constrained coordinates, with the derived trial
/// effects `[alpha_j, phi_j] = mu + D(sigma) chol(Omega) z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    shape: ModelShape,
    mu_alpha: f64,
    mu_phi: Vec<f64>,
    sigma: Vec<f64>,
    omega: Vec<f64>,
    omega_factor: Vec<f64>,
    z: Vec<Vec<f64>>,
    beta: Vec<f64>,
    theta: Vec<f64>,
    trial_effects: Vec<Vec<f64>>,
}

/// Inputs for [`ParameterState::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterValues {
    pub mu_alpha: f64,
    pub mu_phi: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Row-major correlation matrix.
    pub omega: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ParameterValues {
    /// Everything zero, unit scales, identity correlation.
    pub fn zeros(shape: &ModelShape) -> Self {
        let c = shape.n_coefficients();
        let d = shape.effect_dim();
        let mut omega = vec![0.0; d * d];
        for i in 0..d {
            omega[i * d + i] = 1.0;
        }
        ParameterValues {
            mu_alpha: 0.0,
            mu_phi: vec![0.0; c],
            sigma: vec![1.0; d],
            omega,
            z: vec![vec![0.0; d]; shape.n_trials],
            beta: vec![0.0; shape.n_covariates],
            theta: vec![0.0; c],
        }
    }
}

impl ParameterState {
    /// Validates shapes and invariants and derives trial effects.
    pub fn new(shape: &ModelShape, v: ParameterValues) -> Result<Self> {
        let c = shape.n_coefficients();
        let d = shape.effect_dim();
        let check = |name: &str, got: usize, want: usize| {
            if got != want {
                Err(Error::Shape(format!("{name}: expected {want} values, got {got}")))
            } else {
                Ok(())
            }
        };
        check("mu_phi", v.mu_phi.len(), c)?;
        check("sigma", v.sigma.len(), d)?;
        check("omega", v.omega.len(), d * d)?;
        check("z", v.z.len(), shape.n_trials)?;
        for zj in &v.z {
            check("z_j", zj.len(), d)?;
        }
        check("beta", v.beta.len(), shape.n_covariates)?;
        check("theta", v.theta.len(), c)?;
        if let Some(s) = v.sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Data(format!("sigma must be positive, got {s}")));
        }
        for i in 0..d {
            if (v.omega[i * d + i] - 1.0).abs() > 1e-10 {
                return Err(Error::Data("omega must have unit diagonal".into()));
            }
            for j in 0..i {
                if (v.omega[i * d + j] - v.omega[j * d + i]).abs() > 1e-12 {
                    return Err(Error::Data("omega must be symmetric".into()));
                }
            }
        }
        let factor = cholesky(&v.omega, d).ok_or_else(|| Error::Data("omega is not positive definite".into()))?;
        Ok(Self::assemble(shape, v, factor))
    }

    fn assemble(shape: &ModelShape, v: ParameterValues, omega_factor: Vec<f64>) -> Self {
        let d = shape.effect_dim();
        let mut w = vec![0.0; d];
        let trial_effects =
            v.z.iter()
                .map(|zj| {
                    lower_mul_vec(&omega_factor, d, zj, &mut w);
                    (0..d)
                        .map(|i| {
                            let mean = if i == 0 { v.mu_alpha } else { v.mu_phi[i - 1] };
                            mean + v.sigma[i] * w[i]
                        })
                        .collect()
                })
                .collect();
        ParameterState {
            shape: shape.clone(),
            mu_alpha: v.mu_alpha,
            mu_phi: v.mu_phi,
            sigma: v.sigma,
            omega: v.omega,
            omega_factor,
            z: v.z,
            beta: v.beta,
            theta: v.theta,
            trial_effects,
        }
    }

    /// Maps an unconstrained vector to parameters.
    pub fn constrain(shape: &ModelShape, u: &[f64]) -> Result<Self> {
        if u.len() != shape.n_params() {
            return Err(Error::Shape(format!(
                "unconstrained vector has {} entries, expected {}",
                u.len(),
                shape.n_params()
            )));
        }
        let o = shape.offsets();
        let d = shape.effect_dim();
        let corr = CorrTransform::forward(&u[o.corr..o.z], d);
        let omega = lower_times_transpose(&corr.factor, d);
        let v = ParameterValues {
            mu_alpha: u[0],
            mu_phi: u[o.mu_phi..o.sigma].to_vec(),
            sigma: u[o.sigma..o.corr].iter().map(|x| x.exp()).collect(),
            omega,
            z: u[o.z..o.beta].chunks(d).map(<[f64]>::to_vec).collect(),
            beta: u[o.beta..o.theta].to_vec(),
            theta: u[o.theta..o.end].to_vec(),
        };
        Ok(Self::assemble(shape, v, corr.factor))
    }

    /// Inverse of [`ParameterState::constrain`].
    pub fn unconstrain(&self) -> Vec<f64> {
        let d = self.shape.effect_dim();
        let mut u = Vec::with_capacity(self.shape.n_params());
        u.push(self.mu_alpha);
        u.extend_from_slice(&self.mu_phi);
        u.extend(self.sigma.iter().map(|s| s.ln()));
        u.extend(unconstrain_factor(&self.omega_factor, d));
        for zj in &self.z {
            u.extend_from_slice(zj);
        }
        u.extend_from_slice(&self.beta);
        u.extend_from_slice(&self.theta);
        u
    }

    /// Flat constrained vector matching [`ModelShape::parameter_names`].
    pub fn to_constrained(&self) -> Vec<f64> {
        let d = self.shape.effect_dim();
        let mut out = Vec::with_capacity(self.shape.n_params());
        out.push(self.mu_alpha);
        out.extend_from_slice(&self.mu_phi);
        out.extend_from_slice(&self.sigma);
        for i in 1..d {
            for j in 0..i {
                out.push(self.omega[i * d + j]);
            }
        }
        for zj in &self.z {
            out.extend_from_slice(zj);
        }
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.theta);
        out
    }

    /// Inverse of [`ParameterState::to_constrained`].
    pub fn from_constrained(shape: &ModelShape, values: &[f64]) -> Result<Self> {
        if values.len() != shape.n_params() {
            return Err(Error::Shape(format!(
                "constrained vector has {} entries, expected {}",
                values.len(),
                shape.n_params()
            )));
        }
        let o = shape.offsets();
        let d = shape.effect_dim();
        let mut omega = vec![0.0; d * d];
        let mut k = o.corr;
        for i in 0..d {
            omega[i * d + i] = 1.0;
            for j in 0..i {
                omega[i * d + j] = values[k];
                omega[j * d + i] = values[k];
                k += 1;
            }
        }
        ParameterState::new(
            shape,
            ParameterValues {
                mu_alpha: values[0],
                mu_phi: values[o.mu_phi..o.sigma].to_vec(),
                sigma: values[o.sigma..o.corr].to_vec(),
                omega,
                z: values[o.z..o.beta].chunks(d).map(<[f64]>::to_vec).collect(),
                beta: values[o.beta..o.theta].to_vec(),
                theta: values[o.theta..o.end].to_vec(),
            },
        )
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn mu_alpha(&self) -> f64 {
        self.mu_alpha
    }

    pub fn mu_phi(&self) -> &[f64] {
        &self.mu_phi
    }

    pub fn mu_phi_block(&self, k: usize) -> &[f64] {
        let o = self.shape.drug_offset(k);
        &self.mu_phi[o..o + self.shape.columns_per_drug[k]]
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Row-major correlation matrix.
    /// Row-major lower Cholesky factor of `omega`.
    pub fn omega_factor(&self) -> &[f64] {
        &self.omega_factor
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Between-trial covariance `D(sigma) Omega D(sigma)`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.shape.effect_dim();
        let mut out = self.omega.clone();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] *= self.sigma[i] * self.sigma[j];
            }
        }
        out
    }

    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_block(&self, k: usize) -> &[f64] {
        let o = self.shape.drug_offset(k);
        &self.theta[o..o + self.shape.columns_per_drug[k]]
    }

    /// `[alpha_j, phi_j]` for trial `j`.
    pub fn trial_effect(&self, j: usize) -> &[f64] {
        &self.trial_effects[j]
    }

    pub fn alpha(&self, j: usize) -> f64 {
        self.trial_effects[j][0]
    }

    pub fn phi_block(&self, j: usize, k: usize) -> &[f64] {
        let o = 1 + self.shape.drug_offset(k);
        &self.trial_effects[j][o..o + self.shape.columns_per_drug[k]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape {
            n_trials: 3,
            columns_per_drug: vec![4, 1],
            n_covariates: 2,
        }
    }

    #[test]
    fn names_match_layout() {
        let s = shape();
        let names = s.parameter_names(&["a".into(), "b".into()], &["age".into(), "sex".into()]);
        assert_eq!(names.len(), s.n_params());
        assert_eq!(names[0], "mu_alpha");
        assert_eq!(names[1], "mu_phi.a.1");
        assert!(names.contains(&"omega.b.1.alpha".to_string()));
        assert!(names.contains(&"z.2.a.4".to_string()));
        assert_eq!(names.last().unwrap(), "theta.b.1");
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
    }

    #[test]
    fn rejects_invalid_values() {
        let s = shape();
        let mut v = ParameterValues::zeros(&s);
        v.sigma[0] = 0.0;
        assert!(ParameterState::new(&s, v).is_err());
        let mut v = ParameterValues::zeros(&s);
        v.omega[1] = 0.5;
        assert!(ParameterState::new(&s, v).is_err());
        let mut v = ParameterValues::zeros(&s);
        v.beta.push(1.0);
        assert!(matches!(ParameterState::new(&s, v), Err(Error::Shape(_))));
    }

    #[test]
    fn trial_effects_follow_noncentered_map() {
        let s = ModelShape {
            n_trials: 1,
            columns_per_drug: vec![1],
            n_covariates: 0,
        };
        let v = ParameterValues {
            mu_alpha: -1.0,
            mu_phi: vec![0.5],
            sigma: vec![2.0, 3.0],
            omega: vec![1.0, 0.6, 0.6, 1.0],
            z: vec![vec![1.0, 1.0]],
            beta: vec![],
            theta: vec![0.0],
        };
        let st = ParameterState::new(&s, v).unwrap();
        // chol([[1,.6],[.6,1]]) = [[1,0],[.6,.8]]
        assert!((st.alpha(0) - (-1.0 + 2.0)).abs() < 1e-12);
        assert!((st.phi_block(0, 0)[0] - (0.5 + 3.0 * 1.4)).abs() < 1e-12);
        let cov = st.covariance();
        assert!((cov[1] - 0.6 * 6.0).abs() < 1e-12);
    }
}
