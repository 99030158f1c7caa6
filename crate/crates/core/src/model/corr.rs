//! Correlation matrices through tanh-transformed canonical partial
//! correlations, and the LKJ prior.
//!
//! Unconstrained coordinates `y` fill the strict lower triangle of the
//! Cholesky factor row by row. With `T = tanh(y)` and
//! `r_j = prod_{m<j} (1 - T_m^2)` for one row,
//! `L[i][j] = T_j sqrt(r_j)` and `L[i][i] = sqrt(r_i)`.
//! All log terms are accumulated as sums of `log(1 - T^2)`, which stays
//! finite for any finite `y`.

use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::math::log_sech2;

pub fn n_corr_coords(dim: usize) -> usize {
    dim * dim.saturating_sub(1) / 2
}

/// Log of the LKJ normalizing constant
/// `int det(Omega)^(eta - 1) dOmega` over `dim x dim` correlation matrices.
pub fn lkj_log_normalizer(dim: usize, eta: f64) -> f64 {
    let d = dim as f64;
    (1..dim)
        .map(|k| {
            let dk = d - k as f64;
            let b = eta + (dk - 1.0) / 2.0;
            (2.0 * eta - 2.0 + dk) * dk * std::f64::consts::LN_2 + dk * ln_beta(b, b)
        })
        .sum()
}

/// LKJ log density of a correlation matrix (row-major).
pub fn lkj_corr_lpdf(omega: &[f64], dim: usize, eta: f64) -> Result<f64> {
    let l = cholesky(omega, dim).ok_or_else(|| Error::Data("correlation matrix is not positive definite".into()))?;
    let log_det: f64 = (0..dim).map(|i| 2.0 * l[i * dim + i].ln()).sum();
    Ok((eta - 1.0) * log_det - lkj_log_normalizer(dim, eta))
}

/// Forward pass of the transform, retaining what the reverse pass needs.
#[derive(Debug, Clone)]
pub(crate) struct CorrTransform {
    dim: usize,
    tanh: Vec<f64>,
    log_sech2: Vec<f64>,
    /// Per row `i`, the prefix sums `R_j = log r_j` for `j = 0..=i`.
    log_r: Vec<Vec<f64>>,
    /// Row-major Cholesky factor.
    pub(crate) factor: Vec<f64>,
}

impl CorrTransform {
    pub(crate) fn forward(y: &[f64], dim: usize) -> Self {
        debug_assert_eq!(y.len(), n_corr_coords(dim));
        let tanh: Vec<f64> = y.iter().map(|v| v.tanh()).collect();
        let ls: Vec<f64> = y.iter().map(|&v| log_sech2(v)).collect();
        let mut factor = vec![0.0; dim * dim];
        let mut log_r = Vec::with_capacity(dim);
        let mut k = 0;
        for i in 0..dim {
            let mut row = Vec::with_capacity(i + 1);
            let mut acc = 0.0_f64;
            for j in 0..i {
                row.push(acc);
                factor[i * dim + j] = tanh[k] * (0.5 * acc).exp();
                acc += ls[k];
                k += 1;
            }
            row.push(acc);
            factor[i * dim + i] = (0.5 * acc).exp();
            log_r.push(row);
        }
        CorrTransform {
            dim,
            tanh,
            log_sech2: ls,
            log_r,
            factor,
        }
    }

    /// LKJ(eta) log density of `L L^T` plus the log-Jacobians of
    /// `y -> L` and `L -> Omega`.
    pub(crate) fn log_density(&self, eta: f64) -> f64 {
        let d = self.dim;
        let mut lp = -lkj_log_normalizer(d, eta);
        lp += self.log_sech2.iter().sum::<f64>();
        for i in 1..d {
            let r = &self.log_r[i];
            let c = (d - i - 1) as f64 + 2.0 * (eta - 1.0);
            lp += 0.5 * c * r[i];
            lp += 0.5 * r[1..i].iter().sum::<f64>();
        }
        lp
    }

    /// Accumulates into `grad_y` the gradient of `log_density(eta)` plus
    /// the chain rule for an upstream adjoint `factor_adj` of `L`.
    pub(crate) fn backprop(&self, eta: f64, factor_adj: &[f64], grad_y: &mut [f64]) {
        let d = self.dim;
        let mut k0 = 0;
        let mut r_adj = vec![0.0; d];
        for i in 1..d {
            let r = &self.log_r[i];
            let c = (d - i - 1) as f64 + 2.0 * (eta - 1.0);
            for j in 0..i {
                r_adj[j] = factor_adj[i * d + j] * self.factor[i * d + j] * 0.5;
                if j >= 1 {
                    r_adj[j] += 0.5;
                }
            }
            r_adj[i] = factor_adj[i * d + i] * self.factor[i * d + i] * 0.5 + 0.5 * c;
            // A_m feeds every R_j with j > m
            let mut suffix = r_adj[i];
            for m in (0..i).rev() {
                let k = k0 + m;
                let t = self.tanh[k];
                let t_adj = factor_adj[i * d + m] * (0.5 * r[m]).exp();
                let a_adj = 1.0 + suffix;
                grad_y[k] += t_adj * self.log_sech2[k].exp() - 2.0 * t * a_adj;
                suffix += r_adj[m];
            }
            k0 += i;
        }
    }
}

/// Unconstrained coordinates of a Cholesky factor of a correlation matrix.
/// Rows have unit norm, so `r_j` is the squared norm of `L[i][j..=i]`.
pub(crate) fn unconstrain_factor(factor: &[f64], dim: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n_corr_coords(dim));
    for i in 1..dim {
        let row = &factor[i * dim..i * dim + i + 1];
        let mut r = vec![0.0_f64; i + 1];
        let mut acc = 0.0;
        for j in (0..=i).rev() {
            acc += row[j] * row[j];
            r[j] = acc;
        }
        for j in 0..i {
            let t = (row[j] / r[j].sqrt()).clamp(-1.0, 1.0);
            y.push(t.atanh());
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lower_times_transpose;

    fn total(y: &[f64], dim: usize, eta: f64, adj_weights: &[f64]) -> f64 {
        let f = CorrTransform::forward(y, dim);
        let lin: f64 = f.factor.iter().zip(adj_weights).map(|(a, b)| a * b).sum();
        f.log_density(eta) + lin
    }

    #[test]
    fn two_by_two_density_ratio() {
        let eta = 3.0;
        let a = lkj_corr_lpdf(&[1.0, 0.0, 0.0, 1.0], 2, eta).unwrap();
        let b = lkj_corr_lpdf(&[1.0, 0.5, 0.5, 1.0], 2, eta).unwrap();
        assert!(((a - b) - 2.0 * (1f64.ln() - 0.75f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn normalizer_two_by_two_by_quadrature() {
        for &eta in &[1.0, 2.0, 3.0, 4.5] {
            let n = 200_000;
            let h = 2.0 / n as f64;
            // midpoint rule over rho in (-1, 1)
            let integral: f64 = (0..n)
                .map(|i| {
                    let rho = -1.0 + (i as f64 + 0.5) * h;
                    (1.0 - rho * rho).powf(eta - 1.0) * h
                })
                .sum();
            assert!((integral.ln() - lkj_log_normalizer(2, eta)).abs() < 1e-6, "eta {eta}");
        }
    }

    #[test]
    fn normalizer_three_by_three_by_grid() {
        // integrate det^(eta-1) over the elliptope on a midpoint grid
        let eta = 3.0;
        let n = 160;
        let h = 2.0 / n as f64;
        let mut sum = 0.0;
        for a in 0..n {
            let r12 = -1.0 + (a as f64 + 0.5) * h;
            for b in 0..n {
                let r13 = -1.0 + (b as f64 + 0.5) * h;
                for c in 0..n {
                    let r23 = -1.0 + (c as f64 + 0.5) * h;
                    let det = 1.0 + 2.0 * r12 * r13 * r23 - r12 * r12 - r13 * r13 - r23 * r23;
                    if det > 0.0 {
                        sum += det.powf(eta - 1.0);
                    }
                }
            }
        }
        let integral = sum * h * h * h;
        let rel = (integral - lkj_log_normalizer(3, eta).exp()).abs() / integral;
        assert!(rel < 1e-3, "{integral} vs {}", lkj_log_normalizer(3, eta).exp());
    }

    #[test]
    fn factor_is_valid_correlation() {
        let dim = 5;
        let y: Vec<f64> = (0..n_corr_coords(dim))
            .map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.9)
            .collect();
        let f = CorrTransform::forward(&y, dim);
        let omega = lower_times_transpose(&f.factor, dim);
        for i in 0..dim {
            assert!((omega[i * dim + i] - 1.0).abs() < 1e-12);
        }
        assert!(cholesky(&omega, dim).is_some());
        let back = unconstrain_factor(&f.factor, dim);
        for (a, b) in y.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let dim = 4;
        let m = n_corr_coords(dim);
        let y: Vec<f64> = (0..m).map(|i| 0.3 * i as f64 - 0.8).collect();
        let w: Vec<f64> = (0..dim * dim).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let eta = 3.0;
        let f = CorrTransform::forward(&y, dim);
        let mut g = vec![0.0; m];
        f.backprop(eta, &w, &mut g);
        for k in 0..m {
            let h = 1e-6;
            let mut up = y.clone();
            up[k] += h;
            let mut dn = y.clone();
            dn[k] -= h;
            let fd = (total(&up, dim, eta, &w) - total(&dn, dim, eta, &w)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() < 1e-6 * fd.abs().max(1.0),
                "coord {k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn density_matches_lkj_plus_jacobian() {
        // For dim 2 the map y -> rho = tanh(y) has Jacobian 1 - rho^2 and
        // L -> Omega contributes nothing.
        let y = [0.4];
        let f = CorrTransform::forward(&y, 2);
        let rho = f64::tanh(0.4);
        let expected = lkj_corr_lpdf(&[1.0, rho, rho, 1.0], 2, 3.0).unwrap() + (1.0 - rho * rho).ln();
        assert!((f.log_density(3.0) - expected).abs() < 1e-12);
    }
}
