use statrs::distribution::{Cauchy, Continuous, Normal, StudentsT};

use super::*;
use crate::linalg::lower_times_transpose;

fn toy() -> (Dataset, Vec<BasisSet>) {
    let mut subjects = Vec::new();
    for j in 0..3 {
        for i in 0..30 {
            let arm = i % 3;
            let dose = 0.5 + (i as f64) * 0.3 + j as f64;
            let doses = match arm {
                0 => vec![0.0, 0.0],
                1 => vec![dose, 0.0],
                _ => vec![0.0, dose * 0.7],
            };
            subjects.push(SubjectRecord {
                trial: j,
                doses,
                outcome: (i * 7 + j) % 5 == 0,
                covariates: vec![(i as f64 - 15.0) / 10.0, (i % 2) as f64],
                moderator: i % 4 == 1,
            });
        }
    }
    let data = Dataset::new(
        vec!["a".into(), "b".into()],
        vec!["age".into(), "sex".into()],
        3,
        subjects,
    )
    .unwrap();
    let bases = vec![
        crate::basis::build_basis(0, &data.doses_by_trial(0), 1, 3).unwrap(),
        crate::basis::BasisSet::linear(1, 5.0).unwrap(),
    ];
    (data, bases)
}

fn point(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let v = ((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 1000.0;
            (v - 0.5) * 1.6
        })
        .collect()
}

fn log_abs_det(mut a: Vec<f64>, n: usize) -> f64 {
    let mut out = 0.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))
            .unwrap();
        if p != c {
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
            }
        }
        let piv = a[c * n + c];
        out += piv.abs().ln();
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    out
}

/// Numerical log |det d omega_strict_lower / d y|.
fn corr_log_jacobian(y: &[f64], d: usize) -> f64 {
    let m = y.len();
    let strict = |y: &[f64]| {
        let f = CorrTransform::forward(y, d);
        let om = lower_times_transpose(&f.factor, d);
        let mut v = Vec::new();
        for i in 1..d {
            for j in 0..i {
                v.push(om[i * d + j]);
            }
        }
        v
    };
    let mut jac = vec![0.0; m * m];
    let h = 1e-6;
    for c in 0..m {
        let mut up = y.to_vec();
        up[c] += h;
        let mut dn = y.to_vec();
        dn[c] -= h;
        let (a, b) = (strict(&up), strict(&dn));
        for r in 0..m {
            jac[r * m + c] = (a[r] - b[r]) / (2.0 * h);
        }
    }
    log_abs_det(jac, m)
}

/// Independent evaluation from constrained quantities and reference
/// densities.
fn oracle(model: &HierarchicalModel, data: &Dataset, bases: &[BasisSet], u: &[f64]) -> f64 {
    let shape = model.shape();
    let st = ParameterState::constrain(shape, u).unwrap();
    let mut lp = 0.0;
    for s in data.subjects() {
        let eta = linear_predictor(&st, s, bases).unwrap();
        let p = 1.0 / (1.0 + (-eta).exp());
        lp += if s.outcome { p.ln() } else { (1.0 - p).ln() };
    }
    let t = StudentsT::new(0.0, 2.5, 5.0).unwrap();
    for v in st.mu_phi().iter().chain(st.beta()).chain(st.theta()) {
        lp += t.ln_pdf(*v);
    }
    let c = Cauchy::new(0.0, 0.1).unwrap();
    for s in st.sigma() {
        lp += c.ln_pdf(*s) + 2f64.ln() + s.ln();
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    for zj in st.z() {
        lp += zj.iter().map(|v| n.ln_pdf(*v)).sum::<f64>();
    }
    let d = shape.effect_dim();
    lp += lkj_corr_lpdf(st.omega(), d, 3.0).unwrap();
    let o = shape.offsets();
    lp += corr_log_jacobian(&u[o.corr..o.z], d);
    lp
}

#[test]
fn log_posterior_matches_reference_densities() {
    let (data, bases) = toy();
    let model = HierarchicalModel::new(&data, &bases, Priors::default()).unwrap();
    assert_eq!(model.shape().effect_dim(), 1 + 4 + 1);
    for seed in 0..3 {
        let u = point(model.n_params(), seed);
        let got = model.log_posterior(&u).unwrap();
        let want = oracle(&model, &data, &bases, &u);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let (data, bases) = toy();
    let model = HierarchicalModel::new(&data, &bases, Priors::default()).unwrap();
    let u = point(model.n_params(), 5);
    let g = model.log_posterior_gradient(&u).unwrap();
    for k in 0..u.len() {
        let h = 1e-5;
        let mut up = u.clone();
        up[k] += h;
        let mut dn = u.clone();
        dn[k] -= h;
        let fd = (model.log_posterior(&up).unwrap() - model.log_posterior(&dn).unwrap()) / (2.0 * h);
        let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1.0);
        assert!(rel < 1e-6, "coord {k}: analytic {} fd {fd}", g[k]);
    }
}

#[test]
fn pointwise_sums_to_likelihood_term() {
    let (data, bases) = toy();
    let model = HierarchicalModel::new(&data, &bases, Priors::default()).unwrap();
    let u = point(model.n_params(), 9);
    let st = ParameterState::constrain(model.shape(), &u).unwrap();
    let ll: f64 = model.pointwise_log_likelihood(&st).iter().sum();
    let terms = model.log_posterior_terms(&u).unwrap();
    assert!((ll - terms.likelihood).abs() < 1e-10);
    assert!((terms.total() - model.log_posterior(&u).unwrap()).abs() < 1e-12);
}

#[test]
fn placebo_predictor_ignores_curve() {
    let (data, bases) = toy();
    let model = HierarchicalModel::new(&data, &bases, Priors::default()).unwrap();
    let mut u = point(model.n_params(), 2);
    let st = ParameterState::constrain(model.shape(), &u).unwrap();
    let s = &data.subjects()[0];
    assert_eq!(s.treatment(), None);
    let base = linear_predictor(&st, s, &bases).unwrap();
    let o = model.shape().offsets();
    for v in &mut u[o.theta..o.end] {
        *v += 3.0;
    }
    for v in &mut u[o.mu_phi..o.sigma] {
        *v -= 1.0;
    }
    let st2 = ParameterState::constrain(model.shape(), &u).unwrap();
    assert!((linear_predictor(&st2, s, &bases).unwrap() - base).abs() < 1e-12);
}

#[test]
fn rejects_wrong_lengths() {
    let (data, bases) = toy();
    let model = HierarchicalModel::new(&data, &bases, Priors::default()).unwrap();
    assert!(matches!(model.log_posterior(&[0.0; 3]), Err(Error::Shape(_))));
    assert!(HierarchicalModel::new(&data, &bases[..1], Priors::default()).is_err());
}
