#![allow(dead_code)]

use dose_response::sampler::{DrawStats, PosteriorDraws};
use dose_response::sim::{ArmSpec, CurveSpec, SimScenario, TrialSpec};
use dose_response::{Dataset, ModelShape, ParameterState, ParameterValues};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two drugs, `n_trials` trials with placebo and both drugs, `per_arm`
/// subjects per arm.
pub fn small_scenario(n_trials: usize, per_arm: usize, seed: u64) -> SimScenario {
    let mut s = SimScenario::default_two_drug();
    let arm = |drug: Option<usize>, daily: (f64, f64)| ArmSpec {
        drug,
        n_subjects: per_arm,
        daily_dose: daily,
        n_periods: 8,
        period_days: 7.0,
        dropout_hazard: 0.1,
        adherence: None,
    };
    s.trials = (0..n_trials)
        .map(|_| TrialSpec {
            arms: vec![
                arm(None, (0.0, 0.0)),
                arm(Some(0), (0.05, 0.2)),
                arm(Some(1), (0.05, 0.3)),
            ],
        })
        .collect();
    s.curves[1] = CurveSpec::Linear { slope: 0.15 };
    s.seed = seed;
    s
}

pub fn small_data(seed: u64) -> Dataset {
    dose_response::sim::simulate(&small_scenario(3, 15, seed)).unwrap().0
}

/// Random parameter values with moderate scales and a valid correlation.
pub fn random_values(shape: &ModelShape, rng: &mut ChaCha8Rng) -> ParameterValues {
    let u: Vec<f64> = (0..shape.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let state = ParameterState::constrain(shape, &u).unwrap();
    let c = shape.n_coefficients();
    let d = shape.effect_dim();
    let mut v = ParameterValues::zeros(shape);
    v.mu_alpha = rng.random_range(-3.0..-1.0);
    v.mu_phi = (0..c).map(|_| rng.random_range(-1.5..1.5)).collect();
    v.sigma = (0..d).map(|_| rng.random_range(0.05..0.5)).collect();
    v.omega = state.omega().to_vec();
    v.z = (0..shape.n_trials)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    v.beta = (0..shape.n_covariates).map(|_| rng.random_range(-0.5..0.5)).collect();
    v.theta = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
    v
}

/// Posterior-like draws from independent random parameter values.
pub fn random_draws(shape: &ModelShape, n_chains: usize, n_draws: usize, seed: u64) -> PosteriorDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = DrawStats {
        lp: 0.0,
        divergent: false,
        tree_depth: 1,
        accept_stat: 1.0,
        n_leapfrog: 1,
    };
    let chains: Vec<Vec<ParameterState>> = (0..n_chains)
        .map(|_| {
            (0..n_draws)
                .map(|_| ParameterState::new(shape, random_values(shape, &mut rng)).unwrap())
                .collect()
        })
        .collect();
    PosteriorDraws::new(
        shape.clone(),
        shape.parameter_names(&[], &[]),
        chains,
        vec![vec![stats; n_draws]; n_chains],
        vec![],
    )
    .unwrap()
}
