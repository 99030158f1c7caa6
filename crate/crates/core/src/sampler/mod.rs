//! Adaptive Hamiltonian Monte Carlo with dynamic trajectory lengths.

mod adapt;
mod nuts;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HierarchicalModel, ModelShape, ParameterState};
use adapt::{DualAveraging, MetricAdaptation};
use nuts::{Nuts, Point};

/// A differentiable log density over `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    /// Non-finite return values mark points outside the support.
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for HierarchicalModel {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_and_gradient(x, grad).unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_draws: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    /// Initial values are drawn uniformly from `[-init_radius, init_radius]`.
    pub init_radius: f64,
    /// Compare the analytic gradient against finite differences at the
    /// first initial point before sampling.
    pub check_gradient: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_draws: 1000,
            target_accept: 0.9,
            max_tree_depth: 10,
            seed: 1,
            init_radius: 2.0,
            check_gradient: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_draws == 0 {
            return Err(Error::Config("n_chains and n_draws must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if !(self.init_radius > 0.0 && self.init_radius.is_finite()) {
            return Err(Error::Config("init_radius must be positive".into()));
        }
        Ok(())
    }
}

/// Per-draw sampler diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub lp: f64,
    pub divergent: bool,
    pub tree_depth: usize,
    pub accept_stat: f64,
    pub n_leapfrog: usize,
}

/// Adapted tuning parameters of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

/// Post-warmup output of one chain, in unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub draws: Vec<Vec<f64>>,
    pub stats: Vec<DrawStats>,
    pub adaptation: Adaptation,
}

const MAX_INIT_TRIES: usize = 100;
const GRADIENT_CHECK_TOL: f64 = 1e-3;

/// Largest relative discrepancy between the analytic gradient and central
/// differences with step `h`, using `|a - fd| / max(|a|, |fd|, 1)`.
pub fn gradient_check<M: LogDensity + ?Sized>(target: &M, x: &[f64], h: f64) -> f64 {
    let mut grad = vec![0.0; x.len()];
    target.log_density_gradient(x, &mut grad);
    let mut scratch = vec![0.0; x.len()];
    let mut worst = 0.0f64;
    let mut y = x.to_vec();
    for k in 0..x.len() {
        y[k] = x[k] + h;
        let up = target.log_density_gradient(&y, &mut scratch);
        y[k] = x[k] - h;
        let dn = target.log_density_gradient(&y, &mut scratch);
        y[k] = x[k];
        let fd = (up - dn) / (2.0 * h);
        let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1.0);
        worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
    }
    worst
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_point<M: LogDensity + ?Sized, R: Rng>(target: &M, radius: f64, rng: &mut R) -> Result<Point> {
    for _ in 0..MAX_INIT_TRIES {
        let q: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-radius..=radius)).collect();
        let z = Point::new(target, q);
        if z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(Error::Sampler(format!(
        "no finite log density after {MAX_INIT_TRIES} initial draws"
    )))
}

fn run_chain<M: LogDensity + ?Sized>(target: &M, config: &SamplerConfig, chain: usize) -> Result<ChainRun> {
    let mut rng = chain_rng(config.seed, chain);
    let mut z = initial_point(target, config.init_radius, &mut rng)?;
    if config.check_gradient && chain == 0 {
        let err = gradient_check(target, &z.q, 1e-5);
        if !(err < GRADIENT_CHECK_TOL) {
            return Err(Error::Sampler(format!(
                "gradient check failed at the initial point (relative error {err:.3e})"
            )));
        }
    }
    let dim = target.dim();
    let mut nuts = Nuts::new(target, vec![1.0; dim], 1.0, config.max_tree_depth);
    nuts.init_step(&z, &mut rng).map_err(Error::Sampler)?;
    let mut step_adapt = DualAveraging::new(config.target_accept, nuts.step);
    let mut metric_adapt = MetricAdaptation::new(dim, config.n_warmup);

    for _ in 0..config.n_warmup {
        let t = nuts.transition(&mut z, &mut rng);
        nuts.step = step_adapt.update(t.accept_stat);
        if let Some(var) = metric_adapt.observe(&z.q) {
            nuts.inv_metric = var;
            nuts.init_step(&z, &mut rng).map_err(Error::Sampler)?;
            step_adapt.restart(nuts.step);
        }
    }
    if config.n_warmup > 0 {
        nuts.step = step_adapt.final_step();
    }

    let mut draws = Vec::with_capacity(config.n_draws);
    let mut stats = Vec::with_capacity(config.n_draws);
    for _ in 0..config.n_draws {
        let t = nuts.transition(&mut z, &mut rng);
        draws.push(z.q.clone());
        stats.push(DrawStats {
            lp: z.logp,
            divergent: t.divergent,
            tree_depth: t.depth,
            accept_stat: t.accept_stat,
            n_leapfrog: t.n_leapfrog,
        });
    }
    Ok(ChainRun {
        draws,
        stats,
        adaptation: Adaptation {
            step_size: nuts.step,
            inv_metric: nuts.inv_metric,
        },
    })
}

/// Runs `config.n_chains` independent chains in parallel. Chain `c` uses
/// the ChaCha8 stream `c` of `config.seed`, so output does not depend on
/// scheduling.
pub fn sample<M: LogDensity + ?Sized>(target: &M, config: &SamplerConfig) -> Result<Vec<ChainRun>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c))
        .collect()
}

/// Constrained posterior draws of the hierarchical model.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    shape: ModelShape,
    parameter_names: Vec<String>,
    chains: Vec<Vec<ParameterState>>,
    stats: Vec<Vec<DrawStats>>,
    adaptation: Vec<Adaptation>,
}

impl PosteriorDraws {
    pub fn new(
        shape: ModelShape,
        parameter_names: Vec<String>,
        chains: Vec<Vec<ParameterState>>,
        stats: Vec<Vec<DrawStats>>,
        adaptation: Vec<Adaptation>,
    ) -> Result<Self> {
        if parameter_names.len() != shape.n_params() {
            return Err(Error::Shape("parameter names do not match the model".into()));
        }
        if chains.is_empty() || chains.len() != stats.len() {
            return Err(Error::Shape("chains and stats disagree".into()));
        }
        let n = chains[0].len();
        for (c, s) in chains.iter().zip(&stats) {
            if c.len() != n || s.len() != n {
                return Err(Error::Shape("chains must have equal length".into()));
            }
            if c.iter().any(|st| st.shape() != &shape) {
                return Err(Error::Shape("draw shape does not match the model".into()));
            }
        }
        Ok(PosteriorDraws {
            shape,
            parameter_names,
            chains,
            stats,
            adaptation,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.parameter_names
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Draws per chain.
    pub fn n_draws(&self) -> usize {
        self.chains[0].len()
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_draws()
    }

    pub fn chains(&self) -> &[Vec<ParameterState>] {
        &self.chains
    }

    pub fn stats(&self) -> &[Vec<DrawStats>] {
        &self.stats
    }

    pub fn adaptation(&self) -> &[Adaptation] {
        &self.adaptation
    }

    /// All draws, chain by chain.
    pub fn iter(&self) -> impl Iterator<Item = &ParameterState> {
        self.chains.iter().flatten()
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().flatten().filter(|s| s.divergent).count()
    }

    /// `values[p][c][q]` for every constrained scalar `p`.
    pub fn parameter_chains(&self) -> Vec<Vec<Vec<f64>>> {
        let n_params = self.shape.n_params();
        let mut out = vec![vec![Vec::with_capacity(self.n_draws()); self.n_chains()]; n_params];
        for (c, chain) in self.chains.iter().enumerate() {
            for st in chain {
                for (p, v) in st.to_constrained().into_iter().enumerate() {
                    out[p][c].push(v);
                }
            }
        }
        out
    }
}

/// Samples the hierarchical model and maps draws to constrained space.
pub fn sample_model(
    model: &HierarchicalModel,
    drug_names: &[String],
    covariate_names: &[String],
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    let runs = sample(model, config)?;
    let shape = model.shape().clone();
    let mut chains = Vec::with_capacity(runs.len());
    let mut stats = Vec::with_capacity(runs.len());
    let mut adaptation = Vec::with_capacity(runs.len());
    for run in runs {
        chains.push(
            run.draws
                .iter()
                .map(|u| ParameterState::constrain(&shape, u))
                .collect::<Result<Vec<_>>>()?,
        );
        stats.push(run.stats);
        adaptation.push(run.adaptation);
    }
    let names = shape.parameter_names(drug_names, covariate_names);
    PosteriorDraws::new(shape, names, chains, stats, adaptation)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) struct StdNormal(pub usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
            }
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    struct Nowhere;

    impl LogDensity for Nowhere {
        fn dim(&self) -> usize {
            2
        }
        fn log_density_gradient(&self, _: &[f64], _: &mut [f64]) -> f64 {
            f64::NAN
        }
    }

    fn small(seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: 2,
            n_warmup: 200,
            n_draws: 300,
            seed,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn reproducible_for_equal_seed() {
        let a = sample(&StdNormal(3), &small(7)).unwrap();
        let b = sample(&StdNormal(3), &small(7)).unwrap();
        assert_eq!(a, b);
        let c = sample(&StdNormal(3), &small(8)).unwrap();
        assert_ne!(a[0].draws, c[0].draws);
    }

    #[test]
    fn chains_are_distinct_streams() {
        let runs = sample(&StdNormal(2), &small(3)).unwrap();
        assert_ne!(runs[0].draws, runs[1].draws);
    }

    #[test]
    fn zero_depth_is_single_step_hmc() {
        let cfg = SamplerConfig {
            max_tree_depth: 0,
            ..small(1)
        };
        let runs = sample(&StdNormal(2), &cfg).unwrap();
        for s in runs.iter().flat_map(|r| &r.stats) {
            assert_eq!(s.n_leapfrog, 1);
            assert!((0.0..=1.0).contains(&s.accept_stat));
        }
    }

    #[test]
    fn adapts_to_target_acceptance() {
        let runs = sample(&StdNormal(5), &small(11)).unwrap();
        for r in &runs {
            let mean = r.stats.iter().map(|s| s.accept_stat).sum::<f64>() / r.stats.len() as f64;
            assert!(mean > 0.75, "mean accept {mean}");
            for v in &r.adaptation.inv_metric {
                assert!((v - 1.0).abs() < 0.5);
            }
        }
    }

    #[test]
    fn non_finite_everywhere_aborts() {
        assert!(matches!(sample(&Nowhere, &small(1)), Err(Error::Sampler(_))));
    }

    #[test]
    fn config_validation() {
        let bad = SamplerConfig {
            target_accept: 1.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
