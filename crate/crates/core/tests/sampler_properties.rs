use dose_response::sampler::{sample, LogDensity, SamplerConfig};
use statrs::distribution::{ContinuousCDF, Normal};

struct StdNormal(usize);

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

#[test]
fn one_dimensional_normal_passes_ks() {
    let config = SamplerConfig {
        n_chains: 4,
        n_warmup: 1000,
        n_draws: 2500,
        seed: 21,
        ..Default::default()
    };
    let runs = sample(&StdNormal(1), &config).unwrap();
    let mut x: Vec<f64> = runs.iter().flat_map(|r| r.draws.iter().map(|d| d[0])).collect();
    assert_eq!(x.len(), 10_000);
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let phi = Normal::new(0.0, 1.0).unwrap();
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = phi.cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic critical value at alpha = 0.01
    let critical = 1.6276 / n.sqrt();
    assert!(d < critical, "KS statistic {d} >= {critical}");
}

#[test]
fn chains_do_not_depend_on_each_other_or_on_threads() {
    let config = SamplerConfig {
        n_chains: 4,
        n_warmup: 200,
        n_draws: 100,
        seed: 3,
        ..Default::default()
    };
    let target = StdNormal(5);
    let four = sample(&target, &config).unwrap();
    let two = sample(
        &target,
        &SamplerConfig {
            n_chains: 2,
            ..config.clone()
        },
    )
    .unwrap();
    assert_eq!(&four[..2], &two[..]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let threaded = pool.install(|| sample(&target, &config)).unwrap();
    assert_eq!(four, threaded);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(four, single.install(|| sample(&target, &config)).unwrap());
}
