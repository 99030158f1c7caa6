use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dose_response::io::read_json;
use dose_response::pipeline::{cmd_curves, cmd_fit, cmd_loo, cmd_ppc, cmd_simulate, cmd_summarize, RunConfig};
use dose_response::sim::SimScenario;
use dose_response::Error;

/// Bayesian dose-response meta-analysis with B-spline curves.
#[derive(Parser)]
#[command(name = "dose-response", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known curves.
    Simulate(SimulateArgs),
    /// Fit every candidate knot count and select one.
    Fit(RunArgs),
    /// Recompute PSIS-LOO and the model comparison from stored draws.
    Loo(RunArgs),
    /// Risk differences, probability of best, curves and predictive checks.
    Summarize(RunArgs),
    /// Posterior predictive checks.
    Ppc(RunArgs),
    /// Dose-response and difference curves.
    Curves(RunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; the built-in two-drug scenario if absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "simulated")]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subject CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    drugs: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    moderator_column: Option<String>,
    /// Candidate interior knot counts, e.g. `0,1,2,3`.
    #[arg(long, value_delimiter = ',')]
    knots: Option<Vec<usize>>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_accept: Option<f64>,
    #[arg(long)]
    max_tree_depth: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Knot count to summarize instead of the selected model.
    #[arg(long)]
    model: Option<usize>,
    /// Doses of the risk-difference table.
    #[arg(long, value_delimiter = ',')]
    doses: Option<Vec<f64>>,
    /// Upper end of the dose range for the probability of best.
    #[arg(long)]
    dose_range: Option<f64>,
    #[arg(long)]
    allow_unconverged: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Error> {
        let mut c: RunConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.data {
            c.data = Some(v);
        }
        if let Some(v) = self.drugs {
            c.columns.drugs = Some(v);
        }
        if let Some(v) = self.covariates {
            c.columns.covariates = Some(v);
        }
        if let Some(v) = self.moderator_column {
            c.columns.moderator = v;
        }
        if let Some(v) = self.knots {
            c.knots = v;
        }
        if let Some(v) = self.chains {
            c.sampler.n_chains = v;
        }
        if let Some(v) = self.warmup {
            c.sampler.n_warmup = v;
        }
        if let Some(v) = self.draws {
            c.sampler.n_draws = v;
        }
        if let Some(v) = self.seed {
            c.sampler.seed = v;
        }
        if let Some(v) = self.target_accept {
            c.sampler.target_accept = v;
        }
        if let Some(v) = self.max_tree_depth {
            c.sampler.max_tree_depth = v;
        }
        if let Some(v) = self.output {
            c.output = v;
        }
        if let Some(v) = self.model {
            c.summary.model = Some(v);
        }
        if let Some(v) = self.doses {
            c.summary.doses = v;
        }
        if let Some(v) = self.dose_range {
            c.summary.dose_range = v;
        }
        if self.allow_unconverged {
            c.summary.allow_unconverged = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(a) => {
            let mut scenario = match &a.scenario {
                Some(p) => read_json(p)?,
                None => SimScenario::default_two_drug(),
            };
            if let Some(s) = a.seed {
                scenario.seed = s;
            }
            let data = cmd_simulate(&scenario, &a.output)?;
            println!(
                "wrote {} subjects in {} trials to {}",
                data.n_subjects(),
                data.n_trials(),
                a.output.display()
            );
        }
        Command::Fit(a) => {
            let config = a.resolve()?;
            let summary = cmd_fit(&config)?;
            println!(
                "{:<10} {:>12} {:>10} {:>9} {:>6}",
                "model", "LOO-IC", "SE", "max R-hat", "k>0.7"
            );
            for c in &summary.candidates {
                println!(
                    "{:<10} {:>12.2} {:>10.2} {:>9} {:>6}",
                    c.label,
                    c.loo_ic,
                    c.se_loo_ic,
                    c.max_rhat.map_or("n/a".into(), |r| format!("{r:.3}")),
                    c.n_high_k
                );
            }
            println!("selected: {}", summary.comparison.selected_label);
            if !summary.converged() {
                return Err(Error::NotConverged(summary.flagged()));
            }
        }
        Command::Loo(a) => {
            let comparison = cmd_loo(&a.resolve()?)?;
            for r in &comparison.ranking {
                println!("{:<10} {:>12.2} {:>10.2}", r.label, r.loo_ic, r.se_loo_ic);
            }
            println!("selected: {}", comparison.selected_label);
        }
        Command::Summarize(a) => {
            let config = a.resolve()?;
            cmd_summarize(&config)?;
            println!("wrote summaries to {}", config.output.join("summary").display());
        }
        Command::Ppc(a) => {
            let report = cmd_ppc(&a.resolve()?)?;
            for e in &report.entries {
                println!("{:<28} observed {:.4}  p = {:.3}", e.statistic, e.observed, e.p_value);
            }
        }
        Command::Curves(a) => {
            let config = a.resolve()?;
            cmd_curves(&config)?;
            println!("wrote curves to {}", config.output.join("curves").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
