//! Run orchestration: simulate, fit candidates, compare, summarize, check.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::data::Dataset;
use crate::diagnostics::{default_statistics, posterior_predictive_check, split_rhat, ConvergenceReport, PpcReport};
use crate::error::{Error, Result};
use crate::io::{
    config_hash, read_draws, read_json, read_subject_csv, sha256_hex, write_comparison_csv, write_curve_csv,
    write_draws, write_json, write_risk_difference_csv, write_subject_csv, Manifest, SubjectColumns,
};
use crate::loo::{compare_models, loo, pointwise_loglik, LooResult, ModelComparison};
use crate::model::{HierarchicalModel, Priors};
use crate::plot::{curves_svg, difference_svg, ppc_histogram_svg};
use crate::sampler::{sample_model, PosteriorDraws, SamplerConfig};
use crate::sim::{simulate, SimScenario};
use crate::summaries::{
    curve_draws, difference_curve, prob_best, risk_difference_table, uniform_grid, Best, ModeratorLevel, Subgroup,
};

/// Settings for tables, curves and checks computed from a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    /// Knot count of the model to summarize; the selected one if absent.
    pub model: Option<usize>,
    /// Doses for the risk-difference table.
    pub doses: Vec<f64>,
    /// Upper end `A` of the range `(0, A]` for the probability of best.
    pub dose_range: f64,
    pub n_mesh: usize,
    pub best: Best,
    pub grid_points: usize,
    /// Upper end of the curve grid; each drug's basis boundary if absent.
    pub grid_upper: Option<f64>,
    /// Seed of the predictive replications; the sampler seed if absent.
    pub ppc_seed: Option<u64>,
    pub allow_unconverged: bool,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            model: None,
            doses: vec![1.0, 5.0],
            dose_range: 5.0,
            n_mesh: 100,
            best: Best::Smallest,
            grid_points: 101,
            grid_upper: None,
            ppc_seed: None,
            allow_unconverged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub columns: SubjectColumns,
    /// Candidate interior knot counts in increasing order.
    pub knots: Vec<usize>,
    pub standardize_covariates: bool,
    pub sampler: SamplerConfig,
    pub output: PathBuf,
    pub summary: SummaryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            columns: SubjectColumns::default(),
            knots: vec![0, 1, 2, 3],
            standardize_covariates: true,
            sampler: SamplerConfig::default(),
            output: PathBuf::from("output"),
            summary: SummaryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() || self.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "knot list must be non-empty and strictly ascending".into(),
            ));
        }
        self.sampler.validate()?;
        if self.sampler.n_chains < 2 || self.sampler.n_draws < 4 {
            return Err(Error::Config(
                "convergence checks need at least 2 chains of at least 4 draws".into(),
            ));
        }
        let s = &self.summary;
        if s.doses.is_empty() || s.doses.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Config("summary doses must be positive".into()));
        }
        if !(s.dose_range.is_finite() && s.dose_range > 0.0) || s.n_mesh < 2 {
            return Err(Error::Config(
                "dose range must be positive with at least 2 mesh points".into(),
            ));
        }
        if s.grid_points < 2 || s.grid_upper.is_some_and(|u| !(u.is_finite() && u > 0.0)) {
            return Err(Error::Config(
                "curve grid needs at least 2 points and a positive upper end".into(),
            ));
        }
        if s.model.is_some_and(|m| !self.knots.contains(&m)) {
            return Err(Error::Config(
                "summary model must be one of the candidate knot counts".into(),
            ));
        }
        Ok(())
    }

    fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no data file given".into()))
    }

    pub fn fit_dir(&self) -> PathBuf {
        self.output.join("fit")
    }

    /// Hash of the configuration without file locations, combined with the
    /// hash of the data file contents.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.data = None;
        c.output = PathBuf::new();
        let data_hash = match &self.data {
            Some(p) => sha256_hex(&fs::read(p).map_err(|e| Error::io(p, e))?),
            None => String::new(),
        };
        config_hash(&(c, data_hash))
    }

    /// Reads the data file, standardizing continuous covariates if enabled.
    pub fn load_data(&self) -> Result<Dataset> {
        let mut data = read_subject_csv(self.data_path()?, &self.columns)?;
        if self.standardize_covariates {
            data.standardize_covariates();
        }
        Ok(data)
    }
}

pub fn model_label(knots: usize) -> String {
    format!("knots_{knots}")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes the simulated subject CSV, the ground truth and the scenario.
pub fn cmd_simulate(scenario: &SimScenario, out_dir: &Path) -> Result<Dataset> {
    let (data, truth) = simulate(scenario)?;
    create_dir(out_dir)?;
    let mut manifest = Manifest::new("simulate", scenario.seed, config_hash(scenario)?);
    let files = [
        out_dir.join("subjects.csv"),
        out_dir.join("truth.json"),
        out_dir.join("scenario.json"),
    ];
    write_subject_csv(&files[0], &data)?;
    write_json(&files[1], &truth)?;
    write_json(&files[2], scenario)?;
    for f in &files {
        manifest.record(out_dir, f)?;
    }
    manifest.write(out_dir)?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub knots: usize,
    pub label: String,
    pub converged: bool,
    pub flagged: Vec<String>,
    pub max_rhat: Option<f64>,
    pub divergences: usize,
    pub loo_ic: f64,
    pub se_loo_ic: f64,
    pub n_high_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub candidates: Vec<CandidateSummary>,
    pub comparison: ModelComparison,
    pub selected_knots: usize,
}

impl FitSummary {
    pub fn converged(&self) -> bool {
        self.candidates.iter().all(|c| c.converged)
    }

    /// `label: parameter` for every flagged parameter.
    pub fn flagged(&self) -> Vec<String> {
        self.candidates
            .iter()
            .flat_map(|c| c.flagged.iter().map(move |p| format!("{}: {p}", c.label)))
            .collect()
    }
}

pub const FIT_SUMMARY_FILE: &str = "fit.json";

/// Fits every candidate knot count in turn and applies the stopping rule.
/// Artifacts are written even when a candidate fails to converge; the
/// returned summary records which ones did.
pub fn cmd_fit(config: &RunConfig) -> Result<FitSummary> {
    config.validate()?;
    let data = config.load_data()?;
    let dir = config.fit_dir();
    create_dir(&dir)?;
    let mut manifest = Manifest::new("fit", config.sampler.seed, config.hash()?);
    let mut candidates = Vec::new();
    let mut results = Vec::new();
    for &k in &config.knots {
        let label = model_label(k);
        let sub = dir.join(&label);
        create_dir(&sub)?;
        let bases = data.build_bases(k)?;
        let model = HierarchicalModel::new(&data, &bases, Priors::default())?;
        let draws = sample_model(&model, data.drug_names(), data.covariate_names(), &config.sampler)?;
        let report = split_rhat(&draws, config.sampler.max_tree_depth)?;
        let loo_result = loo(&pointwise_loglik(&draws, &data, &bases)?)?;

        let draws_path = sub.join("draws.csv");
        write_draws(&draws_path, &draws, data.drug_names(), data.covariate_names(), &bases)?;
        write_json(&sub.join("diagnostics.json"), &report)?;
        write_json(&sub.join("loo.json"), &loo_result)?;
        for f in ["draws.csv", "draws.json", "diagnostics.json", "loo.json"] {
            manifest.record(&dir, &sub.join(f))?;
        }
        candidates.push(CandidateSummary {
            knots: k,
            label,
            converged: report.converged(),
            flagged: report.flagged.clone(),
            max_rhat: report.max_rhat(),
            divergences: report.divergences,
            loo_ic: loo_result.loo_ic,
            se_loo_ic: loo_result.se_loo_ic,
            n_high_k: loo_result.n_high_k,
        });
        results.push(loo_result);
    }
    let labels: Vec<String> = candidates.iter().map(|c| c.label.clone()).collect();
    let comparison = compare_models(&labels, &results)?;
    let summary = FitSummary {
        selected_knots: config.knots[comparison.selected],
        candidates,
        comparison,
    };
    write_comparison_csv(&dir.join("comparison.csv"), &summary.comparison)?;
    write_json(&dir.join(FIT_SUMMARY_FILE), &summary)?;
    manifest.record(&dir, &dir.join("comparison.csv"))?;
    manifest.record(&dir, &dir.join(FIT_SUMMARY_FILE))?;
    manifest.write(&dir)?;
    Ok(summary)
}

/// A fitted candidate loaded back from disk.
pub struct LoadedFit {
    pub knots: usize,
    pub draws: PosteriorDraws,
    pub bases: Vec<BasisSet>,
    pub converged: bool,
}

/// Loads the requested (or selected) candidate from the fit directory.
pub fn load_fit(config: &RunConfig) -> Result<LoadedFit> {
    let dir = config.fit_dir();
    let summary: FitSummary = read_json(&dir.join(FIT_SUMMARY_FILE))?;
    let knots = config.summary.model.unwrap_or(summary.selected_knots);
    let candidate = summary
        .candidates
        .iter()
        .find(|c| c.knots == knots)
        .ok_or_else(|| Error::MissingArtifact(dir.join(model_label(knots))))?;
    let (draws, meta) = read_draws(&dir.join(&candidate.label).join("draws.csv"))?;
    Ok(LoadedFit {
        knots,
        draws,
        bases: meta.bases,
        converged: candidate.converged,
    })
}

fn load_converged_fit(config: &RunConfig) -> Result<LoadedFit> {
    let fit = load_fit(config)?;
    if !fit.converged && !config.summary.allow_unconverged {
        let report: ConvergenceReport =
            read_json(&config.fit_dir().join(model_label(fit.knots)).join("diagnostics.json"))?;
        return Err(Error::NotConverged(report.flagged));
    }
    Ok(fit)
}

fn check_fit_matches(data: &Dataset, fit: &LoadedFit) -> Result<()> {
    let model = HierarchicalModel::new(data, &fit.bases, Priors::default())?;
    if model.shape() != fit.draws.shape() {
        return Err(Error::Shape("fit artifacts do not match the data".into()));
    }
    Ok(())
}

/// Recomputes PSIS-LOO and the comparison from stored draws.
pub fn cmd_loo(config: &RunConfig) -> Result<ModelComparison> {
    config.validate()?;
    let data = config.load_data()?;
    let out = config.output.join("loo");
    create_dir(&out)?;
    let mut manifest = Manifest::new("loo", config.sampler.seed, config.hash()?);
    let mut labels = Vec::new();
    let mut results: Vec<LooResult> = Vec::new();
    for &k in &config.knots {
        let label = model_label(k);
        let (draws, meta) = read_draws(&config.fit_dir().join(&label).join("draws.csv"))?;
        let result = loo(&pointwise_loglik(&draws, &data, &meta.bases)?)?;
        let path = out.join(format!("{label}.json"));
        write_json(&path, &result)?;
        manifest.record(&out, &path)?;
        labels.push(label);
        results.push(result);
    }
    let comparison = compare_models(&labels, &results)?;
    write_comparison_csv(&out.join("comparison.csv"), &comparison)?;
    write_json(&out.join("comparison.json"), &comparison)?;
    manifest.record(&out, &out.join("comparison.csv"))?;
    manifest.record(&out, &out.join("comparison.json"))?;
    manifest.write(&out)?;
    Ok(comparison)
}

fn write_curves(
    config: &RunConfig,
    data: &Dataset,
    fit: &LoadedFit,
    out: &Path,
    root: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    for (k, drug) in data.drug_names().iter().enumerate() {
        let upper = config.summary.grid_upper.unwrap_or(fit.bases[k].boundary_high());
        let grid = uniform_grid(upper, config.summary.grid_points);
        let rug: Vec<f64> = data
            .subjects()
            .iter()
            .map(|s| s.doses[k])
            .filter(|&d| d > 0.0)
            .collect();
        let stem = file_stem(drug);
        let mut pair = Vec::new();
        for (level, tag) in [(ModeratorLevel::Absent, "M0"), (ModeratorLevel::Present, "M1")] {
            let curve = curve_draws(&fit.draws, drug, &fit.bases, k, level, &grid)?;
            let path = out.join(format!("{stem}_{tag}.csv"));
            write_curve_csv(&path, &curve)?;
            manifest.record(root, &path)?;
            pair.push(curve);
        }
        let diff = difference_curve(&fit.draws, drug, &fit.bases, k, &grid)?;
        let diff_csv = out.join(format!("{stem}_difference.csv"));
        write_curve_csv(&diff_csv, &diff)?;
        manifest.record(root, &diff_csv)?;
        for (name, svg) in [
            (
                format!("{stem}.svg"),
                curves_svg(&format!("{drug}: dose-response"), &pair, &rug),
            ),
            (
                format!("{stem}_difference.svg"),
                difference_svg(&format!("{drug}: moderator difference"), &diff, &rug),
            ),
        ] {
            let path = out.join(name);
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            manifest.record(root, &path)?;
        }
    }
    Ok(())
}

fn write_ppc(
    config: &RunConfig,
    data: &Dataset,
    fit: &LoadedFit,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<PpcReport> {
    let seed = config.summary.ppc_seed.unwrap_or(config.sampler.seed);
    let report = posterior_predictive_check(&fit.draws, data, &fit.bases, &default_statistics(data), seed)?;
    let path = out.join("ppc.json");
    write_json(&path, &report)?;
    manifest.record(out, &path)?;
    for e in &report.entries {
        let path = out.join(format!("ppc_{}.svg", file_stem(&e.statistic)));
        fs::write(&path, ppc_histogram_svg(e, 30)).map_err(|err| Error::io(&path, err))?;
        manifest.record(out, &path)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugProbability {
    pub drug: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbBestReport {
    pub best: Best,
    pub dose_range: f64,
    pub n_mesh: usize,
    pub drugs: Vec<DrugProbability>,
}

/// Risk-difference table, probability of best, curves and predictive
/// checks for the selected (or requested) candidate.
pub fn cmd_summarize(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let data = config.load_data()?;
    let fit = load_converged_fit(config)?;
    check_fit_matches(&data, &fit)?;
    let out = config.output.join("summary");
    create_dir(&out)?;
    let mut manifest = Manifest::new("summarize", config.sampler.seed, config.hash()?);

    let subgroups = [Subgroup::All, Subgroup::Moderator(false), Subgroup::Moderator(true)];
    let table = risk_difference_table(&fit.draws, &data, &fit.bases, &config.summary.doses, &subgroups)?;
    let path = out.join("risk_difference.csv");
    write_risk_difference_csv(&path, &table)?;
    manifest.record(&out, &path)?;

    let s = &config.summary;
    let probs = prob_best(&fit.draws, &data, &fit.bases, s.dose_range, s.n_mesh, s.best)?;
    let report = ProbBestReport {
        best: s.best,
        dose_range: s.dose_range,
        n_mesh: s.n_mesh,
        drugs: data
            .drug_names()
            .iter()
            .zip(probs)
            .map(|(d, p)| DrugProbability {
                drug: d.clone(),
                probability: p,
            })
            .collect(),
    };
    let path = out.join("prob_best.json");
    write_json(&path, &report)?;
    manifest.record(&out, &path)?;

    let curves = out.join("curves");
    create_dir(&curves)?;
    write_curves(config, &data, &fit, &curves, &out, &mut manifest)?;
    write_ppc(config, &data, &fit, &out, &mut manifest)?;
    manifest.write(&out)
}

/// Curves and difference curves only.
pub fn cmd_curves(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let data = config.load_data()?;
    let fit = load_converged_fit(config)?;
    check_fit_matches(&data, &fit)?;
    let out = config.output.join("curves");
    create_dir(&out)?;
    let mut manifest = Manifest::new("curves", config.sampler.seed, config.hash()?);
    write_curves(config, &data, &fit, &out, &out, &mut manifest)?;
    manifest.write(&out)
}

/// Posterior predictive checks only.
pub fn cmd_ppc(config: &RunConfig) -> Result<PpcReport> {
    config.validate()?;
    let data = config.load_data()?;
    let fit = load_converged_fit(config)?;
    check_fit_matches(&data, &fit)?;
    let out = config.output.join("ppc");
    create_dir(&out)?;
    let mut manifest = Manifest::new("ppc", config.sampler.seed, config.hash()?);
    let report = write_ppc(config, &data, &fit, &out, &mut manifest)?;
    manifest.write(&out)?;
    Ok(report)
}
