//! File formats: subject CSV, posterior draws, result tables and manifests.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisSet;
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::loo::ModelComparison;
use crate::model::{ModelShape, ParameterState};
use crate::sampler::{Adaptation, DrawStats, PosteriorDraws};
use crate::summaries::{RiskDifferenceTable, SummaryCurve};

pub const DOSE_PREFIX: &str = "dose_";
pub const COVARIATE_PREFIX: &str = "cov_";

/// Which columns of a subject CSV to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectColumns {
    /// Drugs in model order; `None` takes every `dose_*` column in file
    /// order. Listed drugs without a column get dose 0.
    pub drugs: Option<Vec<String>>,
    /// Covariates in model order; `None` takes every `cov_*` column.
    pub covariates: Option<Vec<String>>,
    pub moderator: String,
}

impl Default for SubjectColumns {
    fn default() -> Self {
        SubjectColumns {
            drugs: None,
            covariates: None,
            moderator: "moderator".into(),
        }
    }
}

fn csv_error(path: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

fn from_csv(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => csv_error(path, line, "", format!("{kind:?}")),
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim() {
        "0" | "false" | "FALSE" | "False" => Some(false),
        "1" | "true" | "TRUE" | "True" => Some(true),
        _ => None,
    }
}

/// Reads the subject CSV: `trial_id,outcome,moderator,dose_<drug>...,cov_<name>...`.
/// Trial ids may be any strings and are numbered by first appearance.
pub fn read_subject_csv(path: &Path, columns: &SubjectColumns) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| from_csv(path, e))?;
    let headers = reader.headers().map_err(|e| from_csv(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| csv_error(path, 1, name, "required column is missing"));
    let trial_col = require("trial_id")?;
    let outcome_col = require("outcome")?;
    let moderator_col = require(&columns.moderator)?;

    let file_drugs: Vec<String> = headers
        .iter()
        .filter_map(|h| h.strip_prefix(DOSE_PREFIX).map(str::to_string))
        .collect();
    let drugs = match &columns.drugs {
        Some(d) => {
            if let Some(extra) = file_drugs.iter().find(|f| !d.contains(f)) {
                return Err(csv_error(
                    path,
                    1,
                    &format!("{DOSE_PREFIX}{extra}"),
                    "dose column for a drug that is not in the model",
                ));
            }
            d.clone()
        }
        None => file_drugs,
    };
    let dose_cols: Vec<Option<usize>> = drugs.iter().map(|d| find(&format!("{DOSE_PREFIX}{d}"))).collect();
    let covariates = match &columns.covariates {
        Some(c) => c.clone(),
        None => headers
            .iter()
            .filter_map(|h| h.strip_prefix(COVARIATE_PREFIX).map(str::to_string))
            .collect(),
    };
    let cov_cols = covariates
        .iter()
        .map(|c| require(&format!("{COVARIATE_PREFIX}{c}")))
        .collect::<Result<Vec<_>>>()?;

    let mut trial_ids: HashMap<String, usize> = HashMap::new();
    let mut subjects = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| from_csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let raw = field(c);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| csv_error(path, line, &headers[c], format!("`{raw}` is not a finite number")))
        };
        let flag = |c: usize| -> Result<bool> {
            parse_flag(field(c))
                .ok_or_else(|| csv_error(path, line, &headers[c], format!("`{}` is not 0 or 1", field(c))))
        };
        let id = field(trial_col);
        if id.is_empty() {
            return Err(csv_error(path, line, "trial_id", "empty trial id"));
        }
        let next = trial_ids.len();
        let trial = *trial_ids.entry(id.to_string()).or_insert(next);
        let mut doses = Vec::with_capacity(drugs.len());
        for col in &dose_cols {
            let d = match col {
                Some(c) if !field(*c).is_empty() => number(*c)?,
                _ => 0.0,
            };
            if d < 0.0 {
                return Err(csv_error(path, line, &headers[col.unwrap_or(0)], "negative dose"));
            }
            doses.push(d);
        }
        if doses.iter().filter(|&&d| d > 0.0).count() > 1 {
            return Err(csv_error(
                path,
                line,
                DOSE_PREFIX,
                "more than one drug with positive dose",
            ));
        }
        subjects.push(SubjectRecord {
            trial,
            doses,
            outcome: flag(outcome_col)?,
            covariates: cov_cols.iter().map(|&c| number(c)).collect::<Result<_>>()?,
            moderator: flag(moderator_col)?,
        });
    }
    if subjects.is_empty() {
        return Err(csv_error(path, 2, "", "no subject rows"));
    }
    Dataset::new(drugs, covariates, trial_ids.len(), subjects)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    csv::Writer::from_path(path).map_err(|e| from_csv(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| from_csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| from_csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

pub fn write_subject_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut header = strings(&["trial_id", "outcome", "moderator"]);
    header.extend(data.drug_names().iter().map(|d| format!("{DOSE_PREFIX}{d}")));
    header.extend(data.covariate_names().iter().map(|c| format!("{COVARIATE_PREFIX}{c}")));
    let rows = data.subjects().iter().map(|s| {
        let mut row = vec![s.trial.to_string(), flag(s.outcome), flag(s.moderator)];
        row.extend(s.doses.iter().map(f64::to_string));
        row.extend(s.covariates.iter().map(f64::to_string));
        row
    });
    write_rows(path, &header, rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Metadata stored next to a draws CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsSidecar {
    pub shape: ModelShape,
    pub drug_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub parameter_names: Vec<String>,
    pub n_chains: usize,
    pub n_draws: usize,
    pub adaptation: Vec<Adaptation>,
    pub bases: Vec<BasisSet>,
}

const STAT_COLUMNS: [&str; 7] = [
    "chain",
    "draw",
    "lp__",
    "accept_stat__",
    "tree_depth__",
    "n_leapfrog__",
    "divergent__",
];

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes constrained draws as CSV plus a JSON sidecar with the same stem.
pub fn write_draws(
    path: &Path,
    draws: &PosteriorDraws,
    drug_names: &[String],
    covariate_names: &[String],
    bases: &[BasisSet],
) -> Result<()> {
    let mut header = strings(&STAT_COLUMNS);
    header.extend(draws.parameter_names().iter().cloned());
    let rows = draws
        .chains()
        .iter()
        .zip(draws.stats())
        .enumerate()
        .flat_map(|(c, (chain, stats))| {
            chain.iter().zip(stats).enumerate().map(move |(q, (state, st))| {
                let mut row = vec![
                    c.to_string(),
                    q.to_string(),
                    st.lp.to_string(),
                    st.accept_stat.to_string(),
                    st.tree_depth.to_string(),
                    st.n_leapfrog.to_string(),
                    flag(st.divergent),
                ];
                row.extend(state.to_constrained().iter().map(f64::to_string));
                row
            })
        });
    write_rows(path, &header, rows)?;
    write_json(
        &sidecar_path(path),
        &DrawsSidecar {
            shape: draws.shape().clone(),
            drug_names: drug_names.to_vec(),
            covariate_names: covariate_names.to_vec(),
            parameter_names: draws.parameter_names().to_vec(),
            n_chains: draws.n_chains(),
            n_draws: draws.n_draws(),
            adaptation: draws.adaptation().to_vec(),
            bases: bases.to_vec(),
        },
    )
}

/// Inverse of [`write_draws`].
pub fn read_draws(path: &Path) -> Result<(PosteriorDraws, DrawsSidecar)> {
    let meta: DrawsSidecar = read_json(&sidecar_path(path))?;
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| from_csv(path, e))?;
    let headers = reader.headers().map_err(|e| from_csv(path, e))?.clone();
    let n_stat = STAT_COLUMNS.len();
    let names: Vec<String> = headers.iter().skip(n_stat).map(str::to_string).collect();
    if names != meta.parameter_names || headers.iter().take(n_stat).ne(STAT_COLUMNS) {
        return Err(csv_error(path, 1, "", "header does not match the sidecar"));
    }
    let mut chains = vec![Vec::with_capacity(meta.n_draws); meta.n_chains];
    let mut stats = vec![Vec::with_capacity(meta.n_draws); meta.n_chains];
    for record in reader.records() {
        let record = record.map_err(|e| from_csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| csv_error(path, line, &headers[c], "not a number"))
        };
        let int = |c: usize| -> Result<usize> {
            record
                .get(c)
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| csv_error(path, line, &headers[c], "not a non-negative integer"))
        };
        let chain = int(0)?;
        if chain >= meta.n_chains {
            return Err(csv_error(path, line, "chain", "chain index out of range"));
        }
        stats[chain].push(DrawStats {
            lp: num(2)?,
            accept_stat: num(3)?,
            tree_depth: int(4)?,
            n_leapfrog: int(5)?,
            divergent: int(6)? != 0,
        });
        let values = (n_stat..headers.len()).map(num).collect::<Result<Vec<_>>>()?;
        chains[chain].push(ParameterState::from_constrained(&meta.shape, &values)?);
    }
    let draws = PosteriorDraws::new(
        meta.shape.clone(),
        meta.parameter_names.clone(),
        chains,
        stats,
        meta.adaptation.clone(),
    )?;
    Ok((draws, meta))
}

pub fn write_comparison_csv(path: &Path, comparison: &ModelComparison) -> Result<()> {
    let header = strings(&[
        "model",
        "loo_ic",
        "se_loo_ic",
        "elpd_loo",
        "elpd_diff",
        "se_diff",
        "n_high_k",
        "selected",
    ]);
    let rows = comparison.ranking.iter().map(|r| {
        vec![
            r.label.clone(),
            r.loo_ic.to_string(),
            r.se_loo_ic.to_string(),
            r.elpd_loo.to_string(),
            r.elpd_diff.to_string(),
            r.se_diff.to_string(),
            r.n_high_k.to_string(),
            flag(r.label == comparison.selected_label),
        ]
    });
    write_rows(path, &header, rows)
}

pub fn write_risk_difference_csv(path: &Path, table: &RiskDifferenceTable) -> Result<()> {
    let header = strings(&["drug", "dose", "subgroup", "mean", "lower", "upper"]);
    let rows = table.rows.iter().map(|r| {
        vec![
            r.drug.clone(),
            r.dose.to_string(),
            r.subgroup.label().to_string(),
            r.mean.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
        ]
    });
    write_rows(path, &header, rows)
}

pub fn write_curve_csv(path: &Path, curve: &SummaryCurve) -> Result<()> {
    let header = strings(&["dose", "mean", "lower", "upper"]);
    let rows = (0..curve.grid.len()).map(|g| {
        vec![
            curve.grid[g].to_string(),
            curve.mean[g].to_string(),
            curve.lower[g].to_string(),
            curve.upper[g].to_string(),
        ]
    });
    write_rows(path, &header, rows)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON form of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Provenance of the files in an output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Manifest {
            software: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash,
            files: Vec::new(),
        }
    }

    /// Records the content hash of `file`, named relative to `dir`.
    pub fn record(&mut self, dir: &Path, file: &Path) -> Result<()> {
        let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
        let name = file.strip_prefix(dir).unwrap_or(file);
        self.files.push(ManifestEntry {
            path: name.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Sorts entries and writes `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files.dedup_by(|a, b| a.path == b.path);
        write_json(&dir.join(MANIFEST_FILE), &self)
    }
}
