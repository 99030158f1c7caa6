//! Decision summaries computed draw by draw: risk differences,
//! probability of best drug, and dose-response and difference curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{eval_row, BasisSet};
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::math::{inv_logit, mean, quantile_sorted, sort_floats};
use crate::model::ParameterState;
use crate::sampler::PosteriorDraws;

/// Tolerance under which two drugs count as tied for best.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Which subjects a risk difference averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgroup {
    All,
    /// Subjects whose moderator equals the given value, with the moderator
    /// held at that value.
    Moderator(bool),
}

impl Subgroup {
    pub fn label(&self) -> &'static str {
        match self {
            Subgroup::All => "all",
            Subgroup::Moderator(false) => "M=0",
            Subgroup::Moderator(true) => "M=1",
        }
    }

    fn contains(&self, s: &SubjectRecord) -> bool {
        match self {
            Subgroup::All => true,
            Subgroup::Moderator(m) => s.moderator == *m,
        }
    }
}

fn check_inputs(draws: &PosteriorDraws, data: &Dataset, bases: &[BasisSet], drug: usize) -> Result<()> {
    if bases.len() != data.n_drugs() || drug >= data.n_drugs() {
        return Err(Error::Shape(format!("drug index {drug} out of range")));
    }
    let shape = draws.shape();
    if shape.n_trials != data.n_trials()
        || shape.n_covariates != data.n_covariates()
        || shape.columns_per_drug != bases.iter().map(BasisSet::n_columns).collect::<Vec<_>>()
    {
        return Err(Error::Shape("draws do not match the data and bases".into()));
    }
    Ok(())
}

fn check_dose(dose: f64) -> Result<()> {
    if !(dose >= 0.0 && dose.is_finite()) {
        return Err(Error::Data(format!("dose must be finite and non-negative, got {dose}")));
    }
    Ok(())
}

/// Expected outcome probability with only `drug` given at `row`'s dose.
fn subject_probability(state: &ParameterState, s: &SubjectRecord, drug: usize, row: &[f64]) -> f64 {
    let mut eta = state.alpha(s.trial) + state.beta().iter().zip(&s.covariates).map(|(b, x)| b * x).sum::<f64>();
    let phi = state.phi_block(s.trial, drug);
    let theta = state.theta_block(drug);
    for (c, r) in row.iter().enumerate() {
        eta += r * (phi[c] + if s.moderator { theta[c] } else { 0.0 });
    }
    inv_logit(eta)
}

/// Per-draw average of `P(Y | T_drug = dose_a) - P(Y | T_drug = dose_b)`
/// over the subgroup, each subject keeping its own covariates, trial
/// effects and moderator; all other drugs are held at zero.
pub fn risk_difference_between(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    drug: usize,
    dose_a: f64,
    dose_b: f64,
    subgroup: Subgroup,
) -> Result<Vec<f64>> {
    check_inputs(draws, data, bases, drug)?;
    check_dose(dose_a)?;
    check_dose(dose_b)?;
    let members: Vec<&SubjectRecord> = data.subjects().iter().filter(|s| subgroup.contains(s)).collect();
    if members.is_empty() {
        return Err(Error::Data(format!("subgroup {} is empty", subgroup.label())));
    }
    let row_a = eval_row(&bases[drug], dose_a)?;
    let row_b = eval_row(&bases[drug], dose_b)?;
    let states: Vec<&ParameterState> = draws.iter().collect();
    Ok(states
        .par_iter()
        .map(|st| {
            members
                .iter()
                .map(|s| subject_probability(st, s, drug, &row_a) - subject_probability(st, s, drug, &row_b))
                .sum::<f64>()
                / members.len() as f64
        })
        .collect())
}

/// Per-draw risk difference `Delta_q(drug, dose)` against no treatment.
pub fn risk_difference(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    drug: usize,
    dose: f64,
    subgroup: Subgroup,
) -> Result<Vec<f64>> {
    risk_difference_between(draws, data, bases, drug, dose, 0.0, subgroup)
}

/// [`risk_difference`] at several doses at once: `out[d][q]`.
pub fn risk_differences(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    drug: usize,
    doses: &[f64],
    subgroup: Subgroup,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(draws, data, bases, drug)?;
    for &d in doses {
        check_dose(d)?;
    }
    let members: Vec<&SubjectRecord> = data.subjects().iter().filter(|s| subgroup.contains(s)).collect();
    if members.is_empty() {
        return Err(Error::Data(format!("subgroup {} is empty", subgroup.label())));
    }
    let rows = doses
        .iter()
        .map(|&d| eval_row(&bases[drug], d))
        .collect::<Result<Vec<_>>>()?;
    let row_0 = eval_row(&bases[drug], 0.0)?;
    let states: Vec<&ParameterState> = draws.iter().collect();
    let n = members.len() as f64;
    let per_draw: Vec<Vec<f64>> = states
        .par_iter()
        .map(|st| {
            let base: Vec<f64> = members
                .iter()
                .map(|s| subject_probability(st, s, drug, &row_0))
                .collect();
            rows.iter()
                .map(|row| {
                    members
                        .iter()
                        .zip(&base)
                        .map(|(s, p0)| subject_probability(st, s, drug, row) - p0)
                        .sum::<f64>()
                        / n
                })
                .collect()
        })
        .collect();
    Ok((0..doses.len())
        .map(|d| per_draw.iter().map(|v| v[d]).collect())
        .collect())
}

/// Posterior mean and 95% interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sort_floats(&mut sorted);
        Interval {
            mean: mean(values),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDifferenceRow {
    pub drug: String,
    pub dose: f64,
    pub subgroup: Subgroup,
    /// Percentage points.
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDifferenceTable {
    pub rows: Vec<RiskDifferenceRow>,
}

/// Risk differences in percentage points for every drug, dose and
/// subgroup, in that nesting order.
pub fn risk_difference_table(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    doses: &[f64],
    subgroups: &[Subgroup],
) -> Result<RiskDifferenceTable> {
    let mut rows = Vec::new();
    for (k, name) in data.drug_names().iter().enumerate() {
        for &dose in doses {
            for &sg in subgroups {
                let pp: Vec<f64> = risk_difference(draws, data, bases, k, dose, sg)?
                    .into_iter()
                    .map(|d| 100.0 * d)
                    .collect();
                let iv = Interval::from_draws(&pp);
                rows.push(RiskDifferenceRow {
                    drug: name.clone(),
                    dose,
                    subgroup: sg,
                    mean: iv.mean,
                    lower: iv.lower,
                    upper: iv.upper,
                });
            }
        }
    }
    Ok(RiskDifferenceTable { rows })
}

/// Whether the best drug has the smallest or the largest effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Best {
    Smallest,
    Largest,
}

/// `n_mesh` equally spaced doses on `(0, upper]` with trapezoid weights:
/// the endpoint at `upper` carries half weight. Weights sum to 1.
pub fn dose_mesh(upper: f64, n_mesh: usize) -> Result<Vec<(f64, f64)>> {
    if !(upper > 0.0 && upper.is_finite()) || n_mesh < 2 {
        return Err(Error::Config(
            "mesh needs a positive upper dose and at least 2 points".into(),
        ));
    }
    let raw: Vec<(f64, f64)> = (1..=n_mesh)
        .map(|i| (upper * i as f64 / n_mesh as f64, if i == n_mesh { 0.5 } else { 1.0 }))
        .collect();
    let total: f64 = raw.iter().map(|p| p.1).sum();
    Ok(raw.into_iter().map(|(d, w)| (d, w / total)).collect())
}

/// Probability that each drug is best over `(0, upper]`, averaging the
/// argmin (or argmax) indicator over the mesh and the draws.
pub fn prob_best(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    upper: f64,
    n_mesh: usize,
    best: Best,
) -> Result<Vec<f64>> {
    prob_best_on_mesh(draws, data, bases, &dose_mesh(upper, n_mesh)?, best)
}

/// [`prob_best`] over an explicit weighted mesh, in any order.
#[allow(clippy::needless_range_loop)]
pub fn prob_best_on_mesh(
    draws: &PosteriorDraws,
    data: &Dataset,
    bases: &[BasisSet],
    mesh: &[(f64, f64)],
    best: Best,
) -> Result<Vec<f64>> {
    let k_drugs = data.n_drugs();
    if mesh.is_empty() || mesh.iter().any(|m| !(m.1 >= 0.0)) || mesh.iter().all(|m| m.1 == 0.0) {
        return Err(Error::Config(
            "mesh needs non-negative weights with a positive total".into(),
        ));
    }
    let doses: Vec<f64> = mesh.iter().map(|m| m.0).collect();
    // deltas[k][m][q]
    let deltas = (0..k_drugs)
        .map(|k| risk_differences(draws, data, bases, k, &doses, Subgroup::All))
        .collect::<Result<Vec<_>>>()?;
    let n_draws = draws.total_draws();
    let mut prob = vec![0.0; k_drugs];
    for (m, &(_, w)) in mesh.iter().enumerate() {
        let mut wins = vec![0.0; k_drugs];
        for q in 0..n_draws {
            let values: Vec<f64> = (0..k_drugs).map(|k| deltas[k][m][q]).collect();
            let target = match best {
                Best::Smallest => values.iter().copied().fold(f64::INFINITY, f64::min),
                Best::Largest => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            let winners: Vec<usize> = (0..k_drugs)
                .filter(|&k| (values[k] - target).abs() <= TIE_TOLERANCE)
                .collect();
            for &k in &winners {
                wins[k] += 1.0 / winners.len() as f64;
            }
        }
        for k in 0..k_drugs {
            prob[k] += w * wins[k];
        }
    }
    let total: f64 = prob.iter().sum();
    Ok(prob.into_iter().map(|p| p / total).collect())
}

/// Moderator setting for representative curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeratorLevel {
    Absent,
    Present,
    /// Mixture of the two curves with the given moderator prevalence.
    Marginal(f64),
}

impl ModeratorLevel {
    pub fn label(&self) -> String {
        match self {
            ModeratorLevel::Absent => "M=0".into(),
            ModeratorLevel::Present => "M=1".into(),
            ModeratorLevel::Marginal(_) => "marginal".into(),
        }
    }
}

/// Curve values per draw over a dose grid, with pointwise mean and 95%
/// band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCurve {
    pub drug: String,
    pub moderator: String,
    pub grid: Vec<f64>,
    /// `values[q][g]`.
    #[serde(skip)]
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SummaryCurve {
    fn from_values(drug: String, moderator: String, grid: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        let n = grid.len();
        let (mut mean_v, mut lower, mut upper) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for g in 0..n {
            let col: Vec<f64> = values.iter().map(|v| v[g]).collect();
            let iv = Interval::from_draws(&col);
            mean_v.push(iv.mean);
            lower.push(iv.lower);
            upper.push(iv.upper);
        }
        SummaryCurve {
            drug,
            moderator,
            grid,
            values,
            mean: mean_v,
            lower,
            upper,
        }
    }

    /// Whether the 95% band excludes zero at grid point `g`.
    pub fn excludes_zero(&self, g: usize) -> bool {
        self.lower[g] > 0.0 || self.upper[g] < 0.0
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("dose grid is empty".into()));
    }
    for &d in grid {
        check_dose(d)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("dose grid must be strictly ascending".into()));
    }
    Ok(())
}

fn check_drug(draws: &PosteriorDraws, bases: &[BasisSet], drug: usize) -> Result<()> {
    let cols: Vec<usize> = bases.iter().map(BasisSet::n_columns).collect();
    if drug >= bases.len() || draws.shape().columns_per_drug != cols {
        return Err(Error::Shape(format!(
            "drug index {drug} or bases do not match the draws"
        )));
    }
    Ok(())
}

/// Pooled-level outcome probability for a typical subject (covariates 0).
fn pooled_probability(state: &ParameterState, drug: usize, row: &[f64], moderator: bool) -> f64 {
    let mu = state.mu_phi_block(drug);
    let theta = state.theta_block(drug);
    let mut eta = state.mu_alpha();
    for (c, r) in row.iter().enumerate() {
        eta += r * (mu[c] + if moderator { theta[c] } else { 0.0 });
    }
    inv_logit(eta)
}

fn grid_rows(basis: &BasisSet, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    grid.iter().map(|&d| eval_row(basis, d)).collect()
}

/// Probability-scale dose-response curves at the pooled coefficients.
pub fn curve_draws(
    draws: &PosteriorDraws,
    drug_name: &str,
    bases: &[BasisSet],
    drug: usize,
    moderator: ModeratorLevel,
    grid: &[f64],
) -> Result<SummaryCurve> {
    check_drug(draws, bases, drug)?;
    check_grid(grid)?;
    if let ModeratorLevel::Marginal(p) = moderator {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("moderator prevalence {p} outside [0, 1]")));
        }
    }
    let rows = grid_rows(&bases[drug], grid)?;
    let states: Vec<&ParameterState> = draws.iter().collect();
    let values = states
        .par_iter()
        .map(|st| {
            rows.iter()
                .map(|row| match moderator {
                    ModeratorLevel::Absent => pooled_probability(st, drug, row, false),
                    ModeratorLevel::Present => pooled_probability(st, drug, row, true),
                    ModeratorLevel::Marginal(p) => {
                        (1.0 - p) * pooled_probability(st, drug, row, false)
                            + p * pooled_probability(st, drug, row, true)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SummaryCurve::from_values(
        drug_name.to_string(),
        moderator.label(),
        grid.to_vec(),
        values,
    ))
}

/// Pooled-level curve with the moderator present minus absent.
pub fn difference_curve(
    draws: &PosteriorDraws,
    drug_name: &str,
    bases: &[BasisSet],
    drug: usize,
    grid: &[f64],
) -> Result<SummaryCurve> {
    check_drug(draws, bases, drug)?;
    check_grid(grid)?;
    let rows = grid_rows(&bases[drug], grid)?;
    let states: Vec<&ParameterState> = draws.iter().collect();
    let values = states
        .par_iter()
        .map(|st| {
            rows.iter()
                .map(|row| pooled_probability(st, drug, row, true) - pooled_probability(st, drug, row, false))
                .collect()
        })
        .collect();
    Ok(SummaryCurve::from_values(
        drug_name.to_string(),
        "M=1 - M=0".into(),
        grid.to_vec(),
        values,
    ))
}

/// `n` equally spaced doses on `[0, upper]`.
pub fn uniform_grid(upper: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0];
    }
    (0..n).map(|i| upper * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelShape, ParameterValues};
    use crate::sampler::DrawStats;

    fn dataset() -> (Dataset, Vec<BasisSet>) {
        let mut subjects = Vec::new();
        for j in 0..2 {
            for i in 0..8 {
                let doses = match i % 3 {
                    0 => vec![0.0, 0.0],
                    1 => vec![1.0 + i as f64, 0.0],
                    _ => vec![0.0, 2.0 + i as f64],
                };
                subjects.push(SubjectRecord {
                    trial: j,
                    doses,
                    outcome: i % 2 == 0,
                    covariates: vec![i as f64 / 4.0 - 1.0],
                    moderator: i % 4 < 2,
                });
            }
        }
        let data = Dataset::new(vec!["a".into(), "b".into()], vec!["x".into()], 2, subjects).unwrap();
        let bases = vec![
            BasisSet::new(0, 3, vec![4.0], 10.0).unwrap(),
            BasisSet::new(1, 3, vec![4.0], 10.0).unwrap(),
        ];
        (data, bases)
    }

    fn draws_from(shape: &ModelShape, values: Vec<ParameterValues>) -> PosteriorDraws {
        let states: Vec<ParameterState> = values
            .into_iter()
            .map(|v| ParameterState::new(shape, v).unwrap())
            .collect();
        let n = states.len();
        let stats = vec![
            DrawStats {
                lp: 0.0,
                divergent: false,
                tree_depth: 1,
                accept_stat: 1.0,
                n_leapfrog: 1,
            };
            n
        ];
        PosteriorDraws::new(
            shape.clone(),
            shape.parameter_names(&[], &[]),
            vec![states],
            vec![stats],
            vec![],
        )
        .unwrap()
    }

    fn shape() -> ModelShape {
        ModelShape {
            n_trials: 2,
            columns_per_drug: vec![4, 4],
            n_covariates: 1,
        }
    }

    fn varied(seed: usize) -> ParameterValues {
        let s = shape();
        let mut v = ParameterValues::zeros(&s);
        let f = |i: usize| (((i + seed) * 7919 % 101) as f64 / 101.0 - 0.5) * 2.0;
        v.mu_alpha = -1.0 + f(1);
        v.mu_phi = (0..8).map(|i| f(10 + i)).collect();
        v.theta = (0..8).map(|i| f(30 + i)).collect();
        v.beta = vec![f(50)];
        v.sigma = vec![0.3; 9];
        v.z = (0..2).map(|j| (0..9).map(|d| f(60 + 9 * j + d)).collect()).collect();
        v
    }

    #[test]
    fn zero_dose_gives_zero_difference() {
        let (data, bases) = dataset();
        let draws = draws_from(&shape(), vec![varied(1), varied(2)]);
        for d in risk_difference(&draws, &data, &bases, 0, 0.0, Subgroup::All).unwrap() {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn flat_curves_give_zero_difference() {
        let (data, bases) = dataset();
        let mut v = varied(3);
        v.mu_phi = vec![0.0; 8];
        v.theta = vec![0.0; 8];
        v.z = vec![vec![0.0; 9]; 2];
        let draws = draws_from(&shape(), vec![v]);
        for dose in [0.5, 3.0, 12.0] {
            let d = risk_difference(&draws, &data, &bases, 1, dose, Subgroup::All).unwrap();
            assert!(d[0].abs() < 1e-15);
        }
    }

    #[test]
    fn single_subject_matches_hand_computation() {
        let data = Dataset::new(
            vec!["a".into()],
            vec![],
            1,
            vec![SubjectRecord {
                trial: 0,
                doses: vec![0.0],
                outcome: false,
                covariates: vec![],
                moderator: true,
            }],
        )
        .unwrap();
        let bases = vec![BasisSet::linear(0, 10.0).unwrap()];
        let s = ModelShape {
            n_trials: 1,
            columns_per_drug: vec![1],
            n_covariates: 0,
        };
        let mut v = ParameterValues::zeros(&s);
        v.mu_alpha = -2.0;
        v.mu_phi = vec![0.3];
        v.theta = vec![0.1];
        let draws = draws_from(&s, vec![v]);
        let d = risk_difference(&draws, &data, &bases, 0, 2.0, Subgroup::All).unwrap()[0];
        let expected = 1.0 / (1.0 + (-(-2.0 + 2.0 * 0.4f64)).exp()) - 1.0 / (1.0 + 2f64.exp());
        assert!((d - expected).abs() < 1e-14);
    }

    #[test]
    fn antisymmetric_and_decomposes_by_subgroup() {
        let (data, bases) = dataset();
        let draws = draws_from(&shape(), vec![varied(4), varied(5)]);
        let ab = risk_difference_between(&draws, &data, &bases, 0, 3.0, 7.0, Subgroup::All).unwrap();
        let ba = risk_difference_between(&draws, &data, &bases, 0, 7.0, 3.0, Subgroup::All).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x + y).abs() < 1e-15);
        }
        let all = risk_difference(&draws, &data, &bases, 1, 6.0, Subgroup::All).unwrap();
        let m0 = risk_difference(&draws, &data, &bases, 1, 6.0, Subgroup::Moderator(false)).unwrap();
        let m1 = risk_difference(&draws, &data, &bases, 1, 6.0, Subgroup::Moderator(true)).unwrap();
        let n1 = data.subjects().iter().filter(|s| s.moderator).count() as f64;
        let n = data.n_subjects() as f64;
        for q in 0..all.len() {
            let w = ((n - n1) * m0[q] + n1 * m1[q]) / n;
            assert!((all[q] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_subgroup_is_an_error() {
        let (mut data, bases) = dataset();
        let subjects: Vec<SubjectRecord> = data
            .subjects()
            .iter()
            .cloned()
            .map(|mut s| {
                s.moderator = false;
                s
            })
            .collect();
        data = Dataset::new(data.drug_names().to_vec(), data.covariate_names().to_vec(), 2, subjects).unwrap();
        let draws = draws_from(&shape(), vec![varied(1)]);
        assert!(risk_difference(&draws, &data, &bases, 0, 1.0, Subgroup::Moderator(true)).is_err());
    }

    #[test]
    fn identical_drugs_split_probability() {
        let (data, bases) = dataset();
        let mut v = varied(6);
        let first: Vec<f64> = v.mu_phi[..4].to_vec();
        v.mu_phi[4..].copy_from_slice(&first);
        let th: Vec<f64> = v.theta[..4].to_vec();
        v.theta[4..].copy_from_slice(&th);
        for zj in &mut v.z {
            let block: Vec<f64> = zj[1..5].to_vec();
            zj[5..].copy_from_slice(&block);
        }
        let draws = draws_from(&shape(), vec![v]);
        let p = prob_best(&draws, &data, &bases, 10.0, 21, Best::Smallest).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn prob_best_sums_to_one_and_respects_mesh_order() {
        let (data, bases) = dataset();
        let draws = draws_from(&shape(), vec![varied(7), varied(8), varied(9)]);
        let mesh = dose_mesh(10.0, 11).unwrap();
        let p = prob_best_on_mesh(&draws, &data, &bases, &mesh, Best::Largest).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rev = mesh.clone();
        rev.reverse();
        let q = prob_best_on_mesh(&draws, &data, &bases, &rev, Best::Largest).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        let w: f64 = mesh.iter().map(|m| m.1).sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert_eq!(mesh[10].0, 10.0);
        assert!((mesh[10].1 - mesh[0].1 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_drug_is_always_best() {
        let data = Dataset::new(
            vec!["a".into()],
            vec![],
            1,
            vec![SubjectRecord {
                trial: 0,
                doses: vec![1.0],
                outcome: true,
                covariates: vec![],
                moderator: false,
            }],
        )
        .unwrap();
        let s = ModelShape {
            n_trials: 1,
            columns_per_drug: vec![1],
            n_covariates: 0,
        };
        let mut v = ParameterValues::zeros(&s);
        v.mu_phi = vec![0.7];
        let draws = draws_from(&s, vec![v]);
        let p = prob_best(
            &draws,
            &data,
            &[BasisSet::linear(0, 2.0).unwrap()],
            2.0,
            5,
            Best::Smallest,
        )
        .unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn representative_curves() {
        let (_, bases) = dataset();
        let mut v = varied(10);
        let mu_alpha = v.mu_alpha;
        let draws = draws_from(&shape(), vec![v.clone()]);
        let grid = uniform_grid(12.0, 25);
        let c = curve_draws(&draws, "a", &bases, 0, ModeratorLevel::Absent, &grid).unwrap();
        assert!((c.values[0][0] - inv_logit(mu_alpha)).abs() < 1e-15);
        assert!(c.values[0].iter().all(|p| (0.0..=1.0).contains(p)));
        let d = difference_curve(&draws, "a", &bases, 0, &grid).unwrap();
        assert_eq!(d.values[0][0], 0.0);
        v.theta = vec![0.0; 8];
        let flat = draws_from(&shape(), vec![v]);
        let d = difference_curve(&flat, "a", &bases, 0, &grid).unwrap();
        assert!(d.values[0].iter().all(|x| *x == 0.0));
        let m = curve_draws(&draws, "a", &bases, 0, ModeratorLevel::Marginal(0.25), &grid).unwrap();
        let p1 = curve_draws(&draws, "a", &bases, 0, ModeratorLevel::Present, &grid).unwrap();
        assert!((m.values[0][5] - (0.75 * c.values[0][5] + 0.25 * p1.values[0][5])).abs() < 1e-15);
        assert!(curve_draws(&draws, "a", &bases, 0, ModeratorLevel::Absent, &[1.0, 0.5]).is_err());
    }
}
