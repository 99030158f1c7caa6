//! Per-drug B-spline dose bases.
//!
//! Each drug gets one basis shared by every trial. Interior knots sit at
//! symmetric quantiles of the pooled positive doses, the lower boundary is
//! dose 0 and the upper boundary is the mean of the per-trial maximum doses.
//! The first (constant-at-zero) B-spline is dropped so every design row
//! vanishes at dose 0 and the trial intercept alone carries the untreated
//! response.
//!
//! A basis with no interior knots is the linear model: a single column
//! holding the raw dose.
//!
//! Above the upper boundary the spline is continued linearly, matching value
//! and slope at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{quantile_sorted, sort_floats};

/// Polynomial degree used for all spline models.
pub const CUBIC: usize = 3;

/// Spline design specification for one drug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct BasisSet {
    drug_index: usize,
    degree: usize,
    interior_knots: Vec<f64>,
    boundary_high: f64,
    /// Full clamped knot vector; empty for the linear model.
    knots: Vec<f64>,
}

/// Serialized form of a [`BasisSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BasisSpec {
    drug_index: usize,
    degree: usize,
    interior_knots: Vec<f64>,
    boundary_low: f64,
    boundary_high: f64,
    n_columns: usize,
}

impl TryFrom<BasisSpec> for BasisSet {
    type Error = Error;

    fn try_from(spec: BasisSpec) -> Result<Self> {
        if spec.boundary_low != 0.0 {
            return Err(Error::Basis(format!(
                "boundary_low must be 0, got {}",
                spec.boundary_low
            )));
        }
        let basis = BasisSet::new(spec.drug_index, spec.degree, spec.interior_knots, spec.boundary_high)?;
        if basis.n_columns() != spec.n_columns {
            return Err(Error::Basis(format!(
                "n_columns {} inconsistent with {} knots of degree {}",
                spec.n_columns,
                basis.interior_knots.len(),
                basis.degree
            )));
        }
        Ok(basis)
    }
}

impl From<BasisSet> for BasisSpec {
    fn from(b: BasisSet) -> Self {
        BasisSpec {
            drug_index: b.drug_index,
            degree: b.degree,
            n_columns: b.n_columns(),
            boundary_low: 0.0,
            boundary_high: b.boundary_high,
            interior_knots: b.interior_knots,
        }
    }
}

impl BasisSet {
    /// Builds a basis from explicit knots, validating the invariants.
    pub fn new(drug_index: usize, degree: usize, interior_knots: Vec<f64>, boundary_high: f64) -> Result<Self> {
        if !(boundary_high.is_finite() && boundary_high > 0.0) {
            return Err(Error::Basis(format!(
                "upper boundary must be positive, got {boundary_high}"
            )));
        }
        if !interior_knots.is_empty() && degree == 0 {
            return Err(Error::Basis("spline degree must be at least 1".into()));
        }
        let mut prev = 0.0;
        for &k in &interior_knots {
            if !(k > prev) {
                return Err(Error::Basis(format!(
                    "interior knots must be strictly ascending inside (0, {boundary_high}); \
                     got {interior_knots:?} (dose distribution too degenerate for this knot count?)"
                )));
            }
            prev = k;
        }
        if prev >= boundary_high {
            return Err(Error::Basis(format!(
                "interior knot {prev} collides with upper boundary {boundary_high}"
            )));
        }

        let knots = if interior_knots.is_empty() {
            Vec::new()
        } else {
            let mut t = vec![0.0; degree + 1];
            t.extend_from_slice(&interior_knots);
            t.extend(std::iter::repeat_n(boundary_high, degree + 1));
            t
        };

        Ok(BasisSet {
            drug_index,
            degree,
            interior_knots,
            boundary_high,
            knots,
        })
    }

    /// The linear (no-knot) model for one drug.
    pub fn linear(drug_index: usize, boundary_high: f64) -> Result<Self> {
        BasisSet::new(drug_index, CUBIC, Vec::new(), boundary_high)
    }

    pub fn drug_index(&self) -> usize {
        self.drug_index
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn boundary_low(&self) -> f64 {
        0.0
    }

    pub fn boundary_high(&self) -> f64 {
        self.boundary_high
    }

    pub fn is_linear(&self) -> bool {
        self.interior_knots.is_empty()
    }

    /// Number of design columns `L`.
    pub fn n_columns(&self) -> usize {
        if self.is_linear() {
            1
        } else {
            self.interior_knots.len() + self.degree
        }
    }

    /// Design row for `dose`; see [`eval_row`].
    pub fn eval(&self, dose: f64) -> Result<Vec<f64>> {
        eval_row(self, dose)
    }

    /// Number of functions in the full (undropped) B-spline basis.
    fn n_full(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Index `s` with `t[s] <= x < t[s+1]`, clamped to the last non-empty
    /// span so that `x == boundary_high` evaluates as a left limit.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let last = self.n_full() - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        // knots[p] == 0 <= x here
        let mut lo = p;
        let mut hi = last + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis functions of degree `deg` on span `s` at `x`:
    /// `out[r] = N_{s-deg+r, deg}(x)` for `r` in `0..=deg`.
    fn nonzero_basis(&self, s: usize, x: f64, deg: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        out[0] = 1.0;
        for j in 1..=deg {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Full-basis values at `x` within `[0, boundary_high]`.
    fn full_row(&self, x: f64) -> Vec<f64> {
        let p = self.degree;
        let s = self.span(x);
        let mut n = vec![0.0; p + 1];
        self.nonzero_basis(s, x, p, &mut n);
        let mut row = vec![0.0; self.n_full()];
        row[s - p..=s].copy_from_slice(&n);
        row
    }

    /// Full-basis first derivatives at `x` (left limit at knots).
    fn full_derivative_row(&self, x: f64) -> Vec<f64> {
        let p = self.degree;
        let t = &self.knots;
        let s = self.span(x);
        let mut lower = vec![0.0; p];
        self.nonzero_basis(s, x, p - 1, &mut lower);
        // lower[r] = N_{s-p+1+r, p-1}
        let lower_at = |i: usize| -> f64 {
            if i + p > s + 1 && i <= s {
                lower[i + p - 1 - s]
            } else {
                0.0
            }
        };
        let mut row = vec![0.0; self.n_full()];
        for (i, slot) in row.iter_mut().enumerate().take(s + 1).skip(s - p) {
            let mut d = 0.0;
            let a = t[i + p] - t[i];
            if a > 0.0 {
                d += lower_at(i) / a;
            }
            let b = t[i + p + 1] - t[i + 1];
            if b > 0.0 {
                d -= lower_at(i + 1) / b;
            }
            *slot = p as f64 * d;
        }
        row
    }
}

/// Places knots at the `i/(m+1)` quantiles of the pooled positive doses and
/// sets the upper boundary to the mean of the per-trial maxima.
///
/// Quantiles interpolate linearly between order statistics. Trials where the
/// drug was never given do not contribute to the upper boundary.
pub fn build_basis(
    drug_index: usize,
    doses_by_trial: &[Vec<f64>],
    n_interior_knots: usize,
    degree: usize,
) -> Result<BasisSet> {
    let mut pooled = Vec::new();
    let mut maxima = Vec::new();
    for doses in doses_by_trial {
        let mut trial_max: Option<f64> = None;
        for &d in doses {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Basis(format!("invalid dose {d}")));
            }
            if d > 0.0 {
                pooled.push(d);
                trial_max = Some(trial_max.map_or(d, |m: f64| m.max(d)));
            }
        }
        maxima.extend(trial_max);
    }
    if pooled.is_empty() {
        return Err(Error::Basis(format!("drug {drug_index}: no positive doses observed")));
    }
    let boundary_high = maxima.iter().sum::<f64>() / maxima.len() as f64;

    sort_floats(&mut pooled);
    let m = n_interior_knots;
    let knots: Vec<f64> = (1..=m)
        .map(|i| quantile_sorted(&pooled, i as f64 / (m + 1) as f64))
        .collect();

    BasisSet::new(drug_index, degree, knots, boundary_high)
}

/// Design row of length `n_columns` for one dose.
///
/// For spline bases this is columns `2..=L+1` of the clamped Cox–de Boor
/// basis on `[0, boundary_high]`; above the boundary each column is extended
/// linearly. The linear model returns `[dose]`.
pub fn eval_row(basis: &BasisSet, dose: f64) -> Result<Vec<f64>> {
    if !dose.is_finite() || dose < 0.0 {
        return Err(Error::Data(format!("dose must be finite and non-negative, got {dose}")));
    }
    Ok(eval_row_unchecked(basis, dose))
}

pub(crate) fn eval_row_unchecked(basis: &BasisSet, dose: f64) -> Vec<f64> {
    if basis.is_linear() {
        return vec![dose];
    }
    let l = basis.n_columns();
    if dose == 0.0 {
        return vec![0.0; l];
    }
    let high = basis.boundary_high;
    if dose == high {
        let mut row = vec![0.0; l];
        row[l - 1] = 1.0;
        return row;
    }
    if dose < high {
        let full = basis.full_row(dose);
        return full[1..].to_vec();
    }
    let slope = basis.full_derivative_row(high);
    let mut row = vec![0.0; l];
    row[l - 1] = 1.0;
    let dx = dose - high;
    for (r, s) in row.iter_mut().zip(&slope[1..]) {
        *r += dx * s;
    }
    row
}

/// Value of the dropped first basis function at `dose` (0 for the linear
/// model and above the boundary).
pub fn dropped_column(basis: &BasisSet, dose: f64) -> f64 {
    if basis.is_linear() || dose >= basis.boundary_high {
        return 0.0;
    }
    basis.full_row(dose)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive Cox–de Boor definition, used as an oracle.
    fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            let last = t[t.len() - 1];
            if (t[i] <= x && x < t[i + 1]) || (x == last && t[i] < t[i + 1] && t[i + 1] == last) {
                return 1.0;
            }
            return 0.0;
        }
        let mut v = 0.0;
        let a = t[i + p] - t[i];
        if a > 0.0 {
            v += (x - t[i]) / a * cox_de_boor(t, i, p - 1, x);
        }
        let b = t[i + p + 1] - t[i + 1];
        if b > 0.0 {
            v += (t[i + p + 1] - x) / b * cox_de_boor(t, i + 1, p - 1, x);
        }
        v
    }

    fn sample_basis() -> BasisSet {
        BasisSet::new(0, 3, vec![2.0, 4.5, 7.0], 10.0).unwrap()
    }

    #[test]
    fn median_knot_for_uniform_doses() {
        let doses: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = build_basis(0, &[doses], 1, 3).unwrap();
        assert_eq!(b.interior_knots(), &[50.5]);
        assert_eq!(b.boundary_high(), 100.0);
        assert_eq!(b.n_columns(), 4);
    }

    #[test]
    fn symmetric_quantiles() {
        let doses: Vec<f64> = (1..=13).map(f64::from).collect();
        let b = build_basis(0, &[doses], 3, 3).unwrap();
        assert_eq!(b.interior_knots(), &[4.0, 7.0, 10.0]);
    }

    #[test]
    fn upper_boundary_is_mean_of_trial_maxima() {
        let b = build_basis(0, &[vec![0.0, 10.0, 80.0], vec![5.0, 120.0], vec![0.0, 0.0]], 0, 3).unwrap();
        assert_eq!(b.boundary_high(), 100.0);
        assert!(b.is_linear());
        assert_eq!(b.n_columns(), 1);
        assert_eq!(eval_row(&b, 7.5).unwrap(), vec![7.5]);
        assert_eq!(eval_row(&b, 300.0).unwrap(), vec![300.0]);
    }

    #[test]
    fn degenerate_doses_rejected() {
        // all mass at one value: quantile knots coincide
        let err = build_basis(0, &[vec![3.0; 50], vec![3.0, 9.0]], 2, 3).unwrap_err();
        assert!(matches!(err, Error::Basis(_)), "{err}");
        // knot would equal the upper boundary
        let err = build_basis(0, &[vec![5.0; 10]], 1, 3).unwrap_err();
        assert!(matches!(err, Error::Basis(_)));
        assert!(build_basis(0, &[vec![0.0, 0.0]], 1, 3).is_err());
    }

    #[test]
    fn negative_dose_rejected() {
        assert!(eval_row(&sample_basis(), -0.1).is_err());
        assert!(eval_row(&sample_basis(), f64::NAN).is_err());
    }

    #[test]
    fn zero_dose_row_is_zero() {
        let b = sample_basis();
        assert!(eval_row(&b, 0.0).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(dropped_column(&b, 0.0), 1.0);
    }

    #[test]
    fn upper_boundary_saturates_last_column() {
        let b = sample_basis();
        let row = eval_row(&b, 10.0).unwrap();
        assert_eq!(row.len(), 6);
        assert_eq!(row[5], 1.0);
        assert!(row[..5].iter().all(|&v| v == 0.0));
        // the left limit agrees with the special case
        let near = eval_row(&b, 10.0 - 1e-10).unwrap();
        assert!((near[5] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn matches_recursive_definition() {
        let b = sample_basis();
        let t = &b.knots;
        for i in 0..=200 {
            let x = 10.0 * i as f64 / 200.0;
            let row = eval_row(&b, x).unwrap();
            for (c, v) in row.iter().enumerate() {
                let expected = cox_de_boor(t, c + 1, 3, x);
                assert!((v - expected).abs() < 1e-12, "x={x} col={c}: {v} vs {expected}");
            }
            let d0 = cox_de_boor(t, 0, 3, x);
            assert!((dropped_column(&b, x) - d0).abs() < 1e-12);
        }
    }

    #[test]
    fn extrapolation_is_linear_and_continuous() {
        let b = sample_basis();
        let at = eval_row(&b, 10.0).unwrap();
        let h = 1e-6;
        let below = eval_row(&b, 10.0 - h).unwrap();
        let above = eval_row(&b, 10.0 + h).unwrap();
        let far = eval_row(&b, 14.0).unwrap();
        let farther = eval_row(&b, 18.0).unwrap();
        for c in 0..6 {
            let left_slope = (at[c] - below[c]) / h;
            let right_slope = (above[c] - at[c]) / h;
            assert!((left_slope - right_slope).abs() < 1e-4, "col {c}");
            // equal steps give equal increments past the boundary
            assert!(((farther[c] - far[c]) - (far[c] - at[c])).abs() < 1e-12);
            assert!(((far[c] - at[c]) / 4.0 - right_slope).abs() < 1e-4);
        }
    }

    #[test]
    fn serde_round_trip_validates() {
        let b = sample_basis();
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.contains("\"boundary_low\":0.0"));
        let back: BasisSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
        let bad = json.replace("\"n_columns\":6", "\"n_columns\":5");
        assert!(serde_json::from_str::<BasisSet>(&bad).is_err());
    }
}
