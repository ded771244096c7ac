//! Multinomial-logistic gating network.
//!
//! Component 0 is the baseline: its coefficient row is identically zero, so
//! `log(pi_k / pi_0) = beta_k . w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// z value for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// K rows by (L + 1) columns of gating coefficients; column 0 is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingParams {
    coefficients: Vec<Vec<f64>>,
}

impl GatingParams {
    /// All-zero coefficients: uniform membership probabilities.
    pub fn zeros(n_components: usize, n_columns: usize) -> Self {
        GatingParams {
            coefficients: vec![vec![0.0; n_columns]; n_components],
        }
    }

    pub fn new(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::InvalidParams("gating needs at least one row".into()));
        };
        let width = first.len();
        if width == 0 {
            return Err(Error::InvalidParams("gating needs an intercept column".into()));
        }
        if coefficients.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidParams("ragged gating matrix".into()));
        }
        if first.iter().any(|&b| b != 0.0) {
            return Err(Error::InvalidParams("baseline gating row must be zero".into()));
        }
        if coefficients.iter().flatten().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParams("non-finite gating coefficient".into()));
        }
        Ok(GatingParams { coefficients })
    }

    /// Re-expresses arbitrary rows against row 0 by subtracting it from every row.
    /// The resulting membership probabilities are unchanged.
    pub fn from_unanchored(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(base) = rows.first().cloned() {
            for r in rows.iter_mut() {
                for (b, c) in r.iter_mut().zip(&base) {
                    *b -= c;
                }
            }
        }
        Self::new(rows)
    }

    pub fn n_components(&self) -> usize {
        self.coefficients.len()
    }

    /// L + 1
    pub fn n_columns(&self) -> usize {
        self.coefficients[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.coefficients[k]
    }

    /// Overwrites row `k >= 1`.
    pub(crate) fn set_row(&mut self, k: usize, row: Vec<f64>) {
        debug_assert!(k > 0 && row.len() == self.n_columns());
        self.coefficients[k] = row;
    }

    fn check_width(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.n_columns() {
            return Err(Error::Dimension(format!(
                "covariate row has {} entries (with intercept), gating expects {}",
                w.len(),
                self.n_columns()
            )));
        }
        Ok(())
    }

    /// Linear predictors `beta_k . w` for every component.
    pub fn linear_predictors(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_width(w)?;
        Ok(self.coefficients.iter().map(|b| dot(b, w)).collect())
    }

    /// Log membership probabilities, max-shifted.
    pub fn log_probs(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut eta = self.linear_predictors(w)?;
        let lse = log_sum_exp(&eta);
        for e in eta.iter_mut() {
            *e -= lse;
        }
        Ok(eta)
    }

    /// Membership probabilities `pi_ik` for design row `w` (intercept first).
    pub fn probs(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut eta = self.linear_predictors(w)?;
        let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for e in eta.iter_mut() {
            *e = (*e - max).exp();
            sum += *e;
        }
        for e in eta.iter_mut() {
            *e /= sum;
        }
        Ok(eta)
    }

    /// `log(pi_k / pi_0)`, which is just `beta_k . w`.
    pub fn log_odds(&self, w: &[f64], k: usize) -> Result<f64> {
        self.check_width(w)?;
        let row = self.coefficients.get(k).ok_or_else(|| {
            Error::Dimension(format!(
                "component {k} out of range for {} components",
                self.n_components()
            ))
        })?;
        Ok(dot(row, w))
    }

    /// Reorders components so that new component `i` is old component
    /// `order[i]`, re-anchoring on the new first row.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let rows = order.iter().map(|&k| self.coefficients[k].clone()).collect();
        Self::from_unanchored(rows)
    }
}

/// See [`GatingParams::probs`].
pub fn gating_probs(gating: &GatingParams, w: &[f64]) -> Result<Vec<f64>> {
    gating.probs(w)
}

/// See [`GatingParams::log_odds`]. `k` is 0-based.
pub fn gating_log_odds(gating: &GatingParams, w: &[f64], k: usize) -> Result<f64> {
    gating.log_odds(w, k)
}

/// Odds ratio and its 95% interval, `exp(beta)` and `exp(beta +- 1.96 se)`.
pub fn odds_ratio_interval(beta: f64, se: f64) -> (f64, f64, f64) {
    (
        beta.exp(),
        (beta - Z_95 * se).exp(),
        (beta + Z_95 * se).exp(),
    )
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
