//! Maximum-likelihood fitting by the hybrid EM/MM ("EMM") algorithm.
//!
//! Each cycle computes posterior memberships (E step), then runs conditional
//! minorize-maximize updates for the support parameters, the dampening
//! parameters and the gating coefficients in turn. Every conditional update
//! maximizes a surrogate that lies below the expected complete-data
//! log-likelihood `Q` and touches it at the current point, so neither `Q` nor
//! the observed log-likelihood can decrease.

mod aitken;
mod dampening;
mod estep;
mod fit;
mod gating_step;
mod stderr;
mod support;

pub use aitken::aitken_converged;
pub use dampening::{dampening_surrogate, m_step_dampening, DampeningUpdate};
pub use estep::{e_step, q_function};
pub use fit::{fit, fit_from, FitConfig, FitResult, StartOutcome};
pub use gating_step::{gating_surrogate, m_step_gating, GatingMm};
pub use stderr::{standard_errors, StandardErrors};
pub use support::{m_step_support, support_mm_terms, support_surrogate, SupportMmTerms};

use crate::benter::{positions, ComponentTable};
use crate::error::{Error, Result};
use crate::types::{Dataset, MoEParams};

/// Row sums of a responsibility matrix must be within this of 1.
pub const RESPONSIBILITY_TOL: f64 = 1e-10;

/// M x K posterior membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    z: Vec<Vec<f64>>,
}

impl Responsibilities {
    pub fn new(z: Vec<Vec<f64>>) -> Result<Self> {
        let k = z.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::Dimension("responsibilities need at least one column".into()));
        }
        for (i, row) in z.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Dimension(format!("responsibility row {i} is ragged")));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidParams(format!(
                    "responsibility row {i} has an entry outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > RESPONSIBILITY_TOL {
                return Err(Error::InvalidParams(format!(
                    "responsibility row {i} sums to {s}"
                )));
            }
        }
        Ok(Responsibilities { z })
    }

    pub(crate) fn from_rows_unchecked(z: Vec<Vec<f64>>) -> Self {
        Responsibilities { z }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn n_rows(&self) -> usize {
        self.z.len()
    }

    pub fn n_components(&self) -> usize {
        self.z[0].len()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_components()];
        for row in &self.z {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    /// Column means; the marginal mixing proportions.
    pub fn column_means(&self) -> Vec<f64> {
        let m = self.z.len() as f64;
        self.column_sums().into_iter().map(|s| s / m).collect()
    }

    /// Reorders columns: new column `i` is old column `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Responsibilities {
            z: self
                .z
                .iter()
                .map(|r| order.iter().map(|&k| r[k]).collect())
                .collect(),
        }
    }
}

/// A dataset with rank positions precomputed for the inner loops.
pub(crate) struct Prepared<'a> {
    pub data: &'a Dataset,
    pos: Vec<usize>,
    n: usize,
}

impl<'a> Prepared<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let n = data.n_candidates();
        let mut pos = Vec::with_capacity(n * data.n_voters());
        for b in data.ballots() {
            pos.extend(positions(b, n));
        }
        Prepared { data, pos, n }
    }

    #[inline]
    pub fn pos(&self, i: usize) -> &[usize] {
        &self.pos[i * self.n..(i + 1) * self.n]
    }

    pub fn tables(&self, params: &MoEParams) -> Vec<ComponentTable> {
        params
            .support
            .iter()
            .map(|s| ComponentTable::new(s, &params.dampening))
            .collect()
    }

    /// M x K matrix of Benter log-probabilities.
    pub fn log_probs(&self, params: &MoEParams) -> Vec<Vec<f64>> {
        let tables = self.tables(params);
        self.data
            .ballots()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let pos = self.pos(i);
                tables
                    .iter()
                    .map(|t| t.log_prob(b.ranking(), pos, &params.dampening))
                    .collect()
            })
            .collect()
    }

    /// M x K matrix of log gating probabilities.
    pub fn log_gating(&self, params: &MoEParams) -> Vec<Vec<f64>> {
        self.data
            .design()
            .iter()
            .map(|w| params.gating.log_probs(w).expect("gating width checked"))
            .collect()
    }

    /// Observed log-likelihood without parameter-range validation.
    pub fn loglik(&self, params: &MoEParams) -> f64 {
        let lp = self.log_probs(params);
        let lg = self.log_gating(params);
        lp.iter()
            .zip(&lg)
            .map(|(a, b)| {
                let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                crate::gating::log_sum_exp(&v)
            })
            .sum()
    }
}

pub(crate) fn check_resp(data: &Dataset, resp: &Responsibilities, k: usize) -> Result<()> {
    if resp.n_rows() != data.n_voters() || resp.n_components() != k {
        return Err(Error::Dimension(format!(
            "responsibilities are {}x{}, expected {}x{}",
            resp.n_rows(),
            resp.n_components(),
            data.n_voters(),
            k
        )));
    }
    Ok(())
}
