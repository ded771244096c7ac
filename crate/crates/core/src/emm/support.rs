//! Support-parameter update.
//!
//! Two supporting-hyperplane bounds, first on `-log(sum)` and then on
//! `-p^alpha`, turn the stage normalizers into terms linear in `p`. The
//! surrogate then separates into `omega_kj log p_kj - D_kj p_kj`, maximized
//! at `p_kj = omega_kj / D_kj`. `Q` is invariant to rescaling a support row,
//! so normalizing afterwards costs nothing.

use super::{check_resp, Prepared, Responsibilities};
use crate::benter::{floored, SUPPORT_FLOOR};
use crate::error::{Error, Result};
use crate::types::{Dataset, MoEParams};

/// Numerators `omega` and denominators `D` of the support update for every
/// component, K x N each.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMmTerms {
    pub omega: Vec<Vec<f64>>,
    pub denom: Vec<Vec<f64>>,
}

impl SupportMmTerms {
    /// Unnormalized maximizers `omega / D`.
    pub fn ratios(&self) -> Vec<Vec<f64>> {
        self.omega
            .iter()
            .zip(&self.denom)
            .map(|(o, d)| o.iter().zip(d).map(|(a, b)| a / b).collect())
            .collect()
    }
}

pub fn support_mm_terms(
    data: &Dataset,
    resp: &Responsibilities,
    params: &MoEParams,
) -> Result<SupportMmTerms> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    Ok(terms_prepared(&Prepared::new(data), resp, params))
}

pub(crate) fn terms_prepared(
    prep: &Prepared,
    resp: &Responsibilities,
    params: &MoEParams,
) -> SupportMmTerms {
    let n = prep.data.n_candidates();
    let k_count = params.n_components();
    let alpha = &params.dampening;
    let tables = prep.tables(params);
    let mut omega = vec![vec![0.0; n]; k_count];
    let mut denom = vec![vec![0.0; n]; k_count];
    for (i, b) in prep.data.ballots().iter().enumerate() {
        let pos = prep.pos(i);
        let z = &resp.rows()[i];
        for (k, tab) in tables.iter().enumerate() {
            let zk = z[k];
            if zk == 0.0 {
                continue;
            }
            for (t, &c) in b.ranking().iter().enumerate() {
                let a = alpha[t];
                if a == 0.0 {
                    continue;
                }
                omega[k][c] += zk * a;
                let stage = tab.stage_pow(t);
                let s = tab.stage_sum(pos, t);
                let coef = zk * a / s;
                for j in 0..n {
                    if pos[j] >= t {
                        // p^(a-1) = p^a / p
                        denom[k][j] += coef * stage[j] / tab.p[j];
                    }
                }
            }
        }
    }
    SupportMmTerms { omega, denom }
}

/// Normalizes, floors and re-normalizes a row of positive weights.
pub(crate) fn to_floored_simplex(mut row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v = (*v / s).max(SUPPORT_FLOOR));
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    row
}

pub(crate) fn step_prepared(
    prep: &Prepared,
    resp: &Responsibilities,
    params: &MoEParams,
) -> Result<Vec<Vec<f64>>> {
    for (k, s) in resp.column_sums().into_iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::DegenerateComponent { component: k });
        }
    }
    let terms = terms_prepared(prep, resp, params);
    Ok(terms.ratios().into_iter().map(to_floored_simplex).collect())
}

/// One MM update of every support row with dampening held fixed.
pub fn m_step_support(
    data: &Dataset,
    resp: &Responsibilities,
    params: &MoEParams,
) -> Result<Vec<Vec<f64>>> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    step_prepared(&Prepared::new(data), resp, params)
}

/// The minorizing surrogate of `Q` in the support parameters, built at
/// `params` and evaluated at `support`. Gating and dampening are held at
/// their values in `params`.
pub fn support_surrogate(
    data: &Dataset,
    resp: &Responsibilities,
    params: &MoEParams,
    support: &[Vec<f64>],
) -> Result<f64> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    if support.len() != params.n_components()
        || support.iter().any(|r| r.len() != data.n_candidates())
    {
        return Err(Error::Dimension("candidate support has the wrong shape".into()));
    }
    let prep = Prepared::new(data);
    let alpha = &params.dampening;
    let tables = prep.tables(params);
    let lg = prep.log_gating(params);
    let n = data.n_candidates();
    let mut total = 0.0;
    for (i, b) in data.ballots().iter().enumerate() {
        let pos = prep.pos(i);
        for (k, tab) in tables.iter().enumerate() {
            let zk = resp.rows()[i][k];
            let mut term = lg[i][k];
            for (t, &c) in b.ranking().iter().enumerate() {
                let a = alpha[t];
                let s_bar = tab.stage_sum(pos, t);
                let mut lin = 0.0;
                if a != 0.0 {
                    let stage = tab.stage_pow(t);
                    for j in 0..n {
                        if pos[j] >= t {
                            lin += a * stage[j] / tab.p[j] * (floored(support[k][j]) - tab.p[j]);
                        }
                    }
                }
                term += a * floored(support[k][c]).ln() - s_bar.ln() - lin / s_bar;
            }
            total += zk * term;
        }
    }
    Ok(total)
}
