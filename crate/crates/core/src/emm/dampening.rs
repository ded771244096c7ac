//! Dampening-parameter update.
//!
//! With support held at `p_bar`, `-log sum_s p_bar_s^alpha` is bounded below
//! by its tangent in `sum_s p_bar_s^alpha`, and each `-p_bar^alpha` by the
//! quadratic with curvature `-(log p_bar)^2`, valid because
//! `p_bar^alpha <= 1` on `alpha >= 0`. The resulting quadratic in `alpha_t`
//! has vertex `alpha_bar_t + A_t / C_t`; clamping it to [0, 1] maximizes the
//! surrogate over the feasible interval.

use super::{check_resp, Prepared, Responsibilities};
use crate::error::{Error, Result};
use crate::types::{Dataset, MoEParams};

/// Result of one dampening update.
#[derive(Debug, Clone, PartialEq)]
pub struct DampeningUpdate {
    pub dampening: Vec<f64>,
    /// 0-based stages whose curvature sum was zero; left unchanged.
    pub unidentified: Vec<usize>,
}

/// Accumulates `A_t` and `C_t` for every stage.
fn slopes(prep: &Prepared, resp: &Responsibilities, params: &MoEParams) -> (Vec<f64>, Vec<f64>) {
    let n = prep.data.n_candidates();
    let tables = prep.tables(params);
    let mut a_sum = vec![0.0; n];
    let mut c_sum = vec![0.0; n];
    for (i, b) in prep.data.ballots().iter().enumerate() {
        let pos = prep.pos(i);
        let z = &resp.rows()[i];
        for (k, tab) in tables.iter().enumerate() {
            let zk = z[k];
            if zk == 0.0 {
                continue;
            }
            for (t, &c) in b.ranking().iter().enumerate().skip(1) {
                if t + 1 >= n {
                    break;
                }
                let stage = tab.stage_pow(t);
                let (mut s, mut s_log, mut s_log2) = (0.0, 0.0, 0.0);
                for j in 0..n {
                    if pos[j] >= t {
                        let lp = tab.log_p[j];
                        s += stage[j];
                        s_log += lp * stage[j];
                        s_log2 += lp * lp;
                    }
                }
                a_sum[t] += zk * (tab.log_p[c] - s_log / s);
                c_sum[t] += zk * s_log2 / s;
            }
        }
    }
    (a_sum, c_sum)
}

pub(crate) fn step_prepared(
    prep: &Prepared,
    resp: &Responsibilities,
    params: &MoEParams,
) -> DampeningUpdate {
    let n = params.dampening.len();
    let (a_sum, c_sum) = slopes(prep, resp, params);
    let mut dampening = params.dampening.clone();
    let mut unidentified = Vec::new();
    for t in 1..n.saturating_sub(1) {
        if c_sum[t] > 0.0 {
            dampening[t] = (dampening[t] + a_sum[t] / c_sum[t]).clamp(0.0, 1.0);
        } else {
            unidentified.push(t);
        }
    }
    DampeningUpdate {
        dampening,
        unidentified,
    }
}

/// One MM update of the free dampening parameters (stages 2..N-1) with
/// support held fixed.
pub fn m_step_dampening(
    data: &Dataset,
    resp: &Responsibilities,
    params: &MoEParams,
) -> Result<DampeningUpdate> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    Ok(step_prepared(&Prepared::new(data), resp, params))
}

/// The quadratic minorizer of `Q` in the dampening parameters, built at
/// `params` and evaluated at `dampening`.
pub fn dampening_surrogate(
    data: &Dataset,
    resp: &Responsibilities,
    params: &MoEParams,
    dampening: &[f64],
) -> Result<f64> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    let n = data.n_candidates();
    if dampening.len() != n {
        return Err(Error::Dimension("dampening has the wrong length".into()));
    }
    let prep = Prepared::new(data);
    let tables = prep.tables(params);
    let lg = prep.log_gating(params);
    let mut total = 0.0;
    for (i, b) in data.ballots().iter().enumerate() {
        let pos = prep.pos(i);
        for (k, tab) in tables.iter().enumerate() {
            let mut term = lg[i][k];
            for (t, &c) in b.ranking().iter().enumerate() {
                let d = dampening[t] - params.dampening[t];
                let stage = tab.stage_pow(t);
                let (mut s, mut bound) = (0.0, 0.0);
                for j in 0..n {
                    if pos[j] >= t {
                        let lp = tab.log_p[j];
                        s += stage[j];
                        bound += lp * stage[j] * d + 0.5 * d * d * lp * lp;
                    }
                }
                term += dampening[t] * tab.log_p[c] - s.ln() - bound / s;
            }
            total += resp.rows()[i][k] * term;
        }
    }
    Ok(total)
}
