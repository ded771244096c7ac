use super::{check_resp, Prepared, Responsibilities};
use crate::error::Result;
use crate::gating::log_sum_exp;
use crate::types::{Dataset, MoEParams};

/// Posterior membership probabilities given the current parameters.
pub fn e_step(data: &Dataset, params: &MoEParams) -> Result<Responsibilities> {
    params.check_against(data)?;
    Ok(e_step_prepared(&Prepared::new(data), params).0)
}

/// E step plus the observed log-likelihood, which falls out of the same sums.
pub(crate) fn e_step_prepared(prep: &Prepared, params: &MoEParams) -> (Responsibilities, f64) {
    let lp = prep.log_probs(params);
    let lg = prep.log_gating(params);
    let mut loglik = 0.0;
    let z = lp
        .into_iter()
        .zip(lg)
        .map(|(a, b)| {
            let mut joint: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lse = log_sum_exp(&joint);
            loglik += lse;
            for v in joint.iter_mut() {
                *v = (*v - lse).exp();
            }
            // Re-normalize away the rounding left by exp.
            let s: f64 = joint.iter().sum();
            joint.iter_mut().for_each(|v| *v /= s);
            joint
        })
        .collect();
    (Responsibilities::from_rows_unchecked(z), loglik)
}

/// Expected complete-data log-likelihood `Q`.
pub fn q_function(data: &Dataset, resp: &Responsibilities, params: &MoEParams) -> Result<f64> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    Ok(q_prepared(&Prepared::new(data), resp, params))
}

pub(crate) fn q_prepared(prep: &Prepared, resp: &Responsibilities, params: &MoEParams) -> f64 {
    let lp = prep.log_probs(params);
    let lg = prep.log_gating(params);
    resp.rows()
        .iter()
        .zip(lp.iter().zip(&lg))
        .map(|(z, (a, b))| {
            z.iter()
                .zip(a.iter().zip(b))
                .map(|(zk, (x, y))| zk * (x + y))
                .sum::<f64>()
        })
        .sum()
}
