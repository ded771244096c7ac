//! Benter rank-data density and its Plackett–Luce special case.
//!
//! At stage `t` the next preference is drawn from the candidates not yet
//! ranked (`R_t`, which includes candidates the voter never ranked) with
//! probability proportional to `p_j^{alpha_t}`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gating::log_sum_exp;
use crate::types::{Ballot, Dataset, MoEParams};

/// Support entries are clamped to this value before any log or power.
pub const SUPPORT_FLOOR: f64 = 1e-10;

/// `p^a` with `p^0 = 1` for every `p`.
#[inline]
pub(crate) fn damp_pow(p: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else if a == 1.0 {
        p
    } else {
        p.powf(a)
    }
}

#[inline]
pub(crate) fn floored(p: f64) -> f64 {
    p.max(SUPPORT_FLOOR)
}

/// Rank position of every candidate; `usize::MAX` when unranked.
/// Candidate `j` is in `R_t` iff `positions[j] >= t`.
pub(crate) fn positions(ballot: &Ballot, n_candidates: usize) -> Vec<usize> {
    let mut pos = vec![usize::MAX; n_candidates];
    for (t, &c) in ballot.ranking().iter().enumerate() {
        pos[c] = t;
    }
    pos
}

/// Per-component lookup tables: floored support, its logs, and
/// `p_j^{alpha_t}` for every stage.
#[derive(Debug, Clone)]
pub(crate) struct ComponentTable {
    pub p: Vec<f64>,
    pub log_p: Vec<f64>,
    /// Row-major `[t * n + j]`.
    pub pow: Vec<f64>,
    pub n: usize,
}

impl ComponentTable {
    pub fn new(support: &[f64], dampening: &[f64]) -> Self {
        let n = support.len();
        let p: Vec<f64> = support.iter().map(|&v| floored(v)).collect();
        let log_p = p.iter().map(|v| v.ln()).collect();
        let mut pow = Vec::with_capacity(n * n);
        for &a in dampening {
            pow.extend(p.iter().map(|&v| damp_pow(v, a)));
        }
        ComponentTable { p, log_p, pow, n }
    }

    #[inline]
    pub fn stage_pow(&self, t: usize) -> &[f64] {
        &self.pow[t * self.n..(t + 1) * self.n]
    }

    /// `sum_{s in R_t} p_s^{alpha_t}`.
    #[inline]
    pub fn stage_sum(&self, pos: &[usize], t: usize) -> f64 {
        self.stage_pow(t)
            .iter()
            .zip(pos)
            .filter(|(_, &q)| q >= t)
            .map(|(w, _)| *w)
            .sum()
    }

    pub fn log_prob(&self, ranking: &[usize], pos: &[usize], dampening: &[f64]) -> f64 {
        ranking
            .iter()
            .enumerate()
            .map(|(t, &c)| dampening[t] * self.log_p[c] - self.stage_sum(pos, t).ln())
            .sum()
    }
}

fn check_shapes(support: &[f64], dampening: &[f64]) -> Result<()> {
    if support.len() != dampening.len() {
        return Err(Error::Dimension(format!(
            "support has {} entries, dampening {}",
            support.len(),
            dampening.len()
        )));
    }
    Ok(())
}

/// Log probability of a (possibly partial) ballot under one Benter density.
pub fn log_prob_ballot(ballot: &Ballot, support: &[f64], dampening: &[f64]) -> Result<f64> {
    check_shapes(support, dampening)?;
    let n = support.len();
    if ballot.ranking().iter().any(|&c| c >= n) {
        return Err(Error::Dimension("ballot references an unknown candidate".into()));
    }
    let table = ComponentTable::new(support, dampening);
    Ok(table.log_prob(ballot.ranking(), &positions(ballot, n), dampening))
}

/// The Plackett–Luce dampening vector: all ones.
pub fn plackett_luce_dampening(n_candidates: usize) -> Result<Vec<f64>> {
    if n_candidates < 2 {
        return Err(Error::InvalidParams(format!(
            "Plackett-Luce needs at least 2 candidates, got {n_candidates}"
        )));
    }
    Ok(vec![1.0; n_candidates])
}

/// The default Benter starting dampening: ones with the last stage at zero.
pub fn default_dampening(n_candidates: usize) -> Vec<f64> {
    let mut a = vec![1.0; n_candidates];
    if let Some(last) = a.last_mut() {
        *last = 0.0;
    }
    a
}

/// Draws a ballot of length `n` stage by stage.
pub fn sample_ballot<R: Rng + ?Sized>(
    support: &[f64],
    dampening: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Ballot> {
    check_shapes(support, dampening)?;
    let n_candidates = support.len();
    if n == 0 || n > n_candidates {
        return Err(Error::InvalidParams(format!(
            "ballot length {n} outside 1..={n_candidates}"
        )));
    }
    let p: Vec<f64> = support.iter().map(|&v| floored(v)).collect();
    let mut remaining: Vec<usize> = (0..n_candidates).collect();
    let mut ranking = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n_candidates);
    for &a in dampening.iter().take(n) {
        weights.clear();
        weights.extend(remaining.iter().map(|&j| damp_pow(p[j], a)));
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (idx, w) in weights.iter().enumerate() {
            if u < *w {
                pick = idx;
                break;
            }
            u -= w;
        }
        ranking.push(remaining.remove(pick));
    }
    Ballot::new(ranking, n_candidates)
}

/// M x K matrix of `log P(x_i | p_k, alpha)`.
pub(crate) fn component_log_probs(data: &Dataset, params: &MoEParams) -> Vec<Vec<f64>> {
    let n = data.n_candidates();
    let tables: Vec<ComponentTable> = params
        .support
        .iter()
        .map(|s| ComponentTable::new(s, &params.dampening))
        .collect();
    data.ballots()
        .iter()
        .map(|b| {
            let pos = positions(b, n);
            tables
                .iter()
                .map(|tab| tab.log_prob(b.ranking(), &pos, &params.dampening))
                .collect()
        })
        .collect()
}

/// Observed-data log-likelihood of the mixture of experts.
pub fn log_likelihood(data: &Dataset, params: &MoEParams) -> Result<f64> {
    params.check_against(data)?;
    let lp = component_log_probs(data, params);
    let mut total = 0.0;
    let mut buf = Vec::with_capacity(params.n_components());
    for (i, row) in lp.iter().enumerate() {
        let log_pi = params.gating.log_probs(data.design_row(i))?;
        buf.clear();
        buf.extend(row.iter().zip(&log_pi).map(|(a, b)| a + b));
        total += log_sum_exp(&buf);
    }
    Ok(total)
}
