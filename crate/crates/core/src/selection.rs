//! BIC and the backward-elimination search over covariates.

use serde::{Deserialize, Serialize};

use crate::emm::{fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::types::Dataset;

/// `2 loglik - n_params ln(M)`; larger is better.
pub fn bic(loglik: f64, n_params: usize, n_voters: usize) -> f64 {
    2.0 * loglik - n_params as f64 * (n_voters as f64).ln()
}

/// Free parameters: `K(N-1)` support, `N-2` dampening unless Plackett–Luce,
/// and `(K-1)(L+1)` gating coefficients.
pub fn count_free_params(k: usize, n: usize, l_sub: usize, plackett_luce: bool) -> usize {
    let dampening = if plackett_luce { 0 } else { n.saturating_sub(2) };
    k * (n - 1) + dampening + (k - 1) * (l_sub + 1)
}

/// A covariate as seen by the search: one or more design columns that enter
/// or leave together (dummy-coded categoricals form one group).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateGroup {
    pub name: String,
    /// 0-based design columns, intercept excluded.
    pub columns: Vec<usize>,
}

impl CovariateGroup {
    /// One group per design column.
    pub fn singletons(data: &Dataset) -> Vec<CovariateGroup> {
        data.covariate_names()
            .iter()
            .enumerate()
            .map(|(c, name)| CovariateGroup {
                name: name.clone(),
                columns: vec![c],
            })
            .collect()
    }
}

/// One fitted candidate model.
#[derive(Debug, Clone)]
pub struct ModelScore {
    pub k: usize,
    /// Names of the covariate groups included.
    pub covariates: Vec<String>,
    /// `-inf` when the fit failed.
    pub bic: f64,
    pub final_loglik: f64,
    pub n_params: usize,
    pub n_voters: usize,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

fn score_subset(
    data: &Dataset,
    groups: &[CovariateGroup],
    subset: &[usize],
    k: usize,
    config: &FitConfig,
) -> Result<ModelScore> {
    let mut columns: Vec<usize> = subset
        .iter()
        .flat_map(|&g| groups[g].columns.iter().copied())
        .collect();
    columns.sort_unstable();
    let sub = data.select_covariates(&columns)?;
    let n_params = count_free_params(
        k,
        data.n_candidates(),
        columns.len(),
        config.fix_plackett_luce,
    );
    let names = subset.iter().map(|&g| groups[g].name.clone()).collect();
    Ok(match fit(&sub, k, config) {
        Ok(r) => ModelScore {
            k,
            covariates: names,
            bic: bic(r.final_loglik, n_params, data.n_voters()),
            final_loglik: r.final_loglik,
            n_params,
            n_voters: data.n_voters(),
            fit: Some(r),
            error: None,
        },
        Err(e) => ModelScore {
            k,
            covariates: names,
            bic: f64::NEG_INFINITY,
            final_loglik: f64::NEG_INFINITY,
            n_params,
            n_voters: data.n_voters(),
            fit: None,
            error: Some(e.to_string()),
        },
    })
}

/// Backward elimination over covariate groups.
///
/// Fits every K in `k_range` with all groups, then repeatedly takes the
/// subset of the best model found in the previous round and fits every K
/// with each single group removed, until subsets of one group have been
/// fitted. Returns every fitted model, best BIC first. Failed fits are kept
/// with a BIC of `-inf`.
pub fn backward_eliminate(
    data: &Dataset,
    groups: &[CovariateGroup],
    k_range: &[usize],
    config: &FitConfig,
) -> Result<Vec<ModelScore>> {
    if k_range.is_empty() {
        return Err(Error::InvalidConfig("empty K range".into()));
    }
    if groups.is_empty() {
        return Err(Error::InvalidConfig("backward elimination needs at least one covariate".into()));
    }
    let mut all = Vec::new();
    let mut current: Vec<usize> = (0..groups.len()).collect();
    let mut round: Vec<ModelScore> = Vec::new();
    for &k in k_range {
        round.push(score_subset(data, groups, &current, k, config)?);
    }
    loop {
        let best = round
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.bic.total_cmp(&b.1.bic).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("round is non-empty");
        let best_names = round[best].covariates.clone();
        all.append(&mut round);
        if best_names.len() <= 1 {
            break;
        }
        current = best_names
            .iter()
            .map(|n| groups.iter().position(|g| &g.name == n).expect("known group"))
            .collect();
        for drop in 0..current.len() {
            let subset: Vec<usize> = current
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, &g)| g)
                .collect();
            for &k in k_range {
                round.push(score_subset(data, groups, &subset, k, config)?);
            }
        }
    }
    all.sort_by(|a, b| b.bic.total_cmp(&a.bic));
    Ok(all)
}
