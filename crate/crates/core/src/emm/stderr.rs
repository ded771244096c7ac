//! Approximate standard errors from the numerically differentiated observed
//! information.
//!
//! Support rows are charted by log-ratios against each row's largest entry,
//! dampening and gating coefficients enter directly. Coordinates sitting on
//! the boundary of the parameter space (support at the floor, dampening at 0
//! or 1) are held fixed and reported as unavailable; so is any coordinate
//! along which the negated Hessian fails to be positive definite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Prepared;
use crate::error::Result;
use crate::types::{Dataset, MoEParams};

/// Support entries at or below this are on the boundary.
const SUPPORT_BOUNDARY: f64 = 1e-8;
/// Dampening within this of 0 or 1 is on the boundary.
const DAMPENING_BOUNDARY: f64 = 1e-6;
/// Finite-difference step in chart coordinates.
const STEP: f64 = 1e-4;

/// Standard errors shaped like the parameters; `None` where unavailable or
/// where the parameter is fixed by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub support: Vec<Vec<Option<f64>>>,
    pub dampening: Vec<Option<f64>>,
    pub gating: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// log(p_kj / p_k,ref)
    Support { k: usize, j: usize },
    Dampening { t: usize },
    Gating { k: usize, l: usize },
}

fn perturbed(base: &MoEParams, coords: &[Coord], delta: &[f64]) -> MoEParams {
    let mut out = base.clone();
    let mut touched = vec![false; base.n_components()];
    for (c, &d) in coords.iter().zip(delta) {
        if d == 0.0 {
            continue;
        }
        match *c {
            Coord::Support { k, j } => {
                out.support[k][j] *= d.exp();
                touched[k] = true;
            }
            Coord::Dampening { t } => out.dampening[t] += d,
            Coord::Gating { k, l } => {
                let mut row = out.gating.row(k).to_vec();
                row[l] += d;
                out.gating.set_row(k, row);
            }
        }
    }
    for (k, row) in out.support.iter_mut().enumerate() {
        if touched[k] {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

fn hessian(prep: &Prepared, base: &MoEParams, coords: &[Coord]) -> DMatrix<f64> {
    let n = coords.len();
    let f0 = prep.loglik(base);
    let mut delta = vec![0.0; n];
    let mut eval = |pairs: &[(usize, f64)]| {
        delta.iter_mut().for_each(|d| *d = 0.0);
        for &(i, v) in pairs {
            delta[i] += v;
        }
        prep.loglik(&perturbed(base, coords, &delta))
    };
    let h = STEP;
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fp = eval(&[(i, h)]);
        let fm = eval(&[(i, -h)]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let pp = eval(&[(i, h), (j, h)]);
            let pm = eval(&[(i, h), (j, -h)]);
            let mp = eval(&[(i, -h), (j, h)]);
            let mm = eval(&[(i, -h), (j, -h)]);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Inverts the observed information, dropping coordinates along
/// non-positive-curvature directions until the rest is positive definite.
/// Returns the kept coordinate indices and their covariance.
fn invert_information(info: &DMatrix<f64>) -> (Vec<usize>, DMatrix<f64>) {
    let mut keep: Vec<usize> = (0..info.nrows()).collect();
    loop {
        if keep.is_empty() {
            return (keep, DMatrix::zeros(0, 0));
        }
        let sub = info.select_rows(&keep).select_columns(&keep);
        let eig = sub.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if lmin > 1e-10 * lmax.max(1e-300) {
            if let Some(chol) = sub.cholesky() {
                return (keep, chol.inverse());
            }
        }
        let v = eig.eigenvectors.column(imin);
        let worst = (0..keep.len())
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .expect("non-empty");
        keep.remove(worst);
    }
}

/// Standard errors for every free parameter at `params`.
pub fn standard_errors(
    data: &Dataset,
    params: &MoEParams,
    plackett_luce: bool,
) -> Result<StandardErrors> {
    params.check_against(data)?;
    let prep = Prepared::new(data);
    let n = params.n_candidates();
    let k_count = params.n_components();
    let cols = params.gating.n_columns();

    let refs: Vec<usize> = params
        .support
        .iter()
        .map(|row| {
            (0..n)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .expect("n >= 2")
        })
        .collect();

    let mut coords = Vec::new();
    for (k, row) in params.support.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if j != refs[k] && p > SUPPORT_BOUNDARY {
                coords.push(Coord::Support { k, j });
            }
        }
    }
    if !plackett_luce {
        for t in 1..n.saturating_sub(1) {
            let a = params.dampening[t];
            if a > DAMPENING_BOUNDARY && a < 1.0 - DAMPENING_BOUNDARY {
                coords.push(Coord::Dampening { t });
            }
        }
    }
    for k in 1..k_count {
        for l in 0..cols {
            coords.push(Coord::Gating { k, l });
        }
    }

    let hess = hessian(&prep, params, &coords);
    let (keep, cov) = invert_information(&(-hess));
    let kept: Vec<Coord> = keep.iter().map(|&i| coords[i]).collect();

    let mut out = StandardErrors {
        support: vec![vec![None; n]; k_count],
        dampening: vec![None; n],
        gating: vec![vec![None; cols]; k_count],
    };
    for (idx, c) in kept.iter().enumerate() {
        let se = cov[(idx, idx)].max(0.0).sqrt();
        match *c {
            Coord::Dampening { t } => out.dampening[t] = Some(se),
            Coord::Gating { k, l } => out.gating[k][l] = Some(se),
            Coord::Support { .. } => {}
        }
    }
    // Delta method: dp_j / d eta_m = p_j (1{j = m} - p_m).
    for k in 0..k_count {
        let local: Vec<(usize, usize)> = kept
            .iter()
            .enumerate()
            .filter_map(|(idx, c)| match *c {
                Coord::Support { k: kk, j } if kk == k => Some((idx, j)),
                _ => None,
            })
            .collect();
        if local.is_empty() {
            continue;
        }
        let p = &params.support[k];
        for j in 0..n {
            if p[j] <= SUPPORT_BOUNDARY {
                continue;
            }
            let grad: Vec<f64> = local
                .iter()
                .map(|&(_, m)| p[j] * (f64::from(u8::from(j == m)) - p[m]))
                .collect();
            let mut var = 0.0;
            for (a, &(ia, _)) in local.iter().enumerate() {
                for (b, &(ib, _)) in local.iter().enumerate() {
                    var += grad[a] * grad[b] * cov[(ia, ib)];
                }
            }
            out.support[k][j] = Some(var.max(0.0).sqrt());
        }
    }
    Ok(out)
}
