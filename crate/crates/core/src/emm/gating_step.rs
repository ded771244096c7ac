//! Gating-coefficient update.
//!
//! The gating part of `Q` is a multinomial-logistic log-likelihood with
//! soft targets. Its Hessian in any single `beta_k` is bounded below by
//! `B = -1/4 sum_i w_i w_i^T`, so the quadratic with curvature `B` minorizes
//! it and the update `beta_k - B^{-1} g_k` never decreases `Q`. `B` depends
//! only on the covariates and is factorized once per fit.

use nalgebra::{DMatrix, DVector};

use super::{check_resp, Prepared, Responsibilities};
use crate::error::{Error, Result};
use crate::gating::{dot, GatingParams};
use crate::types::{Dataset, MoEParams};

/// Relative eigenvalue threshold below which `sum w w^T` is treated as singular.
const SINGULAR_RTOL: f64 = 1e-12;

/// Factorized curvature bound, reusable across iterations.
#[derive(Debug, Clone)]
pub struct GatingMm {
    /// Cholesky factor of `-B = 1/4 sum_i w_i w_i^T`.
    neg_bound: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    neg_bound_matrix: DMatrix<f64>,
}

impl GatingMm {
    pub fn new(data: &Dataset) -> Result<Self> {
        let p = data.n_covariates() + 1;
        let mut m = DMatrix::<f64>::zeros(p, p);
        for w in data.design() {
            for a in 0..p {
                for b in 0..p {
                    m[(a, b)] += 0.25 * w[a] * w[b];
                }
            }
        }
        let eig = m.clone().symmetric_eigen();
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let singular = || Error::SingularGating {
            direction: eig.eigenvectors.column(imin).iter().cloned().collect(),
        };
        if !(lmin > SINGULAR_RTOL * lmax) {
            return Err(singular());
        }
        let chol = m.clone().cholesky().ok_or_else(singular)?;
        Ok(GatingMm {
            neg_bound: chol,
            neg_bound_matrix: m,
        })
    }

    /// `-B`, for inspection and tests.
    pub fn neg_bound(&self) -> &DMatrix<f64> {
        &self.neg_bound_matrix
    }

    /// Gradient of the gating part of `Q` with respect to `beta_k`.
    fn gradient(data: &Dataset, resp: &Responsibilities, gating: &GatingParams, k: usize) -> DVector<f64> {
        let p = gating.n_columns();
        let mut g = DVector::<f64>::zeros(p);
        for (w, z) in data.design().iter().zip(resp.rows()) {
            let pi = gating.probs(w).expect("width checked");
            let r = z[k] - pi[k];
            for l in 0..p {
                g[l] += r * w[l];
            }
        }
        g
    }

    /// One sweep of conditional updates over `beta_2..beta_K`, each using the
    /// coefficients already updated in this sweep.
    pub fn step(&self, data: &Dataset, resp: &Responsibilities, gating: &GatingParams) -> GatingParams {
        let mut out = gating.clone();
        for k in 1..gating.n_components() {
            let g = Self::gradient(data, resp, &out, k);
            let delta = self.neg_bound.solve(&g);
            let row: Vec<f64> = out.row(k).iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
            out.set_row(k, row);
        }
        out
    }
}

/// One sweep of MM updates of the gating coefficients.
pub fn m_step_gating(
    data: &Dataset,
    resp: &Responsibilities,
    gating: &GatingParams,
) -> Result<GatingParams> {
    check_resp(data, resp, gating.n_components())?;
    if gating.n_columns() != data.n_covariates() + 1 {
        return Err(Error::Dimension(format!(
            "gating has {} columns, dataset needs {}",
            gating.n_columns(),
            data.n_covariates() + 1
        )));
    }
    Ok(GatingMm::new(data)?.step(data, resp, gating))
}

/// The quadratic minorizer of `Q` in `beta_k` alone, built at `params` and
/// evaluated at `beta_k`. Other rows and the expert parameters stay fixed.
pub fn gating_surrogate(
    data: &Dataset,
    resp: &Responsibilities,
    params: &MoEParams,
    k: usize,
    beta_k: &[f64],
) -> Result<f64> {
    params.check_against(data)?;
    check_resp(data, resp, params.n_components())?;
    if k == 0 || k >= params.n_components() || beta_k.len() != params.gating.n_columns() {
        return Err(Error::Dimension("bad gating row for surrogate".into()));
    }
    let q0 = super::estep::q_prepared(&Prepared::new(data), resp, params);
    let g = GatingMm::gradient(data, resp, &params.gating, k);
    let d: Vec<f64> = beta_k.iter().zip(params.gating.row(k)).map(|(a, b)| a - b).collect();
    let mut quad = 0.0;
    for w in data.design() {
        let s = dot(w, &d);
        quad += s * s;
    }
    let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
    Ok(q0 + lin - 0.125 * quad)
}
