use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::estep::e_step_prepared;
use super::{aitken_converged, dampening, support, GatingMm, Prepared, Responsibilities};
use super::{standard_errors, StandardErrors};
use crate::benter::{default_dampening, plackett_luce_dampening};
use crate::error::{Error, Result};
use crate::gating::GatingParams;
use crate::types::{Dataset, MoEParams};

/// Fitting schedule and stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// EMM iterations of the plain mixture (intercept-only gating) per start.
    pub mixture_warmup_iters: usize,
    /// Gating MM steps against the warm-up responsibilities.
    pub gating_warmup_steps: usize,
    pub max_emm_iters: usize,
    pub aitken_tol: f64,
    /// MM updates per conditional step in each EMM cycle.
    pub mm_inner_iters: usize,
    pub n_random_starts: usize,
    pub seed: u64,
    /// Holds every dampening parameter at 1 (Plackett–Luce experts).
    pub fix_plackett_luce: bool,
    pub compute_standard_errors: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mixture_warmup_iters: 500,
            gating_warmup_steps: 1000,
            max_emm_iters: 2000,
            aitken_tol: 1e-6,
            mm_inner_iters: 1,
            n_random_starts: 5,
            seed: 0,
            fix_plackett_luce: false,
            compute_standard_errors: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.aitken_tol > 0.0) {
            return Err(Error::InvalidConfig("aitken_tol must be positive".into()));
        }
        if self.n_random_starts == 0 {
            return Err(Error::InvalidConfig("n_random_starts must be at least 1".into()));
        }
        if self.mm_inner_iters == 0 {
            return Err(Error::InvalidConfig("mm_inner_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// What happened to one random start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: usize,
    pub final_loglik: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters in canonical component order.
    pub params: MoEParams,
    pub responsibilities: Responsibilities,
    /// Observed log-likelihood at every iteration of the winning start,
    /// warm-up included.
    pub loglik_trace: Vec<f64>,
    /// Index into `loglik_trace` where the full EMM loop begins.
    pub main_loop_start: usize,
    pub final_loglik: f64,
    pub converged: bool,
    /// Full EMM iterations used by the winning start.
    pub iterations: usize,
    pub standard_errors: Option<StandardErrors>,
    pub marginal_mixing: Vec<f64>,
    pub starts: Vec<StartOutcome>,
    pub best_start: usize,
    /// 0-based stages whose dampening was left unchanged for lack of
    /// curvature at the final update.
    pub unidentified_dampening: Vec<usize>,
}

struct RunOutcome {
    params: MoEParams,
    resp: Responsibilities,
    trace: Vec<f64>,
    main_loop_start: usize,
    loglik: f64,
    converged: bool,
    iterations: usize,
    unidentified: Vec<usize>,
}

struct Engine<'a> {
    prep: Prepared<'a>,
    gating_mm: Option<GatingMm>,
    config: &'a FitConfig,
}

impl<'a> Engine<'a> {
    fn new(data: &'a Dataset, k: usize, config: &'a FitConfig) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::InvalidParams("need at least one component".into()));
        }
        if data.n_candidates() < 2 {
            return Err(Error::InvalidParams("need at least two candidates".into()));
        }
        let gating_mm = if k > 1 { Some(GatingMm::new(data)?) } else { None };
        Ok(Engine {
            prep: Prepared::new(data),
            gating_mm,
            config,
        })
    }

    fn start_dampening(&self) -> Vec<f64> {
        let n = self.prep.data.n_candidates();
        if self.config.fix_plackett_luce {
            plackett_luce_dampening(n).expect("n >= 2")
        } else {
            default_dampening(n)
        }
    }

    /// Closed-form mixing-proportion update for intercept-only gating.
    fn intercept_gating(&self, resp: &Responsibilities) -> Result<GatingParams> {
        let means = resp.column_means();
        if let Some(k) = means.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::DegenerateComponent { component: k });
        }
        let width = self.prep.data.n_covariates() + 1;
        let rows = means
            .iter()
            .map(|m| {
                let mut r = vec![0.0; width];
                r[0] = (m / means[0]).ln();
                r
            })
            .collect();
        GatingParams::new(rows)
    }

    /// Conditional M steps: support, then dampening, then gating.
    fn m_step(
        &self,
        resp: &Responsibilities,
        params: &MoEParams,
        warmup: bool,
    ) -> Result<(MoEParams, Vec<usize>)> {
        let mut next = params.clone();
        for _ in 0..self.config.mm_inner_iters {
            next.support = support::step_prepared(&self.prep, resp, &next)?;
        }
        let mut unidentified = Vec::new();
        if !self.config.fix_plackett_luce {
            for _ in 0..self.config.mm_inner_iters {
                let up = dampening::step_prepared(&self.prep, resp, &next);
                next.dampening = up.dampening;
                unidentified = up.unidentified;
            }
        }
        if warmup {
            next.gating = self.intercept_gating(resp)?;
        } else if let Some(mm) = &self.gating_mm {
            for _ in 0..self.config.mm_inner_iters {
                next.gating = mm.step(self.prep.data, resp, &next.gating);
            }
        }
        Ok((next, unidentified))
    }

    fn e_step(&self, params: &MoEParams) -> Result<(Responsibilities, f64)> {
        let (z, ll) = e_step_prepared(&self.prep, params);
        if !ll.is_finite() {
            return Err(Error::InvalidParams("log-likelihood is not finite".into()));
        }
        Ok((z, ll))
    }

    /// Full EMM loop from `params` until Aitken fires or the budget runs out.
    fn main_loop(&self, mut params: MoEParams, mut trace: Vec<f64>) -> Result<RunOutcome> {
        let main_loop_start = trace.len();
        let mut iterations = 0;
        let mut unidentified = Vec::new();
        loop {
            let (resp, ll) = self.e_step(&params)?;
            trace.push(ll);
            let hist = &trace[main_loop_start..];
            let converged = hist.len() >= 3 && aitken_converged(hist, self.config.aitken_tol)?;
            if converged || iterations >= self.config.max_emm_iters {
                return Ok(RunOutcome {
                    params,
                    resp,
                    trace,
                    main_loop_start,
                    loglik: ll,
                    converged,
                    iterations,
                    unidentified,
                });
            }
            let (next, unid) = self.m_step(&resp, &params, false)?;
            params = next;
            unidentified = unid;
            iterations += 1;
        }
    }

    fn random_start(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<RunOutcome> {
        let data = self.prep.data;
        let n = data.n_candidates();
        let z0: Vec<Vec<f64>> = (0..data.n_voters())
            .map(|_| {
                let mut row: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
                row
            })
            .collect();
        let z0 = Responsibilities::from_rows_unchecked(z0);
        let seed_params = MoEParams {
            support: vec![vec![1.0 / n as f64; n]; k],
            dampening: self.start_dampening(),
            gating: GatingParams::zeros(k, data.n_covariates() + 1),
        };
        let (mut params, _) = self.m_step(&z0, &seed_params, true)?;

        let mut trace = Vec::new();
        for _ in 0..self.config.mixture_warmup_iters {
            let (resp, ll) = self.e_step(&params)?;
            trace.push(ll);
            if trace.len() >= 3 && aitken_converged(&trace, self.config.aitken_tol)? {
                break;
            }
            params = self.m_step(&resp, &params, true)?.0;
        }

        if let Some(mm) = &self.gating_mm {
            if self.config.gating_warmup_steps > 0 && data.n_covariates() > 0 {
                let (resp, ll) = self.e_step(&params)?;
                trace.push(ll);
                for _ in 0..self.config.gating_warmup_steps {
                    params.gating = mm.step(data, &resp, &params.gating);
                }
            }
        }
        self.main_loop(params, trace)
    }
}

/// Canonical component order: descending marginal mixing, then descending
/// first support coordinate.
fn canonical_order(marginal: &[f64], support: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..marginal.len()).collect();
    order.sort_by(|&a, &b| {
        marginal[b]
            .total_cmp(&marginal[a])
            .then(support[b][0].total_cmp(&support[a][0]))
            .then(a.cmp(&b))
    });
    order
}

fn finish(
    data: &Dataset,
    config: &FitConfig,
    run: RunOutcome,
    starts: Vec<StartOutcome>,
    best_start: usize,
) -> Result<FitResult> {
    let marginal = run.resp.column_means();
    let order = canonical_order(&marginal, &run.params.support);
    let params = MoEParams {
        support: order.iter().map(|&k| run.params.support[k].clone()).collect(),
        dampening: run.params.dampening.clone(),
        gating: run.params.gating.permuted(&order)?,
    };
    let responsibilities = run.resp.permuted(&order);
    let marginal_mixing = order.iter().map(|&k| marginal[k]).collect();
    let standard_errors = if config.compute_standard_errors {
        Some(standard_errors(data, &params, config.fix_plackett_luce)?)
    } else {
        None
    };
    Ok(FitResult {
        params,
        responsibilities,
        loglik_trace: run.trace,
        main_loop_start: run.main_loop_start,
        final_loglik: run.loglik,
        converged: run.converged,
        iterations: run.iterations,
        standard_errors,
        marginal_mixing,
        starts,
        best_start,
        unidentified_dampening: run.unidentified,
    })
}

/// Fits a K-component mixture of experts from `n_random_starts` random
/// starts and keeps the one with the highest final log-likelihood.
///
/// Each start runs the plain-mixture warm-up, the gating warm-up and then
/// the full EMM loop. Starts that hit an empty component are recorded as
/// failed; the fit fails only if every start does.
pub fn fit(data: &Dataset, k: usize, config: &FitConfig) -> Result<FitResult> {
    let engine = Engine::new(data, k, config)?;
    // A single component has no labels to randomize.
    let n_starts = if k == 1 { 1 } else { config.n_random_starts };
    let mut best: Option<(usize, RunOutcome)> = None;
    let mut starts = Vec::with_capacity(n_starts);
    let mut last_err = None;
    for s in 0..n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(s as u64);
        match engine.random_start(k, &mut rng) {
            Ok(run) => {
                starts.push(StartOutcome {
                    start: s,
                    final_loglik: Some(run.loglik),
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, b)| run.loglik > b.loglik) {
                    best = Some((s, run));
                }
            }
            Err(e @ Error::DegenerateComponent { .. }) => {
                starts.push(StartOutcome {
                    start: s,
                    final_loglik: None,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((s, run)) => finish(data, config, run, starts, s),
        None => Err(Error::AllStartsFailed {
            starts: n_starts,
            last: Box::new(last_err.expect("at least one start ran")),
        }),
    }
}

/// Runs the full EMM loop from supplied parameters, skipping random starts
/// and warm-up.
pub fn fit_from(data: &Dataset, init: &MoEParams, config: &FitConfig) -> Result<FitResult> {
    init.check_against(data)?;
    let engine = Engine::new(data, init.n_components(), config)?;
    let run = engine.main_loop(init.clone(), Vec::new())?;
    let starts = vec![StartOutcome {
        start: 0,
        final_loglik: Some(run.loglik),
        error: None,
    }];
    finish(data, config, run, starts, 0)
}
