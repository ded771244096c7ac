mod common;

use common::{align, recovery_spec};
use rankmoe::emm::{fit, fit_from, FitConfig};
use rankmoe::io::{build_design, parse_ballots, parse_covariates, write_ballots, write_covariates, BallotTable};
use rankmoe::selection::{backward_eliminate, bic, CovariateGroup};
use rankmoe::synth::{generate, CovariateSpec, GeneratorSpec};
use rankmoe::{log_likelihood, GatingParams, MoEParams};

fn quick(seed: u64) -> FitConfig {
    FitConfig {
        mixture_warmup_iters: 30,
        gating_warmup_steps: 30,
        max_emm_iters: 300,
        n_random_starts: 2,
        compute_standard_errors: false,
        seed,
        ..FitConfig::default()
    }
}

#[test]
fn every_iteration_ascends() {
    for seed in 0..6 {
        let d = generate(&recovery_spec(150, seed)).unwrap().dataset;
        for k in 1..=3 {
            let r = fit(&d, k, &quick(seed)).unwrap();
            for w in r.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "seed {seed} K={k}: {} -> {}", w[0], w[1]);
            }
            let s: f64 = r.marginal_mixing.iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            for row in r.responsibilities.rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn relabelling_leaves_likelihood_unchanged() {
    let d = generate(&recovery_spec(100, 3)).unwrap().dataset;
    let r = fit(&d, 3, &quick(1)).unwrap();
    let order = [2, 0, 1];
    let p = &r.params;
    let permuted = MoEParams {
        support: order.iter().map(|&k| p.support[k].clone()).collect(),
        dampening: p.dampening.clone(),
        gating: GatingParams::from_unanchored(order.iter().map(|&k| p.gating.row(k).to_vec()).collect()).unwrap(),
    };
    let a = log_likelihood(&d, p).unwrap();
    let b = log_likelihood(&d, &permuted).unwrap();
    assert!((a - b).abs() < 1e-9 * a.abs());
}

#[test]
fn nested_models_from_shared_start() {
    // The larger model starts at the smaller model's optimum with the extra
    // coefficient at zero, so it can only do better.
    let mut spec = recovery_spec(300, 5);
    spec.covariates.push(CovariateSpec::Uniform { name: "noise".into() });
    spec.gating = vec![vec![0.0; 3], vec![-1.5, 3.0, 0.0]];
    let full = generate(&spec).unwrap().dataset;
    let small = full.select_covariates(&[0]).unwrap();
    let r_small = fit(&small, 2, &quick(2)).unwrap();
    let mut rows: Vec<Vec<f64>> = r_small.params.gating.rows().to_vec();
    rows.iter_mut().for_each(|r| r.push(0.0));
    let init = MoEParams {
        gating: GatingParams::new(rows).unwrap(),
        ..r_small.params.clone()
    };
    let r_full = fit_from(&full, &init, &quick(2)).unwrap();
    assert!(r_full.final_loglik >= r_small.final_loglik - 1e-6);
}

#[test]
fn simulate_write_read_fit() {
    let spec = GeneratorSpec {
        covariates: vec![
            CovariateSpec::Uniform { name: "x".into() },
            CovariateSpec::Categorical {
                name: "g".into(),
                levels: vec!["a".into(), "b".into()],
                probs: vec![0.5, 0.5],
            },
        ],
        gating: vec![vec![0.0; 3], vec![-1.5, 3.0, 0.5]],
        ..recovery_spec(400, 9)
    };
    let g = generate(&spec).unwrap();
    let ballots = write_ballots(&BallotTable {
        ids: g.table.ids.clone(),
        candidates: g.dataset.candidate_names().to_vec(),
        ballots: g.dataset.ballots().to_vec(),
    })
    .unwrap();
    let covs = write_covariates(&g.table).unwrap();
    let bt = parse_ballots(&ballots, Some(g.dataset.candidate_names())).unwrap();
    let ct = parse_covariates(&covs).unwrap();
    let design = build_design(&bt, Some(&ct), &g.categorical, false).unwrap();
    assert_eq!(design.dataset, g.dataset);
    assert_eq!(design.groups.len(), 2);
    let r = fit(&design.dataset, 2, &quick(4)).unwrap();
    let perm = align(&r.params.support, &spec.support);
    for (t, &f) in perm.iter().enumerate() {
        for j in 0..5 {
            assert!((r.params.support[f][j] - spec.support[t][j]).abs() < 0.1);
        }
    }
}

#[test]
fn selection_ranks_and_scores_consistently() {
    let mut spec = recovery_spec(800, 12);
    spec.covariates.push(CovariateSpec::Uniform { name: "noise".into() });
    spec.gating = vec![vec![0.0; 3], vec![-1.5, 3.0, 0.0]];
    let d = generate(&spec).unwrap().dataset;
    let ks = [1, 2];
    let scores = backward_eliminate(&d, &CovariateGroup::singletons(&d), &ks, &quick(0)).unwrap();
    // Full set for each K, then both single-covariate subsets for each K.
    assert_eq!(scores.len(), 6);
    for w in scores.windows(2) {
        assert!(w[0].bic >= w[1].bic);
    }
    for s in &scores {
        assert_eq!(s.bic, bic(s.final_loglik, s.n_params, 800));
    }
    assert_eq!(scores[0].k, 2);
    assert!(scores[0].covariates.contains(&"x".to_string()));
}

#[test]
fn failed_fits_score_negative_infinity() {
    // Two identical covariate columns make the gating bound singular.
    let raw: Vec<Vec<usize>> = (0..12).map(|i| vec![1 + i % 3, 1 + (i + 1) % 3]).collect();
    let cov: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, i as f64]).collect();
    let d = rankmoe::validate_dataset(&raw, &cov, 3).unwrap();
    let groups = vec![CovariateGroup {
        name: "pair".into(),
        columns: vec![0, 1],
    }];
    let scores = backward_eliminate(&d, &groups, &[1, 2], &quick(0)).unwrap();
    assert_eq!(scores.len(), 2);
    assert_eq!(scores[0].k, 1);
    assert!(scores[0].bic.is_finite());
    assert_eq!(scores[1].bic, f64::NEG_INFINITY);
    assert!(scores[1].error.as_deref().unwrap().contains("singular"));
}
