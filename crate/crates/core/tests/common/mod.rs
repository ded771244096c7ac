//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls into the fitting code it is used to check.
#![allow(dead_code)]

use rankmoe::synth::{CovariateSpec, GeneratorSpec};
use rankmoe::Ballot;

/// Minimizes `f` by Nelder–Mead, restarting from the best vertex until a
/// restart no longer improves by more than `tol`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64) -> Vec<f64> {
    let mut best = x0.to_vec();
    let mut fbest = f(&best);
    let mut scale = step;
    for _ in 0..50 {
        let (x, fx) = nm_run(f, &best, scale, tol);
        let improved = fbest - fx;
        if fx < fbest {
            best = x;
            fbest = fx;
        }
        if improved.abs() <= tol && scale < 1e-3 {
            break;
        }
        scale = (scale * 0.5).max(1e-6);
    }
    best
}

fn nm_run(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..20_000 * n {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (vals[n] - vals[0]).abs() <= tol * 1e-3 || diameter < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|d| centroid[d] + t * (simplex[n][d] - centroid[d]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let xc = if fr < vals[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    for d in 0..n {
                        simplex[i][d] = simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]);
                    }
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let i = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[i].clone(), vals[i])
}

/// Stages of a ranking that involve an actual choice (at least two
/// candidates left), as (chosen, remaining set).
fn choice_stages(ranking: &[usize], n: usize) -> Vec<(usize, Vec<usize>)> {
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for &c in ranking {
        if remaining.len() >= 2 {
            out.push((c, remaining.clone()));
        }
        remaining.retain(|&j| j != c);
    }
    out
}

/// Plackett–Luce log-likelihood written out stage by stage.
pub fn pl_loglik(rankings: &[Vec<usize>], gamma: &[f64]) -> f64 {
    let n = gamma.len();
    rankings
        .iter()
        .flat_map(|r| choice_stages(r, n))
        .map(|(c, rem)| gamma[c].ln() - rem.iter().map(|&j| gamma[j]).sum::<f64>().ln())
        .sum()
}

/// The classical MM iteration for Plackett–Luce worths:
/// `gamma_j <- wins_j / sum over choice sets containing j of 1 / (set worth)`.
pub fn pl_mm_oracle(rankings: &[Vec<usize>], n: usize, iters: usize) -> Vec<f64> {
    let stages: Vec<(usize, Vec<usize>)> = rankings.iter().flat_map(|r| choice_stages(r, n)).collect();
    let mut wins = vec![0.0; n];
    for (c, _) in &stages {
        wins[*c] += 1.0;
    }
    let mut g = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        let mut denom = vec![0.0; n];
        for (_, rem) in &stages {
            let s: f64 = rem.iter().map(|&j| g[j]).sum();
            for &j in rem {
                denom[j] += 1.0 / s;
            }
        }
        for j in 0..n {
            g[j] = wins[j] / denom[j];
        }
        let total: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= total);
    }
    g
}

/// One round of a naive STV replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayRound {
    pub totals: Vec<Option<u64>>,
    pub eliminated: Vec<usize>,
    pub elected: Vec<usize>,
    pub nontransferable: u64,
}

/// Single-seat STV recomputed from scratch every round: each ballot counts
/// for its first preference not yet excluded. Batch elimination tries every
/// group size; ties at the bottom go to the candidate lowest at the earliest
/// round where they differ, then the highest index.
pub fn naive_stv(ballots: &[Ballot], n: usize, batch: bool) -> (Vec<ReplayRound>, usize) {
    let q = ballots.len() as u64 / 2 + 1;
    let mut excluded = vec![false; n];
    let mut rounds: Vec<ReplayRound> = Vec::new();
    loop {
        let mut tally = vec![0u64; n];
        let mut lost = 0;
        for b in ballots {
            match b.ranking().iter().find(|&&c| !excluded[c]) {
                Some(&c) => tally[c] += 1,
                None => lost += 1,
            }
        }
        let alive: Vec<usize> = (0..n).filter(|&j| !excluded[j]).collect();
        let mut round = ReplayRound {
            totals: (0..n).map(|j| (!excluded[j]).then_some(tally[j])).collect(),
            eliminated: vec![],
            elected: vec![],
            nontransferable: lost,
        };
        let win = if alive.len() == 1 {
            Some(alive[0])
        } else {
            alive.iter().copied().find(|&j| tally[j] >= q)
        };
        if let Some(w) = win {
            round.elected = vec![w];
            rounds.push(round);
            return (rounds, w);
        }
        let mut order = alive.clone();
        order.sort_by_key(|&j| (tally[j], j));
        let mut out = Vec::new();
        if batch {
            for m in (1..order.len()).rev() {
                let s: u64 = order[..m].iter().map(|&j| tally[j]).sum();
                if s < tally[order[m]] {
                    out = order[..m].to_vec();
                    break;
                }
            }
        }
        if out.is_empty() {
            let low = tally[order[0]];
            let mut tied: Vec<usize> = order.iter().copied().filter(|&j| tally[j] == low).collect();
            for r in &rounds {
                let m = tied.iter().map(|&j| r.totals[j].unwrap()).min().unwrap();
                tied.retain(|&j| r.totals[j].unwrap() == m);
            }
            out = vec![*tied.iter().max().unwrap()];
        }
        out.sort_unstable();
        for &j in &out {
            excluded[j] = true;
        }
        round.eliminated = out;
        rounds.push(round);
    }
}

/// The two-bloc recovery design: blocs favouring the first and the last of
/// five candidates, one uniform covariate pushing towards the second bloc.
pub fn recovery_spec(n_voters: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        n_voters,
        candidates: None,
        support: vec![vec![0.6, 0.1, 0.1, 0.1, 0.1], vec![0.1, 0.1, 0.1, 0.1, 0.6]],
        dampening: vec![1.0, 0.8, 0.8, 0.8, 0.0],
        gating: vec![vec![0.0, 0.0], vec![-1.5, 3.0]],
        covariates: vec![CovariateSpec::Uniform { name: "x".into() }],
        length_probs: vec![0.2; 5],
        seed,
    }
}

/// Permutation of fitted components best matching the true supports
/// (`perm[true] = fitted`), by total absolute difference.
pub fn align(fitted: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<usize> {
    let k = truth.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    permutations(&mut perm, 0, &mut |p| {
        let cost: f64 = (0..k)
            .map(|t| {
                truth[t]
                    .iter()
                    .zip(&fitted[p[t]])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum();
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, p.to_vec()));
        }
    });
    best.unwrap().1
}

fn permutations(v: &mut Vec<usize>, at: usize, visit: &mut dyn FnMut(&[usize])) {
    if at == v.len() {
        visit(v);
        return;
    }
    for i in at..v.len() {
        v.swap(at, i);
        permutations(v, at + 1, visit);
        v.swap(at, i);
    }
}
