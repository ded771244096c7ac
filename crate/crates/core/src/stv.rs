//! Single-seat STV counting with batch elimination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Ballot;

/// Droop quota: `floor(valid / (seats + 1)) + 1`.
pub fn quota(valid_votes: u64, seats: u64) -> Result<u64> {
    if seats < 1 {
        return Err(Error::NoSeats);
    }
    Ok(valid_votes / (seats + 1) + 1)
}

/// What to do when the lowest candidates are tied and only one of them can go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Eliminate whoever had fewer votes at the earliest earlier round where
    /// the tied candidates differ; failing that, the highest candidate index.
    #[default]
    EarliestRound,
    /// Stop with [`Error::UnresolvedTie`].
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOptions {
    /// Eliminate the largest trailing group whose combined total is below the
    /// next candidate, rather than one candidate at a time.
    pub batch_elimination: bool,
    pub tie_break: TieBreak,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            batch_elimination: true,
            tie_break: TieBreak::EarliestRound,
        }
    }
}

/// One count. Totals are `None` for candidates already excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRound {
    /// 1-based.
    pub round: usize,
    pub totals: Vec<Option<u64>>,
    pub eliminated: Vec<usize>,
    pub elected: Vec<usize>,
    pub nontransferable: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResult {
    pub quota: u64,
    pub valid_votes: u64,
    pub rounds: Vec<CountRound>,
    /// 0-based candidate index.
    pub winner: usize,
}

/// Picks the candidates to exclude this round from `(candidate, total)` of
/// the continuing candidates (at least two).
fn choose_exclusions(
    continuing: &[(usize, u64)],
    history: &[CountRound],
    options: &CountOptions,
) -> Result<Vec<usize>> {
    let mut sorted = continuing.to_vec();
    sorted.sort_by_key(|&(j, t)| (t, j));
    if options.batch_elimination {
        let mut sum = 0u64;
        let mut best = 0;
        for m in 1..sorted.len() {
            sum += sorted[m - 1].1;
            if sum < sorted[m].1 {
                best = m;
            }
        }
        if best > 0 {
            let mut out: Vec<usize> = sorted[..best].iter().map(|&(j, _)| j).collect();
            out.sort_unstable();
            return Ok(out);
        }
    }
    let low = sorted[0].1;
    let mut tied: Vec<usize> = sorted.iter().filter(|&&(_, t)| t == low).map(|&(j, _)| j).collect();
    if tied.len() == 1 {
        return Ok(tied);
    }
    match options.tie_break {
        TieBreak::Error => Err(Error::UnresolvedTie { tied }),
        TieBreak::EarliestRound => {
            for r in history {
                let fewest = tied
                    .iter()
                    .map(|&j| r.totals[j].unwrap_or(0))
                    .min()
                    .expect("non-empty");
                tied.retain(|&j| r.totals[j].unwrap_or(0) == fewest);
                if tied.len() == 1 {
                    break;
                }
            }
            Ok(vec![*tied.iter().max().expect("non-empty")])
        }
    }
}

/// Counts a single-seat election over `n_candidates` candidates.
///
/// Every ballot sits on the pile of its highest-ranked continuing candidate;
/// when candidates are excluded their piles move to each ballot's next
/// continuing preference, or to the nontransferable pile.
pub fn count_election(
    ballots: &[Ballot],
    n_candidates: usize,
    seats: usize,
    options: &CountOptions,
) -> Result<CountResult> {
    if seats == 0 {
        return Err(Error::NoSeats);
    }
    if seats != 1 {
        return Err(Error::MultiSeat(seats));
    }
    if ballots.is_empty() {
        return Err(Error::NoBallots);
    }
    for (row, b) in ballots.iter().enumerate() {
        if let Some(&c) = b.ranking().iter().find(|&&c| c >= n_candidates) {
            return Err(Error::CandidateOutOfRange {
                row,
                candidate: c + 1,
                n_candidates,
            });
        }
    }
    let valid = ballots.len() as u64;
    let q = quota(valid, seats as u64)?;

    let mut continuing = vec![true; n_candidates];
    let mut cursor = vec![0usize; ballots.len()];
    let mut piles: Vec<Vec<usize>> = vec![Vec::new(); n_candidates];
    for (i, b) in ballots.iter().enumerate() {
        piles[b.ranking()[0]].push(i);
    }
    let mut nontransferable = 0u64;
    let mut rounds: Vec<CountRound> = Vec::new();

    loop {
        let totals: Vec<Option<u64>> = (0..n_candidates)
            .map(|j| continuing[j].then(|| piles[j].len() as u64))
            .collect();
        let live: Vec<(usize, u64)> = totals
            .iter()
            .enumerate()
            .filter_map(|(j, t)| t.map(|t| (j, t)))
            .collect();
        let mut round = CountRound {
            round: rounds.len() + 1,
            totals,
            eliminated: Vec::new(),
            elected: Vec::new(),
            nontransferable,
        };
        let leader = live.iter().filter(|&&(_, t)| t >= q).map(|&(j, _)| j).next();
        let winner = match (leader, live.len()) {
            (Some(j), _) => Some(j),
            (None, 1) => Some(live[0].0),
            (None, 0) => return Err(Error::NoBallots),
            _ => None,
        };
        if let Some(w) = winner {
            round.elected.push(w);
            rounds.push(round);
            return Ok(CountResult {
                quota: q,
                valid_votes: valid,
                rounds,
                winner: w,
            });
        }
        let out = choose_exclusions(&live, &rounds, options)?;
        for &j in &out {
            continuing[j] = false;
        }
        for &j in &out {
            for i in std::mem::take(&mut piles[j]) {
                let ranking = ballots[i].ranking();
                let mut c = cursor[i] + 1;
                while c < ranking.len() && !continuing[ranking[c]] {
                    c += 1;
                }
                cursor[i] = c;
                match ranking.get(c) {
                    Some(&next) => piles[next].push(i),
                    None => nontransferable += 1,
                }
            }
        }
        round.eliminated = out;
        rounds.push(round);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ballots(raw: &[&[usize]], n: usize) -> Vec<Ballot> {
        raw.iter().map(|r| Ballot::from_one_based(r, n).unwrap()).collect()
    }

    #[test]
    fn quota_examples() {
        assert_eq!(quota(1_269_836, 1).unwrap(), 634_919);
        assert_eq!(quota(100, 1).unwrap(), 51);
        assert_eq!(quota(10, 4).unwrap(), 3);
        assert_eq!(quota(0, 1).unwrap(), 1);
        assert!(quota(10, 0).is_err());
    }

    #[test]
    fn quota_admits_at_most_seats_winners() {
        // s + 1 candidates can never all reach the quota, while s can.
        for v in 0..200u64 {
            for s in 1..8u64 {
                let q = quota(v, s).unwrap();
                assert!((s + 1) * q > v);
                assert!(q == 1 || s * (q - 1) <= v);
            }
        }
    }

    #[test]
    fn three_candidate_example() {
        let mut raw: Vec<&[usize]> = vec![&[1]; 5];
        raw.extend(vec![&[2][..]; 4]);
        raw.extend(vec![&[3, 2][..]; 2]);
        let r = count_election(&ballots(&raw, 3), 3, 1, &CountOptions::default()).unwrap();
        assert_eq!(r.quota, 6);
        assert_eq!(r.rounds[0].totals, vec![Some(5), Some(4), Some(2)]);
        assert_eq!(r.rounds[0].eliminated, vec![2]);
        assert_eq!(r.rounds[1].totals, vec![Some(5), Some(6), None]);
        assert_eq!(r.rounds[1].elected, vec![1]);
        assert_eq!(r.winner, 1);
    }

    #[test]
    fn immediate_quota() {
        let raw: Vec<&[usize]> = vec![&[2, 1], &[2], &[1]];
        let r = count_election(&ballots(&raw, 3), 3, 1, &CountOptions::default()).unwrap();
        assert_eq!(r.rounds.len(), 1);
        assert_eq!(r.winner, 1);
    }

    #[test]
    fn batch_elimination_and_nontransferable() {
        // Totals (6, 5, 1, 1): C and D together (2) are below B (5).
        let mut raw: Vec<&[usize]> = vec![&[1]; 6];
        raw.extend(vec![&[2][..]; 5]);
        raw.push(&[3, 4]);
        raw.push(&[4, 2]);
        let b = ballots(&raw, 4);
        let r = count_election(&b, 4, 1, &CountOptions::default()).unwrap();
        assert_eq!(r.rounds[0].eliminated, vec![2, 3]);
        assert_eq!(r.rounds[1].totals, vec![Some(6), Some(6), None, None]);
        assert_eq!(r.rounds[1].nontransferable, 1);

        let one = CountOptions {
            batch_elimination: false,
            ..CountOptions::default()
        };
        let r = count_election(&b, 4, 1, &one).unwrap();
        // C and D tie at 1 with no earlier round: higher index (D) goes.
        assert_eq!(r.rounds[0].eliminated, vec![3]);
        let strict = CountOptions {
            batch_elimination: false,
            tie_break: TieBreak::Error,
        };
        assert_eq!(
            count_election(&b, 4, 1, &strict),
            Err(Error::UnresolvedTie { tied: vec![2, 3] })
        );
    }

    #[test]
    fn errors() {
        let b = ballots(&[&[1]], 2);
        assert_eq!(count_election(&[], 2, 1, &CountOptions::default()), Err(Error::NoBallots));
        assert_eq!(count_election(&b, 2, 2, &CountOptions::default()), Err(Error::MultiSeat(2)));
        assert_eq!(count_election(&b, 2, 0, &CountOptions::default()), Err(Error::NoSeats));
    }

    /// Naive replay: recompute every tally from scratch each round.
    fn replay(ballots: &[Ballot], n: usize, options: &CountOptions) -> Result<CountResult> {
        let v = ballots.len() as u64;
        let q = v / 2 + 1;
        let mut excluded = vec![false; n];
        let mut rounds: Vec<CountRound> = Vec::new();
        loop {
            let mut tally = vec![0u64; n];
            let mut lost = 0;
            for b in ballots {
                match b.ranking().iter().find(|&&c| !excluded[c]) {
                    Some(&c) => tally[c] += 1,
                    None => lost += 1,
                }
            }
            let totals: Vec<Option<u64>> =
                (0..n).map(|j| if excluded[j] { None } else { Some(tally[j]) }).collect();
            let alive: Vec<usize> = (0..n).filter(|&j| !excluded[j]).collect();
            let mut round = CountRound {
                round: rounds.len() + 1,
                totals,
                eliminated: vec![],
                elected: vec![],
                nontransferable: lost,
            };
            let win = alive.iter().copied().find(|&j| tally[j] >= q);
            let win = if alive.len() == 1 { Some(alive[0]) } else { win };
            if let Some(w) = win {
                round.elected = vec![w];
                rounds.push(round);
                return Ok(CountResult { quota: q, valid_votes: v, rounds, winner: w });
            }
            // Try every group size, keep the largest that qualifies.
            let mut order = alive.clone();
            order.sort_by_key(|&j| (tally[j], j));
            let mut out = Vec::new();
            if options.batch_elimination {
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
                if tied.len() > 1 && options.tie_break == TieBreak::Error {
                    return Err(Error::UnresolvedTie { tied });
                }
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

    fn random_election(rng: &mut ChaCha8Rng) -> (Vec<Ballot>, usize) {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=20);
        let ballots = (0..m)
            .map(|_| {
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    perm.swap(i, rng.random_range(0..=i));
                }
                perm.truncate(rng.random_range(1..=n));
                Ballot::new(perm, n).unwrap()
            })
            .collect();
        (ballots, n)
    }

    #[test]
    fn matches_naive_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for batch in [true, false] {
            let opts = CountOptions {
                batch_elimination: batch,
                ..CountOptions::default()
            };
            for _ in 0..1000 {
                let (b, n) = random_election(&mut rng);
                let fast = count_election(&b, n, 1, &opts).unwrap();
                assert_eq!(fast, replay(&b, n, &opts).unwrap());
                for r in &fast.rounds {
                    let s: u64 = r.totals.iter().flatten().sum();
                    assert_eq!(s + r.nontransferable, b.len() as u64);
                }
            }
        }
    }

    #[test]
    fn batch_is_below_every_survivor() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let (b, n) = random_election(&mut rng);
            let r = count_election(&b, n, 1, &CountOptions::default()).unwrap();
            for round in &r.rounds {
                if round.eliminated.len() < 2 {
                    continue;
                }
                let out: u64 = round.eliminated.iter().map(|&j| round.totals[j].unwrap()).sum();
                for (j, t) in round.totals.iter().enumerate() {
                    if let Some(t) = t {
                        if !round.eliminated.contains(&j) {
                            assert!(out < *t);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn winner_ignores_ballot_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (mut b, n) = random_election(&mut rng);
            let w = count_election(&b, n, 1, &CountOptions::default()).unwrap().winner;
            b.reverse();
            let len = b.len();
            b.rotate_left(rng.random_range(0..len));
            assert_eq!(count_election(&b, n, 1, &CountOptions::default()).unwrap().winner, w);
        }
    }
}
