//! Ballots, covariates and the validated dataset that joins them.
//!
//! Candidates are held 0-based internally. Every constructor that accepts
//! "raw" input takes 1-based candidate numbers, which is what the file
//! formats and the command line use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::GatingParams;

/// Tolerance used when checking that a support row lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// One voter's ordered partial ranking.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ballot {
    ranking: Vec<usize>,
}

impl Ballot {
    /// Builds a ballot from 0-based candidate indices.
    pub fn new(ranking: Vec<usize>, n_candidates: usize) -> Result<Self> {
        Self::check(&ranking, n_candidates, 0, 0)?;
        Ok(Ballot { ranking })
    }

    /// Builds a ballot from 1-based candidate numbers.
    pub fn from_one_based(ranking: &[usize], n_candidates: usize) -> Result<Self> {
        Self::from_one_based_row(ranking, n_candidates, 0)
    }

    fn from_one_based_row(ranking: &[usize], n_candidates: usize, row: usize) -> Result<Self> {
        for &c in ranking {
            if c == 0 || c > n_candidates {
                return Err(Error::CandidateOutOfRange {
                    row,
                    candidate: c,
                    n_candidates,
                });
            }
        }
        let ranking: Vec<usize> = ranking.iter().map(|c| c - 1).collect();
        Self::check(&ranking, n_candidates, row, 1)?;
        Ok(Ballot { ranking })
    }

    fn check(ranking: &[usize], n_candidates: usize, row: usize, base: usize) -> Result<()> {
        if ranking.is_empty() {
            return Err(Error::EmptyBallot { row });
        }
        let mut seen = vec![false; n_candidates];
        for &c in ranking {
            if c >= n_candidates {
                return Err(Error::CandidateOutOfRange {
                    row,
                    candidate: c + base,
                    n_candidates,
                });
            }
            if seen[c] {
                return Err(Error::DuplicateCandidate {
                    row,
                    candidate: c + base,
                });
            }
            seen[c] = true;
        }
        Ok(())
    }

    /// 0-based candidate indices in preference order.
    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    /// 1-based candidate numbers in preference order.
    pub fn one_based(&self) -> Vec<usize> {
        self.ranking.iter().map(|c| c + 1).collect()
    }

    /// Number of preferences expressed (n_i).
    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    /// The first `n` preferences. Any non-empty prefix of a ballot is a ballot.
    pub fn truncated(&self, n: usize) -> Option<Ballot> {
        if n == 0 || n > self.ranking.len() {
            return None;
        }
        Some(Ballot {
            ranking: self.ranking[..n].to_vec(),
        })
    }
}

/// Ballots aligned with covariate rows.
///
/// Each design row carries a leading intercept entry fixed at 1, followed by
/// the `L` covariate values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_candidates: usize,
    ballots: Vec<Ballot>,
    design: Vec<Vec<f64>>,
    candidate_names: Vec<String>,
    covariate_names: Vec<String>,
}

/// Validates raw (1-based) ballots and covariate rows.
///
/// Errors name the 0-based row at fault.
pub fn validate_dataset(
    raw_ballots: &[Vec<usize>],
    raw_covariates: &[Vec<f64>],
    n_candidates: usize,
) -> Result<Dataset> {
    if raw_ballots.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if raw_ballots.len() != raw_covariates.len() {
        return Err(Error::RowCountMismatch {
            ballots: raw_ballots.len(),
            covariates: raw_covariates.len(),
        });
    }
    let ballots = raw_ballots
        .iter()
        .enumerate()
        .map(|(row, b)| Ballot::from_one_based_row(b, n_candidates, row))
        .collect::<Result<Vec<_>>>()?;
    let n_cov = raw_covariates[0].len();
    let candidate_names = (1..=n_candidates).map(|j| format!("C{j}")).collect();
    let covariate_names = (1..=n_cov).map(|l| format!("w{l}")).collect();
    Dataset::new(
        n_candidates,
        ballots,
        raw_covariates.to_vec(),
        candidate_names,
        covariate_names,
    )
}

impl Dataset {
    /// Builds a dataset from already-validated ballots and covariate rows
    /// (without intercept).
    pub fn new(
        n_candidates: usize,
        ballots: Vec<Ballot>,
        covariates: Vec<Vec<f64>>,
        candidate_names: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if ballots.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if ballots.len() != covariates.len() {
            return Err(Error::RowCountMismatch {
                ballots: ballots.len(),
                covariates: covariates.len(),
            });
        }
        if candidate_names.len() != n_candidates {
            return Err(Error::Dimension(format!(
                "{} candidate names for {} candidates",
                candidate_names.len(),
                n_candidates
            )));
        }
        let width = covariate_names.len();
        for (row, b) in ballots.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::EmptyBallot { row });
            }
            if let Some(&c) = b.ranking().iter().find(|&&c| c >= n_candidates) {
                return Err(Error::CandidateOutOfRange {
                    row,
                    candidate: c + 1,
                    n_candidates,
                });
            }
        }
        let mut design = Vec::with_capacity(covariates.len());
        for (row, w) in covariates.into_iter().enumerate() {
            if w.len() != width {
                return Err(Error::CovariateWidth {
                    row,
                    expected: width,
                    found: w.len(),
                });
            }
            if let Some(column) = w.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCovariate { row, column });
            }
            let mut x = Vec::with_capacity(width + 1);
            x.push(1.0);
            x.extend(w);
            design.push(x);
        }
        Ok(Dataset {
            n_candidates,
            ballots,
            design,
            candidate_names,
            covariate_names,
        })
    }

    /// M
    pub fn n_voters(&self) -> usize {
        self.ballots.len()
    }

    /// N
    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    /// L, not counting the intercept.
    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn ballots(&self) -> &[Ballot] {
        &self.ballots
    }

    /// Design row for voter `i`: `[1, w_i1, ..., w_iL]`.
    pub fn design_row(&self, i: usize) -> &[f64] {
        &self.design[i]
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    /// Covariates of voter `i` without the intercept.
    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.design[i][1..]
    }

    pub fn candidate_names(&self) -> &[String] {
        &self.candidate_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Keeps only the listed covariate columns (0-based, intercept excluded).
    pub fn select_covariates(&self, columns: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_covariates()) {
            return Err(Error::Dimension(format!(
                "covariate column {bad} out of range"
            )));
        }
        let design = self
            .design
            .iter()
            .map(|row| {
                let mut x = Vec::with_capacity(columns.len() + 1);
                x.push(1.0);
                x.extend(columns.iter().map(|&c| row[c + 1]));
                x
            })
            .collect();
        Ok(Dataset {
            n_candidates: self.n_candidates,
            ballots: self.ballots.clone(),
            design,
            candidate_names: self.candidate_names.clone(),
            covariate_names: columns
                .iter()
                .map(|&c| self.covariate_names[c].clone())
                .collect(),
        })
    }
}

/// Affine map of one column onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub min: f64,
    pub range: f64,
}

impl ColumnScale {
    pub fn apply(&self, v: f64) -> f64 {
        if self.range > 0.0 {
            (v - self.min) / self.range
        } else {
            0.0
        }
    }
}

/// Per-column `(min, range)` record kept so new rows map identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<ColumnScale>,
}

impl Standardizer {
    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension(format!(
                "row has {} values, standardizer has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        Ok(row
            .iter()
            .zip(&self.columns)
            .map(|(&v, s)| s.apply(v))
            .collect())
    }
}

/// Min-max standardizes covariate rows column by column.
///
/// Constant columns map to all zeros.
pub fn standardize_covariates(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardizer)> {
    let width = rows.first().map_or(0, Vec::len);
    let mut mins = vec![f64::INFINITY; width];
    let mut maxs = vec![f64::NEG_INFINITY; width];
    for (row, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::CovariateWidth {
                row,
                expected: width,
                found: r.len(),
            });
        }
        for (column, &v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteCovariate { row, column });
            }
            mins[column] = mins[column].min(v);
            maxs[column] = maxs[column].max(v);
        }
    }
    let scaler = Standardizer {
        columns: mins
            .iter()
            .zip(&maxs)
            .map(|(&min, &max)| ColumnScale {
                min,
                range: max - min,
            })
            .collect(),
    };
    let out = rows
        .iter()
        .map(|r| scaler.apply_row(r))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, scaler))
}

/// Benter expert parameters plus the gating network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoEParams {
    /// K rows, each a length-N simplex.
    pub support: Vec<Vec<f64>>,
    /// Length-N dampening vector shared by all components.
    pub dampening: Vec<f64>,
    pub gating: GatingParams,
}

impl MoEParams {
    pub fn n_components(&self) -> usize {
        self.support.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.dampening.len()
    }

    /// Checks simplex rows, the dampening range and gating shape.
    pub fn validate(&self) -> Result<()> {
        let n = self.dampening.len();
        if n < 2 {
            return Err(Error::InvalidParams("need at least 2 candidates".into()));
        }
        if self.support.is_empty() {
            return Err(Error::InvalidParams("need at least 1 component".into()));
        }
        for (k, row) in self.support.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParams(format!(
                    "support row {k} has length {}, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "support row {k} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidParams(format!(
                    "support row {k} sums to {sum}"
                )));
            }
        }
        if self.dampening[0] != 1.0 {
            return Err(Error::InvalidParams("first dampening entry must be 1".into()));
        }
        if self.dampening.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParams("dampening entries must lie in [0, 1]".into()));
        }
        if self.gating.n_components() != self.support.len() {
            return Err(Error::InvalidParams(format!(
                "gating has {} rows for {} components",
                self.gating.n_components(),
                self.support.len()
            )));
        }
        Ok(())
    }

    /// Validates and checks dimensions against a dataset.
    pub fn check_against(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if self.n_candidates() != data.n_candidates() {
            return Err(Error::Dimension(format!(
                "params have {} candidates, dataset has {}",
                self.n_candidates(),
                data.n_candidates()
            )));
        }
        if self.gating.n_columns() != data.n_covariates() + 1 {
            return Err(Error::Dimension(format!(
                "gating has {} columns, dataset needs {}",
                self.gating.n_columns(),
                data.n_covariates() + 1
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_dataset_is_valid() {
        let d = validate_dataset(&[vec![1, 2], vec![3]], &[vec![0.5], vec![1.0]], 3).unwrap();
        assert_eq!(d.n_voters(), 2);
        assert_eq!(d.ballots()[1].ranking(), &[2]);
        assert_eq!(d.design_row(0), &[1.0, 0.5]);
    }

    #[test]
    fn duplicate_candidate_is_rejected() {
        let e = validate_dataset(&[vec![1, 2], vec![1, 1]], &[vec![], vec![]], 3).unwrap_err();
        assert_eq!(e, Error::DuplicateCandidate { row: 1, candidate: 1 });
    }

    #[test]
    fn out_of_range_is_rejected() {
        let e = validate_dataset(&[vec![4]], &[vec![]], 3).unwrap_err();
        assert_eq!(
            e,
            Error::CandidateOutOfRange {
                row: 0,
                candidate: 4,
                n_candidates: 3
            }
        );
        assert!(matches!(
            validate_dataset(&[vec![0]], &[vec![]], 3),
            Err(Error::CandidateOutOfRange { candidate: 0, .. })
        ));
    }

    #[test]
    fn row_mismatch_and_empty() {
        assert!(matches!(
            validate_dataset(&[vec![1]], &[vec![], vec![]], 3),
            Err(Error::RowCountMismatch { .. })
        ));
        assert_eq!(validate_dataset(&[], &[], 3).unwrap_err(), Error::EmptyDataset);
        assert_eq!(
            validate_dataset(&[vec![]], &[vec![]], 3).unwrap_err(),
            Error::EmptyBallot { row: 0 }
        );
    }

    #[test]
    fn standardize_examples() {
        let (out, s) = standardize_covariates(&[vec![20.0], vec![40.0], vec![60.0]]).unwrap();
        assert_eq!(out, vec![vec![0.0], vec![0.5], vec![1.0]]);
        assert_eq!(s.columns[0], ColumnScale { min: 20.0, range: 40.0 });

        let (out, _) = standardize_covariates(&[vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(out, vec![vec![0.0], vec![0.0]]);

        let (out, _) = standardize_covariates(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(out, vec![vec![0.0], vec![1.0]]);

        assert!(matches!(
            standardize_covariates(&[vec![1.0], vec![f64::NAN]]),
            Err(Error::NonFiniteCovariate { row: 1, column: 0 })
        ));
    }

    #[test]
    fn standardizer_maps_new_rows() {
        let (_, s) = standardize_covariates(&[vec![10.0, 3.0], vec![30.0, 3.0]]).unwrap();
        assert_eq!(s.apply_row(&[20.0, 7.0]).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn select_covariates_keeps_intercept() {
        let d = validate_dataset(&[vec![1]], &[vec![0.1, 0.2, 0.3]], 2).unwrap();
        let s = d.select_covariates(&[2, 0]).unwrap();
        assert_eq!(s.design_row(0), &[1.0, 0.3, 0.1]);
        assert_eq!(s.covariate_names(), &["w3".to_string(), "w1".to_string()]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn standardize_is_idempotent(rows in prop::collection::vec(
                prop::collection::vec(-1e3f64..1e3, 3), 1..20)) {
                let (once, _) = standardize_covariates(&rows).unwrap();
                let (twice, _) = standardize_covariates(&once).unwrap();
                prop_assert_eq!(&once, &twice);
                for r in &once {
                    for &v in r {
                        prop_assert!((0.0..=1.0).contains(&v));
                    }
                }
            }

            #[test]
            fn prefixes_are_ballots(perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
                                    n in 1usize..=6) {
                let b = Ballot::new(perm, 6).unwrap();
                let t = b.truncated(n).unwrap();
                prop_assert!(Ballot::new(t.ranking().to_vec(), 6).is_ok());
                prop_assert_eq!(t.len(), n);
            }
        }
    }
}
