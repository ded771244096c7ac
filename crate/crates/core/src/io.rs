//! File formats: ballot and covariate CSVs, the run configuration, fit
//! reports and the tables derived from them.
//!
//! Parsers never panic on malformed input; every rejection carries the
//! 1-based line it came from where there is one.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::emm::{FitConfig, FitResult, StartOutcome};
use crate::gating::{odds_ratio_interval, GatingParams};
use crate::error::{Error, Result};
use crate::selection::{bic, count_free_params, CovariateGroup, ModelScore};
use crate::stv::CountResult;
use crate::types::{standardize_covariates, Ballot, Dataset, MoEParams, Standardizer};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => e.to_string(),
    };
    parse_err(line, message)
}

fn reader(text: &str, flexible: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(flexible)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn finish_writer(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn write_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn check_unique_ids(ids: &[String], lines: &[u64]) -> Result<()> {
    let mut seen = HashMap::new();
    for (id, &line) in ids.iter().zip(lines) {
        if id.is_empty() {
            return Err(parse_err(line, "empty voter id"));
        }
        if let Some(first) = seen.insert(id.as_str(), line) {
            return Err(parse_err(line, format!("voter id {id:?} already used on line {first}")));
        }
    }
    Ok(())
}

/// Ballots keyed by voter id, with the candidate list they index into.
#[derive(Debug, Clone, PartialEq)]
pub struct BallotTable {
    pub ids: Vec<String>,
    pub candidates: Vec<String>,
    pub ballots: Vec<Ballot>,
}

/// Resolves candidate names, either against a fixed list or by interning
/// them in order of first appearance.
struct Names {
    index: HashMap<String, usize>,
    list: Vec<String>,
    fixed: bool,
}

impl Names {
    fn new(candidates: Option<&[String]>) -> Result<Self> {
        let mut names = Names {
            index: HashMap::new(),
            list: Vec::new(),
            fixed: candidates.is_some(),
        };
        for c in candidates.unwrap_or(&[]) {
            if c.trim().is_empty() {
                return Err(Error::InvalidConfig("empty candidate name".into()));
            }
            if names.index.insert(c.clone(), names.list.len()).is_some() {
                return Err(Error::InvalidConfig(format!("candidate {c:?} listed twice")));
            }
            names.list.push(c.clone());
        }
        Ok(names)
    }

    fn resolve(&mut self, name: &str, line: u64) -> Result<usize> {
        if let Some(&j) = self.index.get(name) {
            return Ok(j);
        }
        if self.fixed {
            return Err(parse_err(line, format!("unknown candidate {name:?}")));
        }
        self.index.insert(name.to_string(), self.list.len());
        self.list.push(name.to_string());
        Ok(self.list.len() - 1)
    }
}

fn finish_ballots(
    ids: Vec<String>,
    lines: Vec<u64>,
    rankings: Vec<Vec<usize>>,
    names: Names,
) -> Result<BallotTable> {
    if rankings.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_unique_ids(&ids, &lines)?;
    let n = names.list.len();
    let ballots = rankings
        .into_iter()
        .zip(&lines)
        .map(|(r, &line)| Ballot::new(r, n).map_err(|e| parse_err(line, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok(BallotTable {
        ids,
        candidates: names.list,
        ballots,
    })
}

/// Reads a wide ballot file: `id,pref1,...,prefN`, candidate names in the
/// preference cells, blanks only after the last preference.
///
/// With `candidates` given every name must be on that list; otherwise the
/// list is built in order of first appearance.
pub fn parse_ballots(text: &str, candidates: Option<&[String]>) -> Result<BallotTable> {
    let mut rdr = reader(text, true);
    let width = rdr.headers().map_err(csv_err)?.len();
    if width < 2 {
        return Err(parse_err(1, "ballot header needs an id column and at least one preference column"));
    }
    let mut names = Names::new(candidates)?;
    let (mut ids, mut lines, mut rankings) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, csv::Position::line);
        if rec.len() > width {
            return Err(parse_err(line, format!("expected at most {width} fields, found {}", rec.len())));
        }
        let mut ranking = Vec::new();
        let mut ended = false;
        for (col, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                ended = true;
                continue;
            }
            if ended {
                return Err(parse_err(line, format!("preference {col} follows a blank preference")));
            }
            let j = names.resolve(cell, line)?;
            if ranking.contains(&j) {
                return Err(parse_err(line, format!("candidate {cell:?} ranked twice")));
            }
            ranking.push(j);
        }
        if ranking.is_empty() {
            return Err(parse_err(line, "ballot has no preferences"));
        }
        ids.push(rec.get(0).unwrap_or("").to_string());
        lines.push(line);
        rankings.push(ranking);
    }
    finish_ballots(ids, lines, rankings, names)
}

/// Reads a long ballot file: `voter,rank,candidate`, one preference per
/// line, ranks 1..n for each voter in any row order.
pub fn parse_long_ballots(text: &str, candidates: Option<&[String]>) -> Result<BallotTable> {
    let mut rdr = reader(text, false);
    if rdr.headers().map_err(csv_err)?.len() != 3 {
        return Err(parse_err(1, "long format needs exactly three columns: voter, rank, candidate"));
    }
    let mut names = Names::new(candidates)?;
    let mut order: Vec<String> = Vec::new();
    let mut first_line: Vec<u64> = Vec::new();
    let mut slots: HashMap<String, (usize, Vec<(usize, usize, u64)>)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, csv::Position::line);
        let id = &rec[0];
        if id.is_empty() {
            return Err(parse_err(line, "empty voter id"));
        }
        let rank: usize = rec[1]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| parse_err(line, format!("rank {:?} is not a positive integer", &rec[1])))?;
        if rec[2].is_empty() {
            return Err(parse_err(line, "empty candidate"));
        }
        let j = names.resolve(&rec[2], line)?;
        let entry = slots.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            first_line.push(line);
            (order.len() - 1, Vec::new())
        });
        entry.1.push((rank, j, line));
    }
    let mut rankings = Vec::with_capacity(order.len());
    for id in &order {
        let prefs = &mut slots.get_mut(id).expect("recorded").1;
        prefs.sort_by_key(|&(r, _, _)| r);
        let mut ranking = Vec::with_capacity(prefs.len());
        for (expect, &(r, j, line)) in prefs.iter().enumerate() {
            if r != expect + 1 {
                return Err(parse_err(line, format!("voter {id:?}: ranks must run 1..n without gaps or repeats")));
            }
            if ranking.contains(&j) {
                return Err(parse_err(line, format!("voter {id:?}: candidate ranked twice")));
            }
            ranking.push(j);
        }
        rankings.push(ranking);
    }
    let n = names.list.len();
    let ballots = rankings
        .into_iter()
        .zip(&first_line)
        .map(|(r, &line)| Ballot::new(r, n).map_err(|e| parse_err(line, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if ballots.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(BallotTable {
        ids: order,
        candidates: names.list,
        ballots,
    })
}

/// Writes a wide ballot file with one preference column per candidate.
pub fn write_ballots(table: &BallotTable) -> Result<String> {
    let n = table.candidates.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend((1..=n).map(|t| format!("pref{t}")));
    w.write_record(&header).map_err(write_err)?;
    for (id, b) in table.ids.iter().zip(&table.ballots) {
        let mut row = vec![id.as_str()];
        row.extend(b.ranking().iter().map(|&j| table.candidates[j].as_str()));
        row.resize(n + 1, "");
        w.write_record(&row).map_err(write_err)?;
    }
    finish_writer(w)
}

/// Raw covariate cells keyed by voter id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

/// Reads `id,cov1,...,covL`.
pub fn parse_covariates(text: &str) -> Result<CovariateTable> {
    Ok(parse_covariates_with_lines(text)?.0)
}

fn parse_covariates_with_lines(text: &str) -> Result<(CovariateTable, Vec<u64>)> {
    let mut rdr = reader(text, false);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.is_empty() {
        return Err(parse_err(1, "covariate header needs an id column"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut sorted = columns.clone();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(parse_err(1, format!("covariate column {:?} appears twice", w[0])));
    }
    if columns.iter().any(String::is_empty) {
        return Err(parse_err(1, "empty covariate column name"));
    }
    let (mut ids, mut cells, mut lines) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, csv::Position::line);
        ids.push(rec[0].to_string());
        cells.push(rec.iter().skip(1).map(str::to_string).collect());
        lines.push(line);
    }
    check_unique_ids(&ids, &lines)?;
    Ok((CovariateTable { ids, columns, cells }, lines))
}

pub fn write_covariates(table: &CovariateTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id"];
    header.extend(table.columns.iter().map(String::as_str));
    w.write_record(&header).map_err(write_err)?;
    for (id, row) in table.ids.iter().zip(&table.cells) {
        let mut rec = vec![id.as_str()];
        rec.extend(row.iter().map(String::as_str));
        w.write_record(&rec).map_err(write_err)?;
    }
    finish_writer(w)
}

/// A covariate column to be dummy coded against a reference level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalDecl {
    pub column: String,
    pub reference: String,
    /// All levels in dummy order; inferred (sorted) from the data if absent.
    #[serde(default)]
    pub levels: Option<Vec<String>>,
}

fn default_true() -> bool {
    true
}

/// Everything a run can be configured with from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
    /// Min-max scale every design column to [0, 1] before fitting.
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub categorical: Vec<CategoricalDecl>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            candidates: None,
            standardize: true,
            fit: FitConfig::default(),
            categorical: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        let mut seen = BTreeSet::new();
        for c in &self.categorical {
            if !seen.insert(&c.column) {
                return Err(Error::InvalidConfig(format!("column {:?} declared twice", c.column)));
            }
            if let Some(levels) = &c.levels {
                if !levels.contains(&c.reference) {
                    return Err(Error::InvalidConfig(format!(
                        "reference {:?} is not a level of {:?}",
                        c.reference, c.column
                    )));
                }
                if levels.iter().collect::<BTreeSet<_>>().len() != levels.len() {
                    return Err(Error::InvalidConfig(format!("repeated level in {:?}", c.column)));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Io(e.to_string()))
}

/// A dataset ready to fit, with how its columns came about.
#[derive(Debug, Clone)]
pub struct Design {
    pub dataset: Dataset,
    pub ids: Vec<String>,
    /// One group per covariate file column; dummies of a categorical
    /// column share a group.
    pub groups: Vec<CovariateGroup>,
    pub standardizer: Option<Standardizer>,
}

/// Joins ballots with covariates by voter id, dummy codes the declared
/// categorical columns and optionally standardizes.
pub fn build_design(
    ballots: &BallotTable,
    covariates: Option<&CovariateTable>,
    categorical: &[CategoricalDecl],
    standardize: bool,
) -> Result<Design> {
    let m = ballots.ballots.len();
    let mut rows = vec![Vec::new(); m];
    let mut names = Vec::new();
    let mut groups = Vec::new();
    if let Some(table) = covariates {
        for c in categorical {
            if !table.columns.contains(&c.column) {
                return Err(Error::InvalidConfig(format!("no covariate column {:?}", c.column)));
            }
        }
        let by_id: HashMap<&str, usize> = table
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if by_id.len() != table.ids.len() {
            return Err(Error::IdMismatch("covariate file repeats a voter id".into()));
        }
        let mut source = Vec::with_capacity(m);
        for id in &ballots.ids {
            match by_id.get(id.as_str()) {
                Some(&r) => source.push(r),
                None => return Err(Error::IdMismatch(format!("voter {id:?} has no covariate row"))),
            }
        }
        if table.ids.len() != m {
            let known: BTreeSet<&str> = ballots.ids.iter().map(String::as_str).collect();
            let extra = table
                .ids
                .iter()
                .find(|id| !known.contains(id.as_str()))
                .expect("more covariate rows than ballots");
            return Err(Error::IdMismatch(format!("voter {extra:?} has covariates but no ballot")));
        }
        // Data lines start at 2, after the header.
        let line_of = |r: usize| r + 2;
        for (col, name) in table.columns.iter().enumerate() {
            let first = names.len();
            match categorical.iter().find(|c| &c.column == name) {
                Some(decl) => {
                    let levels = match &decl.levels {
                        Some(l) => l.clone(),
                        None => table
                            .cells
                            .iter()
                            .map(|r| r[col].clone())
                            .collect::<BTreeSet<_>>()
                            .into_iter()
                            .collect(),
                    };
                    if !levels.contains(&decl.reference) {
                        return Err(Error::InvalidConfig(format!(
                            "reference {:?} is not a level of {name:?}",
                            decl.reference
                        )));
                    }
                    let dummies: Vec<&String> = levels.iter().filter(|l| **l != decl.reference).collect();
                    for (i, &r) in source.iter().enumerate() {
                        let v = &table.cells[r][col];
                        if !levels.contains(v) {
                            return Err(parse_err(
                                line_of(r) as u64,
                                format!("{v:?} is not a declared level of {name:?}"),
                            ));
                        }
                        rows[i].extend(dummies.iter().map(|l| f64::from(u8::from(*l == v))));
                    }
                    names.extend(dummies.iter().map(|l| format!("{name}={l}")));
                }
                None => {
                    for (i, &r) in source.iter().enumerate() {
                        let cell = &table.cells[r][col];
                        let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                            parse_err(
                                line_of(r) as u64,
                                format!("{name}: {cell:?} is not a finite number"),
                            )
                        })?;
                        rows[i].push(v);
                    }
                    names.push(name.clone());
                }
            }
            groups.push(CovariateGroup {
                name: name.clone(),
                columns: (first..names.len()).collect(),
            });
        }
    } else if !categorical.is_empty() {
        return Err(Error::InvalidConfig("categorical columns declared without a covariate file".into()));
    }
    let standardizer = if standardize && !names.is_empty() {
        let (scaled, s) = standardize_covariates(&rows)?;
        rows = scaled;
        Some(s)
    } else {
        None
    };
    let dataset = Dataset::new(
        ballots.candidates.len(),
        ballots.ballots.clone(),
        rows,
        ballots.candidates.clone(),
        names,
    )?;
    Ok(Design {
        dataset,
        ids: ballots.ids.clone(),
        groups,
        standardizer,
    })
}

fn round_trips(name: &str) -> bool {
    !name.is_empty() && name.trim() == name
}

/// Writes a dataset as a ballot file and a covariate file with ids `1..=M`.
/// Reading both back with [`parse_ballots`] (given the candidate list),
/// [`parse_covariates`] and an unstandardized [`build_design`] reproduces it.
pub fn write_dataset(data: &Dataset) -> Result<(String, String)> {
    if let Some(bad) = data
        .candidate_names()
        .iter()
        .chain(data.covariate_names())
        .find(|n| !round_trips(n))
    {
        return Err(Error::InvalidParams(format!(
            "name {bad:?} is empty or has surrounding whitespace"
        )));
    }
    let ids: Vec<String> = (1..=data.n_voters()).map(|i| i.to_string()).collect();
    let ballots = write_ballots(&BallotTable {
        ids: ids.clone(),
        candidates: data.candidate_names().to_vec(),
        ballots: data.ballots().to_vec(),
    })?;
    let covs = write_covariates(&CovariateTable {
        ids,
        columns: data.covariate_names().to_vec(),
        cells: (0..data.n_voters())
            .map(|i| data.covariates(i).iter().map(f64::to_string).collect())
            .collect(),
    })?;
    Ok((ballots, covs))
}

/// A value with its standard error, when one is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    /// 1-based.
    pub component: usize,
    pub marginal_mixing: f64,
    /// In candidate order.
    pub support: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingTerm {
    /// `intercept` or a design column name.
    pub term: String,
    pub log_odds: f64,
    pub se: Option<f64>,
    pub odds_ratio: f64,
    pub ci95_lower: Option<f64>,
    pub ci95_upper: Option<f64>,
}

/// Log-odds of one component against component 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingReport {
    /// 1-based, at least 2.
    pub component: usize,
    pub terms: Vec<GatingTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub covariate: String,
    pub min: f64,
    pub range: f64,
}

/// The fit report: one document from which every table and plot is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub n_voters: usize,
    pub n_components: usize,
    pub plackett_luce: bool,
    pub candidates: Vec<String>,
    pub covariates: Vec<String>,
    pub standardization: Option<Vec<ScaleReport>>,
    pub components: Vec<ComponentReport>,
    pub dampening: Vec<Estimate>,
    pub gating: Vec<GatingReport>,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub main_loop_start: usize,
    pub unidentified_dampening: Vec<usize>,
    pub starts: Vec<StartOutcome>,
    pub best_start: usize,
    pub seed: u64,
    pub config: FitConfig,
}

fn report_err(m: impl Into<String>) -> Error {
    Error::InvalidParams(format!("inconsistent report: {}", m.into()))
}

impl FitReport {
    pub fn new(
        data: &Dataset,
        result: &FitResult,
        config: &FitConfig,
        standardizer: Option<&Standardizer>,
    ) -> Self {
        let params = &result.params;
        let se = result.standard_errors.as_ref();
        let k = params.n_components();
        let components = (0..k)
            .map(|c| ComponentReport {
                component: c + 1,
                marginal_mixing: result.marginal_mixing[c],
                support: params.support[c]
                    .iter()
                    .enumerate()
                    .map(|(j, &value)| Estimate {
                        value,
                        se: se.and_then(|s| s.support[c][j]),
                    })
                    .collect(),
            })
            .collect();
        let dampening = params
            .dampening
            .iter()
            .enumerate()
            .map(|(t, &value)| Estimate {
                value,
                se: se.and_then(|s| s.dampening[t]),
            })
            .collect();
        let mut terms_names = vec!["intercept".to_string()];
        terms_names.extend(data.covariate_names().iter().cloned());
        let gating = (1..k)
            .map(|c| GatingReport {
                component: c + 1,
                terms: params
                    .gating
                    .row(c)
                    .iter()
                    .zip(&terms_names)
                    .enumerate()
                    .map(|(l, (&beta, term))| gating_term(term, beta, se.and_then(|s| s.gating[c][l])))
                    .collect(),
            })
            .collect();
        let n_params = count_free_params(
            k,
            data.n_candidates(),
            data.n_covariates(),
            config.fix_plackett_luce,
        );
        FitReport {
            n_voters: data.n_voters(),
            n_components: k,
            plackett_luce: config.fix_plackett_luce,
            candidates: data.candidate_names().to_vec(),
            covariates: data.covariate_names().to_vec(),
            standardization: standardizer.map(|s| {
                s.columns
                    .iter()
                    .zip(data.covariate_names())
                    .map(|(c, name)| ScaleReport {
                        covariate: name.clone(),
                        min: c.min,
                        range: c.range,
                    })
                    .collect()
            }),
            components,
            dampening,
            gating,
            loglik: result.final_loglik,
            n_params,
            bic: bic(result.final_loglik, n_params, data.n_voters()),
            converged: result.converged,
            iterations: result.iterations,
            loglik_trace: result.loglik_trace.clone(),
            main_loop_start: result.main_loop_start,
            unidentified_dampening: result.unidentified_dampening.clone(),
            starts: result.starts.clone(),
            best_start: result.best_start,
            seed: config.seed,
            config: config.clone(),
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a report and checks it for internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let r: FitReport = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        r.check_consistency()?;
        Ok(r)
    }

    /// The model parameters embedded in the report.
    pub fn params(&self) -> Result<MoEParams> {
        let width = self.covariates.len() + 1;
        let mut rows = vec![vec![0.0; width]];
        for g in &self.gating {
            if g.terms.len() != width {
                return Err(report_err(format!("component {} has {} gating terms", g.component, g.terms.len())));
            }
            rows.push(g.terms.iter().map(|t| t.log_odds).collect());
        }
        let params = MoEParams {
            support: self
                .components
                .iter()
                .map(|c| c.support.iter().map(|e| e.value).collect())
                .collect(),
            dampening: self.dampening.iter().map(|e| e.value).collect(),
            gating: GatingParams::new(rows)?,
        };
        params.validate()?;
        Ok(params)
    }

    /// Verifies that every derived number recomputes from the estimates.
    pub fn check_consistency(&self) -> Result<()> {
        let k = self.n_components;
        let n = self.candidates.len();
        if k == 0 || self.components.len() != k || self.gating.len() != k - 1 {
            return Err(report_err("component count"));
        }
        if self.dampening.len() != n || self.components.iter().any(|c| c.support.len() != n) {
            return Err(report_err("candidate count"));
        }
        for (c, comp) in self.components.iter().enumerate() {
            if comp.component != c + 1 {
                return Err(report_err("component numbering"));
            }
        }
        for (c, g) in self.gating.iter().enumerate() {
            if g.component != c + 2 {
                return Err(report_err("gating numbering"));
            }
            for t in &g.terms {
                if *t != gating_term(&t.term, t.log_odds, t.se) {
                    return Err(report_err(format!("odds ratio for {:?}", t.term)));
                }
            }
        }
        self.params()?;
        let mix: f64 = self.components.iter().map(|c| c.marginal_mixing).sum();
        if (mix - 1.0).abs() > 1e-8 {
            return Err(report_err(format!("mixing proportions sum to {mix}")));
        }
        let expect = count_free_params(k, n, self.covariates.len(), self.plackett_luce);
        if self.n_params != expect {
            return Err(report_err("parameter count"));
        }
        if self.bic != bic(self.loglik, self.n_params, self.n_voters) {
            return Err(report_err("BIC"));
        }
        if self.loglik_trace.last() != Some(&self.loglik) {
            return Err(report_err("log-likelihood trace"));
        }
        if self.seed != self.config.seed || self.plackett_luce != self.config.fix_plackett_luce {
            return Err(report_err("config echo"));
        }
        if let Some(s) = &self.standardization {
            if s.len() != self.covariates.len() {
                return Err(report_err("standardization"));
            }
        }
        Ok(())
    }
}

fn gating_term(term: &str, beta: f64, se: Option<f64>) -> GatingTerm {
    let (odds_ratio, lo, hi) = match se {
        Some(s) => {
            let (or, lo, hi) = odds_ratio_interval(beta, s);
            (or, Some(lo), Some(hi))
        }
        None => (beta.exp(), None, None),
    };
    GatingTerm {
        term: term.to_string(),
        log_odds: beta,
        se,
        odds_ratio,
        ci95_lower: lo,
        ci95_upper: hi,
    }
}

/// One rectangle of the mosaic: a component column of width equal to its
/// mixing proportion, split vertically by support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicSegment {
    pub component: usize,
    pub candidate: String,
    pub x0: f64,
    pub x1: f64,
    pub width: f64,
    pub y0: f64,
    pub y1: f64,
    pub height: f64,
}

pub fn mosaic(report: &FitReport) -> Vec<MosaicSegment> {
    let mut out = Vec::new();
    let mut x = 0.0;
    for c in &report.components {
        let mut y = 0.0;
        for (e, name) in c.support.iter().zip(&report.candidates) {
            out.push(MosaicSegment {
                component: c.component,
                candidate: name.clone(),
                x0: x,
                x1: x + c.marginal_mixing,
                width: c.marginal_mixing,
                y0: y,
                y1: y + e.value,
                height: e.value,
            });
            y += e.value;
        }
        x += c.marginal_mixing;
    }
    out
}

pub fn mosaic_csv(segments: &[MosaicSegment]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in segments {
        w.serialize(s).map_err(write_err)?;
    }
    finish_writer(w)
}

/// One row of the model ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub rank: usize,
    pub bic: Option<f64>,
    pub k: usize,
    pub covariates: Vec<String>,
    pub loglik: Option<f64>,
    pub n_params: usize,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n_voters: usize,
    pub k_range: Vec<usize>,
    pub seed: u64,
    pub models: Vec<SelectionRow>,
}

impl SelectionReport {
    pub fn new(scores: &[ModelScore], k_range: &[usize], seed: u64) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        SelectionReport {
            n_voters: scores.first().map_or(0, |s| s.n_voters),
            k_range: k_range.to_vec(),
            seed,
            models: scores
                .iter()
                .enumerate()
                .map(|(i, s)| SelectionRow {
                    rank: i + 1,
                    bic: finite(s.bic),
                    k: s.k,
                    covariates: s.covariates.clone(),
                    loglik: finite(s.final_loglik),
                    n_params: s.n_params,
                    converged: s.fit.as_ref().map(|f| f.converged),
                    error: s.error.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// `BIC  K  Covariates` table.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:>12}  {:>2}  Covariates\n", "BIC", "K");
        for m in &self.models {
            let b = m.bic.map_or("failed".to_string(), |b| format!("{b:.2}"));
            let cov = if m.covariates.is_empty() {
                "-".to_string()
            } else {
                m.covariates.join(", ")
            };
            out.push_str(&format!("{b:>12}  {:>2}  {cov}\n", m.k));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StvRound {
    pub round: usize,
    /// In candidate order; `None` once excluded.
    pub totals: Vec<Option<u64>>,
    pub eliminated: Vec<String>,
    pub elected: Vec<String>,
    pub nontransferable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StvReport {
    pub candidates: Vec<String>,
    pub valid_votes: u64,
    pub seats: usize,
    pub quota: u64,
    pub rounds: Vec<StvRound>,
    pub winner: String,
}

impl StvReport {
    pub fn new(result: &CountResult, candidates: &[String]) -> Self {
        let names = |v: &[usize]| v.iter().map(|&j| candidates[j].clone()).collect();
        StvReport {
            candidates: candidates.to_vec(),
            valid_votes: result.valid_votes,
            seats: 1,
            quota: result.quota,
            rounds: result
                .rounds
                .iter()
                .map(|r| StvRound {
                    round: r.round,
                    totals: r.totals.clone(),
                    eliminated: names(&r.eliminated),
                    elected: names(&r.elected),
                    nontransferable: r.nontransferable,
                })
                .collect(),
            winner: candidates[result.winner].clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Candidates down, counts across.
    pub fn to_table(&self) -> String {
        let name_w = self
            .candidates
            .iter()
            .map(String::len)
            .chain(["Nontransferable".len()])
            .max()
            .unwrap_or(0);
        let mut out = format!("Valid votes {}, quota {}\n", self.valid_votes, self.quota);
        out.push_str(&format!("{:name_w$}", "Candidate"));
        for r in &self.rounds {
            out.push_str(&format!("  {:>10}", format!("Count {}", r.round)));
        }
        out.push('\n');
        for (j, name) in self.candidates.iter().enumerate() {
            out.push_str(&format!("{name:name_w$}"));
            for r in &self.rounds {
                let cell = r.totals[j].map_or("-".to_string(), |t| t.to_string());
                out.push_str(&format!("  {cell:>10}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:name_w$}", "Nontransferable"));
        for r in &self.rounds {
            out.push_str(&format!("  {:>10}", r.nontransferable));
        }
        out.push('\n');
        out.push_str(&format!("Elected: {}\n", self.winner));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emm::fit;
    use crate::types::validate_dataset;
    use proptest::prelude::*;

    #[test]
    fn wide_ballots() {
        let t = parse_ballots("id,p1,p2,p3\nv1,A,B,\nv2,C,,\nv3,B,A,C\n", None).unwrap();
        assert_eq!(t.candidates, ["A", "B", "C"]);
        assert_eq!(t.ballots[0].ranking(), &[0, 1]);
        assert_eq!(t.ballots[1].ranking(), &[2]);
        assert_eq!(t.ids, ["v1", "v2", "v3"]);
        let again = parse_ballots(&write_ballots(&t).unwrap(), Some(&t.candidates)).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn wide_ballot_errors_carry_lines() {
        let line = |text: &str| match parse_ballots(text, None) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line("id,p1,p2\nv1,A,B\nv2,,B\n"), 3);
        assert_eq!(line("id,p1,p2\nv1,A,A\n"), 2);
        assert_eq!(line("id,p1,p2\nv1,A,B\nv2,,\n"), 3);
        assert_eq!(line("id,p1,p2\nv1,A,B\nv1,B,A\n"), 3);
        assert_eq!(line("id,p1\nv1,A,B\n"), 2);
        let fixed = vec!["A".to_string(), "B".to_string()];
        assert!(matches!(
            parse_ballots("id,p1\nv1,Z\n", Some(&fixed)),
            Err(Error::Parse { line: 2, .. })
        ));
        assert_eq!(parse_ballots("id,p1\n", None), Err(Error::EmptyDataset));
    }

    #[test]
    fn long_ballots() {
        let t = parse_long_ballots("voter,rank,candidate\na,2,Y\na,1,X\nb,1,Y\n", None).unwrap();
        assert_eq!(t.ids, ["a", "b"]);
        assert_eq!(t.candidates, ["Y", "X"]);
        assert_eq!(t.ballots[0].ranking(), &[1, 0]);
        assert!(parse_long_ballots("v,r,c\na,1,X\na,3,Y\n", None).is_err());
        assert!(parse_long_ballots("v,r,c\na,1,X\na,1,Y\n", None).is_err());
        assert!(parse_long_ballots("v,r,c\na,0,X\n", None).is_err());
    }

    #[test]
    fn design_with_categorical() {
        let b = parse_ballots("id,p1,p2\n1,A,B\n2,B,\n3,A,\n", None).unwrap();
        let c = parse_covariates("id,age,govt\n3,30,yes\n1,20,no\n2,40,dk\n").unwrap();
        let decl = vec![CategoricalDecl {
            column: "govt".into(),
            reference: "dk".into(),
            levels: None,
        }];
        let d = build_design(&b, Some(&c), &decl, false).unwrap();
        assert_eq!(d.dataset.covariate_names(), ["age", "govt=no", "govt=yes"]);
        assert_eq!(d.dataset.covariates(0), &[20.0, 1.0, 0.0]);
        assert_eq!(d.dataset.covariates(1), &[40.0, 0.0, 0.0]);
        assert_eq!(d.dataset.covariates(2), &[30.0, 0.0, 1.0]);
        assert_eq!(d.groups[1].columns, vec![1, 2]);
        let s = build_design(&b, Some(&c), &decl, true).unwrap();
        assert_eq!(s.dataset.covariates(0), &[0.0, 1.0, 0.0]);
        assert_eq!(s.dataset.covariates(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn design_errors() {
        let b = parse_ballots("id,p1\n1,A\n2,B\n", None).unwrap();
        let missing = parse_covariates("id,x\n1,0.5\n3,0.1\n").unwrap();
        assert!(matches!(build_design(&b, Some(&missing), &[], false), Err(Error::IdMismatch(_))));
        let extra = parse_covariates("id,x\n1,0.5\n2,0.1\n3,0.2\n").unwrap();
        assert!(matches!(build_design(&b, Some(&extra), &[], false), Err(Error::IdMismatch(_))));
        let bad = parse_covariates("id,x\n1,0.5\n2,abc\n").unwrap();
        assert!(matches!(
            build_design(&b, Some(&bad), &[], false),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_covariates("id,x\n1,0.5,7\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_config(
            "candidates = [\"A\", \"B\"]\n[fit]\nseed = 4\nfix_plackett_luce = true\n\
             [[categorical]]\ncolumn = \"g\"\nreference = \"x\"\n",
        )
        .unwrap();
        assert_eq!(cfg.fit.seed, 4);
        assert!(cfg.fit.fix_plackett_luce);
        assert!(cfg.standardize);
        assert_eq!(cfg.fit.max_emm_iters, FitConfig::default().max_emm_iters);
        assert_eq!(parse_config(&write_config(&cfg).unwrap()).unwrap(), cfg);
        assert!(parse_config("[fit]\nbogus = 1\n").is_err());
        assert!(parse_config("[fit]\naitken_tol = -1.0\n").is_err());
    }

    fn small_report() -> (Dataset, FitReport) {
        let raw = vec![vec![1, 2, 3], vec![2, 1], vec![1, 3], vec![3, 2, 1], vec![1], vec![2, 3, 1]];
        let cov = vec![vec![0.0], vec![0.2], vec![0.4], vec![0.6], vec![0.8], vec![1.0]];
        let d = validate_dataset(&raw, &cov, 3).unwrap();
        let cfg = FitConfig {
            mixture_warmup_iters: 10,
            gating_warmup_steps: 10,
            max_emm_iters: 100,
            n_random_starts: 2,
            ..FitConfig::default()
        };
        let r = fit(&d, 2, &cfg).unwrap();
        let report = FitReport::new(&d, &r, &cfg, None);
        (d, report)
    }

    #[test]
    fn report_round_trip_and_mosaic() {
        let (_, report) = small_report();
        report.check_consistency().unwrap();
        let text = report.to_json().unwrap();
        let back = FitReport::from_json(&text).unwrap();
        assert_eq!(back, report);
        let segs = mosaic(&back);
        assert_eq!(segs.len(), 6);
        for s in &segs {
            let c = &report.components[s.component - 1];
            let j = report.candidates.iter().position(|n| n == &s.candidate).unwrap();
            assert_eq!(s.height, c.support[j].value);
            assert_eq!(s.width, c.marginal_mixing);
        }
        assert!(mosaic_csv(&segs).unwrap().starts_with("component,candidate,"));
    }

    #[test]
    fn tampered_report_is_rejected() {
        let (_, mut report) = small_report();
        report.bic += 1.0;
        assert!(report.check_consistency().is_err());
        let (_, mut report) = small_report();
        report.gating[0].terms[0].odds_ratio *= 1.01;
        assert!(report.check_consistency().is_err());
        assert!(FitReport::from_json("{").is_err());
    }

    #[test]
    fn stv_report_table() {
        let b = parse_ballots(
            "id,p1,p2\n1,A,\n2,A,\n3,A,\n4,A,\n5,A,\n6,B,\n7,B,\n8,B,\n9,B,\n10,C,B\n11,C,B\n",
            None,
        )
        .unwrap();
        let r = crate::stv::count_election(&b.ballots, 3, 1, &Default::default()).unwrap();
        let rep = StvReport::new(&r, &b.candidates);
        assert_eq!(rep.quota, 6);
        assert_eq!(rep.winner, "B");
        let table = rep.to_table();
        assert!(table.contains("Count 2"));
        assert!(table.contains("Elected: B"));
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (2usize..6, 1usize..12, 0usize..3).prop_flat_map(|(n, m, l)| {
            let ballot = Just((0..n).collect::<Vec<usize>>())
                .prop_shuffle()
                .prop_flat_map(move |perm| (1..=n).prop_map(move |len| perm[..len].to_vec()));
            let row = prop::collection::vec(-1e6f64..1e6, l);
            (
                prop::collection::vec(ballot, m),
                prop::collection::vec(row, m),
            )
                .prop_map(move |(b, c)| {
                    let ballots = b.into_iter().map(|r| Ballot::new(r, n).unwrap()).collect();
                    let cand = (0..n).map(|j| format!("cand {j}")).collect();
                    let cov = (0..l).map(|j| format!("x,{j}")).collect();
                    Dataset::new(n, ballots, c, cand, cov).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn dataset_round_trip(d in arb_dataset()) {
            let (b, c) = write_dataset(&d).unwrap();
            let bt = parse_ballots(&b, Some(d.candidate_names())).unwrap();
            let ct = parse_covariates(&c).unwrap();
            let back = build_design(&bt, Some(&ct), &[], false).unwrap();
            prop_assert_eq!(back.dataset, d);
        }

        #[test]
        fn parsers_never_panic(s in "\\PC{0,200}") {
            let _ = parse_ballots(&s, None);
            let _ = parse_long_ballots(&s, None);
            let _ = parse_covariates(&s);
            let _ = parse_config(&s);
            let _ = FitReport::from_json(&s);
        }
    }
}
