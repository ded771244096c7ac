//! Synthetic ballots drawn from a known mixture of experts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benter::sample_ballot;
use crate::error::{Error, Result};
use crate::gating::GatingParams;
use crate::io::{CategoricalDecl, CovariateTable};
use crate::types::{Dataset, MoEParams, SIMPLEX_TOL};

/// How one raw covariate column is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateSpec {
    /// Uniform on [0, 1]; one design column.
    Uniform { name: String },
    /// One design column per non-reference level (dummy coding). The first
    /// level is the reference.
    Categorical {
        name: String,
        levels: Vec<String>,
        probs: Vec<f64>,
    },
}

impl CovariateSpec {
    fn name(&self) -> &str {
        match self {
            CovariateSpec::Uniform { name } | CovariateSpec::Categorical { name, .. } => name,
        }
    }

    fn width(&self) -> usize {
        match self {
            CovariateSpec::Uniform { .. } => 1,
            CovariateSpec::Categorical { levels, .. } => levels.len().saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_voters: usize,
    /// Defaults to `C1..CN`.
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
    /// K rows over N candidates.
    pub support: Vec<Vec<f64>>,
    pub dampening: Vec<f64>,
    /// K rows of `1 + design width` coefficients; row 0 must be zero.
    pub gating: Vec<Vec<f64>>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    /// Probabilities of ballot lengths 1..=N.
    pub length_probs: Vec<f64>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn n_candidates(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn params(&self) -> Result<MoEParams> {
        let params = MoEParams {
            support: self.support.clone(),
            dampening: self.dampening.clone(),
            gating: GatingParams::new(self.gating.clone())?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn candidate_names(&self) -> Vec<String> {
        match &self.candidates {
            Some(c) => c.clone(),
            None => (1..=self.n_candidates()).map(|j| format!("C{j}")).collect(),
        }
    }

    /// Design column names: uniforms keep their name, dummies are
    /// `name=level`.
    pub fn design_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.covariates {
            match c {
                CovariateSpec::Uniform { name } => out.push(name.clone()),
                CovariateSpec::Categorical { name, levels, .. } => {
                    out.extend(levels[1..].iter().map(|l| format!("{name}={l}")))
                }
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GeneratorSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: GeneratorSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_voters == 0 {
            return bad("n_voters must be positive".into());
        }
        let n = self.n_candidates();
        let params = self.params()?;
        let width = 1 + self.covariates.iter().map(CovariateSpec::width).sum::<usize>();
        if params.gating.n_components() != params.n_components() {
            return bad(format!(
                "{} gating rows for {} components",
                params.gating.n_components(),
                params.n_components()
            ));
        }
        if params.gating.n_columns() != width {
            return bad(format!(
                "gating rows have {} entries, covariates need {width}",
                params.gating.n_columns()
            ));
        }
        if self.candidate_names().len() != n {
            return bad("candidate list length differs from support width".into());
        }
        check_probs("length_probs", &self.length_probs, n)?;
        let mut names: Vec<&str> = self.covariates.iter().map(CovariateSpec::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate covariate name".into());
        }
        for c in &self.covariates {
            if let CovariateSpec::Categorical { name, levels, probs } = c {
                if levels.len() < 2 {
                    return bad(format!("categorical {name} needs at least two levels"));
                }
                check_probs(name, probs, levels.len())?;
            }
        }
        Ok(())
    }
}

fn check_probs(what: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::InvalidSpec(format!("{what}: expected {len} probabilities, got {}", p.len())));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidSpec(format!("{what}: probabilities must be non-negative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e3 * SIMPLEX_TOL {
        return Err(Error::InvalidSpec(format!("{what}: probabilities sum to {s}")));
    }
    Ok(())
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// A generated dataset with the labels that produced it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    /// Covariates on their raw scale, dummies expanded.
    pub dataset: Dataset,
    /// 0-based true component per voter.
    pub labels: Vec<usize>,
    /// The raw covariate cells as they would appear in a covariate file.
    pub table: CovariateTable,
    /// Declarations for the categorical columns of `table`.
    pub categorical: Vec<CategoricalDecl>,
}

/// Sidecar written next to generated data: the generating spec and each
/// voter's true component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: GeneratorSpec,
    pub ids: Vec<String>,
    /// 1-based component per voter.
    pub labels: Vec<usize>,
}

impl Truth {
    pub fn new(spec: &GeneratorSpec, data: &Synthetic) -> Self {
        Truth {
            spec: spec.clone(),
            ids: data.table.ids.clone(),
            labels: data.labels.iter().map(|k| k + 1).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Draws `spec.n_voters` voters. Voter `i` uses its own ChaCha stream of
/// `spec.seed`, so the output is a pure function of the spec.
pub fn generate(spec: &GeneratorSpec) -> Result<Synthetic> {
    spec.validate()?;
    let params = spec.params()?;
    let n = spec.n_candidates();
    let mut ballots = Vec::with_capacity(spec.n_voters);
    let mut design = Vec::with_capacity(spec.n_voters);
    let mut cells = Vec::with_capacity(spec.n_voters);
    let mut labels = Vec::with_capacity(spec.n_voters);
    for i in 0..spec.n_voters {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let mut row = Vec::new();
        let mut raw = Vec::new();
        for c in &spec.covariates {
            match c {
                CovariateSpec::Uniform { .. } => {
                    let v: f64 = rng.random();
                    row.push(v);
                    raw.push(v.to_string());
                }
                CovariateSpec::Categorical { levels, probs, .. } => {
                    let lvl = draw_index(probs, &mut rng);
                    row.extend((1..levels.len()).map(|l| f64::from(u8::from(l == lvl))));
                    raw.push(levels[lvl].clone());
                }
            }
        }
        let mut w = Vec::with_capacity(row.len() + 1);
        w.push(1.0);
        w.extend_from_slice(&row);
        let k = draw_index(&params.gating.probs(&w)?, &mut rng);
        let len = draw_index(&spec.length_probs, &mut rng) + 1;
        let full = sample_ballot(&params.support[k], &params.dampening, len, &mut rng)?;
        ballots.push(full);
        design.push(row);
        cells.push(raw);
        labels.push(k);
    }
    let dataset = Dataset::new(n, ballots, design, spec.candidate_names(), spec.design_names())?;
    let table = CovariateTable {
        ids: (1..=spec.n_voters).map(|i| i.to_string()).collect(),
        columns: spec.covariates.iter().map(|c| c.name().to_string()).collect(),
        cells,
    };
    let categorical = spec
        .covariates
        .iter()
        .filter_map(|c| match c {
            CovariateSpec::Categorical { name, levels, .. } => Some(CategoricalDecl {
                column: name.clone(),
                reference: levels[0].clone(),
                levels: Some(levels.clone()),
            }),
            CovariateSpec::Uniform { .. } => None,
        })
        .collect();
    Ok(Synthetic {
        dataset,
        labels,
        table,
        categorical,
    })
}
