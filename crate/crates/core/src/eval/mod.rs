//! Bayesian hierarchical normalization of expert answer ratings.
//!
//! Scores follow `y = μ + α_rater + θ_prompt + γ_dimension + ε`,
//! `ε ~ N(0, σ²)`, fit jointly over every dimension in the table. Rater and
//! prompt effects are reported under sum-to-zero constraints; γ for a
//! dimension is its offset from the grand mean.

mod diagnostics;
mod gibbs;

pub use diagnostics::{effective_sample_size, quantile, split_rhat};
pub use gibbs::{fit, fit_chain, Chain};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 5.0;
pub const MIN_SAMPLES: usize = 1000;
/// Split-chain ratio above which a fit is flagged as not converged.
pub const RHAT_WARNING: f64 = 1.1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("line {line}: duplicate rating for rater {rater}, prompt {prompt}, {dimension}")]
    DuplicateCell { line: u64, rater: String, prompt: String, dimension: Dimension },
    #[error("line {line}: score {score} outside [0, 5]")]
    ScoreOutOfRange { line: u64, score: f64 },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("summary is for {summary}, scores requested for {requested}")]
    DimensionMismatch { summary: Dimension, requested: Dimension },
    #[error("rater {0} has no fitted effect")]
    UnknownRater(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    InformationRetrieval,
    AnswerStability,
    FactualAccuracy,
    ComparisonCapability,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::InformationRetrieval,
        Dimension::AnswerStability,
        Dimension::FactualAccuracy,
        Dimension::ComparisonCapability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::InformationRetrieval => "InformationRetrieval",
            Dimension::AnswerStability => "AnswerStability",
            Dimension::FactualAccuracy => "FactualAccuracy",
            Dimension::ComparisonCapability => "ComparisonCapability",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Dimension::InformationRetrieval => "IR",
            Dimension::AnswerStability => "AS",
            Dimension::FactualAccuracy => "FA",
            Dimension::ComparisonCapability => "CC",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    /// Full names (any case, `_`/`-`/space ignored) or two-letter codes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        Dimension::ALL
            .into_iter()
            .find(|d| folded == d.as_str().to_lowercase() || folded == d.code().to_lowercase())
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub rater: String,
    pub prompt: String,
    pub dimension: Dimension,
    pub score: f64,
}

/// Validated ratings: scores in [0, 5], each (rater, prompt, dimension) once.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RatingTable {
    rows: Vec<Rating>,
}

impl RatingTable {
    pub fn new(rows: Vec<Rating>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            let line = i as u64 + 1;
            if !r.score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&r.score) {
                return Err(EvalError::ScoreOutOfRange { line, score: r.score });
            }
            if !seen.insert((r.rater.clone(), r.prompt.clone(), r.dimension)) {
                return Err(EvalError::DuplicateCell {
                    line,
                    rater: r.rater.clone(),
                    prompt: r.prompt.clone(),
                    dimension: r.dimension,
                });
            }
        }
        Ok(RatingTable { rows })
    }

    pub fn rows(&self) -> &[Rating] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn raters(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.rater.as_str()).collect()
    }

    pub fn prompts(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.prompt.as_str()).collect()
    }

    pub fn dimensions(&self) -> BTreeSet<Dimension> {
        self.rows.iter().map(|r| r.dimension).collect()
    }

    pub fn for_dimension(&self, d: Dimension) -> impl Iterator<Item = &Rating> {
        self.rows.iter().filter(move |r| r.dimension == d)
    }

    /// Per-rater mean minus the overall mean, within one dimension.
    pub fn rater_deviations(&self, d: Dimension) -> BTreeMap<String, f64> {
        let rows: Vec<&Rating> = self.for_dimension(d).collect();
        if rows.is_empty() {
            return BTreeMap::new();
        }
        let grand = rows.iter().map(|r| r.score).sum::<f64>() / rows.len() as f64;
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in rows {
            let e = acc.entry(r.rater.clone()).or_default();
            e.0 += r.score;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64 - grand)).collect()
    }
}

/// Parses `rater_id,prompt_id,dimension,score` CSV. Line numbers in errors
/// count the header as line 1.
pub fn load_ratings<R: Read>(input: R) -> Result<RatingTable, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let header = reader.headers().map_err(|e| EvalError::MalformedRow { line: 1, reason: e.to_string() })?.clone();
    let expected = ["rater_id", "prompt_id", "dimension", "score"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(EvalError::MalformedRow { line: 1, reason: format!("expected header {}", expected.join(",")) });
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| EvalError::MalformedRow { line, reason: e.to_string() })?;
        if record.len() != 4 {
            return Err(EvalError::MalformedRow { line, reason: format!("{} fields, expected 4", record.len()) });
        }
        let field = |k: usize| record.get(k).unwrap_or_default().to_string();
        let (rater, prompt) = (field(0), field(1));
        if rater.is_empty() || prompt.is_empty() {
            return Err(EvalError::MalformedRow { line, reason: "empty rater or prompt id".into() });
        }
        let dimension: Dimension = field(2).parse().map_err(|reason| EvalError::MalformedRow { line, reason })?;
        let score: f64 = field(3)
            .parse()
            .map_err(|_| EvalError::MalformedRow { line, reason: format!("score {:?} is not a number", field(3)) })?;
        if !score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&score) {
            return Err(EvalError::ScoreOutOfRange { line, score });
        }
        if !seen.insert((rater.clone(), prompt.clone(), dimension)) {
            return Err(EvalError::DuplicateCell { line, rater, prompt, dimension });
        }
        rows.push(Rating { rater, prompt, dimension, score });
    }
    Ok(RatingTable { rows })
}

/// Prior settings. Variances, not standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub alpha_var: f64,
    pub theta_var: f64,
    pub gamma_var: f64,
    /// Inverse-gamma shape and scale for σ².
    pub sigma_shape: f64,
    pub sigma_scale: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            mu_mean: 2.5,
            mu_var: 100.0,
            alpha_var: 1.0,
            theta_var: 1.0,
            gamma_var: 1.0,
            sigma_shape: 2.0,
            sigma_scale: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), EvalError> {
        let positive = [
            ("mu_var", self.mu_var),
            ("alpha_var", self.alpha_var),
            ("theta_var", self.theta_var),
            ("gamma_var", self.gamma_var),
            ("sigma_shape", self.sigma_shape),
            ("sigma_scale", self.sigma_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EvalError::InvalidHyperparams(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.mu_mean.is_finite() {
            return Err(EvalError::InvalidHyperparams("mu_mean must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub n_samples: usize,
    pub n_burnin: usize,
    pub seed: u64,
}

impl FitSettings {
    /// Default chain lengths; the seed is always explicit.
    pub fn with_seed(seed: u64) -> Self {
        FitSettings { n_samples: 10_000, n_burnin: 2_000, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    /// Rao-Blackwellized posterior mean (average of the conditional means).
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Monte-Carlo standard error of `mean`.
    pub mcse: f64,
    pub ess: f64,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub dimension: Dimension,
    pub hyperparams: Hyperparams,
    pub settings: FitSettings,
    pub n_observations: usize,
    pub mu: ParameterSummary,
    pub alpha: BTreeMap<String, ParameterSummary>,
    pub theta: BTreeMap<String, ParameterSummary>,
    pub gamma: ParameterSummary,
    pub sigma2: ParameterSummary,
    /// Largest split-chain ratio over all reported parameters.
    pub max_rhat: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    pub fn parameters(&self) -> impl Iterator<Item = &ParameterSummary> {
        std::iter::once(&self.mu)
            .chain(self.alpha.values())
            .chain(self.theta.values())
            .chain([&self.gamma, &self.sigma2])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Fixed-width table of every parameter.
    pub fn render_table(&self) -> String {
        let mut s = format!(
            "dimension {}  observations {}  samples {}  burn-in {}  seed {}\n",
            self.dimension, self.n_observations, self.settings.n_samples, self.settings.n_burnin, self.settings.seed
        );
        s.push_str(&format!(
            "{:<28} {:>9} {:>8} {:>9} {:>9} {:>8} {:>7}\n",
            "parameter", "mean", "sd", "2.5%", "97.5%", "ess", "rhat"
        ));
        for p in self.parameters() {
            s.push_str(&format!(
                "{:<28} {:>9.4} {:>8.4} {:>9.4} {:>9.4} {:>8.0} {:>7.3}\n",
                p.name, p.mean, p.sd, p.lower, p.upper, p.ess, p.rhat
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedScore {
    pub rater: String,
    pub prompt: String,
    pub raw: f64,
    /// `raw − α̂_rater`.
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedScores {
    pub dimension: Dimension,
    pub scores: Vec<AdjustedScore>,
    /// Posterior mean of the dimension effect.
    pub dimension_effect: f64,
}

/// Removes each rater's estimated tendency from their scores on `dimension`.
pub fn adjusted_scores(
    table: &RatingTable,
    summary: &PosteriorSummary,
    dimension: Dimension,
) -> Result<AdjustedScores, EvalError> {
    if summary.dimension != dimension {
        return Err(EvalError::DimensionMismatch { summary: summary.dimension, requested: dimension });
    }
    let scores = table
        .for_dimension(dimension)
        .map(|r| {
            let a = summary.alpha.get(&r.rater).ok_or_else(|| EvalError::UnknownRater(r.rater.clone()))?;
            Ok(AdjustedScore {
                rater: r.rater.clone(),
                prompt: r.prompt.clone(),
                raw: r.score,
                corrected: r.score - a.mean,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(AdjustedScores { dimension, scores, dimension_effect: summary.gamma.mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_validate() {
        let csv =
            "rater_id,prompt_id,dimension,score\n1,1,IR,4.5\n1,2,InformationRetrieval,5\n2,1,answer_stability,3\n";
        let t = load_ratings(csv.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dimensions().len(), 2);

        let dup = "rater_id,prompt_id,dimension,score\n1,1,IR,4\n1,1,InformationRetrieval,3\n";
        assert!(matches!(load_ratings(dup.as_bytes()), Err(EvalError::DuplicateCell { line: 3, .. })));
        let high = "rater_id,prompt_id,dimension,score\n1,1,IR,7\n";
        assert_eq!(load_ratings(high.as_bytes()), Err(EvalError::ScoreOutOfRange { line: 2, score: 7.0 }));
        let bad = "rater_id,prompt_id,dimension,score\n1,1,XX,4\n";
        assert!(matches!(load_ratings(bad.as_bytes()), Err(EvalError::MalformedRow { line: 2, .. })));
        let short = "rater_id,prompt_id,dimension,score\n1,1,IR\n";
        assert!(matches!(load_ratings(short.as_bytes()), Err(EvalError::MalformedRow { line: 2, .. })));
        assert!(matches!(load_ratings("a,b\n".as_bytes()), Err(EvalError::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn dimension_names() {
        for d in Dimension::ALL {
            assert_eq!(d.as_str().parse::<Dimension>().unwrap(), d);
            assert_eq!(d.code().parse::<Dimension>().unwrap(), d);
        }
        assert_eq!("comparison capability".parse::<Dimension>().unwrap(), Dimension::ComparisonCapability);
    }
}
