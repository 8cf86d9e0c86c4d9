//! Faithfulness scoring, three-way bucketing of training references and the
//! hallucination control tokens prepended to the model input.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{tokenize_words, LinearizedGraph};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("text has no content tokens; overlap score undefined")]
    NoContentTokens,
    #[error("bucketing requires at least 3 scores, got {0}")]
    TooFewScores(usize),
    #[error("scores from multiple scorers in one bucketing run: {0:?}")]
    MixedScorers(Vec<String>),
    #[error("non-finite score {score} for sample {id}")]
    NonFiniteScore { id: String, score: f64 },
    #[error("source does not begin with a hallucination tag: {0:?}")]
    MissingTag(String),
}

/// Faithfulness of one reference against its linearized graph. Higher is more
/// faithful; the scale is scorer-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessScore {
    pub sample_id: String,
    pub score: f64,
    pub scorer_name: String,
}

/// Scorer interface: (linearized graph text, reference text) -> real.
/// Model-based scorers (e.g. a BARTScore service) are adapters over this
/// trait; the bundled lexical scorer runs offline.
pub trait Scorer {
    fn name(&self) -> &str;
    fn score(&self, linearized: &LinearizedGraph, text: &str) -> Result<f64, ControlError>;
}

/// Fraction of content tokens of the text that also occur in the linearized
/// graph. Content tokens exclude a stopword list and punctuation.
#[derive(Debug, Clone)]
pub struct LexicalOverlapScorer {
    pub stopwords: HashSet<String>,
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "be", "by", "for", "from", "has", "have", "in", "is", "it", "its", "of",
    "on", "or", "that", "the", "this", "to", "was", "were", "with",
];

impl LexicalOverlapScorer {
    pub fn new() -> Self {
        Self {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn without_stopwords() -> Self {
        Self {
            stopwords: HashSet::new(),
        }
    }

    fn content_tokens(&self, text: &str) -> Vec<String> {
        tokenize_words(text)
            .into_iter()
            .filter(|t| t.chars().any(|c| c.is_alphanumeric()))
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }
}

impl Default for LexicalOverlapScorer {
    fn default() -> Self {
        Self::new()
    }
}

impl Scorer for LexicalOverlapScorer {
    fn name(&self) -> &str {
        "lexical-overlap"
    }

    fn score(&self, linearized: &LinearizedGraph, text: &str) -> Result<f64, ControlError> {
        let content = self.content_tokens(text);
        if content.is_empty() {
            return Err(ControlError::NoContentTokens);
        }
        let graph_tokens: HashSet<String> = tokenize_words(&linearized.text).into_iter().collect();
        let supported = content.iter().filter(|t| graph_tokens.contains(*t)).count();
        Ok(supported as f64 / content.len() as f64)
    }
}

pub fn score_faithfulness(
    linearized: &LinearizedGraph,
    text: &str,
    scorer: &dyn Scorer,
    sample_id: &str,
) -> Result<FaithfulnessScore, ControlError> {
    let score = scorer.score(linearized, text)?;
    if !score.is_finite() {
        return Err(ControlError::NonFiniteScore {
            id: sample_id.to_string(),
            score,
        });
    }
    Ok(FaithfulnessScore {
        sample_id: sample_id.to_string(),
        score,
        scorer_name: scorer.name().to_string(),
    })
}

/// The control feature token: which hallucination bucket a reference fell in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationTag {
    HalLow,
    HalMedium,
    HalHigh,
}

impl HallucinationTag {
    pub const ALL: [HallucinationTag; 3] = [Self::HalLow, Self::HalMedium, Self::HalHigh];

    pub fn token(self) -> &'static str {
        match self {
            Self::HalLow => "<hal_low>",
            Self::HalMedium => "<hal_medium>",
            Self::HalHigh => "<hal_high>",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "<hal_low>" | "hal_low" => Some(Self::HalLow),
            "<hal_medium>" | "hal_medium" => Some(Self::HalMedium),
            "<hal_high>" | "hal_high" => Some(Self::HalHigh),
            _ => None,
        }
    }
}

impl std::fmt::Display for HallucinationTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// One bucketing run: every scored sample mapped to its tag, plus the score
/// boundaries that were used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub assignments: BTreeMap<String, (HallucinationTag, f64)>,
    /// (min score, max score) per tag, in HalLow/HalMedium/HalHigh order.
    pub boundaries: [(f64, f64); 3],
    pub scorer_name: String,
}

/// Splits scores into three near-equal buckets: stable sort by score
/// descending with ties broken by id ascending, then the most faithful third
/// becomes HalLow.
pub fn assign_buckets(scores: &[FaithfulnessScore]) -> Result<BucketAssignment, ControlError> {
    if scores.len() < 3 {
        return Err(ControlError::TooFewScores(scores.len()));
    }
    let scorers: std::collections::BTreeSet<String> = scores.iter().map(|s| s.scorer_name.clone()).collect();
    if scorers.len() > 1 {
        return Err(ControlError::MixedScorers(scorers.into_iter().collect()));
    }
    for s in scores {
        if !s.score.is_finite() {
            return Err(ControlError::NonFiniteScore {
                id: s.sample_id.clone(),
                score: s.score,
            });
        }
    }
    let mut ordered: Vec<&FaithfulnessScore> = scores.iter().collect();
    ordered.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });

    let n = ordered.len();
    let q = n / 3;
    let r = n % 3;
    let sizes = [q + usize::from(r > 0), q + usize::from(r > 1), q];

    let mut assignments = BTreeMap::new();
    let mut boundaries = [(f64::NAN, f64::NAN); 3];
    let mut cursor = 0;
    for (bucket, (&size, tag)) in sizes.iter().zip(HallucinationTag::ALL).enumerate() {
        let chunk = &ordered[cursor..cursor + size];
        boundaries[bucket] = (
            chunk.last().expect("bucket sizes are nonzero for n >= 3").score,
            chunk.first().expect("bucket sizes are nonzero for n >= 3").score,
        );
        for s in chunk {
            assignments.insert(s.sample_id.clone(), (tag, s.score));
        }
        cursor += size;
    }
    Ok(BucketAssignment {
        assignments,
        boundaries,
        scorer_name: ordered[0].scorer_name.clone(),
    })
}

/// Prepends the tag token to a linearization: `<tag> <H> ... <T> ...`.
pub fn apply_control_token(linearized: &LinearizedGraph, tag: HallucinationTag) -> String {
    format!("{} {}", tag.token(), linearized.text)
}

/// Splits a tagged source back into (tag, linearization).
pub fn strip_control_token(tagged: &str) -> Result<(HallucinationTag, &str), ControlError> {
    let mut parts = tagged.splitn(2, ' ');
    let first = parts.next().unwrap_or("");
    let tag = HallucinationTag::parse(first)
        .ok_or_else(|| ControlError::MissingTag(first.to_string()))?;
    Ok((tag, parts.next().unwrap_or("").trim_start()))
}
