//! Tag-conditioned generation: greedy and beam-search decoding over a trained
//! model. The encoder runs once per call; each step re-scores the prefix.

use ndarray::Array2;

use super::net::{Builder, ForwardMode, Seq2Seq};
use super::ModelError;
use crate::control::HallucinationTag;
use crate::data::{KGGraph, Vocabulary, BOS_ID, EOS_ID, HAL_TAG_IDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStrategy {
    Greedy,
    Beam { width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingResult {
    /// Emitted token ids, including the terminating EOS when one was produced.
    pub tokens: Vec<u32>,
    /// Log-probability of each emitted token under the model.
    pub log_probs: Vec<f64>,
    /// The hallucination tag the source was conditioned on; `None` for
    /// untagged sources (ablations without the control token).
    pub tag: Option<HallucinationTag>,
}

impl DecodingResult {
    pub fn score(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

fn tag_of_id(id: u32) -> Option<HallucinationTag> {
    HAL_TAG_IDS
        .iter()
        .position(|&t| t == id)
        .map(|i| HallucinationTag::ALL[i])
}

fn tag_id(tag: HallucinationTag) -> u32 {
    let i = HallucinationTag::ALL.iter().position(|&t| t == tag).expect("tag is in ALL");
    HAL_TAG_IDS[i]
}

/// Log-probabilities of the next token given the emitted prefix.
fn next_log_probs(model: &Seq2Seq, enc_value: &Array2<f64>, src: &[u32], emitted: &[u32]) -> Result<Vec<f64>, ModelError> {
    let mut tgt_in = Vec::with_capacity(emitted.len() + 1);
    tgt_in.push(BOS_ID);
    tgt_in.extend_from_slice(emitted);
    let mut b = Builder::new(model, ForwardMode::Eval);
    let enc = b.tape.leaf(enc_value.clone());
    let hidden = b.decode(enc, src, &tgt_in)?;
    let logits = b.logits(hidden);
    let all = b.tape.value(logits);
    let row = all.row(all.nrows() - 1);
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(row.iter().map(|&x| x - lse).collect())
}

/// Linearizes the graph (within the source budget), prepends the control
/// token and decodes.
pub fn generate(
    model: &Seq2Seq,
    vocab: &Vocabulary,
    graph: &KGGraph,
    tag: HallucinationTag,
    strategy: DecodeStrategy,
) -> Result<DecodingResult, ModelError> {
    let (_lin, mut src) = vocab.encode_graph(graph, model.config.max_source_len)?;
    src.insert(0, tag_id(tag));
    generate_from_source(model, &src, strategy)
}

/// Decodes from an already-encoded source. A leading hallucination tag token
/// is detected and reported back in the result; untagged sources are allowed
/// for ablations trained without the control token.
pub fn generate_from_source(
    model: &Seq2Seq,
    src: &[u32],
    strategy: DecodeStrategy,
) -> Result<DecodingResult, ModelError> {
    let tag = src.first().and_then(|&id| tag_of_id(id));
    let mut b = Builder::new(model, ForwardMode::Eval);
    let enc = b.encode(src)?;
    let enc_value = b.tape.value(enc).clone();
    drop(b);
    let (tokens, log_probs) = match strategy {
        DecodeStrategy::Greedy => greedy(model, &enc_value, src)?,
        DecodeStrategy::Beam { width } => beam(model, &enc_value, src, width.max(1))?,
    };
    Ok(DecodingResult { tokens, log_probs, tag })
}

fn greedy(model: &Seq2Seq, enc_value: &Array2<f64>, src: &[u32]) -> Result<(Vec<u32>, Vec<f64>), ModelError> {
    let mut tokens = Vec::new();
    let mut log_probs = Vec::new();
    for _ in 0..model.config.max_target_len {
        let lp = next_log_probs(model, enc_value, src, &tokens)?;
        // First-max tie-break: the lowest id among equal maxima.
        let (best, &best_lp) = lp
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).expect("finite log-probs").then(ib.cmp(ia)))
            .expect("vocabulary is non-empty");
        tokens.push(best as u32);
        log_probs.push(best_lp);
        if best as u32 == EOS_ID {
            break;
        }
    }
    Ok((tokens, log_probs))
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<u32>,
    log_probs: Vec<f64>,
    score: f64,
    finished: bool,
}

/// Deterministic ordering of hypotheses: score descending, then shorter
/// first, then lexicographically smaller token sequence.
fn rank(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .expect("finite scores")
        .then_with(|| a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn beam(
    model: &Seq2Seq,
    enc_value: &Array2<f64>,
    src: &[u32],
    width: usize,
) -> Result<(Vec<u32>, Vec<f64>), ModelError> {
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        log_probs: Vec::new(),
        score: 0.0,
        finished: false,
    }];
    for _ in 0..model.config.max_target_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates = Vec::new();
        for h in &beam {
            if h.finished {
                candidates.push(h.clone());
                continue;
            }
            let lp = next_log_probs(model, enc_value, src, &h.tokens)?;
            // Only the `width` best continuations of a hypothesis can make
            // the next beam; ties prefer the lower token id.
            let mut ranked: Vec<(usize, f64)> = lp.into_iter().enumerate().collect();
            ranked.sort_by(|(ia, a), (ib, b)| b.partial_cmp(a).expect("finite log-probs").then(ia.cmp(ib)));
            for &(tok, tok_lp) in ranked.iter().take(width) {
                let mut tokens = h.tokens.clone();
                tokens.push(tok as u32);
                let mut log_probs = h.log_probs.clone();
                log_probs.push(tok_lp);
                candidates.push(Hypothesis {
                    score: h.score + tok_lp,
                    finished: tok as u32 == EOS_ID,
                    tokens,
                    log_probs,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(width);
        beam = candidates;
    }
    beam.sort_by(rank);
    let best = beam.into_iter().next().expect("beam is never empty");
    Ok((best.tokens, best.log_probs))
}
