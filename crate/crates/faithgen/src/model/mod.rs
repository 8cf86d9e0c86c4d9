//! Desk-scale trainable encoder-decoder realizing the composite objective
//! (contrastive + control-token cross-entropy) and tag-conditioned decoding.

mod decode;
mod net;
pub mod tape;
mod trainer;

pub use decode::{generate, generate_from_source, DecodeStrategy, DecodingResult};
pub use net::{Builder, ForwardMode, ModelConfig, Seq2Seq};
pub use trainer::{
    compute_batch, Ablation, AdamState, Checkpoint, ContrastiveItem, LossBreakdown, TrainConfig, TrainItem,
    Trainer,
};

use ndarray::Array2;
use thiserror::Error;

use crate::data::{BOS_ID, PAD_ID};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{kind} length {len} exceeds maximum {max}")]
    LengthOverflow {
        kind: &'static str,
        len: usize,
        max: usize,
    },
    #[error("target sequence is empty or all padding")]
    EmptyTarget,
    #[error("source does not begin with a hallucination tag token")]
    MissingTagPrefix,
    #[error("zero-norm representation vector; cosine undefined")]
    ZeroNorm,
    #[error("non-finite loss at step {step}: l_cl={l_cl}, l_ce={l_ce}")]
    NonFiniteLoss { step: u64, l_cl: f64, l_ce: f64 },
    #[error("contrastive loss needs at least one positive and one negative")]
    EmptyContrastiveSet,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Teacher-forcing input for a target sequence: BOS followed by all but the
/// last target token.
pub fn shift_right(target: &[u32]) -> Vec<u32> {
    let mut input = Vec::with_capacity(target.len());
    input.push(BOS_ID);
    input.extend_from_slice(&target[..target.len().saturating_sub(1)]);
    input
}

fn non_pad_mask(target: &[u32]) -> Vec<f64> {
    target.iter().map(|&t| if t == PAD_ID { 0.0 } else { 1.0 }).collect()
}

/// One teacher-forced forward pass: per-position vocabulary logits and the
/// final-layer decoder hidden states.
pub fn encode_decode(
    model: &Seq2Seq,
    src: &[u32],
    tgt_in: &[u32],
) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
    let mut b = Builder::new(model, ForwardMode::Eval);
    let enc = b.encode(src)?;
    let hidden = b.decode(enc, src, tgt_in)?;
    let logits = b.logits(hidden);
    Ok((b.tape.value(logits).clone(), b.tape.value(hidden).clone()))
}

/// Mean of the final-layer decoder hidden states over non-pad positions of
/// `text`, teacher-forced against `src`.
pub fn decoder_representation(model: &Seq2Seq, src: &[u32], text: &[u32]) -> Result<Vec<f64>, ModelError> {
    let mask = non_pad_mask(text);
    if mask.iter().sum::<f64>() == 0.0 {
        return Err(ModelError::EmptyTarget);
    }
    let mut b = Builder::new(model, ForwardMode::Eval);
    let enc = b.encode(src)?;
    let hidden = b.decode(enc, src, &shift_right(text))?;
    let pooled = b.tape.mean_rows(hidden, &mask);
    Ok(b.tape.value(pooled).row(0).to_vec())
}

/// Configuration of the contrastive objective. The default follows the
/// printed objective exactly: denominator over negatives only, no temperature.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ContrastiveConfig {
    pub include_positive_in_denominator: bool,
    pub temperature: f64,
    /// Weight on the contrastive term in the total loss (1.0 = unweighted sum).
    pub lambda: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            include_positive_in_denominator: false,
            temperature: 1.0,
            lambda: 1.0,
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, ModelError> {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(ModelError::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Contrastive loss over representation vectors:
/// `-sum_j log( exp(cos(h_i,h_j)) / sum_k exp(cos(h_i,h_k)) )`
/// with the denominator over negatives only unless configured otherwise.
pub fn contrastive_loss(
    anchor: &[f64],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    cfg: &ContrastiveConfig,
) -> Result<f64, ModelError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(ModelError::EmptyContrastiveSet);
    }
    let t = cfg.temperature;
    let neg_sims: Vec<f64> = negatives
        .iter()
        .map(|n| cosine(anchor, n).map(|c| c / t))
        .collect::<Result<_, _>>()?;
    let mut loss = 0.0;
    for p in positives {
        let pos = cosine(anchor, p)? / t;
        let mut terms = neg_sims.clone();
        if cfg.include_positive_in_denominator {
            terms.push(pos);
        }
        loss -= pos - log_sum_exp(&terms);
    }
    Ok(loss)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Control-token cross-entropy: the source must begin with a hallucination
/// tag. Returns (summed NLL over non-pad positions, per-token mean).
pub fn ce_loss_with_control(
    model: &Seq2Seq,
    tagged_src: &[u32],
    target: &[u32],
    tag_ids: &[u32],
) -> Result<(f64, f64), ModelError> {
    if tagged_src.first().map(|t| !tag_ids.contains(t)).unwrap_or(true) {
        return Err(ModelError::MissingTagPrefix);
    }
    ce_loss(model, tagged_src, target)
}

/// Plain teacher-forced cross-entropy (used by the no-tag ablations).
pub fn ce_loss(model: &Seq2Seq, src: &[u32], target: &[u32]) -> Result<(f64, f64), ModelError> {
    let mask = non_pad_mask(target);
    let tokens: f64 = mask.iter().sum();
    if tokens == 0.0 {
        return Err(ModelError::EmptyTarget);
    }
    let mut b = Builder::new(model, ForwardMode::Eval);
    let enc = b.encode(src)?;
    let hidden = b.decode(enc, src, &shift_right(target))?;
    let logits = b.logits(hidden);
    let targets: Vec<usize> = target.iter().map(|&t| t as usize).collect();
    let loss = b.tape.cross_entropy_rows(logits, &targets, &mask);
    let sum = b.tape.scalar(loss);
    Ok((sum, sum / tokens))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> Seq2Seq {
        Seq2Seq::new(ModelConfig {
            vocab_size: 20,
            hidden_dim: 16,
            ffn_dim: 24,
            encoder_layers: 1,
            decoder_layers: 1,
            attention_heads: 2,
            max_source_len: 32,
            max_target_len: 16,
            seed: 11,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn single_target_position_gives_one_logit_row() {
        let m = toy_model();
        let (logits, hidden) = encode_decode(&m, &[10, 11, 12], &[BOS_ID]).unwrap();
        assert_eq!(logits.dim(), (1, 20));
        assert_eq!(hidden.dim(), (1, 16));
    }

    #[test]
    fn eval_mode_is_bitwise_deterministic() {
        let m = toy_model();
        let (a, _) = encode_decode(&m, &[10, 11, 12], &[BOS_ID, 13, 14]).unwrap();
        let (b, _) = encode_decode(&m, &[10, 11, 12], &[BOS_ID, 13, 14]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pad_suffix_does_not_change_logits() {
        let m = toy_model();
        let src = vec![10, 11, 12];
        let mut padded = src.clone();
        padded.extend([PAD_ID, PAD_ID, PAD_ID]);
        let (a, _) = encode_decode(&m, &src, &[BOS_ID, 13]).unwrap();
        let (b, _) = encode_decode(&m, &padded, &[BOS_ID, 13]).unwrap();
        assert_eq!(a, b, "padding the source suffix changed the logits");
    }

    #[test]
    fn length_overflow_rejected() {
        let m = toy_model();
        let long: Vec<u32> = (0..40).map(|i| 10 + i % 5).collect();
        assert!(matches!(
            encode_decode(&m, &long, &[BOS_ID]),
            Err(ModelError::LengthOverflow { kind: "source", .. })
        ));
    }

    #[test]
    fn representation_of_length_one_is_that_hidden_state() {
        let m = toy_model();
        let src = vec![10, 11];
        let rep = decoder_representation(&m, &src, &[13]).unwrap();
        let (_, hidden) = encode_decode(&m, &src, &shift_right(&[13])).unwrap();
        for (r, h) in rep.iter().zip(hidden.row(0)) {
            assert!((r - h).abs() < 1e-15);
        }
    }

    #[test]
    fn representation_is_padding_invariant() {
        let m = toy_model();
        let src = vec![10, 11, 12];
        let text = vec![13, 14, 15];
        let mut padded = text.clone();
        padded.extend([PAD_ID, PAD_ID]);
        let a = decoder_representation(&m, &src, &text).unwrap();
        let b = decoder_representation(&m, &src, &padded).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn different_texts_are_not_perfectly_aligned() {
        let m = toy_model();
        let src = vec![10, 11, 12];
        let a = decoder_representation(&m, &src, &[13, 14, 15]).unwrap();
        let b = decoder_representation(&m, &src, &[16, 17, 18, 19]).unwrap();
        let cos = cosine(&a, &b).unwrap();
        assert!(cos < 1.0 - 1e-9, "cos = {cos}");
    }

    #[test]
    fn contrastive_hand_values() {
        // one positive cos=1, one negative cos=0 -> -(1 - log e^0) = -1
        let anchor = vec![1.0, 0.0];
        let pos = vec![2.0, 0.0];
        let neg = vec![0.0, 3.0];
        let cfg = ContrastiveConfig::default();
        let l = contrastive_loss(&anchor, &[pos.clone()], &[neg.clone()], &cfg).unwrap();
        assert!((l - (-1.0)).abs() < 1e-12);
        // cos_pos = 0, two negatives cos=0 -> log 2
        let pos_orth = vec![0.0, 1.0];
        let neg2 = vec![0.0, -1.0];
        let l = contrastive_loss(&anchor, &[pos_orth], &[neg.clone(), neg2], &cfg).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        // symmetric cancellation: cos_p == cos_n with one negative -> 0
        let l = contrastive_loss(&anchor, &[neg.clone()], &[neg], &cfg).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn contrastive_rejects_zero_norm() {
        let cfg = ContrastiveConfig::default();
        assert!(matches!(
            contrastive_loss(&[0.0, 0.0], &[vec![1.0, 0.0]], &[vec![0.0, 1.0]], &cfg),
            Err(ModelError::ZeroNorm)
        ));
    }

    #[test]
    fn ce_uniform_logits_closed_form() {
        // A freshly built model is not uniform, so exercise the closed form
        // through the tape directly: uniform logits over 2 classes, 3 tokens.
        let mut t = tape::Tape::new();
        let logits = t.leaf(ndarray::Array2::zeros((3, 2)));
        let loss = t.cross_entropy_rows(logits, &[0, 1, 0], &[1.0, 1.0, 1.0]);
        assert!((t.scalar(loss) - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_with_control_requires_tag_prefix() {
        let m = toy_model();
        let tag_ids = vec![7, 8, 9];
        assert!(matches!(
            ce_loss_with_control(&m, &[10, 11], &[12], &tag_ids),
            Err(ModelError::MissingTagPrefix)
        ));
        assert!(ce_loss_with_control(&m, &[7, 10, 11], &[12], &tag_ids).is_ok());
    }

    #[test]
    fn teacher_forced_ce_matches_incremental_scoring() {
        let m = toy_model();
        let src = vec![10, 11, 12];
        let target = vec![13, 14, 15, 2];
        let (sum, _) = ce_loss(&m, &src, &target).unwrap();
        // Score each step by decoding the prefix and reading the last row.
        let mut incremental = 0.0;
        for i in 0..target.len() {
            let tgt_in = shift_right(&target[..=i]);
            let (logits, _) = encode_decode(&m, &src, &tgt_in).unwrap();
            let row = logits.row(logits.nrows() - 1);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            incremental += lse - row[target[i] as usize];
        }
        assert!((sum - incremental).abs() < 1e-9, "{sum} vs {incremental}");
    }

    #[test]
    fn contrastive_loss_scale_and_order_invariance() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let cfg = ContrastiveConfig::default();
        fn rand_vec(rng: &mut rand_chacha::ChaCha12Rng, dim: usize) -> Vec<f64> {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
        for _ in 0..50 {
            let anchor = rand_vec(&mut rng, 8);
            let pos: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 8)).collect();
            let neg: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 8)).collect();
            let base = contrastive_loss(&anchor, &pos, &neg, &cfg).unwrap();
            // order invariance
            let mut pos_r = pos.clone();
            pos_r.reverse();
            let mut neg_r = neg.clone();
            neg_r.reverse();
            let reordered = contrastive_loss(&anchor, &pos_r, &neg_r, &cfg).unwrap();
            assert!((base - reordered).abs() < 1e-12);
            // uniform scaling invariance
            let alpha = 3.7;
            let scale = |v: &Vec<f64>| v.iter().map(|x| x * alpha).collect::<Vec<f64>>();
            let scaled = contrastive_loss(
                &scale(&anchor),
                &pos.iter().map(scale).collect::<Vec<_>>(),
                &neg.iter().map(scale).collect::<Vec<_>>(),
                &cfg,
            )
            .unwrap();
            assert!((base - scaled).abs() < 1e-9);
        }
    }
}
