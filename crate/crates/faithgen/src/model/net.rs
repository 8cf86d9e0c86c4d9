//! The desk-scale attention encoder-decoder. Pre-norm transformer blocks,
//! single parameter list so the optimizer and checkpointing stay generic.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::ModelError;
use crate::data::PAD_ID;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Embedding and hidden width (shared).
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub dropout: f64,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            hidden_dim: 128,
            ffn_dim: 256,
            encoder_layers: 2,
            decoder_layers: 2,
            attention_heads: 2,
            dropout: 0.0,
            max_source_len: 600,
            max_target_len: 128,
            learning_rate: 3e-5,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden_dim", self.hidden_dim),
            ("ffn_dim", self.ffn_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("attention_heads", self.attention_heads),
            ("max_source_len", self.max_source_len),
            ("max_target_len", self.max_target_len),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be > 0")));
            }
        }
        if self.hidden_dim % self.attention_heads != 0 {
            return Err(ModelError::Config(format!(
                "hidden_dim {} not divisible by attention_heads {}",
                self.hidden_dim, self.attention_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.learning_rate <= 0.0 {
            return Err(ModelError::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// The model: a flat named-parameter list plus its config.
#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub(crate) names: Vec<String>,
    pub(crate) params: Vec<Array2<f64>>,
    pub(crate) index: BTreeMap<String, usize>,
}

impl Seq2Seq {
    /// Parameter tensors in declaration order; aligned with the gradient
    /// vector returned by batch computation.
    pub fn param_tensors(&self) -> &[Array2<f64>] {
        &self.params
    }

    /// Mutable access to the parameter tensors, e.g. for finite-difference
    /// probing.
    pub fn param_tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }
}

fn xavier(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl Seq2Seq {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let d = config.hidden_dim;
        let f = config.ffn_dim;
        let v = config.vocab_size;
        let mut names = Vec::new();
        let mut params = Vec::new();
        let push = |names: &mut Vec<String>, params: &mut Vec<Array2<f64>>, name: String, t: Array2<f64>| {
            names.push(name);
            params.push(t);
        };
        push(&mut names, &mut params, "embed".into(), xavier(&mut rng, v, d));
        // +1 rows leave room for the prepended control token / BOS.
        push(&mut names, &mut params, "pos_src".into(), xavier(&mut rng, config.max_source_len + 1, d));
        push(&mut names, &mut params, "pos_tgt".into(), xavier(&mut rng, config.max_target_len + 1, d));
        let attn_block = |names: &mut Vec<String>, params: &mut Vec<Array2<f64>>, rng: &mut ChaCha12Rng, prefix: &str| {
            for suffix in ["wq", "wk", "wv", "wo"] {
                names.push(format!("{prefix}.{suffix}"));
                params.push(xavier(rng, d, d));
            }
        };
        let norm_block = |names: &mut Vec<String>, params: &mut Vec<Array2<f64>>, prefix: &str| {
            names.push(format!("{prefix}_g"));
            params.push(Array2::ones((1, d)));
            names.push(format!("{prefix}_b"));
            params.push(Array2::zeros((1, d)));
        };
        let ffn_block = |names: &mut Vec<String>, params: &mut Vec<Array2<f64>>, rng: &mut ChaCha12Rng, prefix: &str| {
            names.push(format!("{prefix}.ffn_w1"));
            params.push(xavier(rng, d, f));
            names.push(format!("{prefix}.ffn_b1"));
            params.push(Array2::zeros((1, f)));
            names.push(format!("{prefix}.ffn_w2"));
            params.push(xavier(rng, f, d));
            names.push(format!("{prefix}.ffn_b2"));
            params.push(Array2::zeros((1, d)));
        };
        for l in 0..config.encoder_layers {
            let p = format!("enc{l}");
            norm_block(&mut names, &mut params, &format!("{p}.ln1"));
            attn_block(&mut names, &mut params, &mut rng, &format!("{p}.self"));
            norm_block(&mut names, &mut params, &format!("{p}.ln2"));
            ffn_block(&mut names, &mut params, &mut rng, &p);
        }
        norm_block(&mut names, &mut params, "enc_final");
        for l in 0..config.decoder_layers {
            let p = format!("dec{l}");
            norm_block(&mut names, &mut params, &format!("{p}.ln1"));
            attn_block(&mut names, &mut params, &mut rng, &format!("{p}.self"));
            norm_block(&mut names, &mut params, &format!("{p}.ln2"));
            attn_block(&mut names, &mut params, &mut rng, &format!("{p}.cross"));
            norm_block(&mut names, &mut params, &format!("{p}.ln3"));
            ffn_block(&mut names, &mut params, &mut rng, &p);
        }
        norm_block(&mut names, &mut params, "dec_final");
        push(&mut names, &mut params, "out_w".into(), xavier(&mut rng, d, v));
        push(&mut names, &mut params, "out_b".into(), Array2::zeros((1, v)));

        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self {
            config,
            names,
            params,
            index,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub(crate) fn idx(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }
}

/// Whether a forward pass applies dropout (with a deterministic mask seed).
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    Eval,
    Train { mask_seed: u64 },
}

/// Builds one computation graph over the model parameters. All sequences of
/// one training item (anchor, positives, negatives) share a single builder so
/// their losses backpropagate into the same parameter leaves.
pub struct Builder<'a> {
    pub tape: Tape,
    model: &'a Seq2Seq,
    param_nodes: Vec<NodeId>,
    dropout_rng: Option<ChaCha12Rng>,
}

impl<'a> Builder<'a> {
    pub fn new(model: &'a Seq2Seq, mode: ForwardMode) -> Self {
        let mut tape = Tape::new();
        let param_nodes = model.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let dropout_rng = match mode {
            ForwardMode::Train { mask_seed } if model.config.dropout > 0.0 => {
                Some(ChaCha12Rng::seed_from_u64(mask_seed))
            }
            _ => None,
        };
        Self {
            tape,
            model,
            param_nodes,
            dropout_rng,
        }
    }

    fn p(&self, name: &str) -> NodeId {
        self.param_nodes[self.model.idx(name)]
    }

    /// Extracts per-parameter gradients from a full tape gradient vector.
    pub fn param_grads(&self, grads: &[Array2<f64>]) -> Vec<Array2<f64>> {
        self.param_nodes.iter().map(|id| grads[id.index()].clone()).collect()
    }

    fn dropout(&mut self, x: NodeId) -> NodeId {
        let p = self.model.config.dropout;
        let Some(rng) = self.dropout_rng.as_mut() else {
            return x;
        };
        let dim = self.tape.value(x).dim();
        let keep = 1.0 - p;
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.tape.mul_const(x, mask)
    }

    fn norm(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let normed = self.tape.layer_norm_rows(x);
        let scaled = self.tape.mul_row(normed, self.p(&format!("{prefix}_g")));
        self.tape.add_row(scaled, self.p(&format!("{prefix}_b")))
    }

    /// Multi-head scaled-dot attention. `mask` is additive (0 allowed,
    /// `Tape::mask_value()` blocked), shape (query len, key len).
    fn attention(&mut self, queries: NodeId, memory: NodeId, prefix: &str, mask: Option<&Array2<f64>>) -> NodeId {
        let heads = self.model.config.attention_heads;
        let dh = self.model.config.hidden_dim / heads;
        let q = self.tape.matmul(queries, self.p(&format!("{prefix}.wq")));
        let k = self.tape.matmul(memory, self.p(&format!("{prefix}.wk")));
        let v = self.tape.matmul(memory, self.p(&format!("{prefix}.wv")));
        let mut outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = self.tape.slice_cols(q, lo, hi);
            let kh = self.tape.slice_cols(k, lo, hi);
            let vh = self.tape.slice_cols(v, lo, hi);
            let scores = self.tape.matmul_bt(qh, kh);
            let scores = self.tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let scores = match mask {
                Some(m) => self.tape.add_const(scores, m.clone()),
                None => scores,
            };
            let attn = self.tape.softmax_rows(scores);
            outputs.push(self.tape.matmul(attn, vh));
        }
        let merged = self.tape.concat_cols(&outputs);
        self.tape.matmul(merged, self.p(&format!("{prefix}.wo")))
    }

    fn embed(&mut self, ids: &[u32], pos_table: &str) -> NodeId {
        let indices: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        let tok = self.tape.gather_rows(self.p("embed"), &indices);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = self.tape.gather_rows(self.p(pos_table), &positions);
        self.tape.add(tok, pos)
    }

    /// Encoder stack. Returns the final-norm encoder states, (src len, d).
    pub fn encode(&mut self, src: &[u32]) -> Result<NodeId, ModelError> {
        let max = self.model.config.max_source_len + 1;
        if src.is_empty() || src.len() > max {
            return Err(ModelError::LengthOverflow {
                kind: "source",
                len: src.len(),
                max,
            });
        }
        let key_mask = pad_key_mask(src, src.len());
        let mut x = self.embed(src, "pos_src");
        for l in 0..self.model.config.encoder_layers {
            let p = format!("enc{l}");
            let normed = self.norm(x, &format!("{p}.ln1"));
            let attn = self.attention(normed, normed, &format!("{p}.self"), key_mask.as_ref());
            let attn = self.dropout(attn);
            x = self.tape.add(x, attn);
            let normed = self.norm(x, &format!("{p}.ln2"));
            let ff = self.ffn(normed, &p);
            let ff = self.dropout(ff);
            x = self.tape.add(x, ff);
        }
        Ok(self.norm(x, "enc_final"))
    }

    fn ffn(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let h = self.tape.matmul(x, self.p(&format!("{prefix}.ffn_w1")));
        let h = self.tape.add_row(h, self.p(&format!("{prefix}.ffn_b1")));
        let h = self.tape.tanh(h);
        let h = self.tape.matmul(h, self.p(&format!("{prefix}.ffn_w2")));
        self.tape.add_row(h, self.p(&format!("{prefix}.ffn_b2")))
    }

    /// Decoder stack under teacher forcing: causal self-attention over
    /// `tgt_in`, cross-attention over the encoder states. Returns final-norm
    /// hidden states, (tgt len, d).
    pub fn decode(&mut self, enc: NodeId, src: &[u32], tgt_in: &[u32]) -> Result<NodeId, ModelError> {
        let max = self.model.config.max_target_len + 1;
        if tgt_in.is_empty() || tgt_in.len() > max {
            return Err(ModelError::LengthOverflow {
                kind: "target",
                len: tgt_in.len(),
                max,
            });
        }
        let n = tgt_in.len();
        let causal = causal_mask(tgt_in, n);
        let cross = pad_cross_mask(src, n);
        let mut x = self.embed(tgt_in, "pos_tgt");
        for l in 0..self.model.config.decoder_layers {
            let p = format!("dec{l}");
            let normed = self.norm(x, &format!("{p}.ln1"));
            let attn = self.attention(normed, normed, &format!("{p}.self"), Some(&causal));
            let attn = self.dropout(attn);
            x = self.tape.add(x, attn);
            let normed = self.norm(x, &format!("{p}.ln2"));
            let attn = self.attention(normed, enc, &format!("{p}.cross"), cross.as_ref());
            let attn = self.dropout(attn);
            x = self.tape.add(x, attn);
            let normed = self.norm(x, &format!("{p}.ln3"));
            let ff = self.ffn(normed, &p);
            let ff = self.dropout(ff);
            x = self.tape.add(x, ff);
        }
        Ok(self.norm(x, "dec_final"))
    }

    /// Vocabulary logits for every decoder position, (tgt len, vocab).
    pub fn logits(&mut self, hidden: NodeId) -> NodeId {
        let l = self.tape.matmul(hidden, self.p("out_w"));
        self.tape.add_row(l, self.p("out_b"))
    }
}

/// Key mask blocking PAD columns; `None` when nothing is padded.
fn pad_key_mask(keys: &[u32], query_len: usize) -> Option<Array2<f64>> {
    if keys.iter().all(|&t| t != PAD_ID) {
        return None;
    }
    Some(Array2::from_shape_fn((query_len, keys.len()), |(_, j)| {
        if keys[j] == PAD_ID {
            Tape::mask_value()
        } else {
            0.0
        }
    }))
}

fn pad_cross_mask(src: &[u32], query_len: usize) -> Option<Array2<f64>> {
    pad_key_mask(src, query_len)
}

/// Causal mask (position i sees j <= i), additionally blocking PAD keys.
fn causal_mask(tgt_in: &[u32], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if j <= i && tgt_in[j] != PAD_ID {
            0.0
        } else {
            Tape::mask_value()
        }
    })
}
