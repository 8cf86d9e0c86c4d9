use std::collections::BTreeMap;
use std::path::Path;

use super::DataError;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

/// Reserved tokens, in id order. Marker and hallucination-tag tokens can never
/// be produced by corpus tokenization because `tokenize_words` splits `<`, `>`
/// and `_` into separate single-character tokens.
pub const RESERVED_LEN: usize = 10;

/// Ids of `<hal_low>`, `<hal_medium>`, `<hal_high>` in every vocabulary.
pub const HAL_TAG_IDS: [u32; 3] = [7, 8, 9];
pub const RESERVED: [&str; RESERVED_LEN] = [
    "<pad>",
    "<bos>",
    "<eos>",
    "<unk>",
    "<H>",
    "<R>",
    "<T>",
    "<hal_low>",
    "<hal_medium>",
    "<hal_high>",
];

/// Lowercases and splits a string into word tokens: maximal alphanumeric runs,
/// with every other non-whitespace character emitted as its own token.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.to_lowercase().chars() {
        if c.is_alphanumeric() {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Canonical surface form: word tokens joined by single spaces.
pub fn normalize_text(text: &str) -> String {
    tokenize_words(text).join(" ")
}

/// Token <-> id bijection with a fixed reserved prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary over the word tokens of `texts`. Non-reserved ids
    /// are assigned in ascending token order so the result is independent of
    /// corpus ordering.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for text in texts {
            tokens.extend(tokenize_words(text));
        }
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { token_to_id, id_to_token }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Tokenizes free text (lowercase, punctuation-separated) into ids, with
    /// OOV tokens mapped to UNK.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        tokenize_words(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect()
    }

    /// Tokenizes a (possibly tagged) linearization: whitespace tokens that are
    /// reserved markers map directly; everything else goes through word
    /// tokenization.
    pub fn encode_source(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for tok in text.split_whitespace() {
            if RESERVED.contains(&tok) {
                out.push(self.id(tok).expect("reserved tokens are always present"));
            } else {
                out.extend(tokenize_words(tok).iter().map(|t| self.id(t).unwrap_or(UNK_ID)));
            }
        }
        out
    }

    /// Linearizes a graph and encodes it, dropping trailing triples until the
    /// encoded length fits `max_ids`. The whitespace-token budget of
    /// [`crate::data::linearize_with_budget`] is not enough here: word
    /// tokenization can split a single surface token (for example
    /// `house_location`) into several ids.
    pub fn encode_graph(
        &self,
        graph: &crate::data::KGGraph,
        max_ids: usize,
    ) -> Result<(crate::data::LinearizedGraph, Vec<u32>), DataError> {
        let mut kept = graph.triples.len();
        loop {
            let lin = if kept == graph.triples.len() {
                crate::data::linearize(graph)?
            } else {
                let sub = crate::data::KGGraph::from_triples(graph.triples[..kept].to_vec())
                    .expect("prefix of a valid triple list stays valid");
                crate::data::linearize(&sub)?
            };
            let ids = self.encode_source(&lin.text);
            if ids.len() <= max_ids || kept == 1 {
                if kept < graph.triples.len() {
                    log::warn!(
                        "encoded linearization over budget; truncated to {kept} of {} triples",
                        graph.triples.len()
                    );
                }
                return Ok((lin, ids));
            }
            kept -= 1;
        }
    }

    /// Inverse of `encode_text` up to normalization; skips PAD/BOS/EOS.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id != PAD_ID && id != BOS_ID && id != EOS_ID)
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Stable content hash used to pair checkpoints with the vocabulary they
    /// were trained on.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (i, tok) in self.id_to_token.iter().enumerate() {
            hasher.update(format!("{i}\t{tok}\n"));
        }
        format!("{:x}", hasher.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let map: BTreeMap<&str, u32> = self
            .token_to_id
            .iter()
            .map(|(t, &id)| (t.as_str(), id))
            .collect();
        let json = serde_json::to_string_pretty(&map).expect("vocabulary serializes");
        std::fs::write(path, json).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let raw = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let map: BTreeMap<String, u32> =
            serde_json::from_str(&raw).map_err(|e| DataError::Vocab(format!("{}: {e}", path.display())))?;
        let mut id_to_token = vec![String::new(); map.len()];
        for (tok, id) in &map {
            let slot = id_to_token
                .get_mut(*id as usize)
                .ok_or_else(|| DataError::Vocab(format!("id {id} out of range for {} tokens", map.len())))?;
            if !slot.is_empty() {
                return Err(DataError::Vocab(format!("duplicate id {id}")));
            }
            *slot = tok.clone();
        }
        for (i, expect) in RESERVED.iter().enumerate() {
            if id_to_token.get(i).map(|s| s.as_str()) != Some(*expect) {
                return Err(DataError::Vocab(format!("reserved token {expect} missing from id {i}")));
            }
        }
        Ok(Self {
            token_to_id: map,
            id_to_token,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_separates_punctuation_and_lowercases() {
        assert_eq!(tokenize_words("Five bedrooms."), vec!["five", "bedrooms", "."]);
        assert_eq!(tokenize_words(""), Vec::<String>::new());
    }

    #[test]
    fn reserved_tags_cannot_come_from_corpus_text() {
        // Even adversarial corpus text splits into pieces, never the tag token.
        for toks in [tokenize_words("<hal_low>"), tokenize_words("x <H> y")] {
            for reserved in RESERVED {
                assert!(!toks.iter().any(|t| t == reserved), "{toks:?} contains {reserved}");
            }
        }
    }

    #[test]
    fn encode_text_maps_oov_to_unk() {
        let v = Vocabulary::build(["five bedrooms"]);
        let ids = v.encode_text("five pools");
        assert_eq!(ids[0], v.id("five").unwrap());
        assert_eq!(ids[1], UNK_ID);
    }

    #[test]
    fn encode_source_keeps_markers_atomic() {
        let v = Vocabulary::build(["house 5"]);
        let ids = v.encode_source("<hal_low> <H> house <R> num_bedrooms <T> 5");
        assert_eq!(ids[0], v.id("<hal_low>").unwrap());
        assert_eq!(ids[1], v.id("<H>").unwrap());
        assert_eq!(ids[2], v.id("house").unwrap());
    }

    #[test]
    fn decode_round_trips_normalized_text() {
        let v = Vocabulary::build(["Five bedrooms. Close to shops and transport"]);
        for text in ["Five bedrooms.", "close to shops", "bedrooms and transport."] {
            let round = v.decode(&v.encode_text(text));
            assert_eq!(round, normalize_text(text));
        }
    }

    #[test]
    fn save_load_preserves_bijection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = Vocabulary::build(["some words here", "and more words"]);
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
        assert_eq!(v.content_hash(), loaded.content_hash());
    }
}
