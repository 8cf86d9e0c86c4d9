//! Positive and negative sample construction for the contrastive objective:
//! paraphrase-based positives and cross-graph negatives, with an optional
//! major-feature heuristic for house-style data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TextSample;

#[derive(Debug, Error)]
pub enum ContrastError {
    #[error("anchor {0} has no reference text")]
    MissingReference(String),
    #[error("insufficient negative pool: required {required}, available {available}")]
    InsufficientPool { required: usize, available: usize },
    #[error("paraphraser failure: {0}")]
    Paraphraser(String),
    #[error("positive count must be >= 1")]
    ZeroPositives,
}

/// Text-to-text paraphrase interface. Remote back-translation implementations
/// plug in here; the bundled offline paraphraser keeps tests deterministic.
pub trait Paraphraser {
    fn paraphrase(&self, text: &str, seed: u64) -> Result<String, ContrastError>;
}

/// Seeded synonym substitution plus sentence reordering. With an empty synonym
/// table and reordering disabled this is the identity.
#[derive(Debug, Clone)]
pub struct OfflineParaphraser {
    pub synonyms: BTreeMap<String, Vec<String>>,
    pub reorder_clauses: bool,
}

impl OfflineParaphraser {
    pub fn identity() -> Self {
        Self {
            synonyms: BTreeMap::new(),
            reorder_clauses: false,
        }
    }

    /// A small default table of filler adjectives/verbs. Entity-like tokens
    /// (numbers, names, feature values) are deliberately not included so that
    /// paraphrasing preserves graph-entity mentions.
    pub fn default_table() -> Self {
        let mut synonyms = BTreeMap::new();
        for (word, subs) in [
            ("spacious", vec!["roomy", "generous"]),
            ("beautiful", vec!["lovely", "charming"]),
            ("close", vec!["near"]),
            ("features", vec!["offers", "includes"]),
            ("comprising", vec!["consisting of"]),
            ("stunning", vec!["impressive"]),
            ("large", vec!["sizeable"]),
        ] {
            synonyms.insert(word.to_string(), subs.into_iter().map(String::from).collect());
        }
        Self {
            synonyms,
            reorder_clauses: true,
        }
    }
}

impl Paraphraser for OfflineParaphraser {
    fn paraphrase(&self, text: &str, seed: u64) -> Result<String, ContrastError> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut sentences: Vec<String> = split_sentences(text);
        if self.reorder_clauses && sentences.len() > 1 {
            sentences.shuffle(&mut rng);
        }
        let rebuilt = sentences.join(" ");
        let mut out_tokens = Vec::new();
        for tok in rebuilt.split_whitespace() {
            let key = tok.to_lowercase();
            match self.synonyms.get(key.trim_end_matches(|c: char| !c.is_alphanumeric())) {
                Some(subs) if !subs.is_empty() => {
                    let choice = &subs[rng.random_range(0..subs.len())];
                    let trailing: String = tok.chars().rev().take_while(|c| !c.is_alphanumeric()).collect();
                    let trailing: String = trailing.chars().rev().collect();
                    out_tokens.push(format!("{choice}{trailing}"));
                }
                _ => out_tokens.push(tok.to_string()),
            }
        }
        Ok(out_tokens.join(" "))
    }
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        cur.push(c);
        if c == '.' || c == '!' || c == '?' {
            let trimmed = cur.trim().to_string();
            if !trimmed.is_empty() {
                out.push(trimmed);
            }
            cur.clear();
        }
    }
    let trimmed = cur.trim().to_string();
    if !trimmed.is_empty() {
        out.push(trimmed);
    }
    out
}

/// Anchor plus its positive set and negative set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContrastiveSet {
    pub anchor_id: String,
    pub positives: Vec<String>,
    pub negatives: Vec<NegativeSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NegativeSample {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub positive_count: usize,
    pub negative_count: usize,
    pub house_heuristic: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            positive_count: 2,
            negative_count: 4,
            house_heuristic: false,
        }
    }
}

/// Generates `count` paraphrases of the anchor reference with distinct seeds.
pub fn make_positives(
    anchor: &TextSample,
    paraphraser: &dyn Paraphraser,
    count: usize,
    seed: u64,
) -> Result<Vec<String>, ContrastError> {
    if count == 0 {
        return Err(ContrastError::ZeroPositives);
    }
    let reference = anchor
        .reference
        .as_deref()
        .ok_or_else(|| ContrastError::MissingReference(anchor.id.clone()))?;
    (0..count)
        .map(|i| paraphraser.paraphrase(reference, seed.wrapping_add(i as u64)))
        .collect()
}

fn sorted_candidates<'a>(anchor: &TextSample, pool: &'a [TextSample]) -> Vec<&'a TextSample> {
    let mut candidates: Vec<&TextSample> = pool
        .iter()
        .filter(|s| s.id != anchor.id && s.reference.is_some())
        .collect();
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    candidates
}

fn draw<'a>(candidates: &mut Vec<&'a TextSample>, count: usize, rng: &mut ChaCha12Rng) -> Vec<&'a TextSample> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.min(candidates.len()) {
        let idx = rng.random_range(0..candidates.len());
        out.push(candidates.swap_remove(idx));
    }
    out
}

fn to_negatives(picked: Vec<&TextSample>) -> Vec<NegativeSample> {
    let mut out: Vec<NegativeSample> = picked
        .into_iter()
        .map(|s| NegativeSample {
            id: s.id.clone(),
            text: s.reference.clone().expect("candidates were filtered on reference"),
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Uniform draw of `count` other references, without replacement. Candidates
/// are id-sorted first so the result only depends on ids and the seed, not on
/// pool ordering.
pub fn make_negatives_random(
    anchor: &TextSample,
    pool: &[TextSample],
    count: usize,
    seed: u64,
) -> Result<Vec<NegativeSample>, ContrastError> {
    let mut candidates = sorted_candidates(anchor, pool);
    if candidates.len() < count {
        return Err(ContrastError::InsufficientPool {
            required: count,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok(to_negatives(draw(&mut candidates, count, &mut rng)))
}

/// The six major features of a house graph, extracted by relation label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MajorFeatureProfile {
    pub location: Option<String>,
    pub address: Option<String>,
    pub bedrooms: Option<String>,
    pub bathrooms: Option<String>,
    pub parking_spaces: Option<String>,
    pub property_type: Option<String>,
}

impl MajorFeatureProfile {
    pub fn extract(sample: &TextSample) -> Self {
        let mut profile = Self::default();
        for t in &sample.graph.triples {
            let slot = match t.relation.as_str() {
                "house_location" => &mut profile.location,
                "house_address" => &mut profile.address,
                "bedrooms" => &mut profile.bedrooms,
                "bathrooms" => &mut profile.bathrooms,
                "parking spaces" => &mut profile.parking_spaces,
                "house_property-type" => &mut profile.property_type,
                _ => continue,
            };
            if slot.is_none() {
                *slot = Some(t.tail.clone());
            }
        }
        profile
    }

    fn fields(&self) -> [&Option<String>; 6] {
        [
            &self.location,
            &self.address,
            &self.bedrooms,
            &self.bathrooms,
            &self.parking_spaces,
            &self.property_type,
        ]
    }
}

/// A candidate is an eligible hard negative iff at least 4 of the 6 major
/// features are present in both profiles and every co-present feature differs.
pub fn house_eligible(anchor: &MajorFeatureProfile, candidate: &MajorFeatureProfile) -> bool {
    let mut co_present = 0;
    for (a, c) in anchor.fields().iter().zip(candidate.fields().iter()) {
        if let (Some(av), Some(cv)) = (a, c) {
            if av == cv {
                return false;
            }
            co_present += 1;
        }
    }
    co_present >= 4
}

/// Negatives via the house major-feature heuristic, topped up with random
/// draws when fewer than `count` candidates are eligible.
pub fn make_negatives_house(
    anchor: &TextSample,
    pool: &[TextSample],
    count: usize,
    seed: u64,
) -> Result<Vec<NegativeSample>, ContrastError> {
    let candidates = sorted_candidates(anchor, pool);
    if candidates.len() < count {
        return Err(ContrastError::InsufficientPool {
            required: count,
            available: candidates.len(),
        });
    }
    let anchor_profile = MajorFeatureProfile::extract(anchor);
    let (mut eligible, mut rest): (Vec<&TextSample>, Vec<&TextSample>) = candidates
        .into_iter()
        .partition(|c| house_eligible(&anchor_profile, &MajorFeatureProfile::extract(c)));
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut picked = draw(&mut eligible, count, &mut rng);
    if picked.len() < count {
        picked.extend(draw(&mut rest, count - picked.len(), &mut rng));
    }
    Ok(to_negatives(picked))
}

/// Derives a per-anchor seed so that sets are stable under pool reordering.
pub fn anchor_seed(run_seed: u64, anchor_id: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(anchor_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is at least 8 bytes"))
}

/// Builds the full contrastive set for one anchor.
pub fn build_contrastive_set(
    anchor: &TextSample,
    pool: &[TextSample],
    paraphraser: &dyn Paraphraser,
    config: &SamplerConfig,
    run_seed: u64,
) -> Result<ContrastiveSet, ContrastError> {
    let seed = anchor_seed(run_seed, &anchor.id);
    let positives = make_positives(anchor, paraphraser, config.positive_count, seed)?;
    let negatives = if config.house_heuristic {
        make_negatives_house(anchor, pool, config.negative_count, seed)?
    } else {
        make_negatives_random(anchor, pool, config.negative_count, seed)?
    };
    Ok(ContrastiveSet {
        anchor_id: anchor.id.clone(),
        positives,
        negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize_text, KGGraph, Split, Triple};

    fn sample(id: &str, triples: &[(&str, &str, &str)], text: &str) -> TextSample {
        TextSample {
            id: id.into(),
            graph: KGGraph::from_triples(triples.iter().map(|(h, r, t)| Triple::new(*h, *r, *t)).collect())
                .unwrap(),
            reference: Some(text.into()),
            split: Split::Train,
        }
    }

    fn pool(n: usize) -> Vec<TextSample> {
        (0..n)
            .map(|i| {
                sample(
                    &format!("s{i:03}"),
                    &[("house", "bedrooms", &format!("{}", i % 9 + 1))],
                    &format!("text number {i}"),
                )
            })
            .collect()
    }

    #[test]
    fn identity_paraphraser_returns_anchor_verbatim() {
        let anchor = sample("a", &[("h", "r", "t")], "Exactly this text.");
        let out = make_positives(&anchor, &OfflineParaphraser::identity(), 1, 7).unwrap();
        assert_eq!(out, vec!["Exactly this text."]);
    }

    #[test]
    fn paraphrase_is_deterministic_in_text_and_seed() {
        let p = OfflineParaphraser::default_table();
        let text = "A spacious home. Close to shops. Beautiful garden views.";
        assert_eq!(p.paraphrase(text, 3).unwrap(), p.paraphrase(text, 3).unwrap());
    }

    #[test]
    fn paraphrase_preserves_entity_mentions() {
        let p = OfflineParaphraser::default_table();
        let anchor = sample(
            "a",
            &[("house", "bedrooms", "5"), ("house", "house_location", "niddrie")],
            "A spacious house in Niddrie. Features 5 bedrooms. Close to shops.",
        );
        let before = normalize_text(anchor.reference.as_ref().unwrap());
        for seed in 0..20 {
            let out = make_positives(&anchor, &p, 1, seed).unwrap();
            let after = normalize_text(&out[0]);
            for entity in &anchor.graph.entities {
                let needle = normalize_text(entity);
                assert_eq!(
                    count_occurrences(&before, &needle),
                    count_occurrences(&after, &needle),
                    "entity {entity:?} mention count changed under seed {seed}"
                );
            }
        }
    }

    fn count_occurrences(haystack: &str, needle: &str) -> usize {
        if needle.is_empty() {
            return 0;
        }
        haystack.split(' ').filter(|w| *w == needle).count()
            + if needle.contains(' ') {
                haystack.matches(needle).count()
            } else {
                0
            }
    }

    #[test]
    fn random_negatives_exclude_anchor_and_are_seed_stable() {
        let pool = pool(8);
        let anchor = pool[0].clone();
        for seed in 0..1000 {
            let negs = make_negatives_random(&anchor, &pool, 4, seed).unwrap();
            assert_eq!(negs.len(), 4);
            assert!(negs.iter().all(|n| n.id != anchor.id));
        }
        let a = make_negatives_random(&anchor, &pool, 4, 42).unwrap();
        let b = make_negatives_random(&anchor, &pool, 4, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forced_cardinality_when_pool_is_exactly_count_plus_one() {
        let pool = pool(5);
        let anchor = pool[0].clone();
        let negs = make_negatives_random(&anchor, &pool, 4, 0).unwrap();
        let mut ids: Vec<&str> = negs.iter().map(|n| n.id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec!["s001", "s002", "s003", "s004"]);
    }

    #[test]
    fn insufficient_pool_names_counts() {
        let pool = pool(3);
        let anchor = pool[0].clone();
        match make_negatives_random(&anchor, &pool, 4, 0).unwrap_err() {
            ContrastError::InsufficientPool { required, available } => {
                assert_eq!((required, available), (4, 2));
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn negatives_stable_under_pool_reordering() {
        let pool = pool(10);
        let anchor = pool[2].clone();
        let mut reversed = pool.clone();
        reversed.reverse();
        assert_eq!(
            make_negatives_random(&anchor, &pool, 4, 9).unwrap(),
            make_negatives_random(&anchor, &reversed, 4, 9).unwrap()
        );
        assert_eq!(
            make_negatives_house(&anchor, &pool, 4, 9).unwrap(),
            make_negatives_house(&anchor, &reversed, 4, 9).unwrap()
        );
    }

    fn house(id: &str, loc: &str, addr: &str, bed: &str, bath: &str, park: &str, ptype: &str) -> TextSample {
        sample(
            id,
            &[
                ("house", "house_location", loc),
                ("house", "house_address", addr),
                ("house", "bedrooms", bed),
                ("house", "bathrooms", bath),
                ("house", "parking spaces", park),
                ("house", "house_property-type", ptype),
            ],
            &format!("a {ptype} in {loc}"),
        )
    }

    #[test]
    fn all_six_differing_is_eligible() {
        let a = MajorFeatureProfile::extract(&house("a", "x", "1 st", "3", "1", "2", "house"));
        let b = MajorFeatureProfile::extract(&house("b", "y", "2 st", "4", "2", "1", "unit"));
        assert!(house_eligible(&a, &b));
    }

    #[test]
    fn shared_bedrooms_is_ineligible() {
        let a = MajorFeatureProfile::extract(&house("a", "x", "1 st", "3", "1", "2", "house"));
        let b = MajorFeatureProfile::extract(&house("b", "y", "2 st", "3", "2", "1", "unit"));
        assert!(!house_eligible(&a, &b));
    }

    #[test]
    fn eligibility_is_symmetric() {
        let profiles: Vec<MajorFeatureProfile> = (0..12)
            .map(|i| {
                let mut s = house(
                    &format!("h{i}"),
                    &format!("loc{}", i % 4),
                    &format!("{} st", i % 5),
                    &format!("{}", i % 3 + 1),
                    &format!("{}", i % 2 + 1),
                    &format!("{}", i % 4),
                    if i % 2 == 0 { "house" } else { "unit" },
                );
                if i % 3 == 0 {
                    s.graph.triples.retain(|t| t.relation != "house_address");
                }
                MajorFeatureProfile::extract(&s)
            })
            .collect();
        for a in &profiles {
            for b in &profiles {
                assert_eq!(house_eligible(a, b), house_eligible(b, a));
            }
        }
    }

    #[test]
    fn house_negatives_match_brute_force_eligibility() {
        let pool: Vec<TextSample> = (0..20)
            .map(|i| {
                house(
                    &format!("h{i:02}"),
                    &format!("loc{i}"),
                    &format!("{i} st"),
                    &format!("{}", i % 6),
                    &format!("{}", i % 4),
                    &format!("{}", i % 5),
                    &format!("type{}", i % 3),
                )
            })
            .collect();
        let anchor = pool[0].clone();
        let anchor_profile = MajorFeatureProfile::extract(&anchor);
        let brute: std::collections::BTreeSet<String> = pool
            .iter()
            .filter(|c| c.id != anchor.id)
            .filter(|c| house_eligible(&anchor_profile, &MajorFeatureProfile::extract(c)))
            .map(|c| c.id.clone())
            .collect();
        // Draw with a large count so every eligible candidate must appear
        // before any random top-up.
        let count = brute.len();
        let negs = make_negatives_house(&anchor, &pool, count, 5).unwrap();
        let drawn: std::collections::BTreeSet<String> = negs.into_iter().map(|n| n.id).collect();
        assert_eq!(drawn, brute);
    }

    #[test]
    fn house_negatives_top_up_from_random_when_too_few_eligible() {
        // All candidates share bedrooms with the anchor -> zero eligible.
        let pool: Vec<TextSample> = (0..6)
            .map(|i| house(&format!("h{i}"), &format!("loc{i}"), &format!("{i} st"), "3", "1", "1", "house"))
            .collect();
        let anchor = pool[0].clone();
        let negs = make_negatives_house(&anchor, &pool, 4, 1).unwrap();
        assert_eq!(negs.len(), 4);
        assert!(negs.iter().all(|n| n.id != anchor.id));
    }
}
