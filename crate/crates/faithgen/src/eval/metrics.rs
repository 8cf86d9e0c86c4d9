//! Surface-overlap metrics on token sequences: BLEU-4 with brevity penalty
//! and LCS-based ROUGE-L.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Cumulative BLEU-4 against a single reference: geometric mean of clipped
/// n-gram precisions (n = 1..4) times the brevity penalty. No smoothing: any
/// zero precision makes the score 0.
pub fn bleu4(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() {
        log::warn!("BLEU of an empty candidate is 0");
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let p = clipped_precision(candidate, reference, n);
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / 4.0).exp()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_precision(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    if cand.is_empty() {
        return 0.0;
    }
    let reference = ngram_counts(reference, n);
    let total: usize = cand.values().sum();
    let matched: usize = cand
        .iter()
        .map(|(gram, &count)| count.min(reference.get(gram).copied().unwrap_or(0)))
        .sum();
    matched as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// ROUGE-L: precision/recall from the longest common subsequence, combined
/// into an even-weighted F1.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    if candidate.is_empty() || reference.is_empty() {
        return RougeScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let lcs = lcs_len(candidate, reference) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeScore { precision, recall, f1 }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn identity_scores_one() {
        let t = toks("the cat sat on the mat");
        assert_eq!(bleu4(&t, &t), 1.0);
        let r = rouge_l(&t, &t);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn disjoint_scores_zero() {
        let a = toks("alpha beta gamma delta epsilon");
        let b = toks("one two three four five");
        assert_eq!(bleu4(&a, &b), 0.0);
        assert_eq!(rouge_l(&a, &b).f1, 0.0);
    }

    #[test]
    fn empty_candidate_is_zero() {
        assert_eq!(bleu4(&[], &toks("a b")), 0.0);
        assert_eq!(rouge_l(&[], &toks("a b")).f1, 0.0);
    }

    #[test]
    fn bleu_hand_computed_pair() {
        // candidate (10 tokens) vs reference (9 tokens).
        let cand = toks("the cat sat on the mat near the red door");
        let reference = toks("the cat sat on the mat by the door");
        // Clipped precisions counted by hand:
        //   1-grams: the(3),cat,sat,on,mat,door matched -> 8/10
        //   2-grams: "the cat","cat sat","sat on","on the","the mat" -> 5/9
        //   3-grams: 4/8; 4-grams: 3/7. c=10 > r=9 so BP=1.
        let expected = (0.8_f64 * (5.0 / 9.0) * 0.5 * (3.0 / 7.0)).powf(0.25);
        let got = bleu4(&cand, &reference);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let cand = toks("the cat sat on the mat");
        let mut reference = cand.clone();
        reference.extend(toks("in the hall"));
        // All n-gram precisions are 1, so the score is exactly BP.
        let expected = (1.0f64 - 9.0 / 6.0).exp();
        assert!((bleu4(&cand, &reference) - expected).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_computed_pair() {
        // LCS of these is "a b c" (length 3): P=3/5, R=3/4.
        let cand = toks("a x b y c");
        let reference = toks("a b z c");
        let r = rouge_l(&cand, &reference);
        assert!((r.precision - 0.6).abs() < 1e-12);
        assert!((r.recall - 0.75).abs() < 1e-12);
        assert!((r.f1 - 2.0 * 0.6 * 0.75 / 1.35).abs() < 1e-12);
    }

    /// Exhaustive LCS oracle: enumerate all subsequences of the shorter
    /// sequence and find the longest one contained in the other.
    fn brute_lcs(a: &[String], b: &[String]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let mut best = 0;
        for mask in 0u32..(1 << short.len()) {
            let sub: Vec<&String> = short
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, t)| t)
                .collect();
            if sub.len() > best && is_subsequence(&sub, long) {
                best = sub.len();
            }
        }
        best
    }

    fn is_subsequence(sub: &[&String], seq: &[String]) -> bool {
        let mut it = seq.iter();
        sub.iter().all(|want| it.any(|t| t == *want))
    }

    #[test]
    fn lcs_matches_exhaustive_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for _ in 0..200 {
            let len_a = rng.random_range(0..=10);
            let len_b = rng.random_range(0..=12);
            let gen = |rng: &mut rand_chacha::ChaCha12Rng, len: usize| -> Vec<String> {
                (0..len).map(|_| format!("t{}", rng.random_range(0..4))).collect()
            };
            let a = gen(&mut rng, len_a);
            let b = gen(&mut rng, len_b);
            assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b), "a={a:?} b={b:?}");
        }
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(32);
        for _ in 0..100 {
            let gen = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<String> {
                let len = rng.random_range(1..=15);
                (0..len).map(|_| format!("w{}", rng.random_range(0..6))).collect()
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let bleu = bleu4(&a, &b);
            assert!((0.0..=1.0).contains(&bleu));
            let rouge = rouge_l(&a, &b).f1;
            assert!((0.0..=1.0).contains(&rouge));
        }
    }
}
