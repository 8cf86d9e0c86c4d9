//! Salient-feature metrics: the most frequent relation labels in the
//! training set, and precision/recall restricted to facts about them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::facts::{fact_label, FactSet};
use crate::data::TextSample;

/// Salient precision/recall for one sample, plus the feature list they were
/// computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientEvalResult {
    pub precision: f64,
    pub recall: f64,
    pub salient_features: Vec<String>,
    /// True when the input contains no salient facts, making recall vacuous.
    pub recall_degenerate: bool,
}

/// Relation labels ranked by how many triples carry them across the training
/// set, ties broken by label ascending; the top `k` are returned. With fewer
/// than `k` distinct labels, all are returned with a warning.
pub fn rank_salient_features(train: &[TextSample], k: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sample in train {
        for relation in sample.graph.relations() {
            *counts.entry(relation).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if ranked.len() < k {
        log::warn!("only {} distinct relation labels for top-{k} salient ranking", ranked.len());
    }
    ranked.into_iter().take(k).map(|(label, _)| label.to_string()).collect()
}

fn is_salient(fact: &str, salient: &[String]) -> bool {
    let label = fact_label(fact);
    salient.iter().any(|s| s.to_lowercase() == label)
}

/// Restricts precision/recall to salient facts: precision divides the salient
/// common count by all output facts, recall by the salient input facts.
pub fn compute_salient(
    input_facts: &FactSet,
    common_facts: &FactSet,
    salient: &[String],
    n_output: usize,
) -> SalientEvalResult {
    let salient_common = common_facts.iter().filter(|f| is_salient(f, salient)).count();
    let salient_input = input_facts.iter().filter(|f| is_salient(f, salient)).count();
    let precision = if n_output == 0 {
        0.0
    } else {
        salient_common as f64 / n_output as f64
    };
    let (recall, recall_degenerate) = if salient_input == 0 {
        (0.0, true)
    } else {
        (salient_common as f64 / salient_input as f64, false)
    };
    SalientEvalResult {
        precision,
        recall,
        salient_features: salient.to_vec(),
        recall_degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{KGGraph, Split, Triple};

    fn sample(id: &str, relations: &[&str]) -> TextSample {
        let triples = relations
            .iter()
            .enumerate()
            .map(|(i, r)| Triple::new("h", *r, format!("v{i}")))
            .collect();
        TextSample {
            id: id.to_string(),
            graph: KGGraph::from_triples(triples).unwrap(),
            reference: Some("text".into()),
            split: Split::Train,
        }
    }

    #[test]
    fn ranking_is_frequency_then_label() {
        let train = vec![
            sample("a", &["beta", "alpha", "gamma"]),
            sample("b", &["beta", "gamma"]),
            sample("c", &["beta"]),
        ];
        assert_eq!(rank_salient_features(&train, 2), vec!["beta", "gamma"]);
        // Uniform frequencies fall back to pure lexicographic order.
        let uniform = vec![sample("a", &["c", "b", "a"])];
        assert_eq!(rank_salient_features(&uniform, 3), vec!["a", "b", "c"]);
    }

    #[test]
    fn ranking_is_permutation_invariant() {
        let mut train = vec![
            sample("a", &["x", "y"]),
            sample("b", &["y", "z"]),
            sample("c", &["y"]),
        ];
        let forward = rank_salient_features(&train, 3);
        train.reverse();
        assert_eq!(rank_salient_features(&train, 3), forward);
    }

    #[test]
    fn fewer_labels_than_k_returns_all() {
        let train = vec![sample("a", &["only"])];
        assert_eq!(rank_salient_features(&train, 10), vec!["only"]);
    }

    #[test]
    fn salient_precision_and_recall_hand_values() {
        let salient: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
        // All 10 salient features in input and common, 20 output facts.
        let input = FactSet::from_iter((0..10).map(|i| format!("f{i}: v")));
        let result = compute_salient(&input, &input, &salient, 20);
        assert!((result.precision - 0.5).abs() < 1e-12);
        assert!((result.recall - 1.0).abs() < 1e-12);
        assert!(!result.recall_degenerate);
    }

    #[test]
    fn no_salient_output_gives_zeroes() {
        let salient = vec!["wanted".to_string()];
        let input = FactSet::from_iter(["wanted: v".to_string(), "other: w".to_string()]);
        let common = FactSet::from_iter(["other: w".to_string()]);
        let result = compute_salient(&input, &common, &salient, 5);
        assert_eq!((result.precision, result.recall), (0.0, 0.0));
        assert!(!result.recall_degenerate);
    }

    #[test]
    fn no_salient_input_flags_recall() {
        let salient = vec!["wanted".to_string()];
        let input = FactSet::from_iter(["other: w".to_string()]);
        let result = compute_salient(&input, &FactSet::new(), &salient, 1);
        assert!(result.recall_degenerate);
    }
}
