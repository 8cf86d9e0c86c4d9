use serde::{Deserialize, Serialize};

use super::DataError;

/// One (head, relation, tail) fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

/// A knowledge graph: an ordered entity list and an ordered, duplicate-free
/// triple list. Triple order is preserved from the source file because
/// linearization is order-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KGGraph {
    pub entities: Vec<String>,
    pub triples: Vec<Triple>,
}

impl KGGraph {
    /// Builds a graph from triples; entities are collected in first-mention
    /// order (heads and tails interleaved as they appear).
    pub fn from_triples(triples: Vec<Triple>) -> Result<Self, String> {
        let mut seen = std::collections::HashSet::new();
        for (i, t) in triples.iter().enumerate() {
            if t.head.is_empty() || t.relation.is_empty() || t.tail.is_empty() {
                return Err(format!("triple {i} has an empty field"));
            }
            if !seen.insert((t.head.clone(), t.relation.clone(), t.tail.clone())) {
                return Err(format!(
                    "duplicate triple at index {i}: ({}, {}, {})",
                    t.head, t.relation, t.tail
                ));
            }
        }
        let mut entities = Vec::new();
        let mut known = std::collections::HashSet::new();
        for t in &triples {
            for e in [&t.head, &t.tail] {
                if known.insert(e.clone()) {
                    entities.push(e.clone());
                }
            }
        }
        Ok(Self { entities, triples })
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.triples.iter().map(|t| t.relation.as_str())
    }
}

/// Marker-delimited verbalized-triple rendering of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedGraph {
    pub text: String,
    pub token_count: usize,
}

pub const HEAD_MARKER: &str = "<H>";
pub const REL_MARKER: &str = "<R>";
pub const TAIL_MARKER: &str = "<T>";

/// Renders a graph as `<H> head <R> relation <T> tail` segments joined by
/// single spaces, in triple order.
pub fn linearize(graph: &KGGraph) -> Result<LinearizedGraph, DataError> {
    if graph.triples.is_empty() {
        return Err(DataError::EmptyGraph);
    }
    let text = graph
        .triples
        .iter()
        .map(|t| format!("{HEAD_MARKER} {} {REL_MARKER} {} {TAIL_MARKER} {}", t.head, t.relation, t.tail))
        .collect::<Vec<_>>()
        .join(" ");
    let token_count = text.split_whitespace().count();
    Ok(LinearizedGraph { text, token_count })
}

/// Linearizes and, if the rendering exceeds `max_tokens`, drops trailing
/// triples until it fits. Truncation never splits a triple.
pub fn linearize_with_budget(graph: &KGGraph, max_tokens: usize) -> Result<LinearizedGraph, DataError> {
    let full = linearize(graph)?;
    if full.token_count <= max_tokens {
        return Ok(full);
    }
    let mut kept = graph.triples.len();
    let mut out = full;
    while kept > 1 && out.token_count > max_tokens {
        kept -= 1;
        let truncated = KGGraph::from_triples(graph.triples[..kept].to_vec())
            .expect("prefix of a valid triple list stays valid");
        out = linearize(&truncated)?;
    }
    log::warn!(
        "linearization over budget ({} > {max_tokens} tokens); truncated to {kept} of {} triples",
        full_count(graph),
        graph.triples.len()
    );
    Ok(out)
}

fn full_count(graph: &KGGraph) -> usize {
    graph
        .triples
        .iter()
        .map(|t| {
            3 + t.head.split_whitespace().count()
                + t.relation.split_whitespace().count()
                + t.tail.split_whitespace().count()
        })
        .sum()
}

/// Exact inverse of [`linearize`]. Reports the character offset of the first
/// token that violates the marker grammar.
pub fn parse_linearized(text: &str) -> Result<KGGraph, DataError> {
    if text.trim().is_empty() {
        return Err(DataError::LinearizedParse {
            offset: 0,
            msg: "empty linearization".into(),
        });
    }
    // Tokens with their byte offsets.
    let mut tokens = Vec::new();
    let mut offset = 0;
    for part in text.split(' ') {
        if !part.is_empty() {
            tokens.push((offset, part));
        }
        offset += part.len() + 1;
    }

    let mut triples = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut fields: [String; 3] = Default::default();
        for (slot, marker) in [HEAD_MARKER, REL_MARKER, TAIL_MARKER].into_iter().enumerate() {
            let (off, tok) = tokens[i];
            if tok != marker {
                return Err(DataError::LinearizedParse {
                    offset: off,
                    msg: format!("expected {marker}, found {tok:?}"),
                });
            }
            i += 1;
            // Field = tokens until the next marker or end of input.
            let start = i;
            while i < tokens.len() && !is_marker(tokens[i].1) {
                i += 1;
            }
            if start == i {
                return Err(DataError::LinearizedParse {
                    offset: off,
                    msg: format!("empty field after {marker}"),
                });
            }
            fields[slot] = tokens[start..i]
                .iter()
                .map(|(_, t)| *t)
                .collect::<Vec<_>>()
                .join(" ");
        }
        triples.push(Triple::new(
            std::mem::take(&mut fields[0]),
            std::mem::take(&mut fields[1]),
            std::mem::take(&mut fields[2]),
        ));
    }
    KGGraph::from_triples(triples).map_err(|msg| DataError::LinearizedParse { offset: 0, msg })
}

fn is_marker(tok: &str) -> bool {
    tok == HEAD_MARKER || tok == REL_MARKER || tok == TAIL_MARKER
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(triples: &[(&str, &str, &str)]) -> KGGraph {
        KGGraph::from_triples(triples.iter().map(|(h, r, t)| Triple::new(*h, *r, *t)).collect()).unwrap()
    }

    #[test]
    fn single_triple_template() {
        let g = graph(&[("house", "num_bedrooms", "5")]);
        let lin = linearize(&g).unwrap();
        assert_eq!(lin.text, "<H> house <R> num_bedrooms <T> 5");
        assert_eq!(lin.token_count, 6);
    }

    #[test]
    fn two_triples_joined_in_source_order() {
        let g = graph(&[("h", "a", "1"), ("h", "b", "2")]);
        let lin = linearize(&g).unwrap();
        assert_eq!(lin.text, "<H> h <R> a <T> 1 <H> h <R> b <T> 2");
    }

    #[test]
    fn empty_graph_rejected() {
        let g = KGGraph {
            entities: vec![],
            triples: vec![],
        };
        assert!(matches!(linearize(&g), Err(DataError::EmptyGraph)));
    }

    #[test]
    fn parse_single_triple() {
        let g = parse_linearized("<H> a <R> b <T> c").unwrap();
        assert_eq!(g.triples, vec![Triple::new("a", "b", "c")]);
    }

    #[test]
    fn parse_multiword_fields() {
        let g = parse_linearized("<H> the old house <R> nearest train station <T> south yarra").unwrap();
        assert_eq!(
            g.triples,
            vec![Triple::new("the old house", "nearest train station", "south yarra")]
        );
    }

    #[test]
    fn parse_empty_is_error() {
        assert!(parse_linearized("").is_err());
    }

    #[test]
    fn parse_dangling_marker_reports_offset() {
        let err = parse_linearized("<H> a <R> b <T>").unwrap_err();
        match err {
            DataError::LinearizedParse { offset, .. } => assert_eq!(offset, 12),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn duplicate_triples_rejected() {
        let triples = vec![Triple::new("a", "b", "c"), Triple::new("a", "b", "c")];
        assert!(KGGraph::from_triples(triples).is_err());
    }

    #[test]
    fn budget_truncates_at_triple_boundary() {
        let g = graph(&[("h", "a", "1"), ("h", "b", "2"), ("h", "c", "3")]);
        let lin = linearize_with_budget(&g, 15).unwrap();
        let parsed = parse_linearized(&lin.text).unwrap();
        assert_eq!(parsed.triples.len(), 2);
        assert!(lin.token_count <= 15);
    }

    #[test]
    fn adding_a_triple_increases_token_count() {
        let small = graph(&[("h", "a", "1")]);
        let big = graph(&[("h", "a", "1"), ("h", "b", "2")]);
        assert!(linearize(&big).unwrap().token_count > linearize(&small).unwrap().token_count);
    }
}
