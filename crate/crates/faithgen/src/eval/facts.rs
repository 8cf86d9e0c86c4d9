use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// An ordered list of short fact strings ("feature: value"), deduplicated
/// under case-insensitive exact match. Counts are always `len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSet {
    facts: Vec<String>,
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut set = Self::new();
        for f in iter {
            set.push(f);
        }
        set
    }

    /// Inserts a fact unless an equal one (ignoring case) is present.
    /// Returns whether it was inserted.
    pub fn push(&mut self, fact: impl Into<String>) -> bool {
        let fact = fact.into();
        let fact = fact.trim().to_string();
        if fact.is_empty() || self.contains(&fact) {
            return false;
        }
        self.facts.push(fact);
        true
    }

    pub fn contains(&self, fact: &str) -> bool {
        let needle = fact.trim().to_lowercase();
        self.facts.iter().any(|f| f.to_lowercase() == needle)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.facts.iter().map(|s| s.as_str())
    }

    /// Union with another set, preserving order of first appearance.
    pub fn union(&self, other: &FactSet) -> FactSet {
        let mut out = self.clone();
        for f in other.iter() {
            out.push(f);
        }
        out
    }
}

/// The feature name of a "feature: value" fact; the whole fact when it has no
/// colon. Lowercased and trimmed for comparison.
pub fn fact_label(fact: &str) -> String {
    fact.split(':').next().unwrap_or(fact).trim().to_lowercase()
}

/// Parses a numbered or bulleted list response into a fact set. Accepted
/// markers: `1.` `1)` `-` `*`. Blank lines and duplicate entries are dropped.
pub fn parse_fact_list(response: &str) -> FactSet {
    let mut set = FactSet::new();
    for line in response.lines() {
        let stripped = strip_list_marker(line);
        if !stripped.is_empty() {
            set.push(stripped);
        }
    }
    set
}

/// Removes a leading list marker (`3.`, `3)`, `-`, `*`) and surrounding
/// whitespace from one line.
pub fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let after_digits = line.trim_start_matches(|c: char| c.is_ascii_digit());
    let rest = if after_digits.len() < line.len() {
        after_digits.strip_prefix(['.', ')']).unwrap_or(line)
    } else {
        line.strip_prefix(['-', '*']).unwrap_or(line)
    };
    rest.trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_deduplicates_case_insensitively() {
        let mut s = FactSet::new();
        assert!(s.push("bedrooms: 5"));
        assert!(!s.push("Bedrooms: 5"));
        assert!(!s.push("  bedrooms: 5 "));
        assert!(s.push("bathrooms: 2"));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn empty_facts_are_ignored() {
        let mut s = FactSet::new();
        assert!(!s.push("   "));
        assert!(s.is_empty());
    }

    #[test]
    fn parses_numbered_and_bulleted_lists() {
        for response in [
            "1. bedrooms: 5\n2. bathrooms: 2\n3. location: niddrie",
            "1) bedrooms: 5\n2) bathrooms: 2\n3) location: niddrie",
            "- bedrooms: 5\n- bathrooms: 2\n- location: niddrie",
            "* bedrooms: 5\n\n* bathrooms: 2\n* location: niddrie\n",
        ] {
            let set = parse_fact_list(response);
            assert_eq!(set.len(), 3, "for {response:?}");
            assert!(set.contains("bedrooms: 5"));
        }
    }

    #[test]
    fn duplicate_lines_deduplicated() {
        let set = parse_fact_list("1. a: 1\n2. A: 1\n3. b: 2");
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn unmarked_lines_kept_verbatim() {
        let set = parse_fact_list("bedrooms: 5\nbathrooms: 2");
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn label_extraction() {
        assert_eq!(fact_label("Bedrooms: 5"), "bedrooms");
        assert_eq!(fact_label("no colon here"), "no colon here");
        assert_eq!(fact_label(" parking spaces : 2"), "parking spaces");
    }

    #[test]
    fn union_preserves_order_and_dedups() {
        let a = FactSet::from_iter(["x: 1".into(), "y: 2".into()]);
        let b = FactSet::from_iter(["Y: 2".into(), "z: 3".into()]);
        let u = a.union(&b);
        assert_eq!(u.iter().collect::<Vec<_>>(), vec!["x: 1", "y: 2", "z: 3"]);
    }
}

// Used by the mock judge to test support of fact values in free text.
pub(crate) fn content_word_set(text: &str) -> HashSet<String> {
    crate::data::tokenize_words(text)
        .into_iter()
        .filter(|t| t.chars().any(|c| c.is_alphanumeric()))
        .collect()
}
