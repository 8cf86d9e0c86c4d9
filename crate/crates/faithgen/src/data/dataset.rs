use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, KGGraph, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One dataset record: a graph, its (optionally absent for test) reference
/// text and a stable id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub graph: KGGraph,
    pub reference: Option<String>,
    pub split: Split,
}

#[derive(Debug, Clone, Deserialize)]
struct RawRecord {
    id: String,
    triples: Vec<[String; 3]>,
    #[serde(default)]
    text: Option<String>,
}

/// Loads a JSONL dataset file. One object per line, file order preserved.
pub fn load_dataset(path: &Path, split: Split) -> Result<Vec<TextSample>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            line: lineno,
            msg: e.to_string(),
        })?;
        let schema_err = |msg: String| DataError::Schema {
            path: path.display().to_string(),
            line: lineno,
            msg,
        };
        if raw.triples.is_empty() {
            return Err(schema_err("record has no triples".into()));
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(schema_err(format!("duplicate id {:?}", raw.id)));
        }
        let reference = match raw.text {
            Some(t) if !t.trim().is_empty() => Some(t),
            other => {
                if split != Split::Test {
                    return Err(schema_err(format!(
                        "missing or empty text field in {split} split for id {:?}",
                        raw.id
                    )));
                }
                other.filter(|t| !t.trim().is_empty())
            }
        };
        let triples = raw
            .triples
            .into_iter()
            .map(|[h, r, t]| Triple::new(h, r, t))
            .collect();
        let graph = KGGraph::from_triples(triples).map_err(schema_err)?;
        samples.push(TextSample {
            id: raw.id,
            graph,
            reference,
            split,
        });
    }
    Ok(samples)
}

/// Per-split counts and relation inventory, mirroring the usual dataset
/// statistics table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub counts: BTreeMap<String, usize>,
    pub relations: Vec<String>,
    pub n_relations: usize,
}

impl DatasetStats {
    pub fn compute(splits: &[(Split, &[TextSample])]) -> Self {
        let mut counts = BTreeMap::new();
        let mut relations: std::collections::BTreeSet<String> = Default::default();
        for (split, samples) in splits {
            counts.insert(split.to_string(), samples.len());
            for s in *samples {
                relations.extend(s.graph.relations().map(str::to_string));
            }
        }
        let relations: Vec<String> = relations.into_iter().collect();
        let n_relations = relations.len();
        Self {
            counts,
            relations,
            n_relations,
        }
    }
}
