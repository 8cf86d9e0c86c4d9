//! Synthetic corpora and fixtures: a house-domain set with a known salient
//! ranking, a steering corpus with controlled hallucination levels, and a
//! fixed evaluation fixture with ground-truth fact tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::data::{linearize, KGGraph, Split, TextSample, Triple};
use crate::eval::TableFixture;

/// The ten house features, most frequent first, that `house_fixture` is
/// built to rank on top (with strictly decreasing frequencies).
pub const SALIENT_HOUSE: [&str; 10] = [
    "house_location",
    "house_property-type",
    "bedrooms",
    "bathrooms",
    "parking spaces",
    "has_ac",
    "has_dining",
    "has_heating",
    "garage_spaces",
    "nearest_train_station",
];

const HOUSE_DISTRACTORS: [&str; 8] = [
    "house_address",
    "balcony_count",
    "council_rates",
    "floor_area",
    "land_size",
    "roof_type",
    "year_built",
    "zoning",
];

fn house_value(relation: &str, j: usize) -> String {
    match relation {
        "house_location" => ["niddrie", "essendon", "airport west", "keilor east"][j % 4].to_string(),
        "house_property-type" => ["house", "apartment", "townhouse"][j % 3].to_string(),
        "bedrooms" | "bathrooms" | "parking spaces" | "garage_spaces" | "balcony_count" => {
            format!("{}", 1 + j % 5)
        }
        "has_ac" | "has_dining" | "has_heating" => ["yes", "no"][j % 2].to_string(),
        "nearest_train_station" => ["essendon station", "glenbervie station"][j % 2].to_string(),
        _ => format!("value {}", j % 7),
    }
}

/// A deterministic house-domain training set: 60 samples whose relation
/// frequencies make [`SALIENT_HOUSE`] the exact top-10 ranking. The i-th
/// salient relation appears in the first 55 - 3i samples; distractors appear
/// in 5 samples each.
pub fn house_fixture() -> Vec<TextSample> {
    let n = 60;
    (0..n)
        .map(|j| {
            let mut triples = Vec::new();
            let head = format!("house {j}");
            for (i, relation) in SALIENT_HOUSE.iter().enumerate() {
                if j < 55 - 3 * i {
                    triples.push(Triple::new(head.clone(), *relation, house_value(relation, j)));
                }
            }
            for (i, relation) in HOUSE_DISTRACTORS.iter().enumerate() {
                if j % 12 == i {
                    triples.push(Triple::new(head.clone(), *relation, house_value(relation, j)));
                }
            }
            let graph = KGGraph::from_triples(triples).expect("fixture triples are valid");
            let text = graph
                .triples
                .iter()
                .map(|t| format!("the {} is {} .", t.relation, t.tail))
                .collect::<Vec<_>>()
                .join(" ");
            TextSample {
                id: format!("house{j:03}"),
                graph,
                reference: Some(text),
                split: Split::Train,
            }
        })
        .collect()
}

/// A corpus whose references hallucinate by construction, in three equally
/// sized faithfulness tiers, for steering experiments.
#[derive(Debug, Clone)]
pub struct SteeringCorpus {
    pub train: Vec<TextSample>,
    pub heldout: Vec<TextSample>,
    /// Content words that appear in hallucinated sentences but in no graph.
    pub hallucination_pool: Vec<String>,
}

const STEERING_RELATIONS: [&str; 8] = [
    "color", "size", "shape", "material", "origin", "weight", "age", "style",
];

const STEERING_VALUES: [[&str; 4]; 8] = [
    ["red", "blue", "green", "white"],
    ["small", "medium", "large", "huge"],
    ["round", "square", "oval", "flat"],
    ["wood", "steel", "glass", "stone"],
    ["north", "south", "east", "west"],
    ["light", "heavy", "solid", "dense"],
    ["new", "old", "ancient", "modern"],
    ["plain", "ornate", "rustic", "sleek"],
];

const HALLUCINATION_POOL: [&str; 12] = [
    "dragon", "rainbow", "volcano", "wizard", "comet", "jungle", "pirate", "glacier", "canyon", "phantom",
    "meteor", "lagoon",
];

fn steering_sample(rng: &mut ChaCha12Rng, id: String, split: Split) -> TextSample {
    let n_triples = rng.random_range(4..=8);
    // Distinct relations per graph so triples never collide.
    let mut rels: Vec<usize> = (0..STEERING_RELATIONS.len()).collect();
    for i in 0..n_triples {
        let j = rng.random_range(i..rels.len());
        rels.swap(i, j);
    }
    let head = format!("item {}", rng.random_range(0..50));
    let triples: Vec<Triple> = rels[..n_triples]
        .iter()
        .map(|&r| {
            let value = STEERING_VALUES[r][rng.random_range(0..4)];
            Triple::new(head.clone(), STEERING_RELATIONS[r], value)
        })
        .collect();
    let graph = KGGraph::from_triples(triples).expect("distinct relations give distinct triples");

    let mut sentences: Vec<String> = graph
        .triples
        .iter()
        .map(|t| format!("the {} is {} .", t.relation, t.tail))
        .collect();
    // Uniform tier draw: faithful, lightly hallucinated, heavily hallucinated.
    let n_hallucinated = match rng.random_range(0..3) {
        0 => 0,
        1 => rng.random_range(1..=2),
        _ => rng.random_range(3..=4),
    };
    for _ in 0..n_hallucinated {
        let word = HALLUCINATION_POOL[rng.random_range(0..HALLUCINATION_POOL.len())];
        sentences.push(format!("also a {word} ."));
    }
    TextSample {
        id,
        graph,
        reference: Some(sentences.join(" ")),
        split,
    }
}

/// Builds the steering corpus. References fall in three tiers: fully
/// faithful, 1-2 hallucinated sentences, 3-4 hallucinated sentences; tiers
/// are drawn uniformly so each holds about a third of the corpus.
pub fn steering_corpus(seed: u64, n_train: usize, n_heldout: usize) -> SteeringCorpus {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let train = (0..n_train)
        .map(|i| steering_sample(&mut rng, format!("steer{i:04}"), Split::Train))
        .collect();
    let heldout = (0..n_heldout)
        .map(|i| steering_sample(&mut rng, format!("held{i:04}"), Split::Valid))
        .collect();
    SteeringCorpus {
        train,
        heldout,
        hallucination_pool: HALLUCINATION_POOL.iter().map(|s| s.to_string()).collect(),
    }
}

/// One sample of the evaluation fixture: a graph and a generated-looking
/// output, with its judgments stored in the accompanying [`TableFixture`].
#[derive(Debug, Clone)]
pub struct MockEvalSample {
    pub id: String,
    pub graph: KGGraph,
    pub output: String,
}

/// 50 samples with explicit ground-truth fact tables for the table judge:
/// which input facts the output contains, and which output facts are
/// extrinsic or intrinsic hallucinations.
pub fn mock_eval_fixture(seed: u64) -> (Vec<MockEvalSample>, TableFixture) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut fixture = TableFixture::default();
    let mut samples = Vec::new();
    for i in 0..50 {
        let n_triples = rng.random_range(3..=6);
        let mut rels: Vec<usize> = (0..STEERING_RELATIONS.len()).collect();
        for k in 0..n_triples {
            let j = rng.random_range(k..rels.len());
            rels.swap(k, j);
        }
        let head = format!("item {i}");
        let triples: Vec<Triple> = rels[..n_triples]
            .iter()
            .map(|&r| {
                let value = STEERING_VALUES[r][rng.random_range(0..4)];
                Triple::new(head.clone(), STEERING_RELATIONS[r], value)
            })
            .collect();
        let graph = KGGraph::from_triples(triples).expect("distinct relations give distinct triples");
        let linearized = linearize(&graph).expect("non-empty graph");

        let facts: Vec<String> = graph
            .triples
            .iter()
            .map(|t| format!("{}: {}", t.relation, t.tail))
            .collect();
        // The output mentions a random subset of the input facts...
        let mentioned: Vec<bool> = facts.iter().map(|_| rng.random_range(0..10) < 7).collect();
        let mut sentences: Vec<String> = graph
            .triples
            .iter()
            .zip(&mentioned)
            .filter(|(_, &m)| m)
            .map(|(t, _)| format!("the {} is {} .", t.relation, t.tail))
            .collect();
        // ...plus hallucinated content: extrinsic (unsupported) and sometimes
        // intrinsic (contradicting a triple), overlapping on purpose at times.
        let n_extrinsic = rng.random_range(0..=3);
        let mut extrinsic = Vec::new();
        for _ in 0..n_extrinsic {
            let word = HALLUCINATION_POOL[rng.random_range(0..HALLUCINATION_POOL.len())];
            sentences.push(format!("also a {word} ."));
            let fact = format!("extra: {word}");
            if !extrinsic.contains(&fact) {
                extrinsic.push(fact);
            }
        }
        let mut intrinsic = Vec::new();
        if rng.random_range(0..2) == 1 {
            let t = &graph.triples[rng.random_range(0..graph.triples.len())];
            let wrong = "purple";
            sentences.push(format!("the {} is {wrong} .", t.relation));
            intrinsic.push(format!("{}: {wrong}", t.relation));
            // Occasionally the same wrong fact is also listed as extrinsic;
            // the union must deduplicate it.
            if rng.random_range(0..3) == 0 {
                extrinsic.push(format!("{}: {wrong}", t.relation));
            }
        }
        let output = if sentences.is_empty() {
            "nothing to report .".to_string()
        } else {
            sentences.join(" ")
        };

        fixture.input_facts.insert(linearized.text.clone(), facts.clone());
        let checks = fixture.fact_checks.entry(output.clone()).or_default();
        for (fact, &m) in facts.iter().zip(&mentioned) {
            checks.insert(fact.clone(), m);
        }
        fixture.extrinsic.insert(output.clone(), extrinsic);
        fixture.intrinsic.insert(output.clone(), intrinsic);
        fixture.fluency.insert(output.clone(), 1 + (rng.random_range(0..5) as u8));

        samples.push(MockEvalSample {
            id: format!("eval{i:03}"),
            graph,
            output,
        });
    }
    (samples, fixture)
}
