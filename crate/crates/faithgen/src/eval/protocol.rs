//! The fact-enumeration protocol: enumerate the input facts, check each one
//! against the generated text, enumerate hallucinated facts, and reduce the
//! counts to precision / recall / hallucination rate.

use serde::{Deserialize, Serialize};

use super::facts::{parse_fact_list, strip_list_marker, FactSet};
use super::judge::JudgeClient;
use super::templates;
use super::EvalError;
use crate::data::LinearizedGraph;

/// Fact counts and the derived rates for one generated text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactEvalResult {
    pub n_input: usize,
    pub n_common: usize,
    pub n_hallucinated: usize,
    /// Always `n_common + n_hallucinated`.
    pub n_output: usize,
    pub precision: f64,
    pub recall: f64,
    pub hallucination_rate: f64,
    /// True when the judge attributed no facts at all to the output.
    pub degenerate: bool,
}

/// Everything the protocol produced for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub input_facts: FactSet,
    pub common_facts: FactSet,
    pub hallucinated_facts: FactSet,
    pub result: FactEvalResult,
    pub fluency: Option<f64>,
}

/// Parses a list response, treating a bare "none" as the empty list. An
/// answer with no parseable entries is an error carrying the raw text.
fn list_or_none(response: &str) -> Result<FactSet, EvalError> {
    if response.trim().to_lowercase() == "none" {
        return Ok(FactSet::new());
    }
    let set = parse_fact_list(response);
    if set.is_empty() {
        return Err(EvalError::Unparseable {
            raw: response.to_string(),
        });
    }
    Ok(set)
}

/// Asks the judge to list the facts of the linearized input.
pub fn enumerate_input_facts(
    linearized: &LinearizedGraph,
    judge: &dyn JudgeClient,
) -> Result<FactSet, EvalError> {
    let prompt = templates::enumerate_input_prompt(&linearized.text);
    let response = judge.complete(templates::T1_ENUMERATE_INPUT, &prompt)?;
    list_or_none(&response)
}

/// One yes/no query per input fact; returns the facts judged included.
/// Affirmative = case-insensitive "yes" prefix after stripping list markers;
/// anything else (including unparseable) counts as not included and is logged.
pub fn judge_common_facts(
    input_facts: &FactSet,
    output_text: &str,
    judge: &dyn JudgeClient,
) -> Result<FactSet, EvalError> {
    if input_facts.is_empty() {
        return Err(EvalError::EmptyFactSet);
    }
    let mut common = FactSet::new();
    for fact in input_facts.iter() {
        let prompt = templates::fact_check_prompt(fact, output_text);
        let response = judge.complete(templates::T2_FACT_CHECK, &prompt)?;
        let answer = strip_list_marker(&response).to_lowercase();
        if answer.starts_with("yes") {
            common.push(fact);
        } else if !answer.starts_with("no") {
            log::warn!("unparseable fact-check answer {response:?} for fact {fact:?}; counting as no");
        }
    }
    Ok(common)
}

/// Number of input facts the judge found in the output.
pub fn count_common_facts(
    input_facts: &FactSet,
    output_text: &str,
    judge: &dyn JudgeClient,
) -> Result<usize, EvalError> {
    Ok(judge_common_facts(input_facts, output_text, judge)?.len())
}

/// Union of the extrinsic ("not mentioned") and intrinsic ("contradictory")
/// hallucinated-fact lists.
pub fn enumerate_hallucinated_facts(
    linearized: &LinearizedGraph,
    output_text: &str,
    judge: &dyn JudgeClient,
) -> Result<FactSet, EvalError> {
    let extrinsic_prompt = templates::extrinsic_prompt(&linearized.text, output_text);
    let extrinsic = list_or_none(&judge.complete(templates::T3_EXTRINSIC, &extrinsic_prompt)?)?;
    let intrinsic_prompt = templates::intrinsic_prompt(&linearized.text, output_text);
    let intrinsic = list_or_none(&judge.complete(templates::T3_INTRINSIC, &intrinsic_prompt)?)?;
    Ok(extrinsic.union(&intrinsic))
}

/// Derives the rates from raw counts. Output facts are common + hallucinated;
/// with no output facts at all the rates are 0 and the result is flagged.
pub fn compute_prh(
    n_input: usize,
    n_common: usize,
    n_hallucinated: usize,
) -> Result<FactEvalResult, EvalError> {
    if n_input == 0 {
        return Err(EvalError::NoInputFacts);
    }
    let n_output = n_common + n_hallucinated;
    let (precision, hallucination_rate, degenerate) = if n_output == 0 {
        (0.0, 0.0, true)
    } else {
        (
            n_common as f64 / n_output as f64,
            n_hallucinated as f64 / n_output as f64,
            false,
        )
    };
    Ok(FactEvalResult {
        n_input,
        n_common,
        n_hallucinated,
        n_output,
        precision,
        recall: n_common as f64 / n_input as f64,
        hallucination_rate,
        degenerate,
    })
}

/// A 1-5 fluency rating from the judge. Reported alongside the fact metrics
/// but never part of acceptance: there is no independent oracle for it.
pub fn rate_fluency(output_text: &str, judge: &dyn JudgeClient) -> Result<f64, EvalError> {
    let prompt = templates::fluency_prompt(output_text);
    let response = judge.complete(templates::FLUENCY, &prompt)?;
    let rating: f64 = response
        .trim()
        .parse()
        .map_err(|_| EvalError::Unparseable { raw: response.clone() })?;
    if !(1.0..=5.0).contains(&rating) {
        return Err(EvalError::Unparseable { raw: response });
    }
    Ok(rating)
}

/// Runs the full protocol for one (input, output) pair.
pub fn evaluate_sample(
    linearized: &LinearizedGraph,
    output_text: &str,
    judge: &dyn JudgeClient,
    with_fluency: bool,
) -> Result<SampleEvaluation, EvalError> {
    let input_facts = enumerate_input_facts(linearized, judge)?;
    let common_facts = judge_common_facts(&input_facts, output_text, judge)?;
    let hallucinated_facts = enumerate_hallucinated_facts(linearized, output_text, judge)?;
    let result = compute_prh(input_facts.len(), common_facts.len(), hallucinated_facts.len())?;
    let fluency = if with_fluency {
        Some(rate_fluency(output_text, judge)?)
    } else {
        None
    };
    Ok(SampleEvaluation {
        input_facts,
        common_facts,
        hallucinated_facts,
        result,
        fluency,
    })
}
