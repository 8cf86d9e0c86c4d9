//! Fact-level faithfulness evaluation: a judge enumerates the facts of the
//! input and the generated text, and precision / recall / hallucination rate
//! are computed from the counts. Also BLEU-4 and ROUGE-L.

mod facts;
mod judge;
mod metrics;
mod protocol;
mod salient;
pub mod templates;

pub use facts::{fact_label, parse_fact_list, FactSet};
pub use judge::{
    Exchange, JudgeClient, JudgeTranscript, MockJudge, RecordingJudge, RemoteJudge, RemoteJudgeConfig,
    ReplayJudge, TableFixture, TableJudge,
};
pub use metrics::{bleu4, rouge_l, RougeScore};
pub use protocol::{
    count_common_facts, enumerate_hallucinated_facts, enumerate_input_facts, evaluate_sample, compute_prh,
    judge_common_facts,
    rate_fluency, FactEvalResult, SampleEvaluation,
};
pub use salient::{compute_salient, rank_salient_features, SalientEvalResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("unparseable judge response: {raw:?}")]
    Unparseable { raw: String },
    #[error("replay transcript has no response for this prompt (template {template_id})")]
    ReplayMiss { template_id: String },
    #[error("input fact set is empty")]
    EmptyFactSet,
    #[error("recall undefined: no input facts")]
    NoInputFacts,
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}
