//! faithgen: train a KG-to-text model to resist hallucinated reference text
//! and measure faithfulness at the level of enumerated facts.
//!
//! The crate is organized around the pipeline stages:
//! - [`data`]: graphs, linearization, datasets, vocabulary
//! - [`contrast`]: positive/negative sample construction for the contrastive loss
//! - [`control`]: faithfulness scoring, bucketing and hallucination control tokens
//! - [`model`]: the desk-scale encoder-decoder, composite loss and decoding
//! - [`eval`]: fact-level judge evaluation, BLEU-4 and ROUGE-L
//! - [`pipeline`]: run orchestration, manifests, reporting

pub mod contrast;
pub mod control;
pub mod data;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod synth;
