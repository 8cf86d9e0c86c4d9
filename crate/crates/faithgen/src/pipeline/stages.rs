//! The pipeline stages. Each stage loads the run manifest, hashes everything
//! it would consume, skips itself when that hash matches a previous run whose
//! artifacts are still present, and otherwise writes its artifacts and records
//! them.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::{combine_hashes, sha256_file, sha256_str, RunManifest};
use super::PipelineError;
use crate::contrast::{build_contrastive_set, ContrastiveSet, OfflineParaphraser};
use crate::control::{
    apply_control_token, assign_buckets, score_faithfulness, HallucinationTag,
};
use crate::data::{
    linearize_with_budget, load_dataset, DatasetStats, Split, TextSample, Vocabulary, EOS_ID,
};
use crate::eval::{
    bleu4, compute_salient, evaluate_sample, rank_salient_features, rouge_l, JudgeClient,
    MockJudge, RecordingJudge, RemoteJudge,
};
use crate::model::{
    generate, generate_from_source, Ablation, Checkpoint, ContrastiveItem, TrainConfig,
    TrainItem, Trainer,
};

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const VOCAB_FILE: &str = "vocab.json";
pub const STATS_FILE: &str = "stats.json";
pub const CONTRAST_FILE: &str = "contrast_sets.jsonl";
pub const BUCKETS_FILE: &str = "buckets.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: u64,
    pub l_cl: f64,
    pub l_ce: f64,
    pub total: f64,
}

/// One generated text for an evaluation-split sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    /// The control token the generation was conditioned on, if any.
    pub tag: Option<String>,
    pub text: String,
}

/// One line of the bucket file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketRecord {
    pub id: String,
    pub score: f64,
    pub scorer: String,
    pub tag: HallucinationTag,
}

/// Per-sample evaluation output: fact counts, rates, salient metrics and
/// surface metrics against the reference when one exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub n_input: usize,
    pub n_common: usize,
    pub n_hallucinated: usize,
    pub n_output: usize,
    pub precision: f64,
    pub recall: f64,
    pub hallucination_rate: f64,
    pub degenerate: bool,
    pub salient_precision: f64,
    pub salient_recall: f64,
    pub salient_recall_degenerate: bool,
    pub bleu4: Option<f64>,
    pub rouge_l_f1: Option<f64>,
    pub fluency: Option<f64>,
}

/// Corpus-level averages over the per-sample records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_samples: usize,
    pub n_degenerate: usize,
    pub precision: f64,
    pub recall: f64,
    pub hallucination_rate: f64,
    pub salient_precision: f64,
    pub salient_recall: f64,
    pub salient_features: Vec<String>,
    pub bleu4: Option<f64>,
    pub rouge_l_f1: Option<f64>,
    pub fluency: Option<f64>,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| PipelineError::io(path, e))?;
        writeln!(w, "{line}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut rows = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| PipelineError::io(path, e))?);
    }
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| PipelineError::io(path, e))?;
    std::fs::write(path, json).map_err(|e| PipelineError::io(path, e))
}

/// Opens (or initializes) the run directory: creates it, snapshots the config
/// and loads the manifest. A directory created under a different config is
/// rejected.
fn open_run(cfg: &RunConfig, out_dir: &Path) -> Result<(RunManifest, String), PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let canonical = cfg.canonical_toml();
    let config_hash = sha256_str(&canonical);
    let manifest = RunManifest::load_or_new(out_dir, &config_hash)?;
    let snapshot = out_dir.join(CONFIG_SNAPSHOT);
    if !snapshot.exists() {
        std::fs::write(&snapshot, &canonical).map_err(|e| PipelineError::io(&snapshot, e))?;
    }
    Ok((manifest, config_hash))
}

/// Hashes the dataset files the run reads and records them in the manifest.
fn hash_inputs(cfg: &RunConfig, manifest: &mut RunManifest) -> Result<String, PipelineError> {
    let mut parts = Vec::new();
    for path in [Some(&cfg.data.train), cfg.data.valid.as_ref(), cfg.data.test.as_ref()]
        .into_iter()
        .flatten()
    {
        let hash = sha256_file(path)?;
        manifest.inputs.insert(path.display().to_string(), hash.clone());
        parts.push(hash);
    }
    let refs: Vec<&str> = parts.iter().map(|s| s.as_str()).collect();
    Ok(combine_hashes(&refs))
}

/// The split generations and evaluation run on: test when provided, else
/// valid, else the training set itself.
fn eval_split(cfg: &RunConfig) -> (Split, &PathBuf) {
    if let Some(test) = &cfg.data.test {
        (Split::Test, test)
    } else if let Some(valid) = &cfg.data.valid {
        (Split::Valid, valid)
    } else {
        (Split::Train, &cfg.data.train)
    }
}

fn load_train(cfg: &RunConfig) -> Result<Vec<TextSample>, PipelineError> {
    Ok(load_dataset(&cfg.data.train, Split::Train)?)
}

fn load_vocab(out_dir: &Path, manifest: &RunManifest) -> Result<Vocabulary, PipelineError> {
    let path = manifest.artifact_path(out_dir, "prepare", VOCAB_FILE)?;
    Ok(Vocabulary::load(&path)?)
}

/// Builds the vocabulary and dataset statistics from the configured splits.
pub fn cmd_prepare(cfg: &RunConfig, out_dir: &Path) -> Result<(), PipelineError> {
    let (mut manifest, config_hash) = open_run(cfg, out_dir)?;
    let inputs_hash = hash_inputs(cfg, &mut manifest)?;
    let stage_hash = combine_hashes(&[&config_hash, &inputs_hash]);
    if manifest.stage_is_current(out_dir, "prepare", &stage_hash) {
        log::info!("prepare is up to date; skipping");
        return Ok(());
    }

    let train = load_train(cfg)?;
    let mut splits: Vec<(Split, Vec<TextSample>)> = vec![(Split::Train, train)];
    if let Some(path) = &cfg.data.valid {
        splits.push((Split::Valid, load_dataset(path, Split::Valid)?));
    }
    if let Some(path) = &cfg.data.test {
        splits.push((Split::Test, load_dataset(path, Split::Test)?));
    }

    // The vocabulary covers reference texts and every graph surface string of
    // the training split only; held-out words map to UNK.
    let mut texts: Vec<&str> = Vec::new();
    for sample in &splits[0].1 {
        if let Some(reference) = &sample.reference {
            texts.push(reference);
        }
        for triple in &sample.graph.triples {
            texts.push(&triple.head);
            texts.push(&triple.relation);
            texts.push(&triple.tail);
        }
    }
    let vocab = Vocabulary::build(texts);
    vocab.save(&out_dir.join(VOCAB_FILE))?;

    let borrowed: Vec<(Split, &[TextSample])> =
        splits.iter().map(|(s, v)| (*s, v.as_slice())).collect();
    write_json(&out_dir.join(STATS_FILE), &DatasetStats::compute(&borrowed))?;

    manifest.record_stage("prepare", &stage_hash, &[VOCAB_FILE, STATS_FILE]);
    manifest.save(out_dir)
}

/// Builds one contrastive set per training sample, in file order.
pub fn cmd_contrast(cfg: &RunConfig, out_dir: &Path) -> Result<(), PipelineError> {
    let (mut manifest, config_hash) = open_run(cfg, out_dir)?;
    let prepare = manifest.require_stage(out_dir, "prepare")?.input_hash.clone();
    let stage_hash = combine_hashes(&[&config_hash, &prepare]);
    if manifest.stage_is_current(out_dir, "contrast", &stage_hash) {
        log::info!("contrast is up to date; skipping");
        return Ok(());
    }

    let train = load_train(cfg)?;
    let paraphraser = OfflineParaphraser::default_table();
    let sampler = cfg.sampler.to_sampler_config();
    let mut sets = Vec::with_capacity(train.len());
    for sample in &train {
        sets.push(build_contrastive_set(sample, &train, &paraphraser, &sampler, cfg.seed)?);
    }
    write_jsonl(&out_dir.join(CONTRAST_FILE), &sets)?;

    manifest.record_stage("contrast", &stage_hash, &[CONTRAST_FILE]);
    manifest.save(out_dir)
}

/// Scores every training reference against its linearized graph and splits
/// the corpus into the three hallucination buckets.
pub fn cmd_bucket(cfg: &RunConfig, out_dir: &Path) -> Result<(), PipelineError> {
    let (mut manifest, config_hash) = open_run(cfg, out_dir)?;
    let prepare = manifest.require_stage(out_dir, "prepare")?.input_hash.clone();
    let stage_hash = combine_hashes(&[&config_hash, &prepare]);
    if manifest.stage_is_current(out_dir, "bucket", &stage_hash) {
        log::info!("bucket is up to date; skipping");
        return Ok(());
    }

    let train = load_train(cfg)?;
    let scorer = cfg.parsed_scorer()?;
    let mut scores = Vec::with_capacity(train.len());
    for sample in &train {
        let lin = linearize_with_budget(&sample.graph, cfg.model.max_source_len)?;
        let reference = sample.reference.as_deref().unwrap_or_default();
        scores.push(score_faithfulness(&lin, reference, &scorer, &sample.id)?);
    }
    let assignment = assign_buckets(&scores)?;
    let rows: Vec<BucketRecord> = assignment
        .assignments
        .iter()
        .map(|(id, &(tag, score))| BucketRecord {
            id: id.clone(),
            score,
            scorer: assignment.scorer_name.clone(),
            tag,
        })
        .collect();
    write_jsonl(&out_dir.join(BUCKETS_FILE), &rows)?;

    manifest.record_stage("bucket", &stage_hash, &[BUCKETS_FILE]);
    manifest.save(out_dir)
}

/// Assembles pre-tokenized training items from the bucket assignments and
/// (when the ablation uses the contrastive term) the contrastive sets.
pub fn build_train_items(
    samples: &[TextSample],
    vocab: &Vocabulary,
    buckets: &BTreeMap<String, HallucinationTag>,
    contrast_sets: Option<&BTreeMap<String, ContrastiveSet>>,
    max_source_len: usize,
    max_target_len: usize,
) -> Result<Vec<TrainItem>, PipelineError> {
    let encode_target = |text: &str| -> Vec<u32> {
        let mut ids = vocab.encode_text(text);
        ids.truncate(max_target_len.saturating_sub(1));
        ids.push(EOS_ID);
        ids
    };
    let mut items = Vec::with_capacity(samples.len());
    for sample in samples {
        let tag = *buckets.get(&sample.id).ok_or_else(|| PipelineError::MissingArtifact {
            stage: "bucket".to_string(),
            path: format!("no bucket assignment for sample {:?}", sample.id),
        })?;
        let (lin, src_plain) = vocab.encode_graph(&sample.graph, max_source_len)?;
        let reference = sample.reference.as_deref().unwrap_or_default();
        let contrast = match contrast_sets {
            None => None,
            Some(sets) => {
                let set = sets.get(&sample.id).ok_or_else(|| PipelineError::MissingArtifact {
                    stage: "contrast".to_string(),
                    path: format!("no contrastive set for sample {:?}", sample.id),
                })?;
                Some(ContrastiveItem {
                    positives: set.positives.iter().map(|p| encode_target(p)).collect(),
                    negatives: set.negatives.iter().map(|n| encode_target(&n.text)).collect(),
                })
            }
        };
        items.push(TrainItem {
            id: sample.id.clone(),
            src_tagged: vocab.encode_source(&apply_control_token(&lin, tag)),
            src_plain,
            target: encode_target(reference),
            contrast,
        });
    }
    Ok(items)
}

fn load_buckets(out_dir: &Path, manifest: &RunManifest) -> Result<BTreeMap<String, HallucinationTag>, PipelineError> {
    let path = manifest.artifact_path(out_dir, "bucket", BUCKETS_FILE)?;
    let rows: Vec<BucketRecord> = read_jsonl(&path)?;
    Ok(rows.into_iter().map(|r| (r.id, r.tag)).collect())
}

fn load_contrast_sets(out_dir: &Path, manifest: &RunManifest) -> Result<BTreeMap<String, ContrastiveSet>, PipelineError> {
    let path = manifest.artifact_path(out_dir, "contrast", CONTRAST_FILE)?;
    let sets: Vec<ContrastiveSet> = read_jsonl(&path)?;
    Ok(sets.into_iter().map(|s| (s.anchor_id.clone(), s)).collect())
}

/// Trains the model on the prepared corpus and writes a resumable checkpoint
/// plus the per-step loss log.
pub fn cmd_train(
    cfg: &RunConfig,
    out_dir: &Path,
    ablation_override: Option<Ablation>,
) -> Result<(), PipelineError> {
    let (mut manifest, config_hash) = open_run(cfg, out_dir)?;
    let ablation = match ablation_override {
        Some(a) => a,
        None => cfg.parsed_ablation()?,
    };
    let prepare = manifest.require_stage(out_dir, "prepare")?.input_hash.clone();
    let bucket = manifest.require_stage(out_dir, "bucket")?.input_hash.clone();
    let mut parts = vec![config_hash.clone(), prepare, bucket, format!("{ablation:?}")];
    if ablation.use_contrastive() {
        parts.push(manifest.require_stage(out_dir, "contrast")?.input_hash.clone());
    }
    let refs: Vec<&str> = parts.iter().map(|s| s.as_str()).collect();
    let stage_hash = combine_hashes(&refs);
    if manifest.stage_is_current(out_dir, "train", &stage_hash) {
        log::info!("train is up to date; skipping");
        return Ok(());
    }

    let train = load_train(cfg)?;
    let vocab = load_vocab(out_dir, &manifest)?;
    let buckets = load_buckets(out_dir, &manifest)?;
    let contrast_sets = if ablation.use_contrastive() {
        Some(load_contrast_sets(out_dir, &manifest)?)
    } else {
        None
    };
    let items = build_train_items(
        &train,
        &vocab,
        &buckets,
        contrast_sets.as_ref(),
        cfg.model.max_source_len,
        cfg.model.max_target_len,
    )?;

    let model_cfg = cfg.model.to_model_config(vocab.len(), cfg.seed);
    let model = crate::model::Seq2Seq::new(model_cfg)?;
    let train_cfg = TrainConfig {
        epochs: cfg.train.epochs,
        ablation,
        contrastive: cfg.train.contrastive.clone(),
    };
    let mut trainer = Trainer::new(model, train_cfg);
    let mut log_rows = Vec::new();
    trainer.train(&items, |step, loss| {
        log::info!("step {step}: l_cl {:.6} l_ce {:.6} total {:.6}", loss.l_cl, loss.l_ce, loss.total);
        log_rows.push(TrainLogRecord {
            step,
            l_cl: loss.l_cl,
            l_ce: loss.l_ce,
            total: loss.total,
        });
    })?;
    write_jsonl(&out_dir.join(TRAIN_LOG_FILE), &log_rows)?;
    trainer.checkpoint(&vocab.content_hash()).save(&out_dir.join(CHECKPOINT_FILE))?;

    manifest.record_stage("train", &stage_hash, &[CHECKPOINT_FILE, TRAIN_LOG_FILE]);
    manifest.save(out_dir)
}

/// Generates one text per evaluation-split sample with the trained model.
/// Models trained with the control token condition on the requested tag;
/// no-tag ablations decode from the bare linearization.
pub fn cmd_generate(
    cfg: &RunConfig,
    out_dir: &Path,
    tag_override: Option<HallucinationTag>,
) -> Result<(), PipelineError> {
    let (mut manifest, config_hash) = open_run(cfg, out_dir)?;
    let tag = match tag_override {
        Some(t) => t,
        None => cfg.parsed_tag()?,
    };
    let prepare = manifest.require_stage(out_dir, "prepare")?.input_hash.clone();
    let train = manifest.require_stage(out_dir, "train")?.input_hash.clone();
    let stage_hash = combine_hashes(&[&config_hash, &prepare, &train, tag.token()]);
    if manifest.stage_is_current(out_dir, "generate", &stage_hash) {
        log::info!("generate is up to date; skipping");
        return Ok(());
    }

    let vocab = load_vocab(out_dir, &manifest)?;
    let ckpt_path = manifest.artifact_path(out_dir, "train", CHECKPOINT_FILE)?;
    let checkpoint = Checkpoint::load(&ckpt_path)?;
    if checkpoint.vocab_hash != vocab.content_hash() {
        return Err(PipelineError::Config(format!(
            "checkpoint {} was trained with a different vocabulary",
            ckpt_path.display()
        )));
    }
    let tagged = checkpoint.train_config.ablation.use_control_token();
    let model = checkpoint.into_model()?;
    let strategy = cfg.parsed_strategy()?;
    let (split, path) = eval_split(cfg);
    let samples = load_dataset(path, split)?;

    let mut rows = Vec::with_capacity(samples.len());
    for sample in &samples {
        let result = if tagged {
            generate(&model, &vocab, &sample.graph, tag, strategy)?
        } else {
            let (_lin, src) = vocab.encode_graph(&sample.graph, model.config.max_source_len)?;
            generate_from_source(&model, &src, strategy)?
        };
        rows.push(GenerationRecord {
            id: sample.id.clone(),
            tag: result.tag.map(|t| t.to_string()),
            text: vocab.decode(&result.tokens),
        });
    }
    write_jsonl(&out_dir.join(GENERATIONS_FILE), &rows)?;

    manifest.record_stage("generate", &stage_hash, &[GENERATIONS_FILE]);
    manifest.save(out_dir)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Runs the fact-enumeration protocol over the generations and writes the
/// per-sample records, the corpus summary and the full judge transcript.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    out_dir: &Path,
    judge_override: Option<&str>,
) -> Result<(), PipelineError> {
    let (mut manifest, config_hash) = open_run(cfg, out_dir)?;
    let mode = judge_override.unwrap_or(cfg.judge.mode.as_str());
    let prepare = manifest.require_stage(out_dir, "prepare")?.input_hash.clone();
    let generate_hash = manifest.require_stage(out_dir, "generate")?.input_hash.clone();
    let stage_hash = combine_hashes(&[&config_hash, &prepare, &generate_hash, mode]);
    if manifest.stage_is_current(out_dir, "evaluate", &stage_hash) {
        log::info!("evaluate is up to date; skipping");
        return Ok(());
    }

    let inner: Box<dyn JudgeClient> = match mode {
        "mock" => Box::new(MockJudge::new()),
        "remote" => {
            let remote = cfg.judge.remote.clone().ok_or_else(|| {
                PipelineError::Config("judge mode \"remote\" requires a [judge.remote] section".into())
            })?;
            Box::new(RemoteJudge::new(remote)?)
        }
        other => return Err(PipelineError::Config(format!("unknown judge mode {other:?}"))),
    };
    let judge = RecordingJudge::new(inner.as_ref());

    let train = load_train(cfg)?;
    let salient = rank_salient_features(&train, 10);
    let (split, path) = eval_split(cfg);
    let samples = load_dataset(path, split)?;
    let by_id: BTreeMap<&str, &TextSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let gen_path = manifest.artifact_path(out_dir, "generate", GENERATIONS_FILE)?;
    let generations: Vec<GenerationRecord> = read_jsonl(&gen_path)?;

    let mut rows = Vec::with_capacity(generations.len());
    for generation in &generations {
        let sample = by_id.get(generation.id.as_str()).ok_or_else(|| PipelineError::MissingArtifact {
            stage: "generate".to_string(),
            path: format!("generation {:?} has no sample in the {split} split", generation.id),
        })?;
        let lin = linearize_with_budget(&sample.graph, cfg.model.max_source_len)?;
        let eval = evaluate_sample(&lin, &generation.text, &judge, cfg.judge.with_fluency)?;
        let sal = compute_salient(&eval.input_facts, &eval.common_facts, &salient, eval.result.n_output);
        let (bleu, rouge) = match &sample.reference {
            Some(reference) => {
                let cand = crate::data::tokenize_words(&generation.text);
                let refr = crate::data::tokenize_words(reference);
                (Some(bleu4(&cand, &refr)), Some(rouge_l(&cand, &refr).f1))
            }
            None => (None, None),
        };
        rows.push(EvalRecord {
            id: generation.id.clone(),
            n_input: eval.result.n_input,
            n_common: eval.result.n_common,
            n_hallucinated: eval.result.n_hallucinated,
            n_output: eval.result.n_output,
            precision: eval.result.precision,
            recall: eval.result.recall,
            hallucination_rate: eval.result.hallucination_rate,
            degenerate: eval.result.degenerate,
            salient_precision: sal.precision,
            salient_recall: sal.recall,
            salient_recall_degenerate: sal.recall_degenerate,
            bleu4: bleu,
            rouge_l_f1: rouge,
            fluency: eval.fluency,
        });
    }

    let summary = EvalSummary {
        n_samples: rows.len(),
        n_degenerate: rows.iter().filter(|r| r.degenerate).count(),
        precision: mean(rows.iter().map(|r| r.precision)).unwrap_or(0.0),
        recall: mean(rows.iter().map(|r| r.recall)).unwrap_or(0.0),
        hallucination_rate: mean(rows.iter().map(|r| r.hallucination_rate)).unwrap_or(0.0),
        salient_precision: mean(rows.iter().map(|r| r.salient_precision)).unwrap_or(0.0),
        salient_recall: mean(rows.iter().map(|r| r.salient_recall)).unwrap_or(0.0),
        salient_features: salient,
        bleu4: mean(rows.iter().filter_map(|r| r.bleu4)),
        rouge_l_f1: mean(rows.iter().filter_map(|r| r.rouge_l_f1)),
        fluency: mean(rows.iter().filter_map(|r| r.fluency)),
    };
    write_jsonl(&out_dir.join(EVAL_FILE), &rows)?;
    write_json(&out_dir.join(EVAL_SUMMARY_FILE), &summary)?;
    judge.into_transcript().save(&out_dir.join(TRANSCRIPT_FILE))?;

    manifest.record_stage("evaluate", &stage_hash, &[EVAL_FILE, EVAL_SUMMARY_FILE, TRANSCRIPT_FILE]);
    manifest.save(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::RunConfig;
    use crate::synth;

    /// A tiny on-disk dataset plus a config pointing at it.
    fn tiny_run(dir: &Path) -> RunConfig {
        let samples = synth::house_fixture();
        let train_path = dir.join("train.jsonl");
        let rows: Vec<String> = samples
            .iter()
            .take(9)
            .map(|s| {
                let triples: Vec<[&str; 3]> = s
                    .graph
                    .triples
                    .iter()
                    .map(|t| [t.head.as_str(), t.relation.as_str(), t.tail.as_str()])
                    .collect();
                serde_json::to_string(&serde_json::json!({
                    "id": s.id,
                    "triples": triples,
                    "text": s.reference.as_deref().unwrap(),
                }))
                .unwrap()
            })
            .collect();
        std::fs::write(&train_path, rows.join("\n")).unwrap();
        let mut cfg = RunConfig::default();
        cfg.data.train = train_path;
        cfg.model.hidden_dim = 16;
        cfg.model.ffn_dim = 24;
        cfg.model.encoder_layers = 1;
        cfg.model.decoder_layers = 1;
        cfg.model.attention_heads = 2;
        cfg.model.max_source_len = 64;
        cfg.model.max_target_len = 24;
        cfg.model.batch_size = 3;
        cfg.train.epochs = 1;
        cfg.sampler.positive_count = 1;
        cfg.sampler.negative_count = 2;
        cfg
    }

    #[test]
    fn prepare_writes_vocab_and_skips_when_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_run(dir.path());
        cmd_prepare(&cfg, &out).unwrap();
        let vocab = Vocabulary::load(&out.join(VOCAB_FILE)).unwrap();
        assert!(vocab.len() > crate::data::RESERVED_LEN);
        let before = std::fs::metadata(out.join(VOCAB_FILE)).unwrap().modified().unwrap();
        cmd_prepare(&cfg, &out).unwrap();
        let after = std::fs::metadata(out.join(VOCAB_FILE)).unwrap().modified().unwrap();
        assert_eq!(before, after, "unchanged prepare must not rewrite artifacts");
    }

    #[test]
    fn stages_require_their_upstreams() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_run(dir.path());
        match cmd_contrast(&cfg, &out) {
            Err(PipelineError::MissingArtifact { stage, .. }) => assert_eq!(stage, "prepare"),
            other => panic!("unexpected: {other:?}"),
        }
        cmd_prepare(&cfg, &out).unwrap();
        match cmd_train(&cfg, &out, None) {
            Err(PipelineError::MissingArtifact { stage, .. }) => assert_eq!(stage, "bucket"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn full_chain_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_run(dir.path());
        cmd_prepare(&cfg, &out).unwrap();
        cmd_contrast(&cfg, &out).unwrap();
        cmd_bucket(&cfg, &out).unwrap();
        cmd_train(&cfg, &out, None).unwrap();
        cmd_generate(&cfg, &out, None).unwrap();
        cmd_evaluate(&cfg, &out, None).unwrap();
        for artifact in [
            VOCAB_FILE,
            STATS_FILE,
            CONTRAST_FILE,
            BUCKETS_FILE,
            CHECKPOINT_FILE,
            TRAIN_LOG_FILE,
            GENERATIONS_FILE,
            EVAL_FILE,
            EVAL_SUMMARY_FILE,
            TRANSCRIPT_FILE,
        ] {
            assert!(out.join(artifact).exists(), "missing {artifact}");
        }
        let log: Vec<TrainLogRecord> = read_jsonl(&out.join(TRAIN_LOG_FILE)).unwrap();
        assert!(!log.is_empty());
        for row in &log {
            assert_eq!(row.total, row.l_cl + row.l_ce);
        }
        let raw = std::fs::read_to_string(out.join(EVAL_SUMMARY_FILE)).unwrap();
        let summary: EvalSummary = serde_json::from_str(&raw).unwrap();
        assert_eq!(summary.n_samples, 9);
    }

    #[test]
    fn ce_only_generations_are_untagged() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = tiny_run(dir.path());
        cfg.train.ablation = "ce-only".into();
        cmd_prepare(&cfg, &out).unwrap();
        cmd_bucket(&cfg, &out).unwrap();
        cmd_train(&cfg, &out, None).unwrap();
        cmd_generate(&cfg, &out, None).unwrap();
        let rows: Vec<GenerationRecord> = read_jsonl(&out.join(GENERATIONS_FILE)).unwrap();
        assert!(rows.iter().all(|r| r.tag.is_none()));
    }

    #[test]
    fn run_dir_is_bound_to_one_config() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_run(dir.path());
        cmd_prepare(&cfg, &out).unwrap();
        let mut other = cfg.clone();
        other.seed = 99;
        assert!(matches!(cmd_prepare(&other, &out), Err(PipelineError::Config(_))));
    }
}
