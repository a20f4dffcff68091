//! Few-shot question generation: the seq2seq backend contract, stub
//! generators, candidate production and question-bank precomputation.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cause_effect::decompose;
use crate::corpus::{read_jsonl, write_jsonl, Exercise, Partition, QgExample, ReferenceSolution};
use crate::error::{BackendError, Error, Result};
use crate::reranker::{extract_features, AuxiliaryScorers, FeatureVector, RerankerModel};
use crate::text::{as_question, word_tokens};

/// Wire request for a generator, transport agnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub source: String,
    pub beams: usize,
    pub max_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub text: String,
    pub score: f64,
    /// Loss of the model on this output taken as ground truth; never negative.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub candidates: Vec<Generated>,
}

/// A source/target pair for any seq2seq fine-tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqExample {
    pub id: String,
    pub source: String,
    pub target: String,
}

impl From<&QgExample> for Seq2SeqExample {
    fn from(ex: &QgExample) -> Self {
        Seq2SeqExample { id: ex.id.clone(), source: ex.source.clone(), target: ex.target.clone() }
    }
}

/// Candidate questions generated per reference solution.
pub const DEFAULT_QUESTIONS_PER_REFERENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub max_input_tokens: usize,
    pub max_output_tokens: usize,
    pub beams: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            learning_rate: 1e-5,
            batch_size: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            max_input_tokens: 512,
            max_output_tokens: 150,
            beams: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_input_tokens", self.max_input_tokens),
            ("max_output_tokens", self.max_output_tokens),
            ("beams", self.beams),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// A fine-tuned generator plus the validation loss after each epoch.
#[derive(Clone)]
pub struct TrainedGenerator {
    pub backend: Arc<dyn GeneratorBackend>,
    pub validation_losses: Vec<f64>,
}

impl std::fmt::Debug for TrainedGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainedGenerator").field("validation_losses", &self.validation_losses).finish_non_exhaustive()
    }
}

/// Contract for seq2seq generators.
///
/// `generate` returns at most `beams` outputs ordered by score, descending,
/// and is deterministic for a fixed backend state.
pub trait GeneratorBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError>;

    fn fine_tune(
        &self,
        _train: &[Seq2SeqExample],
        _valid: &[Seq2SeqExample],
        _config: &TrainConfig,
    ) -> Result<TrainedGenerator, BackendError> {
        Err(BackendError::Unsupported("fine-tuning"))
    }

    /// Serializable state for reloading a trained handle.
    fn export(&self) -> Result<serde_json::Value, BackendError> {
        Err(BackendError::Unsupported("export"))
    }
}

impl<T: GeneratorBackend + ?Sized> GeneratorBackend for Arc<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError> {
        (**self).generate(request)
    }
    fn fine_tune(
        &self,
        train: &[Seq2SeqExample],
        valid: &[Seq2SeqExample],
        config: &TrainConfig,
    ) -> Result<TrainedGenerator, BackendError> {
        (**self).fine_tune(train, valid, config)
    }
    fn export(&self) -> Result<serde_json::Value, BackendError> {
        (**self).export()
    }
}

/// Top beam of a generator, or a contract error when it returns nothing.
pub fn top_beam(backend: &dyn GeneratorBackend, source: &str, max_out: usize) -> Result<String> {
    let out = backend.generate(&GenerationRequest { source: source.to_string(), beams: 1, max_out })?;
    out.into_iter()
        .next()
        .map(|g| g.text)
        .ok_or_else(|| BackendError::Contract("generator returned no output".into()).into())
}

fn source_key(source: &str) -> String {
    Sha256::digest(source.trim().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Replays canned outputs keyed by a hash of the source text.
#[derive(Debug, Clone, Default)]
pub struct CannedGenerator {
    outputs: HashMap<String, Vec<Generated>>,
}

impl CannedGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, source: &str, outputs: Vec<Generated>) -> Self {
        self.outputs.insert(source_key(source), outputs);
        self
    }

    pub fn with_questions(self, source: &str, questions: &[&str]) -> Self {
        let outputs = questions
            .iter()
            .enumerate()
            .map(|(i, q)| Generated { text: q.to_string(), score: -(i as f64), loss: 1.0 + i as f64 })
            .collect();
        self.with(source, outputs)
    }
}

impl GeneratorBackend for CannedGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError> {
        let outputs = self
            .outputs
            .get(&source_key(&request.source))
            .ok_or_else(|| BackendError::Other(format!("no canned output for {:?}", request.source)))?;
        Ok(outputs.iter().take(request.beams).cloned().collect())
    }
}

/// Model-free generator that wraps the head of the source in question
/// templates.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

const QUESTION_TEMPLATES: &[&str] = &[
    "Is it true that {}?",
    "Why is it that {}?",
    "What makes {} true?",
    "Can you explain why {}?",
    "What follows from the fact that {}?",
];

const TEMPLATE_HEAD_WORDS: usize = 16;

fn template_head(source: &str, max_words: usize) -> String {
    let trimmed = source.trim().trim_end_matches(|c: char| !c.is_alphanumeric());
    let words: Vec<&str> = trimmed.split_whitespace().take(max_words).collect();
    let mut head = words.join(" ");
    // lowercase a sentence-initial capital unless the word is an acronym
    let mut chars = head.chars();
    if let (Some(first), Some(second)) = (chars.next(), chars.next()) {
        if first.is_uppercase() && !second.is_uppercase() {
            head = first.to_lowercase().chain(head.chars().skip(1)).collect();
        }
    }
    head
}

impl GeneratorBackend for TemplateGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError> {
        let head = template_head(&request.source, TEMPLATE_HEAD_WORDS.min(request.max_out.max(1)));
        if head.is_empty() {
            return Ok(Vec::new());
        }
        Ok(QUESTION_TEMPLATES
            .iter()
            .take(request.beams)
            .enumerate()
            .map(|(i, t)| Generated {
                text: t.replace("{}", &head),
                score: -0.1 * (i + 1) as f64,
                loss: 0.5 + 0.25 * i as f64,
            })
            .collect())
    }

    fn export(&self) -> Result<serde_json::Value, BackendError> {
        Ok(serde_json::Value::Null)
    }
}

fn token_jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: std::collections::HashSet<&String> = a.iter().collect();
    let sb: std::collections::HashSet<&String> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Trainable stub that memorizes source → target pairs.
///
/// A memorized source returns its targets verbatim. Any other source gets
/// the targets of the most token-similar memorized sources (Jaccard over
/// word tokens, ties by insertion order).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemorizingGenerator {
    pairs: Vec<(String, String)>,
}

impl MemorizingGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        MemorizingGenerator { pairs: pairs.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn predict(&self, source: &str, beams: usize) -> Vec<Generated> {
        let key = source.trim();
        let exact: Vec<Generated> = self
            .pairs
            .iter()
            .filter(|(s, _)| s.trim() == key)
            .take(beams)
            .map(|(_, t)| Generated { text: t.clone(), score: 1.0, loss: 0.0 })
            .collect();
        if !exact.is_empty() {
            return exact;
        }
        let query = word_tokens(source);
        let mut scored: Vec<(f64, usize)> =
            self.pairs.iter().enumerate().map(|(i, (s, _))| (token_jaccard(&query, &word_tokens(s)), i)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<Generated> = Vec::new();
        for (sim, i) in scored {
            if out.len() == beams {
                break;
            }
            let target = &self.pairs[i].1;
            if out.iter().all(|g| &g.text != target) {
                out.push(Generated { text: target.clone(), score: sim, loss: 1.0 - sim });
            }
        }
        out
    }
}

impl GeneratorBackend for MemorizingGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError> {
        if self.pairs.is_empty() {
            return Err(BackendError::Other("memorizing generator is untrained".into()));
        }
        Ok(self.predict(&request.source, request.beams))
    }

    fn fine_tune(
        &self,
        train: &[Seq2SeqExample],
        valid: &[Seq2SeqExample],
        config: &TrainConfig,
    ) -> Result<TrainedGenerator, BackendError> {
        let mut trained = self.clone();
        trained.pairs.extend(train.iter().map(|e| (e.source.clone(), e.target.clone())));
        // Training is a single pass; the loss is the same after every epoch.
        let loss = if valid.is_empty() || trained.pairs.is_empty() {
            0.0
        } else {
            valid
                .iter()
                .map(|e| {
                    let top = trained.predict(&e.source, 1);
                    let pred = top.first().map(|g| g.text.as_str()).unwrap_or("");
                    1.0 - token_jaccard(&word_tokens(pred), &word_tokens(&e.target))
                })
                .sum::<f64>()
                / valid.len() as f64
        };
        Ok(TrainedGenerator { backend: Arc::new(trained), validation_losses: vec![loss; config.epochs] })
    }

    fn export(&self) -> Result<serde_json::Value, BackendError> {
        serde_json::to_value(self).map_err(|e| BackendError::Other(e.to_string()))
    }
}

/// Fine-tunes a generator on the train split, validating on the valid split.
pub fn fine_tune_qg(
    dataset: &Partition<QgExample>,
    backend: &dyn GeneratorBackend,
    config: &TrainConfig,
) -> Result<TrainedGenerator> {
    let train: Vec<Seq2SeqExample> = dataset.train.iter().map(Into::into).collect();
    let valid: Vec<Seq2SeqExample> = dataset.valid.iter().map(Into::into).collect();
    fine_tune(&train, &valid, backend, config)
}

pub fn fine_tune(
    train: &[Seq2SeqExample],
    valid: &[Seq2SeqExample],
    backend: &dyn GeneratorBackend,
    config: &TrainConfig,
) -> Result<TrainedGenerator> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    let trained = backend.fine_tune(train, valid, config)?;
    if let Some(bad) = trained.validation_losses.iter().find(|l| !l.is_finite()) {
        return Err(BackendError::Contract(format!("non-finite validation loss {bad}")).into());
    }
    Ok(trained)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCandidate {
    pub question: String,
    pub model_score: f64,
    pub confidence_loss: f64,
    /// Generator input the question was produced from.
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_usefulness: Option<f64>,
}

impl QuestionCandidate {
    pub fn new(question: impl Into<String>, model_score: f64, confidence_loss: f64) -> Self {
        QuestionCandidate {
            question: question.into(),
            model_score,
            confidence_loss,
            source: String::new(),
            features: None,
            predicted_usefulness: None,
        }
    }
}

/// Generator input for a reference: its cause when it has one, otherwise
/// the whole text.
pub fn generation_source(reference: &ReferenceSolution) -> Result<String> {
    let d = match &reference.decomposition {
        Some(d) => d.clone(),
        None => decompose(&reference.text)?,
    };
    Ok(if d.has_cause() { d.cause } else { reference.text.trim().to_string() })
}

/// Beam-search candidates for one reference, at most `k`, in generator order.
pub fn generate_candidates(
    reference: &ReferenceSolution,
    backend: &dyn GeneratorBackend,
    k: usize,
    max_out: usize,
) -> Result<Vec<QuestionCandidate>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let source = generation_source(reference)?;
    let mut generated = backend.generate(&GenerationRequest { source: source.clone(), beams: k, max_out })?;
    if let Some(g) = generated.iter().find(|g| g.loss.is_nan() || g.loss < 0.0 || !g.score.is_finite()) {
        return Err(BackendError::Contract(format!("bad score/loss ({}, {}) for {:?}", g.score, g.loss, g.text)).into());
    }
    generated.sort_by(|a, b| b.score.total_cmp(&a.score));
    let candidates: Vec<QuestionCandidate> = generated
        .into_iter()
        .filter(|g| !g.text.trim().is_empty())
        .take(k)
        .map(|g| QuestionCandidate {
            question: as_question(&g.text),
            model_score: g.score,
            confidence_loss: g.loss,
            source: source.clone(),
            features: None,
            predicted_usefulness: None,
        })
        .collect();
    if candidates.is_empty() {
        return Err(BackendError::Contract(format!("no questions generated for {}", reference.id)).into());
    }
    Ok(candidates)
}

/// Features and predicted usefulness for each candidate.
pub fn score_candidates(
    candidates: &mut [QuestionCandidate],
    scorers: &dyn AuxiliaryScorers,
    model: &RerankerModel,
) -> Result<()> {
    for c in candidates.iter_mut() {
        let features = extract_features(c, scorers)?;
        c.predicted_usefulness = Some(model.predict(&features)?);
        c.features = Some(features);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSkip {
    pub reference_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankBuild {
    pub exercises: Vec<Exercise>,
    pub skipped: Vec<BankSkip>,
}

/// Precomputes scored candidate questions for every reference solution.
///
/// References are processed in parallel; the output keeps corpus order. A
/// reference that fails is recorded in `skipped` and left with an empty
/// bank.
pub fn build_question_bank(
    corpus: &[Exercise],
    backend: &dyn GeneratorBackend,
    scorers: &dyn AuxiliaryScorers,
    model: &RerankerModel,
    k: usize,
    max_out: usize,
) -> BankBuild {
    let jobs: Vec<(usize, usize)> =
        corpus.iter().enumerate().flat_map(|(e, ex)| (0..ex.references.len()).map(move |r| (e, r))).collect();
    let results: Vec<Result<(Option<crate::cause_effect::Decomposition>, Vec<QuestionCandidate>)>> = jobs
        .par_iter()
        .map(|&(e, r)| {
            let reference = &corpus[e].references[r];
            let decomposition = match &reference.decomposition {
                Some(d) => Some(d.clone()),
                None => Some(decompose(&reference.text)?),
            };
            let mut candidates = generate_candidates(reference, backend, k, max_out)?;
            score_candidates(&mut candidates, scorers, model)?;
            Ok((decomposition, candidates))
        })
        .collect();

    let mut exercises = corpus.to_vec();
    let mut skipped = Vec::new();
    for (&(e, r), result) in jobs.iter().zip(results) {
        let reference = &mut exercises[e].references[r];
        match result {
            Ok((decomposition, bank)) => {
                reference.decomposition = decomposition;
                reference.question_bank = bank;
            }
            Err(err) => {
                tracing::warn!(reference = %reference.id, error = %err, "question bank: skipping reference");
                reference.question_bank.clear();
                skipped.push(BankSkip { reference_id: reference.id.clone(), reason: err.to_string() });
            }
        }
    }
    BankBuild { exercises, skipped }
}

/// One row of `question_bank.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionBankRecord {
    pub exercise_id: String,
    pub reference_id: String,
    pub rank: usize,
    pub source: String,
    pub question: String,
    pub model_score: f64,
    pub confidence_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_usefulness: Option<f64>,
}

pub fn question_bank_records(exercises: &[Exercise]) -> Vec<QuestionBankRecord> {
    exercises
        .iter()
        .flat_map(|ex| {
            ex.references.iter().flat_map(move |r| {
                r.question_bank.iter().enumerate().map(move |(rank, c)| QuestionBankRecord {
                    exercise_id: ex.id.clone(),
                    reference_id: r.id.clone(),
                    rank,
                    source: c.source.clone(),
                    question: c.question.clone(),
                    model_score: c.model_score,
                    confidence_loss: c.confidence_loss,
                    features: c.features.clone(),
                    predicted_usefulness: c.predicted_usefulness,
                })
            })
        })
        .collect()
}

pub fn save_question_bank(path: &Path, exercises: &[Exercise]) -> Result<()> {
    write_jsonl(path, &question_bank_records(exercises))
}

/// Loads `question_bank.jsonl` onto the matching references, replacing any
/// bank they carried.
pub fn attach_question_bank(exercises: &mut [Exercise], path: &Path) -> Result<()> {
    let mut records: Vec<QuestionBankRecord> = read_jsonl(path)?;
    records.sort_by(|a, b| a.reference_id.cmp(&b.reference_id).then(a.rank.cmp(&b.rank)));
    let mut by_ref: HashMap<String, Vec<QuestionCandidate>> = HashMap::new();
    for rec in records {
        by_ref.entry(rec.reference_id).or_default().push(QuestionCandidate {
            question: rec.question,
            model_score: rec.model_score,
            confidence_loss: rec.confidence_loss,
            source: rec.source,
            features: rec.features,
            predicted_usefulness: rec.predicted_usefulness,
        });
    }
    for ex in exercises.iter_mut() {
        for r in ex.references.iter_mut() {
            if let Some(bank) = by_ref.remove(&r.id) {
                r.question_bank = bank;
            }
        }
    }
    if let Some(unknown) = by_ref.keys().next() {
        return Err(Error::Validation(format!("question bank refers to unknown reference {unknown}")));
    }
    Ok(())
}
