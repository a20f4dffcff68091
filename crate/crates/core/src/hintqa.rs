//! Hint-assisted generative QA: a QA model answers, a hint model comments
//! on that answer, and a hint-conditioned QA model answers again with the
//! final answer picked by entailment with the hint.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, split_items, Exercise, Partition, SplitRatio};
use crate::error::{BackendError, Error, Result};
use crate::eval::{evaluate_generation, GenEvalReport};
use crate::feedback::FeedbackEngine;
use crate::qg::{fine_tune, top_beam, GenerationRequest, GeneratorBackend, Seq2SeqExample, TrainConfig};
use crate::reranker::argmax_first;
use crate::text::word_tokens;

/// Separator placed between concatenated source segments.
pub const SEP: &str = " [SEP] ";

pub fn join_source(left: &str, right: &str) -> String {
    format!("{}{SEP}{}", left.trim(), right.trim())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub question: String,
    pub answer: String,
}

impl QAPair {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answer: impl Into<String>) -> Self {
        QAPair { id: id.into(), question: question.into(), answer: answer.into() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() || self.question.trim().is_empty() || self.answer.trim().is_empty() {
            return Err(Error::Validation(format!("QA pair {:?} has an empty field", self.id)));
        }
        if self.question.contains(SEP.trim()) || self.answer.contains(SEP.trim()) {
            return Err(Error::Validation(format!("QA pair {} contains the separator token", self.id)));
        }
        Ok(())
    }
}

pub fn load_qa(path: &Path) -> Result<Vec<QAPair>> {
    let pairs: Vec<QAPair> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for p in &pairs {
        p.validate()?;
        if !seen.insert(p.id.as_str()) {
            return Err(Error::Validation(format!("duplicate QA id {}", p.id)));
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintTriple {
    pub id: String,
    pub question: String,
    pub machine_answer: String,
    pub hint: String,
}

impl HintTriple {
    /// Training example for the hint generator.
    pub fn to_example(&self) -> Seq2SeqExample {
        Seq2SeqExample {
            id: self.id.clone(),
            source: join_source(&self.question, &self.machine_answer),
            target: self.hint.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Built<T> {
    pub records: Vec<T>,
    pub skipped: Vec<Skipped>,
}

fn collect_built<T>(results: Vec<(String, Result<T>)>, what: &str) -> Built<T> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => records.push(v),
            Err(e) => {
                tracing::warn!(id = %id, error = %e, "{what}: skipping pair");
                skipped.push(Skipped { id, reason: e.to_string() });
            }
        }
    }
    Built { records, skipped }
}

/// Hint-generator training data: each pair's question, the QA model's
/// answer, and the feedback that answer earns against the gold answer.
pub fn build_hint_dataset(
    qa: &[QAPair],
    qa_model: &dyn GeneratorBackend,
    engine: &FeedbackEngine,
    max_out: usize,
) -> Built<HintTriple> {
    let results = qa
        .par_iter()
        .map(|p| {
            let triple = (|| {
                let machine_answer = top_beam(qa_model, &p.question, max_out)?;
                let exercise = Exercise::new(p.id.clone(), p.question.clone(), &[p.answer.as_str()]);
                let hint = engine.generate_feedback(&exercise, &machine_answer)?.text;
                Ok(HintTriple { id: p.id.clone(), question: p.question.clone(), machine_answer, hint })
            })();
            (p.id.clone(), triple)
        })
        .collect();
    collect_built(results, "hint dataset")
}

/// Hint-conditioned QA training data: source is question plus generated
/// hint, target is the gold answer.
pub fn build_hqa_dataset(
    qa: &[QAPair],
    qa_model: &dyn GeneratorBackend,
    hint_model: &dyn GeneratorBackend,
    max_out: usize,
) -> Built<Seq2SeqExample> {
    let results = qa
        .par_iter()
        .map(|p| {
            let record = (|| {
                let machine_answer = top_beam(qa_model, &p.question, max_out)?;
                let hint = top_beam(hint_model, &join_source(&p.question, &machine_answer), max_out)?;
                Ok(Seq2SeqExample {
                    id: p.id.clone(),
                    source: join_source(&p.question, &hint),
                    target: p.answer.clone(),
                })
            })();
            (p.id.clone(), record)
        })
        .collect();
    collect_built(results, "hint-QA dataset")
}

/// Natural-language inference contract.
pub trait NliBackend: Send + Sync {
    /// Probability in `[0, 1]` that `premise` entails `hypothesis`.
    fn entailment_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError>;
}

impl<T: NliBackend + ?Sized> NliBackend for Arc<T> {
    fn entailment_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        (**self).entailment_prob(premise, hypothesis)
    }
}

/// Share of distinct hypothesis tokens that also occur in the premise.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapNli;

impl NliBackend for TokenOverlapNli {
    fn entailment_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        let hyp: HashSet<String> = word_tokens(hypothesis).into_iter().collect();
        if hyp.is_empty() {
            return Ok(0.0);
        }
        let prem: HashSet<String> = word_tokens(premise).into_iter().collect();
        Ok(hyp.intersection(&prem).count() as f64 / hyp.len() as f64)
    }
}

/// Index of the answer most likely to entail `hint`; ties go to the lowest
/// index.
pub fn entailment_select_index(answers: &[String], hint: &str, nli: &dyn NliBackend) -> Result<usize> {
    if answers.is_empty() {
        return Err(Error::EmptyInput("candidate answers"));
    }
    let probs = answers
        .iter()
        .map(|a| {
            let p = nli.entailment_prob(a, hint)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(BackendError::Contract(format!("entailment probability {p} outside [0, 1]")).into());
            }
            Ok(p)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmax_first(&probs).expect("non-empty"))
}

pub fn entailment_select(answers: &[String], hint: &str, nli: &dyn NliBackend) -> Result<String> {
    Ok(answers[entailment_select_index(answers, hint, nli)?].clone())
}

/// The three trained models of the chain.
#[derive(Clone)]
pub struct HintQaModels {
    pub qa: Arc<dyn GeneratorBackend>,
    pub hint: Arc<dyn GeneratorBackend>,
    pub hqa: Arc<dyn GeneratorBackend>,
}

/// Answer, hint on that answer, `k` hint-conditioned answers, entailment
/// pick. Errors name the failing stage.
pub fn run_hint_qa_inference(
    question: &str,
    models: &HintQaModels,
    nli: &dyn NliBackend,
    k: usize,
    max_out: usize,
) -> Result<String> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let machine_answer = top_beam(models.qa.as_ref(), question, max_out).map_err(|e| e.at_stage("qa model"))?;
    let hint = top_beam(models.hint.as_ref(), &join_source(question, &machine_answer), max_out)
        .map_err(|e| e.at_stage("hint model"))?;
    let candidates: Vec<String> = models
        .hqa
        .generate(&GenerationRequest { source: join_source(question, &hint), beams: k, max_out })
        .map_err(|e| Error::from(e).at_stage("hint-QA model"))?
        .into_iter()
        .take(k)
        .map(|g| g.text)
        .collect();
    entailment_select(&candidates, &hint, nli).map_err(|e| e.at_stage("entailment"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HintQaConfig {
    pub seed: u64,
    /// Hint-conditioned beams considered for entailment selection.
    pub k: usize,
    pub max_out: usize,
    pub train: TrainConfig,
}

impl Default for HintQaConfig {
    fn default() -> Self {
        HintQaConfig { seed: 13, k: 3, max_out: 150, train: TrainConfig::default() }
    }
}

/// Checks that nothing outside the train split fed a training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HygieneAudit {
    pub train_ids: usize,
    pub test_ids: usize,
    /// Ids in a derived training set that are not train ids.
    pub leaked: Vec<String>,
}

impl HygieneAudit {
    pub fn check<'a>(split: &Partition<QAPair>, used: impl IntoIterator<Item = &'a str>) -> Self {
        let train: HashSet<&str> = split.train.iter().map(|p| p.id.as_str()).collect();
        let mut leaked: Vec<String> = used.into_iter().filter(|id| !train.contains(id)).map(str::to_string).collect();
        leaked.sort();
        leaked.dedup();
        HygieneAudit { train_ids: split.train.len(), test_ids: split.test.len(), leaked }
    }

    pub fn passed(&self) -> bool {
        self.leaked.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScores {
    pub system: String,
    pub metrics: GenEvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintQaReport {
    pub split_sizes: (usize, usize, usize),
    pub systems: Vec<SystemScores>,
    pub audit: HygieneAudit,
    pub skipped: Vec<Skipped>,
}

pub struct HintQaRun {
    pub report: HintQaReport,
    pub triples: Vec<HintTriple>,
    pub hqa_records: Vec<Seq2SeqExample>,
    pub models: HintQaModels,
}

fn qa_examples(pairs: &[QAPair]) -> Vec<Seq2SeqExample> {
    pairs
        .iter()
        .map(|p| Seq2SeqExample { id: p.id.clone(), source: p.question.clone(), target: p.answer.clone() })
        .collect()
}

/// Split, train the three models from `base`, and score the plain QA model,
/// the hint-assisted chain (one beam) and the chain with entailment
/// selection on the test split.
pub fn run_pipeline(
    pairs: &[QAPair],
    base: &dyn GeneratorBackend,
    engine: &FeedbackEngine,
    nli: &dyn NliBackend,
    config: &HintQaConfig,
) -> Result<HintQaRun> {
    for p in pairs {
        p.validate()?;
    }
    let split = split_items(pairs, config.seed, SplitRatio::HINT_QA).map_err(|e| e.at_stage("split"))?;
    let max_out = config.max_out;

    let qa = fine_tune(&qa_examples(&split.train), &qa_examples(&split.valid), base, &config.train)
        .map_err(|e| e.at_stage("train qa model"))?
        .backend;

    let hints = build_hint_dataset(&split.train, qa.as_ref(), engine, max_out);
    let valid_hints = build_hint_dataset(&split.valid, qa.as_ref(), engine, max_out);
    let hint_train: Vec<Seq2SeqExample> = hints.records.iter().map(HintTriple::to_example).collect();
    let hint_valid: Vec<Seq2SeqExample> = valid_hints.records.iter().map(HintTriple::to_example).collect();
    let hint =
        fine_tune(&hint_train, &hint_valid, base, &config.train).map_err(|e| e.at_stage("train hint model"))?.backend;

    let hqa_data = build_hqa_dataset(&split.train, qa.as_ref(), hint.as_ref(), max_out);
    let hqa_valid = build_hqa_dataset(&split.valid, qa.as_ref(), hint.as_ref(), max_out);
    let hqa = fine_tune(&hqa_data.records, &hqa_valid.records, base, &config.train)
        .map_err(|e| e.at_stage("train hint-QA model"))?
        .backend;

    let audit = HygieneAudit::check(
        &split,
        hints.records.iter().map(|t| t.id.as_str()).chain(hqa_data.records.iter().map(|r| r.id.as_str())),
    );
    if !audit.passed() {
        return Err(Error::Validation(format!("train/test leak: {:?}", audit.leaked)));
    }

    let models = HintQaModels { qa, hint, hqa };
    let gold: Vec<&str> = split.test.iter().map(|p| p.answer.as_str()).collect();
    let answer_all = |f: &(dyn Fn(&QAPair) -> Result<String> + Sync)| -> Result<Vec<String>> {
        split.test.par_iter().map(f).collect()
    };
    let plain = answer_all(&|p| top_beam(models.qa.as_ref(), &p.question, max_out))
        .map_err(|e| e.at_stage("evaluate qa model"))?;
    let hinted = answer_all(&|p| run_hint_qa_inference(&p.question, &models, nli, 1, max_out))?;
    let entailed = answer_all(&|p| run_hint_qa_inference(&p.question, &models, nli, config.k, max_out))?;

    let systems = vec![
        SystemScores { system: "qa".into(), metrics: evaluate_generation(&plain, &gold)? },
        SystemScores { system: "hint_assisted".into(), metrics: evaluate_generation(&hinted, &gold)? },
        SystemScores { system: "hint_entailment".into(), metrics: evaluate_generation(&entailed, &gold)? },
    ];
    let mut skipped = hints.skipped;
    skipped.extend(valid_hints.skipped);
    skipped.extend(hqa_data.skipped);
    skipped.extend(hqa_valid.skipped);
    Ok(HintQaRun {
        report: HintQaReport { split_sizes: split.sizes(), systems, audit, skipped },
        triples: hints.records,
        hqa_records: hqa_data.records,
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qg::{Generated, MemorizingGenerator};
    use crate::similarity::{OrthogonalEmbedding, Similarity};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn overlap_nli_oracle() {
        let hint = "the hint text itself";
        let answers = s(&["x", hint, "y"]);
        assert_eq!(entailment_select(&answers, hint, &TokenOverlapNli).unwrap(), hint);
        assert_eq!(entailment_select_index(&s(&["a", "b"]), "zz", &TokenOverlapNli).unwrap(), 0);
        assert!(entailment_select(&[], hint, &TokenOverlapNli).is_err());
    }

    struct Counted(MemorizingGenerator, AtomicUsize, AtomicUsize);

    impl GeneratorBackend for Counted {
        fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            self.2.fetch_add(request.beams, Ordering::SeqCst);
            self.0.generate(request)
        }
    }

    fn counted(pairs: &[(&str, &str)]) -> Arc<Counted> {
        Arc::new(Counted(
            MemorizingGenerator::from_pairs(pairs.iter().map(|(a, b)| (a.to_string(), b.to_string()))),
            AtomicUsize::new(0),
            AtomicUsize::new(0),
        ))
    }

    #[test]
    fn chain_call_contract() {
        let q = "What is the mean of 2 and 4?";
        let qa = counted(&[(q, "3")]);
        let hint_src = join_source(q, "3");
        let hint = counted(&[(hint_src.as_str(), "That's not quite right.")]);
        let hqa_src = join_source(q, "That's not quite right.");
        let hqa = counted(&[(hqa_src.as_str(), "3")]);
        let models = HintQaModels { qa: qa.clone(), hint: hint.clone(), hqa: hqa.clone() };
        assert_eq!(run_hint_qa_inference(q, &models, &TokenOverlapNli, 3, 50).unwrap(), "3");
        assert_eq!(qa.1.load(Ordering::SeqCst), 1);
        assert_eq!(hint.1.load(Ordering::SeqCst), 1);
        assert_eq!((hqa.1.load(Ordering::SeqCst), hqa.2.load(Ordering::SeqCst)), (1, 3));
    }

    #[test]
    fn stage_errors_are_labelled() {
        let models = HintQaModels {
            qa: Arc::new(MemorizingGenerator::new()),
            hint: Arc::new(MemorizingGenerator::new()),
            hqa: Arc::new(MemorizingGenerator::new()),
        };
        let err = run_hint_qa_inference("q?", &models, &TokenOverlapNli, 1, 50).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "qa model", .. }));
    }

    #[test]
    fn hint_dataset_from_verbatim_answers() {
        let qa = vec![
            QAPair::new("p1", "What do we prefer?", "Treatment A, because it is more homogeneous"),
            QAPair::new("p2", "Is a coin flip discrete?", "Yes, because there are two outcomes"),
        ];
        let model = MemorizingGenerator::from_pairs(qa.iter().map(|p| (p.question.clone(), p.answer.clone())));
        let engine = FeedbackEngine::new(Similarity::new(Arc::new(OrthogonalEmbedding::default())));
        let built = build_hint_dataset(&qa, &model, &engine, 50);
        assert_eq!(built.records.len(), 2);
        assert!(built.records.iter().all(|t| t.hint == "That's not quite right. Please try again."));
        assert!(build_hint_dataset(&[], &model, &engine, 50).records.is_empty());

        let hint_model = MemorizingGenerator::from_pairs(built.records.iter().map(|t| {
            let e = t.to_example();
            (e.source, "canned hint".to_string())
        }));
        let hqa = build_hqa_dataset(&qa, &model, &hint_model, 50);
        for r in &hqa.records {
            assert_eq!(r.source.matches(SEP).count(), 1);
            assert!(r.source.ends_with("canned hint"));
        }
    }
}
