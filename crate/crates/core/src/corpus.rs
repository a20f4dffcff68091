//! Data model and line-delimited JSON ingestion for exercises, question
//! generation examples, usefulness annotations and interaction logs.
//!
//! Every corpus file is UTF-8 with one JSON object per line. Blank lines are
//! ignored. Texts are trimmed of outer whitespace on ingest and otherwise
//! preserved byte-exact.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cause_effect::Decomposition;
use crate::error::{Error, Result};
use crate::qg::QuestionCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exercise {
    pub id: String,
    pub problem: String,
    pub references: Vec<ReferenceSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    /// Filled in as `<exercise id>-r<n>` when absent from the file.
    #[serde(default)]
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<Decomposition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub question_bank: Vec<QuestionCandidate>,
}

impl ReferenceSolution {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ReferenceSolution { id: id.into(), text: text.into(), decomposition: None, question_bank: Vec::new() }
    }
}

impl Exercise {
    pub fn new(id: impl Into<String>, problem: impl Into<String>, references: &[&str]) -> Self {
        let id = id.into();
        let references = references
            .iter()
            .enumerate()
            .map(|(i, text)| ReferenceSolution::new(format!("{id}-r{}", i + 1), *text))
            .collect();
        Exercise { id, problem: problem.into(), references }
    }

    fn normalize(&mut self) {
        self.id = self.id.trim().to_string();
        self.problem = self.problem.trim().to_string();
        for (i, r) in self.references.iter_mut().enumerate() {
            r.text = r.text.trim().to_string();
            if r.id.trim().is_empty() {
                r.id = format!("{}-r{}", self.id, i + 1);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("exercise id is empty".into()));
        }
        if self.problem.trim().is_empty() {
            return Err(Error::Validation(format!("exercise {}: empty problem", self.id)));
        }
        if self.references.is_empty() {
            return Err(Error::Validation(format!("exercise {}: no reference solutions", self.id)));
        }
        for r in &self.references {
            if r.text.trim().is_empty() {
                return Err(Error::Validation(format!("reference {}: empty text", r.id)));
            }
            if let Some(d) = &r.decomposition {
                let lower = r.text.to_lowercase();
                for part in [d.cause.trim(), d.effect.trim()] {
                    if !lower.contains(&part.to_lowercase()) {
                        return Err(Error::Validation(format!(
                            "reference {}: decomposition part {part:?} is not in the text",
                            r.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Binary,
    BinaryAlternatives,
    OpenEnded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgExample {
    pub id: String,
    /// Cause of the reference solution the question was written from.
    pub source: String,
    /// Human-written question.
    pub target: String,
    pub question_type: QuestionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
}

impl QgExample {
    fn normalize(&mut self) {
        self.id = self.id.trim().to_string();
        self.source = self.source.trim().to_string();
        self.target = self.target.trim().to_string();
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::Validation(format!("qg example {}: empty source", self.id)));
        }
        if !self.target.ends_with('?') {
            return Err(Error::Validation(format!("qg example {}: target is not a question", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsefulnessAnnotation {
    pub example_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_id: Option<String>,
    pub reference_text: String,
    pub question: String,
    pub rating: u8,
    /// Generator loss of the question given the reference, when known.
    #[serde(default)]
    pub confidence_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl UsefulnessAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.rating) {
            return Err(Error::Validation(format!(
                "annotation {}: rating {} outside 1..=5",
                self.example_id, self.rating
            )));
        }
        if !self.confidence_loss.is_finite() || self.confidence_loss < 0.0 {
            return Err(Error::Validation(format!(
                "annotation {}: confidence_loss must be finite and non-negative",
                self.example_id
            )));
        }
        Ok(())
    }

    /// Key that groups the candidate questions of one reference solution.
    pub fn group_key(&self) -> &str {
        self.reference_id.as_deref().unwrap_or(&self.reference_text)
    }
}

/// Which feedback condition a student saw after an attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackModel {
    Minimal,
    PersonalizedHuman,
    NonQuestion,
    QuestionBased,
}

impl FeedbackModel {
    pub const ALL: [FeedbackModel; 4] = [
        FeedbackModel::Minimal,
        FeedbackModel::PersonalizedHuman,
        FeedbackModel::NonQuestion,
        FeedbackModel::QuestionBased,
    ];
}

impl std::str::FromStr for FeedbackModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Validation(format!("unknown feedback model {s:?}")))
    }
}

impl std::fmt::Display for FeedbackModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeedbackModel::Minimal => "minimal",
            FeedbackModel::PersonalizedHuman => "personalized_human",
            FeedbackModel::NonQuestion => "non_question",
            FeedbackModel::QuestionBased => "question_based",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub session_id: String,
    pub exercise_id: String,
    pub student_answer: String,
    /// Feedback shown in response to this attempt, if any.
    #[serde(default)]
    pub feedback_shown: Option<String>,
    pub checker_verdict: bool,
    pub attempt_index: u32,
    pub feedback_model: FeedbackModel,
    pub timestamp: DateTime<Utc>,
}

/// Reads a line-delimited JSON file. Parse failures carry the 1-based line
/// number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf)?;
    Ok(())
}

fn line_error(path: &Path, line: usize, e: Error) -> Error {
    match e {
        Error::Validation(message) => Error::Parse { path: path.to_path_buf(), line, message },
        other => other,
    }
}

/// Loads and validates `exercises.jsonl`. Exercise and reference ids must be
/// unique across the file.
pub fn load_exercises(path: &Path) -> Result<Vec<Exercise>> {
    let mut exercises: Vec<Exercise> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    let mut ref_ids = HashSet::new();
    for (i, ex) in exercises.iter_mut().enumerate() {
        ex.normalize();
        ex.validate().map_err(|e| line_error(path, i + 1, e))?;
        if !ids.insert(ex.id.clone()) {
            return Err(Error::Validation(format!("duplicate exercise id {}", ex.id)));
        }
        for r in &ex.references {
            if !ref_ids.insert(r.id.clone()) {
                return Err(Error::Validation(format!("duplicate reference id {}", r.id)));
            }
        }
    }
    Ok(exercises)
}

pub fn load_qg_dataset(path: &Path) -> Result<Vec<QgExample>> {
    let mut examples: Vec<QgExample> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    for (i, ex) in examples.iter_mut().enumerate() {
        ex.normalize();
        ex.validate().map_err(|e| line_error(path, i + 1, e))?;
        if !ids.insert(ex.id.clone()) {
            return Err(Error::Validation(format!("duplicate qg example id {}", ex.id)));
        }
    }
    Ok(examples)
}

pub fn load_annotations(path: &Path) -> Result<Vec<UsefulnessAnnotation>> {
    let mut rows: Vec<UsefulnessAnnotation> = read_jsonl(path)?;
    for (i, row) in rows.iter_mut().enumerate() {
        row.reference_text = row.reference_text.trim().to_string();
        row.question = row.question.trim().to_string();
        row.validate().map_err(|e| line_error(path, i + 1, e))?;
    }
    Ok(rows)
}

/// Relative sizes of the train/valid/test partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitRatio {
    /// 220 train, 40 validation, 40 test.
    pub const QUESTION_GENERATION: SplitRatio = SplitRatio { train: 220, valid: 40, test: 40 };
    /// 400 train, 50 validation, 100 test.
    pub const HINT_QA: SplitRatio = SplitRatio { train: 400, valid: 50, test: 100 };

    /// Partition sizes for `n` items. Validation and test get the floor of
    /// their share but at least one item each; the residue goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train + self.valid + self.test;
        let valid = (n * self.valid / total).max(1);
        let test = (n * self.test / total).max(1);
        (n - valid - test, valid, test)
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio::QUESTION_GENERATION
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Partition<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Partition<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Seeded shuffle followed by a cut into train/valid/test.
pub fn split_items<T: Clone>(items: &[T], seed: u64, ratio: SplitRatio) -> Result<Partition<T>> {
    if items.len() < 3 {
        return Err(Error::Validation(format!("need at least 3 items to split, got {}", items.len())));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, valid, _) = ratio.sizes(items.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Partition {
        train: pick(&order[..train]),
        valid: pick(&order[train..train + valid]),
        test: pick(&order[train + valid..]),
    })
}

/// Splits QG examples and stamps each with its partition label.
pub fn split_qg_dataset(examples: &[QgExample], seed: u64, ratio: SplitRatio) -> Result<Partition<QgExample>> {
    let mut part = split_items(examples, seed, ratio)?;
    for (label, list) in
        [(Split::Train, &mut part.train), (Split::Valid, &mut part.valid), (Split::Test, &mut part.test)]
    {
        for ex in list.iter_mut() {
            ex.split = Some(label);
        }
    }
    Ok(part)
}

/// Append-only log of checker-evaluated attempts.
///
/// Implementations must be safe for concurrent appenders; each record is
/// appended atomically and readers see a prefix of the log.
pub trait InteractionStore: Send + Sync {
    fn append(&self, record: InteractionRecord) -> Result<()>;
    fn records(&self) -> Result<Vec<InteractionRecord>>;
}

#[derive(Default)]
struct AttemptIndex {
    last: HashMap<(String, String), u32>,
}

impl AttemptIndex {
    fn check(&self, rec: &InteractionRecord) -> Result<()> {
        if rec.attempt_index == 0 {
            return Err(Error::Validation("attempt_index starts at 1".into()));
        }
        let key = (rec.session_id.clone(), rec.exercise_id.clone());
        match self.last.get(&key) {
            Some(&prev) if rec.attempt_index <= prev => Err(Error::Validation(format!(
                "attempt_index {} does not follow {prev} for session {} / exercise {}",
                rec.attempt_index, rec.session_id, rec.exercise_id
            ))),
            _ => Ok(()),
        }
    }

    fn record(&mut self, rec: &InteractionRecord) {
        self.last.insert((rec.session_id.clone(), rec.exercise_id.clone()), rec.attempt_index);
    }
}

#[derive(Default)]
pub struct MemoryInteractionStore {
    inner: Mutex<(AttemptIndex, Vec<InteractionRecord>)>,
}

impl MemoryInteractionStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl InteractionStore for MemoryInteractionStore {
    fn append(&self, record: InteractionRecord) -> Result<()> {
        let mut guard = self.inner.lock().expect("interaction store poisoned");
        guard.0.check(&record)?;
        guard.0.record(&record);
        guard.1.push(record);
        Ok(())
    }

    fn records(&self) -> Result<Vec<InteractionRecord>> {
        Ok(self.inner.lock().expect("interaction store poisoned").1.clone())
    }
}

/// `interactions.jsonl` backed store. Existing records are indexed on open so
/// attempt ordering is enforced across restarts.
pub struct JsonlInteractionStore {
    path: PathBuf,
    inner: Mutex<(AttemptIndex, File)>,
}

impl JsonlInteractionStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut index = AttemptIndex::default();
        if path.exists() {
            for rec in read_jsonl::<InteractionRecord>(&path)? {
                index.record(&rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(JsonlInteractionStore { path, inner: Mutex::new((index, file)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl InteractionStore for JsonlInteractionStore {
    fn append(&self, record: InteractionRecord) -> Result<()> {
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        let mut guard = self.inner.lock().expect("interaction store poisoned");
        guard.0.check(&record)?;
        guard.1.write_all(&line)?;
        guard.1.sync_data()?;
        guard.0.record(&record);
        Ok(())
    }

    fn records(&self) -> Result<Vec<InteractionRecord>> {
        // Holding the lock keeps a concurrent append from being half-read.
        let _guard = self.inner.lock().expect("interaction store poisoned");
        read_jsonl(&self.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_single_exercise() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "ex.jsonl",
            r#"{"id":"ex1","problem":"Can linear regression be applied to classification? Why or why not?","references":[{"text":"No, as the output variable of linear regression is continuous"}]}"#,
        );
        let ex = load_exercises(&p).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].references.len(), 1);
        assert_eq!(ex[0].references[0].id, "ex1-r1");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "ex.jsonl", "");
        assert!(load_exercises(&p).unwrap().is_empty());
    }

    #[test]
    fn rejects_missing_references_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.jsonl", "{\"id\":\"a\",\"problem\":\"p\",\"references\":[]}\n");
        assert!(matches!(load_exercises(&p), Err(Error::Parse { line: 1, .. })));

        let rec = r#"{"id":"a","problem":"p","references":[{"text":"t"}]}"#;
        let p = write(&dir, "b.jsonl", &format!("{rec}\n{rec}\n"));
        assert!(matches!(load_exercises(&p), Err(Error::Validation(_))));

        let p = write(&dir, "c.jsonl", &format!("{rec}\n{{oops\n"));
        match load_exercises(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_structure() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "ex.jsonl",
            "{\"id\":\"e\",\"problem\":\"  Why?  \",\"references\":[{\"id\":\"x\",\"text\":\" Yes, because ünïcode matters. \"}]}\n",
        );
        let loaded = load_exercises(&p).unwrap();
        assert_eq!(loaded[0].problem, "Why?");
        assert_eq!(loaded[0].references[0].text, "Yes, because ünïcode matters.");
        let out = dir.path().join("out.jsonl");
        write_jsonl(&out, &loaded).unwrap();
        assert_eq!(load_exercises(&out).unwrap(), loaded);
    }

    fn qg(n: usize) -> Vec<QgExample> {
        (0..n)
            .map(|i| QgExample {
                id: format!("q{i}"),
                source: format!("cause {i}"),
                target: format!("Why {i}?"),
                question_type: QuestionType::OpenEnded,
                split: None,
                annotator: None,
            })
            .collect()
    }

    #[test]
    fn split_sizes_follow_ratio() {
        let p = split_qg_dataset(&qg(300), 1, SplitRatio::default()).unwrap();
        assert_eq!(p.sizes(), (220, 40, 40));
        let p = split_qg_dataset(&qg(3), 1, SplitRatio::default()).unwrap();
        assert_eq!(p.sizes(), (1, 1, 1));
        assert!(split_qg_dataset(&qg(2), 1, SplitRatio::default()).is_err());
        assert_eq!(SplitRatio::HINT_QA.sizes(550), (400, 50, 100));
    }

    #[test]
    fn split_is_deterministic_and_labeled() {
        let a = split_qg_dataset(&qg(50), 7, SplitRatio::default()).unwrap();
        let b = split_qg_dataset(&qg(50), 7, SplitRatio::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.test.iter().all(|e| e.split == Some(Split::Test)));
        let c = split_qg_dataset(&qg(50), 8, SplitRatio::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn qg_target_must_be_question() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "qg.jsonl",
            r#"{"id":"1","source":"coin flip outcome is discrete","target":"Is flipping a coin discrete","question_type":"binary"}"#,
        );
        assert!(load_qg_dataset(&p).is_err());
        let p = write(
            &dir,
            "qg2.jsonl",
            r#"{"id":"1","source":"coin flip outcome is discrete","target":"Is flipping a coin discrete? ","question_type":"binary"}"#,
        );
        assert_eq!(load_qg_dataset(&p).unwrap()[0].target, "Is flipping a coin discrete?");
    }

    #[test]
    fn annotation_rating_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.jsonl", r#"{"example_id":"1","reference_text":"r","question":"q?","rating":6}"#);
        assert!(load_annotations(&p).is_err());
    }

    fn rec(session: &str, attempt: u32) -> InteractionRecord {
        InteractionRecord {
            session_id: session.into(),
            exercise_id: "ex".into(),
            student_answer: "a".into(),
            feedback_shown: None,
            checker_verdict: false,
            attempt_index: attempt,
            feedback_model: FeedbackModel::QuestionBased,
            timestamp: DateTime::from_timestamp(0, 0).unwrap(),
        }
    }

    #[test]
    fn store_appends_and_rejects_regressions() {
        let dir = tempfile::tempdir().unwrap();
        let store = JsonlInteractionStore::open(dir.path().join("i.jsonl")).unwrap();
        store.append(rec("s", 1)).unwrap();
        assert_eq!(store.records().unwrap().len(), 1);
        assert!(matches!(store.append(rec("s", 1)), Err(Error::Validation(_))));
        store.append(rec("s", 2)).unwrap();
        drop(store);
        // ordering survives reopen
        let store = JsonlInteractionStore::open(dir.path().join("i.jsonl")).unwrap();
        assert!(store.append(rec("s", 2)).is_err());
        assert_eq!(store.records().unwrap().len(), 2);
    }

    #[test]
    fn concurrent_appends_all_land() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(JsonlInteractionStore::open(dir.path().join("i.jsonl")).unwrap());
        let handles: Vec<_> = ["s1", "s2"]
            .into_iter()
            .map(|s| {
                let store = Arc::clone(&store);
                std::thread::spawn(move || {
                    for i in 1..=20 {
                        store.append(rec(s, i)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let all = store.records().unwrap();
        assert_eq!(all.len(), 40);
        assert_eq!(all.iter().filter(|r| r.session_id == "s1").count(), 20);
    }
}
