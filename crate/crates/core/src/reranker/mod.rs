//! Question re-ranking: feature extraction, a least-squares usefulness
//! regressor and best-candidate selection.

pub mod ols;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};
use crate::qg::QuestionCandidate;
use crate::similarity::seeded_unit_vector;

/// Default sentence-embedding width; the full feature vector adds four
/// linguistic features for 772 dimensions.
pub const DEFAULT_EMBEDDING_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sentence_embedding: Vec<f64>,
    pub well_formedness: f64,
    /// Negative perplexity.
    pub fluency: f64,
    /// Negative generator loss.
    pub model_confidence: f64,
    pub question_type_score: f64,
}

impl FeatureVector {
    pub fn linguistic(&self) -> [f64; 4] {
        [self.well_formedness, self.fluency, self.model_confidence, self.question_type_score]
    }

    pub fn dim(&self) -> usize {
        self.sentence_embedding.len() + 4
    }

    pub fn project(&self, set: FeatureSet) -> Vec<f64> {
        match set {
            FeatureSet::Full => {
                let mut v = self.sentence_embedding.clone();
                v.extend(self.linguistic());
                v
            }
            FeatureSet::Linguistic => self.linguistic().to_vec(),
            FeatureSet::Embedding => self.sentence_embedding.clone(),
        }
    }
}

/// Which feature groups a regressor sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Sentence embedding plus the four linguistic features.
    Full,
    Linguistic,
    Embedding,
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "ling-sbert" => Ok(FeatureSet::Full),
            "linguistic" => Ok(FeatureSet::Linguistic),
            "embedding" | "sbert" => Ok(FeatureSet::Embedding),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

/// Auxiliary models that feed the re-ranker.
pub trait AuxiliaryScorers: Send + Sync {
    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
    fn embedding_dim(&self) -> usize;
    /// Probability in `[0, 1]` that the question is well formed.
    fn well_formed_prob(&self, text: &str) -> Result<f64, BackendError>;
    /// Language-model perplexity, strictly positive.
    fn perplexity(&self, text: &str) -> Result<f64, BackendError>;
}

const WH_WORDS: &[&str] = &["what", "why", "how", "which", "who", "whom", "whose", "when", "where"];

/// 1.0 for open-ended, 0.8 for binary with alternatives, 0.5 for binary.
pub fn question_type_score(question: &str) -> f64 {
    let lower = question.trim().to_lowercase();
    let first = lower.split(|c: char| !c.is_alphanumeric()).find(|w| !w.is_empty()).unwrap_or("");
    if WH_WORDS.contains(&first) {
        1.0
    } else if lower.contains(" or ") {
        0.8
    } else {
        0.5
    }
}

pub fn extract_features(candidate: &QuestionCandidate, scorers: &dyn AuxiliaryScorers) -> Result<FeatureVector> {
    let q = candidate.question.as_str();
    if q.trim().is_empty() {
        return Err(Error::EmptyInput("question"));
    }
    let sentence_embedding = scorers.sentence_embed(q)?;
    if sentence_embedding.len() != scorers.embedding_dim() {
        return Err(Error::Dimension { expected: scorers.embedding_dim(), actual: sentence_embedding.len() });
    }
    let well_formedness = scorers.well_formed_prob(q)?;
    if !(0.0..=1.0).contains(&well_formedness) {
        return Err(BackendError::Contract(format!("well-formedness {well_formedness} outside [0, 1]")).into());
    }
    let perplexity = scorers.perplexity(q)?;
    if !(perplexity > 0.0 && perplexity.is_finite()) {
        return Err(BackendError::Contract(format!("perplexity {perplexity} is not positive")).into());
    }
    let features = FeatureVector {
        sentence_embedding,
        well_formedness,
        fluency: -perplexity,
        model_confidence: -candidate.confidence_loss,
        question_type_score: question_type_score(q),
    };
    if features.project(FeatureSet::Full).iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite feature for {q:?}")));
    }
    Ok(features)
}

/// Character trigram language model with add-one smoothing.
#[derive(Debug, Clone, Default)]
pub struct CharNgramLm {
    order: usize,
    counts: HashMap<String, HashMap<char, u32>>,
    context_totals: HashMap<String, u32>,
    vocab: usize,
}

const BOS: char = '\u{2}';
const EOS: char = '\u{3}';

impl CharNgramLm {
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        let mut lm = CharNgramLm { order, ..Default::default() };
        let mut vocab = std::collections::HashSet::new();
        for t in texts {
            let chars = Self::padded(&t.to_lowercase(), order);
            for w in chars.windows(order) {
                let ctx: String = w[..order - 1].iter().collect();
                let c = w[order - 1];
                vocab.insert(c);
                *lm.counts.entry(ctx.clone()).or_default().entry(c).or_default() += 1;
                *lm.context_totals.entry(ctx).or_default() += 1;
            }
        }
        // one extra slot for unseen characters
        lm.vocab = vocab.len() + 1;
        lm
    }

    fn padded(text: &str, order: usize) -> Vec<char> {
        let mut chars = vec![BOS; order - 1];
        chars.extend(text.chars());
        chars.push(EOS);
        chars
    }

    pub fn perplexity(&self, text: &str) -> f64 {
        let chars = Self::padded(&text.to_lowercase(), self.order);
        let mut log_sum = 0.0;
        let mut n = 0usize;
        for w in chars.windows(self.order) {
            let ctx: String = w[..self.order - 1].iter().collect();
            let c = w[self.order - 1];
            let count = self.counts.get(&ctx).and_then(|m| m.get(&c)).copied().unwrap_or(0);
            let total = self.context_totals.get(&ctx).copied().unwrap_or(0);
            let p = (count as f64 + 1.0) / (total as f64 + self.vocab.max(1) as f64);
            log_sum += p.ln();
            n += 1;
        }
        (-log_sum / n as f64).exp()
    }
}

const AUXILIARY_OPENERS: &[&str] = &[
    "is", "are", "was", "were", "do", "does", "did", "can", "could", "would", "should", "will", "has", "have", "if",
    "in",
];

/// Rule-of-thumb well-formedness: share of passed surface checks.
pub fn heuristic_well_formedness(question: &str) -> f64 {
    let q = question.trim();
    let words: Vec<String> = q.split_whitespace().map(|w| w.to_lowercase()).collect();
    let first = words.first().map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_string()).unwrap_or_default();
    let checks = [
        q.chars().next().is_some_and(char::is_uppercase),
        q.ends_with('?') && !q.ends_with("??"),
        (3..=30).contains(&words.len()),
        words.windows(2).all(|w| w[0] != w[1]),
        WH_WORDS.contains(&first.as_str()) || AUXILIARY_OPENERS.contains(&first.as_str()),
    ];
    checks.iter().filter(|&&c| c).count() as f64 / checks.len() as f64
}

#[derive(Debug, Clone)]
enum WellFormed {
    Constant(f64),
    Heuristic,
}

#[derive(Debug, Clone)]
enum Fluency {
    Constant(f64),
    CharNgram(CharNgramLm),
}

/// Deterministic, model-free auxiliary scorers. Sentence embeddings are
/// hash-seeded unit vectors of the question text.
#[derive(Debug, Clone)]
pub struct StubScorers {
    dim: usize,
    well_formed: WellFormed,
    fluency: Fluency,
}

impl StubScorers {
    pub fn constant(dim: usize, well_formed: f64, perplexity: f64) -> Self {
        StubScorers { dim, well_formed: WellFormed::Constant(well_formed), fluency: Fluency::Constant(perplexity) }
    }

    /// Heuristic well-formedness and a character LM trained on `questions`.
    pub fn trained<'a>(dim: usize, questions: impl IntoIterator<Item = &'a str>) -> Self {
        StubScorers {
            dim,
            well_formed: WellFormed::Heuristic,
            fluency: Fluency::CharNgram(CharNgramLm::train(questions, 3)),
        }
    }
}

const SENTENCE_SALT: u64 = 0x5e17;

impl AuxiliaryScorers for StubScorers {
    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        if self.dim == 0 {
            return Ok(Vec::new());
        }
        Ok(seeded_unit_vector(text.trim(), SENTENCE_SALT, self.dim))
    }

    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn well_formed_prob(&self, text: &str) -> Result<f64, BackendError> {
        Ok(match self.well_formed {
            WellFormed::Constant(p) => p,
            WellFormed::Heuristic => heuristic_well_formedness(text),
        })
    }

    fn perplexity(&self, text: &str) -> Result<f64, BackendError> {
        Ok(match &self.fluency {
            Fluency::Constant(p) => *p,
            Fluency::CharNgram(lm) => lm.perplexity(text),
        })
    }
}

/// Linear usefulness regressor. `weights[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerModel {
    pub feature_set: FeatureSet,
    pub feature_dimension: usize,
    pub weights: Vec<f64>,
    pub training_mean: f64,
}

impl RerankerModel {
    /// Predicts the training mean for every input.
    pub fn mean_baseline(training_mean: f64, feature_set: FeatureSet, embedding_dim: usize) -> Self {
        let feature_dimension = match feature_set {
            FeatureSet::Full => embedding_dim + 4,
            FeatureSet::Linguistic => 4,
            FeatureSet::Embedding => embedding_dim,
        };
        let mut weights = vec![0.0; feature_dimension + 1];
        weights[0] = training_mean;
        RerankerModel { feature_set, feature_dimension, weights, training_mean }
    }

    pub fn intercept(&self) -> f64 {
        self.weights[0]
    }

    /// Raw regression output on an already projected vector; not clamped.
    pub fn predict_projected(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_dimension {
            return Err(Error::Dimension { expected: self.feature_dimension, actual: x.len() });
        }
        let y = self.weights[0] + self.weights[1..].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        if !y.is_finite() {
            return Err(Error::Validation("non-finite usefulness prediction".into()));
        }
        Ok(y)
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        self.predict_projected(&features.project(self.feature_set))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: RerankerModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if model.weights.len() != model.feature_dimension + 1 {
            return Err(Error::Dimension { expected: model.feature_dimension + 1, actual: model.weights.len() });
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("non-finite reranker weight".into()));
        }
        Ok(model)
    }
}

/// Least-squares usefulness regressor over the chosen feature groups.
pub fn fit_ols(rows: &[(FeatureVector, f64)], feature_set: FeatureSet, ridge: f64) -> Result<RerankerModel> {
    let x: Vec<Vec<f64>> = rows.iter().map(|(f, _)| f.project(feature_set)).collect();
    let y: Vec<f64> = rows.iter().map(|(_, r)| *r).collect();
    fit_projected(&x, &y, feature_set, ridge)
}

pub fn fit_projected(x: &[Vec<f64>], y: &[f64], feature_set: FeatureSet, ridge: f64) -> Result<RerankerModel> {
    let fit = ols::fit(x, y, ridge)?;
    let mut weights = Vec::with_capacity(fit.slope.len() + 1);
    weights.push(fit.intercept);
    weights.extend(&fit.slope);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Validation("least squares produced non-finite weights".into()));
    }
    Ok(RerankerModel {
        feature_set,
        feature_dimension: fit.slope.len(),
        weights,
        training_mean: y.iter().sum::<f64>() / y.len() as f64,
    })
}

/// Index of the highest-scoring value; ties go to the lowest index.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Picks the candidate with the highest predicted usefulness. Stored
/// predictions are used when present; otherwise `model` scores the stored
/// features. Ties favor the earlier (higher beam) candidate.
pub fn rerank(candidates: &[QuestionCandidate], model: Option<&RerankerModel>) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate list"));
    }
    let scores = candidates
        .iter()
        .map(|c| match (c.predicted_usefulness, model, &c.features) {
            (Some(p), _, _) => Ok(p),
            (None, Some(m), Some(f)) => m.predict(f),
            _ => Err(Error::Config(format!(
                "candidate {:?} has neither a prediction nor features and a model",
                c.question
            ))),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmax_first(&scores).expect("non-empty"))
}
