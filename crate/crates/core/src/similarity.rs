//! Greedy token-embedding matching similarity (BERTScore style) over a
//! pluggable embedding backend.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{read_jsonl, write_jsonl, ReferenceSolution};
use crate::error::{BackendError, Error, Result};
use crate::text::word_tokens;

/// One token and its unit-norm contextual vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbedding {
    pub token: String,
    pub vector: Vec<f64>,
}

/// Contract for token-level embedding models.
///
/// The same text must always produce the same tokens and vectors, and every
/// vector has the backend's fixed dimension and unit norm.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError>;

    fn dim(&self) -> usize;

    /// Backends that cannot take concurrent calls return false; see
    /// [`shareable`].
    fn thread_safe(&self) -> bool {
        true
    }
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for Arc<T> {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        (**self).embed_tokens(text)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn thread_safe(&self) -> bool {
        (**self).thread_safe()
    }
}

/// Funnels every call through one lock.
pub struct Serialized<B> {
    inner: B,
    gate: Mutex<()>,
}

impl<B: EmbeddingBackend> EmbeddingBackend for Serialized<B> {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        let _g = self.gate.lock().expect("backend gate poisoned");
        self.inner.embed_tokens(text)
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
}

/// Wraps single-threaded backends so the engine can share them.
pub fn shareable(backend: Arc<dyn EmbeddingBackend>) -> Arc<dyn EmbeddingBackend> {
    if backend.thread_safe() {
        backend
    } else {
        Arc::new(Serialized { inner: backend, gate: Mutex::new(()) })
    }
}

pub(crate) fn seeded_unit_vector(seed_text: &str, salt: u64, dim: usize) -> Vec<f64> {
    let digest = Sha256::new().chain_update(salt.to_le_bytes()).chain_update(seed_text.as_bytes()).finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Deterministic stub: each lowercased word maps to a unit vector drawn from
/// a hash-seeded Gaussian. Distinct words are nearly orthogonal at the
/// default 256 dimensions.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    dim: usize,
    salt: u64,
}

impl HashEmbedding {
    pub fn new(dim: usize, salt: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedding { dim, salt }
    }
}

impl Default for HashEmbedding {
    fn default() -> Self {
        HashEmbedding::new(256, 0)
    }
}

impl EmbeddingBackend for HashEmbedding {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        Ok(word_tokens(text)
            .into_iter()
            .map(|token| {
                let vector = seeded_unit_vector(&token, self.salt, self.dim);
                TokenEmbedding { token, vector }
            })
            .collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Stub where distinct lowercased words get exactly orthogonal one-hot
/// vectors, so cosine is 1 for equal words and 0 otherwise.
#[derive(Debug)]
pub struct OrthogonalEmbedding {
    dim: usize,
    vocab: Mutex<HashMap<String, usize>>,
}

impl OrthogonalEmbedding {
    pub fn new(dim: usize) -> Self {
        OrthogonalEmbedding { dim, vocab: Mutex::new(HashMap::new()) }
    }
}

impl Default for OrthogonalEmbedding {
    fn default() -> Self {
        OrthogonalEmbedding::new(4096)
    }
}

impl EmbeddingBackend for OrthogonalEmbedding {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        let mut vocab = self.vocab.lock().expect("vocabulary poisoned");
        word_tokens(text)
            .into_iter()
            .map(|token| {
                let next = vocab.len();
                let idx = *vocab.entry(token.clone()).or_insert(next);
                if idx >= self.dim {
                    return Err(BackendError::Other(format!("orthogonal stub vocabulary exceeds {} words", self.dim)));
                }
                let mut vector = vec![0.0; self.dim];
                vector[idx] = 1.0;
                Ok(TokenEmbedding { token, vector })
            })
            .collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SimilarityScore {
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        SimilarityScore { precision, recall, f1 }
    }
}

/// Inverse document frequency weights for the optional weighted mean.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdfTable {
    weights: HashMap<String, f64>,
    unseen: f64,
}

#[derive(Serialize, Deserialize)]
struct IdfRow {
    token: String,
    weight: f64,
}

impl IdfTable {
    /// `idf(w) = ln((N + 1) / (df(w) + 1))` over word-tokenized documents.
    /// Unseen words get `ln(N + 1)`.
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for doc in docs {
            n += 1;
            let mut seen = word_tokens(doc);
            seen.sort();
            seen.dedup();
            for w in seen {
                *df.entry(w).or_default() += 1;
            }
        }
        let total = (n + 1) as f64;
        IdfTable {
            weights: df.into_iter().map(|(w, d)| (w, (total / (d + 1) as f64).ln())).collect(),
            unseen: total.ln(),
        }
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(&token.to_lowercase()).copied().unwrap_or(self.unseen)
    }

    /// Line-delimited `{"token", "weight"}` rows, sorted by token. The
    /// unseen-word weight is stored under the empty token.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<IdfRow> = self.weights.iter().map(|(t, w)| IdfRow { token: t.clone(), weight: *w }).collect();
        rows.sort_by(|a, b| a.token.cmp(&b.token));
        rows.insert(0, IdfRow { token: String::new(), weight: self.unseen });
        write_jsonl(path, &rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut table = IdfTable::default();
        for row in read_jsonl::<IdfRow>(path)? {
            if row.token.is_empty() {
                table.unseen = row.weight;
            } else {
                table.weights.insert(row.token, row.weight);
            }
        }
        Ok(table)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Mean (optionally IDF-weighted) over `from` of the best cosine against `to`.
fn greedy_mean(from: &[TokenEmbedding], to: &[TokenEmbedding], idf: Option<&IdfTable>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in from {
        let best = to.iter().map(|u| cosine(&t.vector, &u.vector)).fold(f64::NEG_INFINITY, f64::max);
        let w = idf.map_or(1.0, |table| table.weight(&t.token));
        num += w * best;
        den += w;
    }
    if den > 0.0 {
        (num / den).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Similarity scorer bound to a backend and an optional IDF table.
#[derive(Clone)]
pub struct Similarity {
    backend: Arc<dyn EmbeddingBackend>,
    idf: Option<Arc<IdfTable>>,
}

impl Similarity {
    pub fn new(backend: Arc<dyn EmbeddingBackend>) -> Self {
        Similarity { backend: shareable(backend), idf: None }
    }

    pub fn with_idf(mut self, idf: IdfTable) -> Self {
        self.idf = Some(Arc::new(idf));
        self
    }

    pub fn backend(&self) -> &Arc<dyn EmbeddingBackend> {
        &self.backend
    }

    fn embed(&self, text: &str) -> Result<Vec<TokenEmbedding>> {
        let tokens = self.backend.embed_tokens(text)?;
        let dim = self.backend.dim();
        if let Some(bad) = tokens.iter().find(|t| t.vector.len() != dim) {
            return Err(BackendError::Contract(format!(
                "token {:?} has dimension {}, backend declares {dim}",
                bad.token,
                bad.vector.len()
            ))
            .into());
        }
        Ok(tokens)
    }

    fn score_embedded(&self, cand: &[TokenEmbedding], reference: &[TokenEmbedding]) -> SimilarityScore {
        let idf = self.idf.as_deref();
        SimilarityScore::from_precision_recall(greedy_mean(cand, reference, idf), greedy_mean(reference, cand, idf))
    }

    /// Precision averages over candidate tokens, recall over reference
    /// tokens.
    pub fn token_similarity(&self, candidate: &str, reference: &str) -> Result<SimilarityScore> {
        if candidate.trim().is_empty() || reference.trim().is_empty() {
            return Err(Error::EmptyInput("similarity text"));
        }
        let cand = self.embed(candidate)?;
        let refr = self.embed(reference)?;
        if cand.is_empty() || refr.is_empty() {
            return Err(Error::EmptyInput("similarity text has no tokens"));
        }
        Ok(self.score_embedded(&cand, &refr))
    }

    /// Thresholded F1 match. Two empty texts match; an empty text never
    /// matches a non-empty one. Texts the backend yields no tokens for count
    /// as empty.
    pub fn is_match(&self, a: &str, b: &str, tau: f64) -> Result<bool> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau {tau} outside (0, 1]")));
        }
        let ea = if a.trim().is_empty() { Vec::new() } else { self.embed(a)? };
        let eb = if b.trim().is_empty() { Vec::new() } else { self.embed(b)? };
        Ok(match (ea.is_empty(), eb.is_empty()) {
            (true, true) => true,
            (true, false) | (false, true) => false,
            (false, false) => self.score_embedded(&ea, &eb).f1 >= tau,
        })
    }

    /// Index of the reference most similar to the student answer; ties go to
    /// the earliest reference.
    pub fn nearest_reference_index(&self, student: &str, references: &[ReferenceSolution]) -> Result<usize> {
        if references.is_empty() {
            return Err(Error::EmptyInput("reference list"));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, r) in references.iter().enumerate() {
            let f1 = self.token_similarity(&r.text, student)?.f1;
            if f1 > best.1 {
                best = (i, f1);
            }
        }
        Ok(best.0)
    }

    pub fn nearest_reference<'a>(
        &self,
        student: &str,
        references: &'a [ReferenceSolution],
    ) -> Result<&'a ReferenceSolution> {
        Ok(&references[self.nearest_reference_index(student, references)?])
    }
}
