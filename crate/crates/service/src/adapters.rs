//! Blocking JSON-over-HTTP adapters for out-of-process model servers.
//!
//! Calls block; inside an async runtime run them on a blocking thread.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qfeedback::hintqa::NliBackend;
use qfeedback::qg::{
    Generated, GenerationRequest, GenerationResponse, GeneratorBackend, Seq2SeqExample, TrainConfig, TrainedGenerator,
};
use qfeedback::reranker::AuxiliaryScorers;
use qfeedback::similarity::{EmbeddingBackend, TokenEmbedding};
use qfeedback::BackendError;

const TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone)]
struct Endpoint {
    base: String,
    client: Client,
}

impl Endpoint {
    fn new(base: &str) -> Result<Self, BackendError> {
        let client = Client::builder().timeout(TIMEOUT).build().map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Endpoint { base: base.trim_end_matches('/').to_string(), client })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = format!("{}/{path}", self.base);
        let resp =
            self.client.post(&url).json(body).send().map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Transport(format!("{url}: HTTP {status}: {text}")));
        }
        resp.json().map_err(|e| BackendError::Contract(format!("{url}: bad response body: {e}")))
    }
}

#[derive(Debug, Serialize)]
struct TextBody<'a> {
    text: &'a str,
}

/// Seq2seq generator behind `POST /generate` and `POST /fine_tune`.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: Endpoint,
}

#[derive(Debug, Serialize)]
struct FineTuneBody<'a> {
    train: &'a [Seq2SeqExample],
    valid: &'a [Seq2SeqExample],
    config: &'a TrainConfig,
}

#[derive(Debug, Deserialize)]
struct FineTuneResponse {
    /// Base URL serving the fine-tuned model.
    model_url: String,
    validation_losses: Vec<f64>,
}

impl HttpGenerator {
    pub fn new(base: &str) -> Result<Self, BackendError> {
        Ok(HttpGenerator { endpoint: Endpoint::new(base)? })
    }
}

impl GeneratorBackend for HttpGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Generated>, BackendError> {
        let resp: GenerationResponse = self.endpoint.post("generate", request)?;
        if resp.candidates.len() > request.beams {
            return Err(BackendError::Contract(format!(
                "asked for {} beams, got {}",
                request.beams,
                resp.candidates.len()
            )));
        }
        Ok(resp.candidates)
    }

    fn fine_tune(
        &self,
        train: &[Seq2SeqExample],
        valid: &[Seq2SeqExample],
        config: &TrainConfig,
    ) -> Result<TrainedGenerator, BackendError> {
        let resp: FineTuneResponse = self.endpoint.post("fine_tune", &FineTuneBody { train, valid, config })?;
        Ok(TrainedGenerator {
            backend: Arc::new(HttpGenerator::new(&resp.model_url)?),
            validation_losses: resp.validation_losses,
        })
    }

    fn export(&self) -> Result<serde_json::Value, BackendError> {
        Ok(serde_json::json!({ "kind": "http", "url": self.endpoint.base }))
    }
}

/// Contextual token embeddings behind `POST /embed_tokens`.
#[derive(Debug, Clone)]
pub struct HttpEmbedding {
    endpoint: Endpoint,
    dim: usize,
}

#[derive(Debug, Deserialize)]
struct TokensResponse {
    tokens: Vec<TokenEmbedding>,
}

impl HttpEmbedding {
    pub fn new(base: &str, dim: usize) -> Result<Self, BackendError> {
        Ok(HttpEmbedding { endpoint: Endpoint::new(base)?, dim })
    }
}

impl EmbeddingBackend for HttpEmbedding {
    fn embed_tokens(&self, text: &str) -> Result<Vec<TokenEmbedding>, BackendError> {
        let resp: TokensResponse = self.endpoint.post("embed_tokens", &TextBody { text })?;
        if let Some(bad) = resp.tokens.iter().find(|t| t.vector.len() != self.dim) {
            return Err(BackendError::Contract(format!(
                "token {:?} has dimension {}, expected {}",
                bad.token,
                bad.vector.len(),
                self.dim
            )));
        }
        Ok(resp.tokens)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Entailment model behind `POST /entailment`.
#[derive(Debug, Clone)]
pub struct HttpNli {
    endpoint: Endpoint,
}

#[derive(Debug, Serialize)]
struct NliBody<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Debug, Deserialize)]
struct ProbResponse {
    prob: f64,
}

impl HttpNli {
    pub fn new(base: &str) -> Result<Self, BackendError> {
        Ok(HttpNli { endpoint: Endpoint::new(base)? })
    }
}

impl NliBackend for HttpNli {
    fn entailment_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        let resp: ProbResponse = self.endpoint.post("entailment", &NliBody { premise, hypothesis })?;
        Ok(resp.prob)
    }
}

/// Sentence embedding, well-formedness and perplexity behind
/// `POST /sentence_embed`, `/well_formed` and `/perplexity`.
#[derive(Debug, Clone)]
pub struct HttpScorers {
    endpoint: Endpoint,
    dim: usize,
}

#[derive(Debug, Deserialize)]
struct VectorResponse {
    vector: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct PerplexityResponse {
    perplexity: f64,
}

impl HttpScorers {
    pub fn new(base: &str, dim: usize) -> Result<Self, BackendError> {
        Ok(HttpScorers { endpoint: Endpoint::new(base)?, dim })
    }
}

impl AuxiliaryScorers for HttpScorers {
    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.endpoint.post::<_, VectorResponse>("sentence_embed", &TextBody { text })?.vector)
    }

    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn well_formed_prob(&self, text: &str) -> Result<f64, BackendError> {
        Ok(self.endpoint.post::<_, ProbResponse>("well_formed", &TextBody { text })?.prob)
    }

    fn perplexity(&self, text: &str) -> Result<f64, BackendError> {
        Ok(self.endpoint.post::<_, PerplexityResponse>("perplexity", &TextBody { text })?.perplexity)
    }
}
