//! Backend selection from short spec strings.
//!
//! | kind       | specs                                                   |
//! |------------|---------------------------------------------------------|
//! | embedding  | `orthogonal`, `hash`, `http(s)://…`                     |
//! | generator  | `template`, `memorizing`, `memorizing:<state.json>`, `none`, `http(s)://…` |
//! | scorers    | `stub`, `lm:<qg_dataset.jsonl>`, `http(s)://…`          |
//! | nli        | `overlap`, `http(s)://…`                                |

use std::path::Path;
use std::sync::Arc;

use qfeedback::corpus::load_qg_dataset;
use qfeedback::hintqa::{NliBackend, TokenOverlapNli};
use qfeedback::qg::{GeneratorBackend, MemorizingGenerator, TemplateGenerator};
use qfeedback::reranker::{AuxiliaryScorers, StubScorers, DEFAULT_EMBEDDING_DIM};
use qfeedback::similarity::{shareable, EmbeddingBackend, HashEmbedding, OrthogonalEmbedding};
use qfeedback::{Error, Result};

use crate::adapters::{HttpEmbedding, HttpGenerator, HttpNli, HttpScorers};

/// Token-embedding width assumed for HTTP embedding servers.
pub const HTTP_TOKEN_DIM: usize = 768;

fn is_http(spec: &str) -> bool {
    spec.starts_with("http://") || spec.starts_with("https://")
}

fn unknown(kind: &str, spec: &str) -> Error {
    Error::Config(format!("unknown {kind} backend {spec:?}"))
}

pub fn embedding(spec: &str) -> Result<Arc<dyn EmbeddingBackend>> {
    let backend: Arc<dyn EmbeddingBackend> = match spec {
        "orthogonal" => Arc::new(OrthogonalEmbedding::default()),
        "hash" => Arc::new(HashEmbedding::default()),
        s if is_http(s) => Arc::new(HttpEmbedding::new(s, HTTP_TOKEN_DIM)?),
        s => return Err(unknown("embedding", s)),
    };
    Ok(shareable(backend))
}

/// `None` for the `none` spec: questions then come only from a bank.
pub fn generator(spec: &str) -> Result<Option<Arc<dyn GeneratorBackend>>> {
    Ok(Some(match spec {
        "none" => return Ok(None),
        "template" => Arc::new(TemplateGenerator),
        "memorizing" => Arc::new(MemorizingGenerator::new()),
        s if is_http(s) => Arc::new(HttpGenerator::new(s)?),
        s => match s.strip_prefix("memorizing:") {
            Some(path) => Arc::new(load_memorizing(Path::new(path))?),
            None => return Err(unknown("generator", s)),
        },
    }))
}

pub fn load_memorizing(path: &Path) -> Result<MemorizingGenerator> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("generator state {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn scorers(spec: &str) -> Result<Arc<dyn AuxiliaryScorers>> {
    let dim = DEFAULT_EMBEDDING_DIM;
    Ok(match spec {
        "stub" => Arc::new(StubScorers::constant(dim, 0.5, 10.0)),
        s if is_http(s) => Arc::new(HttpScorers::new(s, dim)?),
        s => match s.strip_prefix("lm:") {
            Some(path) => {
                let data = load_qg_dataset(Path::new(path))?;
                Arc::new(StubScorers::trained(dim, data.iter().map(|e| e.target.as_str())))
            }
            None => return Err(unknown("scorers", s)),
        },
    })
}

pub fn nli(spec: &str) -> Result<Arc<dyn NliBackend>> {
    Ok(match spec {
        "overlap" => Arc::new(TokenOverlapNli),
        s if is_http(s) => Arc::new(HttpNli::new(s)?),
        s => return Err(unknown("nli", s)),
    })
}
