//! Personalized question-based feedback for tutoring dialogues.
//!
//! A student answer is split into cause and effect, compared with the
//! closest reference solution, assigned an error category, and answered
//! with a templated hint that embeds a generated, re-ranked question.
//! Every neural component sits behind a trait with deterministic stubs.

pub mod benchmark;
pub mod cause_effect;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod hintqa;
pub mod qg;
pub mod reranker;
pub mod similarity;
pub mod text;

pub use cause_effect::{decompose, Connective, Decomposition};
pub use classifier::{classify, ErrorCategory, DEFAULT_TAU};
pub use corpus::{Exercise, FeedbackModel, InteractionRecord, ReferenceSolution};
pub use error::{BackendError, Error, Result};
pub use feedback::{advance_dialogue, DialogueState, FeedbackEngine, FeedbackMessage, Phase};
pub use qg::{GeneratorBackend, QuestionCandidate};
pub use reranker::{AuxiliaryScorers, FeatureSet, FeatureVector, RerankerModel};
pub use similarity::{EmbeddingBackend, Similarity};
