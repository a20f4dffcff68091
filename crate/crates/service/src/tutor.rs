//! Tutoring sessions over the feedback engine, shared by the HTTP server and
//! the terminal chat.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use qfeedback::corpus::{load_exercises, InteractionStore, JsonlInteractionStore};
use qfeedback::feedback::{
    advance_dialogue, FeedbackKind, FeedbackMessage, LiveQuestions, SimilarityChecker, SolutionChecker, Templates,
};
use qfeedback::qg::attach_question_bank;
use qfeedback::reranker::{FeatureSet, RerankerModel, DEFAULT_EMBEDDING_DIM};
use qfeedback::{DialogueState, Error, Exercise, FeedbackEngine, InteractionRecord, Phase, Result, Similarity};

use crate::backends;
use crate::config::AppConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    /// Feedback kind for system turns that carry feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FeedbackKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcq_options: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseSummary {
    pub id: String,
    pub problem: String,
}

impl From<&Exercise> for ExerciseSummary {
    fn from(e: &Exercise) -> Self {
        ExerciseSummary { id: e.id.clone(), problem: e.problem.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResource {
    pub session_id: String,
    pub exercise: ExerciseSummary,
    pub state: DialogueState,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: String,
    pub phase: Phase,
    pub verdict: Option<bool>,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackMessage>,
}

pub struct Tutor {
    exercises: Vec<Exercise>,
    index: HashMap<String, usize>,
    engine: FeedbackEngine,
    checker: Arc<dyn SolutionChecker>,
    store: Arc<dyn InteractionStore>,
}

impl Tutor {
    pub fn new(
        exercises: Vec<Exercise>,
        engine: FeedbackEngine,
        checker: Arc<dyn SolutionChecker>,
        store: Arc<dyn InteractionStore>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, e) in exercises.iter().enumerate() {
            e.validate()?;
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate exercise id {}", e.id)));
            }
        }
        Ok(Tutor { exercises, index, engine, checker, store })
    }

    /// Loads the corpus, question bank, templates and backends named by
    /// `config`, logging interactions to the configured file.
    pub fn from_config(config: &AppConfig) -> Result<Self> {
        let store = Arc::new(JsonlInteractionStore::open(&config.data.interactions)?);
        Tutor::with_store(config, store)
    }

    pub fn with_store(config: &AppConfig, store: Arc<dyn InteractionStore>) -> Result<Self> {
        let mut exercises = load_exercises(&config.data.exercises).map_err(|e| e.at_stage("load exercises"))?;
        if let Some(bank) = &config.data.question_bank {
            attach_question_bank(&mut exercises, bank).map_err(|e| e.at_stage("load question bank"))?;
        }
        let similarity = Similarity::new(backends::embedding(&config.backends.embedding)?);
        let f = &config.feedback;
        let mut engine = FeedbackEngine::new(similarity.clone())
            .with_tau(f.tau)?
            .with_mode(f.mode)
            .with_max_attempts(f.max_attempts)?;
        if let Some(path) = &config.data.templates {
            engine = engine.with_templates(Templates::load(path)?);
        }
        let model = match &config.backends.reranker_model {
            Some(p) => RerankerModel::load(p)?,
            None => RerankerModel::mean_baseline(0.0, FeatureSet::Full, DEFAULT_EMBEDDING_DIM),
        };
        if let Some(generator) = backends::generator(&config.backends.generator)? {
            engine = engine.with_live_questions(LiveQuestions {
                generator,
                scorers: backends::scorers(&config.backends.scorers)?,
                model: model.clone(),
                k: f.k,
                max_out: f.max_out,
            })?;
        }
        engine = engine.with_bank_model(model);
        let checker = Arc::new(SimilarityChecker { similarity, tau_checker: f.tau_checker });
        Tutor::new(exercises, engine, checker, store)
    }

    pub fn exercises(&self) -> &[Exercise] {
        &self.exercises
    }

    pub fn exercise(&self, id: &str) -> Option<&Exercise> {
        self.index.get(id).map(|&i| &self.exercises[i])
    }

    pub fn engine(&self) -> &FeedbackEngine {
        &self.engine
    }

    pub fn store(&self) -> &Arc<dyn InteractionStore> {
        &self.store
    }

    pub fn start(&self, exercise_id: &str, session_id: String) -> Result<SessionResource> {
        let exercise =
            self.exercise(exercise_id).ok_or_else(|| Error::Validation(format!("unknown exercise {exercise_id}")))?;
        Ok(SessionResource {
            state: DialogueState::new(session_id.clone(), exercise_id),
            session_id,
            exercise: exercise.into(),
            transcript: vec![TranscriptEntry {
                speaker: Speaker::System,
                text: exercise.problem.clone(),
                timestamp: Utc::now(),
                kind: None,
                mcq_options: None,
            }],
        })
    }

    /// Applies one student message. The interaction record is persisted
    /// before the session changes, so a storage failure leaves the session
    /// untouched.
    pub fn respond(&self, session: &mut SessionResource, input: &str) -> Result<MessageReply> {
        let exercise = self
            .exercise(&session.state.exercise_id)
            .ok_or_else(|| Error::State(format!("exercise {} disappeared", session.state.exercise_id)))?;
        let turn = advance_dialogue(&session.state, input, exercise, &self.engine, self.checker.as_ref())?;
        let now = Utc::now();
        if let Some(attempt) = &turn.evaluated {
            self.store.append(InteractionRecord {
                session_id: session.session_id.clone(),
                exercise_id: exercise.id.clone(),
                student_answer: attempt.answer.clone(),
                feedback_shown: attempt.feedback_shown.clone(),
                checker_verdict: attempt.verdict,
                attempt_index: attempt.attempt_index,
                feedback_model: self.engine.mode().label(),
                timestamp: now,
            })?;
        }
        let feedback = if turn.evaluated.as_ref().is_some_and(|a| a.feedback_shown.is_some()) {
            turn.state.last_feedback.clone()
        } else {
            None
        };
        session.transcript.push(TranscriptEntry {
            speaker: Speaker::Student,
            text: input.to_string(),
            timestamp: now,
            kind: None,
            mcq_options: None,
        });
        session.transcript.push(TranscriptEntry {
            speaker: Speaker::System,
            text: turn.reply.clone(),
            timestamp: now,
            kind: feedback.as_ref().map(|f| f.kind),
            mcq_options: feedback.as_ref().and_then(|f| f.mcq_options.clone()),
        });
        session.state = turn.state;
        Ok(MessageReply {
            reply: turn.reply,
            phase: session.state.phase,
            verdict: turn.verdict,
            attempt_count: session.state.attempt_count,
            feedback,
        })
    }
}
