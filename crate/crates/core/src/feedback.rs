//! Personalized feedback: template rendering per error category and the
//! multi-turn follow-up protocol.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cause_effect::{decompose, has_cause, Decomposition};
use crate::classifier::{classify, ErrorCategory, DEFAULT_TAU};
use crate::corpus::{Exercise, FeedbackModel, ReferenceSolution};
use crate::error::{Error, Result};
use crate::qg::{generate_candidates, score_candidates, GeneratorBackend};
use crate::reranker::{rerank, AuxiliaryScorers, RerankerModel};
use crate::similarity::Similarity;
use crate::text::{is_blank, strip_question_mark};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

const BUILTIN_TEMPLATES: &str = include_str!("../templates/feedback.toml");

/// Message strings, loaded from a versioned TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub version: u32,
    pub incorrect_effect: String,
    pub missing_cause: String,
    pub incorrect_cause: String,
    pub confirm_effect: String,
    pub mcq_agree: String,
    pub mcq_disagree: String,
    pub mcq_reprompt: String,
    pub minimal: String,
    pub subanswer_ack: String,
    pub correct: String,
    pub move_on: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::parse(BUILTIN_TEMPLATES).expect("built-in templates are valid")
    }
}

impl Templates {
    pub fn parse(source: &str) -> Result<Self> {
        let t: Templates = toml::from_str(source).map_err(|e| Error::Config(format!("templates: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Templates::parse(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Result<()> {
        let checks: [(&str, &str, &[&str]); 11] = [
            ("incorrect_effect", &self.incorrect_effect, &["e_s", "q"]),
            ("missing_cause", &self.missing_cause, &["e_s", "q"]),
            ("incorrect_cause", &self.incorrect_cause, &["e_s", "q"]),
            ("confirm_effect", &self.confirm_effect, &["e_r", "c_s"]),
            ("mcq_agree", &self.mcq_agree, &[]),
            ("mcq_disagree", &self.mcq_disagree, &[]),
            ("mcq_reprompt", &self.mcq_reprompt, &[]),
            ("minimal", &self.minimal, &[]),
            ("subanswer_ack", &self.subanswer_ack, &[]),
            ("correct", &self.correct, &[]),
            ("move_on", &self.move_on, &[]),
        ];
        for (name, template, allowed) in checks {
            if template.trim().is_empty() {
                return Err(Error::Config(format!("template {name} is empty")));
            }
            for p in placeholders(template) {
                if !allowed.contains(&p) {
                    return Err(Error::Config(format!("template {name} uses unknown placeholder {{{p}}}")));
                }
            }
        }
        if self.mcq_agree.trim() == self.mcq_disagree.trim() {
            return Err(Error::Config("MCQ options must differ".into()));
        }
        Ok(())
    }
}

fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_name(&after[..close]) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Single-pass substitution: inserted values are never re-scanned, so
/// braces inside student text stay literal.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').map(|close| &after[..close]).and_then(|name| values.iter().find(|(k, _)| *k == name));
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    StatementPlusQuestion,
    Mcq,
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Followup {
    ExpectSubanswerThenRetry,
    ExpectMcqChoice,
    ExpectRetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub category: ErrorCategory,
    pub text: String,
    pub kind: FeedbackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcq_options: Option<(String, String)>,
    pub followup: Followup,
    /// Reference the answer was compared against.
    pub reference_id: String,
    /// Question embedded in the text, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Category-specific templates with a generated question.
    QuestionBased,
    /// The same "try again" text for every wrong answer.
    Minimal,
}

impl FeedbackMode {
    pub fn label(self) -> FeedbackModel {
        match self {
            FeedbackMode::QuestionBased => FeedbackModel::QuestionBased,
            FeedbackMode::Minimal => FeedbackModel::Minimal,
        }
    }
}

/// Generates questions on demand when a reference has no precomputed bank.
#[derive(Clone)]
pub struct LiveQuestions {
    pub generator: Arc<dyn GeneratorBackend>,
    pub scorers: Arc<dyn AuxiliaryScorers>,
    pub model: RerankerModel,
    pub k: usize,
    pub max_out: usize,
}

#[derive(Clone)]
pub struct FeedbackEngine {
    similarity: Similarity,
    tau: f64,
    templates: Templates,
    mode: FeedbackMode,
    max_attempts: u32,
    bank_model: Option<RerankerModel>,
    live: Option<LiveQuestions>,
}

impl FeedbackEngine {
    pub fn new(similarity: Similarity) -> Self {
        FeedbackEngine {
            similarity,
            tau: DEFAULT_TAU,
            templates: Templates::default(),
            mode: FeedbackMode::QuestionBased,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            bank_model: None,
            live: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau {tau} outside (0, 1]")));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn with_templates(mut self, templates: Templates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_mode(mut self, mode: FeedbackMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Result<Self> {
        if max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        self.max_attempts = max_attempts;
        Ok(self)
    }

    /// Scores bank entries that carry features but no stored prediction.
    pub fn with_bank_model(mut self, model: RerankerModel) -> Self {
        self.bank_model = Some(model);
        self
    }

    pub fn with_live_questions(mut self, live: LiveQuestions) -> Result<Self> {
        if live.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.live = Some(live);
        Ok(self)
    }

    pub fn similarity(&self) -> &Similarity {
        &self.similarity
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    /// Feedback for a wrong answer to `exercise`.
    pub fn generate_feedback(&self, exercise: &Exercise, student_answer: &str) -> Result<FeedbackMessage> {
        if is_blank(student_answer) {
            return Err(Error::EmptyInput("student answer"));
        }
        let reference = self.similarity.nearest_reference(student_answer, &exercise.references)?;
        let reference_d = match &reference.decomposition {
            Some(d) => d.clone(),
            None => decompose(&reference.text)?,
        };
        let student_d = decompose(student_answer)?;
        let category = classify(&student_d, &reference_d, &self.similarity, self.tau)?;
        if self.mode == FeedbackMode::Minimal {
            return Ok(self.minimal(category, reference));
        }
        self.personalized(category, reference, &reference_d, &student_d)
    }

    fn minimal(&self, category: ErrorCategory, reference: &ReferenceSolution) -> FeedbackMessage {
        FeedbackMessage {
            category,
            text: self.templates.minimal.clone(),
            kind: FeedbackKind::Minimal,
            mcq_options: None,
            followup: Followup::ExpectRetry,
            reference_id: reference.id.clone(),
            question: None,
        }
    }

    fn personalized(
        &self,
        category: ErrorCategory,
        reference: &ReferenceSolution,
        reference_d: &Decomposition,
        student_d: &Decomposition,
    ) -> Result<FeedbackMessage> {
        let t = &self.templates;
        let with_question = |template: &str| -> Result<FeedbackMessage> {
            let q = self.select_question(reference)?;
            let text = render(template, &[("e_s", &student_d.effect), ("q", strip_question_mark(&q))]);
            Ok(FeedbackMessage {
                category,
                text,
                kind: FeedbackKind::StatementPlusQuestion,
                mcq_options: None,
                followup: Followup::ExpectSubanswerThenRetry,
                reference_id: reference.id.clone(),
                question: Some(q),
            })
        };
        match category {
            ErrorCategory::IncorrectCauseIncorrectEffect => with_question(&t.incorrect_effect),
            ErrorCategory::MissingCauseCorrectEffect => with_question(&t.missing_cause),
            ErrorCategory::IncorrectCauseCorrectEffect => with_question(&t.incorrect_cause),
            ErrorCategory::CorrectCauseIncorrectEffect => {
                let student_cause = if has_cause(student_d) { student_d.cause.as_str() } else { "" };
                Ok(FeedbackMessage {
                    category,
                    text: render(&t.confirm_effect, &[("e_r", &reference_d.effect), ("c_s", student_cause)]),
                    kind: FeedbackKind::Mcq,
                    mcq_options: Some((t.mcq_agree.clone(), t.mcq_disagree.clone())),
                    followup: Followup::ExpectMcqChoice,
                    reference_id: reference.id.clone(),
                    question: None,
                })
            }
            ErrorCategory::NoDetectedError => Ok(self.minimal(category, reference)),
        }
    }

    /// Highest predicted-usefulness question for `reference`: from its bank
    /// when there is one, otherwise from the live generator.
    pub fn select_question(&self, reference: &ReferenceSolution) -> Result<String> {
        let bank = &reference.question_bank;
        if !bank.is_empty() {
            let i = rerank(bank, self.bank_model.as_ref())?;
            return Ok(bank[i].question.clone());
        }
        let Some(live) = &self.live else {
            return Err(Error::Config(format!(
                "reference {} has an empty question bank and no generator is configured",
                reference.id
            )));
        };
        let mut candidates = generate_candidates(reference, live.generator.as_ref(), live.k, live.max_out)?;
        score_candidates(&mut candidates, live.scorers.as_ref(), &live.model)?;
        let i = rerank(&candidates, None)?;
        Ok(candidates.swap_remove(i).question)
    }
}

/// Decides whether an attempt at the original exercise is correct.
pub trait SolutionChecker: Send + Sync {
    fn check(&self, exercise: &Exercise, answer: &str) -> Result<bool>;
}

/// True iff some reference scores F1 at least `tau_checker` against the answer.
pub fn solution_check(answer: &str, exercise: &Exercise, similarity: &Similarity, tau_checker: f64) -> Result<bool> {
    if exercise.references.is_empty() {
        return Err(Error::EmptyInput("reference list"));
    }
    if !(tau_checker > 0.0 && tau_checker <= 1.0) {
        return Err(Error::Config(format!("tau_checker {tau_checker} outside (0, 1]")));
    }
    for r in &exercise.references {
        if similarity.token_similarity(answer, &r.text)?.f1 >= tau_checker {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone)]
pub struct SimilarityChecker {
    pub similarity: Similarity,
    pub tau_checker: f64,
}

impl SolutionChecker for SimilarityChecker {
    fn check(&self, exercise: &Exercise, answer: &str) -> Result<bool> {
        solution_check(answer, exercise, &self.similarity, self.tau_checker)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingAnswer,
    AwaitingSubanswer,
    AwaitingRetry,
    AwaitingMcq,
    Done,
}

impl Phase {
    pub fn can_move_to(self, next: Phase) -> bool {
        use Phase::*;
        match self {
            AwaitingAnswer | AwaitingRetry => next != AwaitingAnswer,
            AwaitingSubanswer => next == AwaitingRetry,
            AwaitingMcq => matches!(next, Done | AwaitingMcq),
            Done => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub session_id: String,
    pub exercise_id: String,
    pub phase: Phase,
    /// Evaluated attempts so far, including MCQ choices.
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_feedback: Option<FeedbackMessage>,
}

impl DialogueState {
    pub fn new(session_id: impl Into<String>, exercise_id: impl Into<String>) -> Self {
        DialogueState {
            session_id: session_id.into(),
            exercise_id: exercise_id.into(),
            phase: Phase::AwaitingAnswer,
            attempt_count: 0,
            last_feedback: None,
        }
    }
}

/// An attempt that received a verdict; the service persists one
/// interaction record per evaluated attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedAttempt {
    pub answer: String,
    pub verdict: bool,
    pub attempt_index: u32,
    /// Feedback shown in reply to this attempt.
    pub feedback_shown: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub state: DialogueState,
    pub reply: String,
    pub verdict: Option<bool>,
    pub evaluated: Option<EvaluatedAttempt>,
}

/// Applies one student turn to `state` and returns the successor state with
/// the system reply. Sub-answers are acknowledged and never evaluated.
pub fn advance_dialogue(
    state: &DialogueState,
    student_input: &str,
    exercise: &Exercise,
    engine: &FeedbackEngine,
    checker: &dyn SolutionChecker,
) -> Result<Turn> {
    if state.exercise_id != exercise.id {
        return Err(Error::State(format!("session is for exercise {}, got {}", state.exercise_id, exercise.id)));
    }
    let t = engine.templates();
    let mut next = state.clone();
    let turn = match state.phase {
        Phase::Done => return Err(Error::State(format!("session {} is finished", state.session_id))),
        _ if student_input.trim().is_empty() => return Err(Error::EmptyInput("student message")),
        Phase::AwaitingSubanswer => {
            next.phase = Phase::AwaitingRetry;
            Turn { state: next, reply: t.subanswer_ack.clone(), verdict: None, evaluated: None }
        }
        Phase::AwaitingMcq => {
            let choice = student_input.trim();
            let verdict = if choice == t.mcq_agree.trim() {
                true
            } else if choice == t.mcq_disagree.trim() {
                false
            } else {
                return Ok(Turn { state: next, reply: t.mcq_reprompt.clone(), verdict: None, evaluated: None });
            };
            next.attempt_count += 1;
            next.phase = Phase::Done;
            let reply = if verdict { t.correct.clone() } else { t.move_on.clone() };
            Turn {
                evaluated: Some(EvaluatedAttempt {
                    answer: choice.to_string(),
                    verdict,
                    attempt_index: next.attempt_count,
                    feedback_shown: None,
                }),
                state: next,
                reply,
                verdict: Some(verdict),
            }
        }
        Phase::AwaitingAnswer | Phase::AwaitingRetry => {
            let verdict = checker.check(exercise, student_input)?;
            next.attempt_count += 1;
            let (reply, feedback_shown) = if verdict {
                next.phase = Phase::Done;
                (t.correct.clone(), None)
            } else if next.attempt_count >= engine.max_attempts() {
                next.phase = Phase::Done;
                (t.move_on.clone(), None)
            } else {
                let fb = engine.generate_feedback(exercise, student_input)?;
                next.phase = match fb.followup {
                    Followup::ExpectSubanswerThenRetry => Phase::AwaitingSubanswer,
                    Followup::ExpectMcqChoice => Phase::AwaitingMcq,
                    Followup::ExpectRetry => Phase::AwaitingRetry,
                };
                let text = fb.text.clone();
                next.last_feedback = Some(fb);
                (text.clone(), Some(text))
            };
            Turn {
                evaluated: Some(EvaluatedAttempt {
                    answer: student_input.to_string(),
                    verdict,
                    attempt_index: next.attempt_count,
                    feedback_shown,
                }),
                state: next,
                reply,
                verdict: Some(verdict),
            }
        }
    };
    debug_assert!(state.phase.can_move_to(turn.state.phase));
    Ok(turn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qg::QuestionCandidate;
    use crate::similarity::OrthogonalEmbedding;
    use std::sync::atomic::{AtomicUsize, Ordering};

    const REF: &str = "Treatment A, because results with higher variance are less homogeneous";
    const Q: &str = "Do we prefer less or more homogeneous results?";

    fn sim() -> Similarity {
        Similarity::new(Arc::new(OrthogonalEmbedding::default()))
    }

    fn exercise() -> Exercise {
        let mut ex = Exercise::new(
            "treat",
            "Which treatment has more homogeneous results?",
            &[REF, "Treatment A, because it is less homogeneous than treatment B"],
        );
        for r in &mut ex.references {
            r.question_bank = vec![
                QuestionCandidate {
                    predicted_usefulness: Some(2.0),
                    ..QuestionCandidate::new("What is variance?", -0.1, 0.5)
                },
                QuestionCandidate { predicted_usefulness: Some(4.0), ..QuestionCandidate::new(Q, -0.2, 0.7) },
            ];
        }
        ex
    }

    fn engine() -> FeedbackEngine {
        FeedbackEngine::new(sim())
    }

    #[test]
    fn builtin_templates_load() {
        let t = Templates::default();
        assert_eq!(t.version, 1);
        assert_eq!(t.mcq_agree, "Yes, I agree");
        assert!(Templates::parse("version = 1").is_err());
        let bad = BUILTIN_TEMPLATES.replace("{e_r}", "{zz}");
        assert!(Templates::parse(&bad).is_err());
    }

    #[test]
    fn render_is_single_pass() {
        assert_eq!(render("{a} and {b}", &[("a", "{b}"), ("b", "x")]), "{b} and x");
        assert_eq!(render("{ unknown } {a", &[("a", "1")]), "{ unknown } {a");
    }

    #[test]
    fn missing_cause_uses_best_bank_question() {
        let fb = engine().generate_feedback(&exercise(), "Treatment A").unwrap();
        assert_eq!(fb.category, ErrorCategory::MissingCauseCorrectEffect);
        assert_eq!(
            fb.text,
            "\"Treatment A\" is correct! Try supplying a reason for it. Do we prefer less or more homogeneous results?"
        );
        assert_eq!(fb.followup, Followup::ExpectSubanswerThenRetry);
    }

    #[test]
    fn mcq_for_right_reason_wrong_effect() {
        let fb = engine()
            .generate_feedback(&exercise(), "Treatment B, because results with higher variance are less homogeneous")
            .unwrap();
        assert_eq!(
            fb.text,
            "Did you mean \"Treatment A\" because \"results with higher variance are less homogeneous\"?"
        );
        assert_eq!(fb.mcq_options, Some(("Yes, I agree".into(), "No, I disagree".into())));
        assert_eq!(fb.kind, FeedbackKind::Mcq);
    }

    #[test]
    fn empty_bank_without_generator_is_config_error() {
        let mut ex = exercise();
        for r in &mut ex.references {
            r.question_bank.clear();
        }
        let err = engine().generate_feedback(&ex, "Treatment A").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        // MCQ does not need a question
        assert!(engine()
            .generate_feedback(&ex, "Treatment B, because results with higher variance are less homogeneous")
            .is_ok());
    }

    #[test]
    fn minimal_mode() {
        let fb = engine().with_mode(FeedbackMode::Minimal).generate_feedback(&exercise(), "Treatment B").unwrap();
        assert_eq!(fb.text, "That's not quite right. Please try again.");
        assert_eq!(fb.followup, Followup::ExpectRetry);
    }

    struct Counting<'a>(&'a SimilarityChecker, AtomicUsize);

    impl SolutionChecker for Counting<'_> {
        fn check(&self, exercise: &Exercise, answer: &str) -> Result<bool> {
            self.1.fetch_add(1, Ordering::SeqCst);
            assert_ne!(answer, "Less", "sub-answer reached the checker");
            self.0.check(exercise, answer)
        }
    }

    #[test]
    fn table_flow() {
        let ex = exercise();
        let base = SimilarityChecker { similarity: sim(), tau_checker: 0.8 };
        let checker = Counting(&base, AtomicUsize::new(0));
        let e = engine();
        let s0 = DialogueState::new("s", "treat");
        let t1 = advance_dialogue(&s0, "Treatment A", &ex, &e, &checker).unwrap();
        assert_eq!(t1.state.phase, Phase::AwaitingSubanswer);
        assert_eq!(t1.verdict, Some(false));
        let t2 = advance_dialogue(&t1.state, "Less", &ex, &e, &checker).unwrap();
        assert_eq!(t2.reply, "Ok, now try to answer the original exercise.");
        assert_eq!(t2.verdict, None);
        let t3 = advance_dialogue(
            &t2.state,
            "Treatment A, because it is less homogeneous than treatment B",
            &ex,
            &e,
            &checker,
        )
        .unwrap();
        assert_eq!(t3.reply, "That's correct!");
        assert_eq!(t3.state.phase, Phase::Done);
        assert_eq!(t3.state.attempt_count, 2);
        assert_eq!(checker.1.load(Ordering::SeqCst), 2);
        assert!(matches!(advance_dialogue(&t3.state, "again", &ex, &e, &checker), Err(Error::State(_))));
    }

    #[test]
    fn mcq_choices() {
        let ex = exercise();
        let checker = SimilarityChecker {
            similarity: sim(),
            // a one-word effect change keeps token F1 at 0.9
            tau_checker: 0.95,
        };
        let e = engine();
        let s0 = DialogueState::new("s", "treat");
        let t1 = advance_dialogue(
            &s0,
            "Treatment B, because results with higher variance are less homogeneous",
            &ex,
            &e,
            &checker,
        )
        .unwrap();
        assert_eq!(t1.state.phase, Phase::AwaitingMcq);
        let re = advance_dialogue(&t1.state, "maybe", &ex, &e, &checker).unwrap();
        assert_eq!(re.state, t1.state);
        assert_eq!(re.verdict, None);
        let yes = advance_dialogue(&t1.state, "Yes, I agree", &ex, &e, &checker).unwrap();
        assert_eq!((yes.verdict, yes.state.phase), (Some(true), Phase::Done));
        let no = advance_dialogue(&t1.state, "No, I disagree", &ex, &e, &checker).unwrap();
        assert_eq!((no.verdict, no.state.phase), (Some(false), Phase::Done));
        assert_eq!(no.reply, "Let's move to another problem.");
    }

    #[test]
    fn attempts_are_capped() {
        let ex = exercise();
        let checker = SimilarityChecker { similarity: sim(), tau_checker: 0.8 };
        let e = engine().with_mode(FeedbackMode::Minimal);
        let mut s = DialogueState::new("s", "treat");
        let mut replies = Vec::new();
        while s.phase != Phase::Done {
            let t = advance_dialogue(&s, "no idea", &ex, &e, &checker).unwrap();
            replies.push(t.reply);
            s = t.state;
        }
        assert_eq!(replies.len(), 3);
        assert_eq!(replies[2], "Let's move to another problem.");
    }

    #[test]
    fn checker_threshold() {
        let ex = exercise();
        assert!(solution_check(REF, &ex, &sim(), 0.8).unwrap());
        assert!(!solution_check("zebra quartz", &ex, &sim(), 0.8).unwrap());
        assert!(!solution_check("Treatment A, because results with higher variance are homogeneous", &ex, &sim(), 1.0)
            .unwrap());
    }
}
