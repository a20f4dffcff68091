//! Maps a (student, reference) decomposition pair onto an error category.

use serde::{Deserialize, Serialize};

use crate::cause_effect::{has_cause, Decomposition};
use crate::error::{Error, Result};
use crate::similarity::Similarity;

/// Default similarity threshold for cause and effect matching.
pub const DEFAULT_TAU: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    IncorrectCauseIncorrectEffect,
    CorrectCauseIncorrectEffect,
    IncorrectCauseCorrectEffect,
    MissingCauseCorrectEffect,
    /// Both parts match; the checker and the classifier disagree.
    NoDetectedError,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 5] = [
        ErrorCategory::IncorrectCauseIncorrectEffect,
        ErrorCategory::CorrectCauseIncorrectEffect,
        ErrorCategory::IncorrectCauseCorrectEffect,
        ErrorCategory::MissingCauseCorrectEffect,
        ErrorCategory::NoDetectedError,
    ];

    /// Category from the two match outcomes.
    pub fn from_matches(cause_matches: bool, effect_matches: bool, student_has_cause: bool) -> Self {
        match (cause_matches, effect_matches) {
            (false, false) => ErrorCategory::IncorrectCauseIncorrectEffect,
            (true, false) => ErrorCategory::CorrectCauseIncorrectEffect,
            (false, true) if !student_has_cause => ErrorCategory::MissingCauseCorrectEffect,
            (false, true) => ErrorCategory::IncorrectCauseCorrectEffect,
            (true, true) => ErrorCategory::NoDetectedError,
        }
    }
}

/// An empty student cause is compared like any other text, so it only
/// matches an empty reference cause.
pub fn classify(
    student: &Decomposition,
    reference: &Decomposition,
    similarity: &Similarity,
    tau: f64,
) -> Result<ErrorCategory> {
    if reference.effect.trim().is_empty() {
        return Err(Error::Validation("reference effect is empty".into()));
    }
    let student_has_cause = has_cause(student);
    let student_cause = if student_has_cause { student.cause.as_str() } else { "" };
    let cause_matches = similarity.is_match(student_cause, &reference.cause, tau)?;
    let effect_matches = similarity.is_match(&student.effect, &reference.effect, tau)?;
    Ok(ErrorCategory::from_matches(cause_matches, effect_matches, student_has_cause))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cause_effect::decompose;
    use crate::similarity::OrthogonalEmbedding;
    use std::sync::Arc;

    fn sim() -> Similarity {
        Similarity::new(Arc::new(OrthogonalEmbedding::default()))
    }

    fn run(student: &str, reference: &str) -> ErrorCategory {
        classify(&decompose(student).unwrap(), &decompose(reference).unwrap(), &sim(), DEFAULT_TAU).unwrap()
    }

    const REF: &str = "Treatment A, because results with higher variance are less homogeneous";

    #[test]
    fn verbatim_is_no_detected_error() {
        assert_eq!(run(REF, REF), ErrorCategory::NoDetectedError);
    }

    #[test]
    fn missing_cause() {
        assert_eq!(run("Treatment A", REF), ErrorCategory::MissingCauseCorrectEffect);
    }

    #[test]
    fn everything_wrong() {
        assert_eq!(run("Pick B because the mean is what counts", REF), ErrorCategory::IncorrectCauseIncorrectEffect);
        // a missing cause with a wrong effect is not special-cased
        assert_eq!(run("Treatment B", REF), ErrorCategory::IncorrectCauseIncorrectEffect);
    }

    #[test]
    fn wrong_reason_right_answer() {
        assert_eq!(run("Treatment A because it is cheaper to run", REF), ErrorCategory::IncorrectCauseCorrectEffect);
    }

    #[test]
    fn right_reason_wrong_answer() {
        assert_eq!(
            run("Treatment B because results with higher variance are less homogeneous", REF),
            ErrorCategory::CorrectCauseIncorrectEffect
        );
    }

    #[test]
    fn missing_cause_only_without_cause() {
        assert_eq!(ErrorCategory::from_matches(false, true, true), ErrorCategory::IncorrectCauseCorrectEffect);
    }
}
