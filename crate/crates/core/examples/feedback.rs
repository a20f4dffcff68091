//! Classifies a set of student answers against the reference solutions and
//! prints the feedback each one would receive, in both feedback modes.

use std::sync::Arc;

use qfeedback::feedback::FeedbackMode;
use qfeedback::qg::QuestionCandidate;
use qfeedback::similarity::OrthogonalEmbedding;
use qfeedback::{Exercise, FeedbackEngine, Similarity};

fn main() -> qfeedback::Result<()> {
    let mut exercise = Exercise::new(
        "treatment",
        "Which treatment has more homogeneous results?",
        &[
            "Treatment A, because results with higher variance are less homogeneous",
            "Treatment A, because it is less homogeneous than treatment B",
        ],
    );
    for r in &mut exercise.references {
        r.question_bank = vec![QuestionCandidate {
            predicted_usefulness: Some(4.0),
            ..QuestionCandidate::new("Do we prefer less or more homogeneous results?", -0.2, 0.7)
        }];
    }
    let engine = FeedbackEngine::new(Similarity::new(Arc::new(OrthogonalEmbedding::default())));
    let minimal = engine.clone().with_mode(FeedbackMode::Minimal);

    for answer in [
        "Treatment B",
        "Treatment A",
        "Treatment A, because it was cheaper to run",
        "Treatment B, because results with higher variance are less homogeneous",
        "Treatment B, because it costs more",
        "Treatment A, because results with higher variance are less homogeneous",
    ] {
        let fb = engine.generate_feedback(&exercise, answer)?;
        println!("student:  {answer}");
        println!("category: {:?}", fb.category);
        println!("feedback: {}", fb.text);
        if let Some((yes, no)) = &fb.mcq_options {
            println!("options:  [{yes}] [{no}]");
        }
        println!("minimal:  {}\n", minimal.generate_feedback(&exercise, answer)?.text);
    }
    Ok(())
}
