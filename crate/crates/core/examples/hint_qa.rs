//! Runs the hint-assisted QA chain end to end on the bundled QA pairs with
//! the offline backends, then answers one question step by step.

use std::path::PathBuf;
use std::sync::Arc;

use qfeedback::feedback::LiveQuestions;
use qfeedback::hintqa::{load_qa, run_hint_qa_inference, run_pipeline, HintQaConfig, TokenOverlapNli};
use qfeedback::qg::{MemorizingGenerator, TemplateGenerator};
use qfeedback::reranker::{FeatureSet, RerankerModel, StubScorers, DEFAULT_EMBEDDING_DIM};
use qfeedback::similarity::OrthogonalEmbedding;
use qfeedback::{FeedbackEngine, Similarity};

fn main() -> qfeedback::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/qa.jsonl");
    let pairs = load_qa(&path)?;
    let engine = FeedbackEngine::new(Similarity::new(Arc::new(OrthogonalEmbedding::default()))).with_live_questions(
        LiveQuestions {
            generator: Arc::new(TemplateGenerator),
            scorers: Arc::new(StubScorers::constant(DEFAULT_EMBEDDING_DIM, 0.5, 10.0)),
            model: RerankerModel::mean_baseline(0.0, FeatureSet::Full, DEFAULT_EMBEDDING_DIM),
            k: 3,
            max_out: 150,
        },
    )?;
    let run = run_pipeline(&pairs, &MemorizingGenerator::new(), &engine, &TokenOverlapNli, &HintQaConfig::default())?;

    println!("split sizes {:?}, audit passed: {}", run.report.split_sizes, run.report.audit.passed());
    for s in &run.report.systems {
        println!("{:<16} BLEU-4 {:6.2}  ROUGE-L {:6.2}", s.system, s.metrics.bleu4, s.metrics.rouge_l);
    }

    let question = &pairs[0].question;
    let answer = run_hint_qa_inference(question, &run.models, &TokenOverlapNli, 3, 150)?;
    println!("\nQ: {question}\nA: {answer}");
    Ok(())
}
