//! Fine-tunes the memorizing generator on the bundled question dataset,
//! then generates and re-ranks candidate questions for every exercise.

use std::path::PathBuf;

use qfeedback::corpus::{load_exercises, load_qg_dataset, split_qg_dataset, SplitRatio};
use qfeedback::qg::{build_question_bank, fine_tune_qg, MemorizingGenerator, TrainConfig};
use qfeedback::reranker::{FeatureSet, RerankerModel, StubScorers, DEFAULT_EMBEDDING_DIM};

fn main() -> qfeedback::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let dataset = load_qg_dataset(&data.join("qg_dataset.jsonl"))?;
    let split = split_qg_dataset(&dataset, 7, SplitRatio::QUESTION_GENERATION)?;
    let trained = fine_tune_qg(&split, &MemorizingGenerator::new(), &TrainConfig::default())?;
    println!("validation losses: {:?}", trained.validation_losses);

    let questions = dataset.iter().map(|e| e.target.as_str());
    let scorers = StubScorers::trained(DEFAULT_EMBEDDING_DIM, questions);
    let model = RerankerModel::mean_baseline(0.0, FeatureSet::Full, DEFAULT_EMBEDDING_DIM);
    let exercises = load_exercises(&data.join("exercises.jsonl"))?;
    let build = build_question_bank(&exercises, trained.backend.as_ref(), &scorers, &model, 3, 150);

    for ex in build.exercises.iter().take(4) {
        for r in &ex.references {
            println!("\n{}", r.text);
            for c in &r.question_bank {
                println!("  {:>6.3}  {}", c.model_score, c.question);
            }
        }
    }
    println!("\nskipped references: {}", build.skipped.len());
    Ok(())
}
