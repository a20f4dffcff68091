//! Fits least-squares usefulness regressors on the bundled annotations and
//! compares them with the training-mean baseline.

use std::path::PathBuf;

use qfeedback::benchmark::{reranker_benchmark, split_rated_groups};
use qfeedback::corpus::load_annotations;
use qfeedback::reranker::{StubScorers, DEFAULT_EMBEDDING_DIM};

fn main() -> qfeedback::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let annotations = load_annotations(&data.join("annotations.jsonl"))?;
    let scorers = StubScorers::trained(DEFAULT_EMBEDDING_DIM, annotations.iter().map(|a| a.question.as_str()));
    let split = split_rated_groups(&annotations, &scorers, 7)?;
    let (tr, va, te) = split.sizes();
    println!("groups: train {tr}, valid {va}, test {te}");

    println!("{:<16} {:>7} {:>7} {:>7} {:>10}", "system", "MSE", "MAE", "r", "usefulness");
    for row in reranker_benchmark(&split, 1e-3, false)? {
        let r = row.regression.pearson.map_or("-".into(), |p| format!("{p:.3}"));
        println!(
            "{:<16} {:>7.3} {:>7.3} {:>7} {:>10.3}",
            row.system, row.regression.mse, row.regression.mae, r, row.usefulness
        );
    }
    Ok(())
}
