//! End-to-end evaluation protocols: question generation against held-out
//! targets, and usefulness regressors against held-out annotations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_items, Partition, QgExample, Split, SplitRatio, UsefulnessAnnotation};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_generation, rated_groups, regression_metrics, usefulness_metric, GenEvalReport, RegressionReport,
    UsefulnessGroup,
};
use crate::qg::{fine_tune_qg, top_beam, GeneratorBackend, TrainConfig, TrainedGenerator};
use crate::reranker::{fit_ols, AuxiliaryScorers, FeatureSet, FeatureVector, RerankerModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub id: String,
    pub source: String,
    pub predicted: String,
    pub target: String,
}

pub struct QgBenchmark {
    pub trained: TrainedGenerator,
    pub report: GenEvalReport,
    pub predictions: Vec<GeneratedQuestion>,
}

/// Fine-tunes on the train split, decodes the top beam for every test
/// source and scores it against the test target.
pub fn qg_benchmark(
    dataset: &Partition<QgExample>,
    backend: &dyn GeneratorBackend,
    config: &TrainConfig,
) -> Result<QgBenchmark> {
    let trained = fine_tune_qg(dataset, backend, config).map_err(|e| e.at_stage("fine-tune"))?;
    let predictions = dataset
        .test
        .par_iter()
        .map(|e| {
            Ok(GeneratedQuestion {
                id: e.id.clone(),
                source: e.source.clone(),
                predicted: top_beam(trained.backend.as_ref(), &e.source, config.max_output_tokens)?,
                target: e.target.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("decode test split"))?;
    let predicted: Vec<&str> = predictions.iter().map(|p| p.predicted.as_str()).collect();
    let targets: Vec<&str> = predictions.iter().map(|p| p.target.as_str()).collect();
    let report = evaluate_generation(&predicted, &targets)?;
    Ok(QgBenchmark { trained, report, predictions })
}

/// Rated question groups split into train/valid/test. Split labels on the
/// annotations are honored when every annotation has one; otherwise whole
/// groups are shuffled with `seed`.
pub fn split_rated_groups(
    annotations: &[UsefulnessAnnotation],
    scorers: &dyn AuxiliaryScorers,
    seed: u64,
) -> Result<Partition<UsefulnessGroup>> {
    let groups = rated_groups(annotations, scorers)?;
    let labelled = annotations.iter().filter(|a| a.split.is_some()).count();
    if labelled == 0 {
        return split_items(&groups, seed, SplitRatio::QUESTION_GENERATION);
    }
    if labelled != annotations.len() {
        return Err(Error::Validation(format!(
            "{labelled} of {} annotations carry a split label; label all or none",
            annotations.len()
        )));
    }
    let mut part = Partition { train: Vec::new(), valid: Vec::new(), test: Vec::new() };
    for g in groups {
        let splits: Vec<Split> =
            annotations.iter().filter(|a| a.group_key() == g.key).filter_map(|a| a.split).collect();
        if splits.iter().any(|s| *s != splits[0]) {
            return Err(Error::Validation(format!("group {} spans several splits", g.key)));
        }
        match splits[0] {
            Split::Train => part.train.push(g),
            Split::Valid => part.valid.push(g),
            Split::Test => part.test.push(g),
        }
    }
    Ok(part)
}

pub fn training_rows(groups: &[UsefulnessGroup]) -> Result<Vec<(FeatureVector, f64)>> {
    groups
        .iter()
        .flat_map(|g| &g.candidates)
        .map(|c| {
            let gold = c.gold.ok_or_else(|| Error::Validation(format!("unrated question {:?}", c.question)))?;
            Ok((c.features.clone(), gold))
        })
        .collect()
}

pub fn mean_baseline(train: &[UsefulnessGroup]) -> Result<RerankerModel> {
    let rows = training_rows(train)?;
    let first = rows.first().ok_or(Error::EmptyInput("training annotations"))?;
    let mean = rows.iter().map(|(_, y)| y).sum::<f64>() / rows.len() as f64;
    Ok(RerankerModel::mean_baseline(mean, FeatureSet::Full, first.0.sentence_embedding.len()))
}

pub fn fit_reranker(train: &[UsefulnessGroup], feature_set: FeatureSet, ridge: f64) -> Result<RerankerModel> {
    fit_ols(&training_rows(train)?, feature_set, ridge)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerRow {
    pub system: String,
    pub regression: RegressionReport,
    pub usefulness: f64,
}

pub fn evaluate_reranker(system: &str, model: &RerankerModel, test: &[UsefulnessGroup]) -> Result<RerankerRow> {
    let rows = training_rows(test)?;
    let predicted = rows.iter().map(|(f, _)| model.predict(f)).collect::<Result<Vec<f64>>>()?;
    let gold: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    Ok(RerankerRow {
        system: system.to_string(),
        regression: regression_metrics(&predicted, &gold)?,
        usefulness: usefulness_metric(model, test)?,
    })
}

/// Mean baseline plus one least-squares model per feature set, each fitted
/// on train and scored on test.
pub fn reranker_benchmark(
    split: &Partition<UsefulnessGroup>,
    ridge: f64,
    mean_baseline_only: bool,
) -> Result<Vec<RerankerRow>> {
    let mut rows = vec![evaluate_reranker("mean_baseline", &mean_baseline(&split.train)?, &split.test)?];
    if mean_baseline_only {
        return Ok(rows);
    }
    for (name, set) in [
        ("ols_linguistic", FeatureSet::Linguistic),
        ("ols_embedding", FeatureSet::Embedding),
        ("ols_full", FeatureSet::Full),
    ] {
        let model = fit_reranker(&split.train, set, ridge).map_err(|e| e.at_stage("fit"))?;
        rows.push(evaluate_reranker(name, &model, &split.test)?);
    }
    Ok(rows)
}
