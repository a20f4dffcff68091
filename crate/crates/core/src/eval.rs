//! Generation metrics (BLEU, ROUGE-L), regression metrics, the top-1
//! usefulness metric and learning gains from interaction logs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{FeedbackModel, InteractionRecord, UsefulnessAnnotation};
use crate::error::{Error, Result};
use crate::qg::QuestionCandidate;
use crate::reranker::{argmax_first, extract_features, AuxiliaryScorers, FeatureVector, RerankerModel};
use crate::text::word_tokens;

/// Floor applied to zero n-gram precisions.
pub const BLEU_EPSILON: f64 = 1e-9;

fn check_pairs(candidates: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<()> {
    if candidates.len() != references.len() {
        return Err(Error::Dimension { expected: references.len(), actual: candidates.len() });
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("evaluation corpus"));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU with orders `1..=max_n`, scaled to `[0, 100]`.
///
/// Orders for which neither side has any n-gram are left out of the
/// geometric mean, so a corpus of identical short sentences scores 100.
pub fn bleu(candidates: &[impl AsRef<str>], references: &[impl AsRef<str>], max_n: usize) -> Result<f64> {
    check_pairs(candidates, references)?;
    if !(1..=4).contains(&max_n) {
        return Err(Error::Config(format!("BLEU order {max_n} outside 1..=4")));
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> =
        candidates.iter().zip(references).map(|(c, r)| (word_tokens(c.as_ref()), word_tokens(r.as_ref()))).collect();
    let c_len: usize = pairs.iter().map(|(c, _)| c.len()).sum();
    let r_len: usize = pairs.iter().map(|(_, r)| r.len()).sum();
    if c_len == 0 {
        return Ok(if r_len == 0 { 100.0 } else { 0.0 });
    }

    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n {
        let (mut matched, mut cand_total, mut ref_total) = (0usize, 0usize, 0usize);
        for (c, r) in &pairs {
            let cc = ngram_counts(c, n);
            let rc = ngram_counts(r, n);
            cand_total += c.len().saturating_sub(n - 1);
            ref_total += r.len().saturating_sub(n - 1);
            matched += cc.iter().map(|(g, k)| (*k).min(rc.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
        if cand_total == 0 && ref_total == 0 {
            continue;
        }
        let p = if cand_total == 0 { 0.0 } else { matched as f64 / cand_total as f64 };
        log_sum += p.max(BLEU_EPSILON).ln();
        orders += 1;
    }
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    Ok(100.0 * bp * (log_sum / orders as f64).exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean per-pair LCS F-measure, scaled to `[0, 100]`.
pub fn rouge_l(candidates: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<f64> {
    check_pairs(candidates, references)?;
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| {
            let (c, r) = (word_tokens(c.as_ref()), word_tokens(r.as_ref()));
            if c.is_empty() || r.is_empty() {
                return if c.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
            }
            let l = lcs_len(&c, &r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
            2.0 * p * rec / (p + rec)
        })
        .sum();
    Ok(100.0 * total / candidates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenEvalReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub n_examples: usize,
}

pub fn evaluate_generation(candidates: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<GenEvalReport> {
    Ok(GenEvalReport {
        bleu1: bleu(candidates, references, 1)?,
        bleu2: bleu(candidates, references, 2)?,
        bleu3: bleu(candidates, references, 3)?,
        bleu4: bleu(candidates, references, 4)?,
        rouge_l: rouge_l(candidates, references)?,
        n_examples: candidates.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    pub mae: f64,
    /// Absent when either side is constant.
    pub pearson: Option<f64>,
    pub n: usize,
}

pub fn regression_metrics(predicted: &[f64], gold: &[f64]) -> Result<RegressionReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Dimension { expected: gold.len(), actual: predicted.len() });
    }
    let n = gold.len();
    if n < 2 {
        return Err(Error::Validation(format!("regression metrics need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mse = predicted.iter().zip(gold).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / nf;
    let mae = predicted.iter().zip(gold).map(|(p, g)| (p - g).abs()).sum::<f64>() / nf;
    let (mp, mg) = (predicted.iter().sum::<f64>() / nf, gold.iter().sum::<f64>() / nf);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, g) in predicted.iter().zip(gold) {
        sxy += (p - mp) * (g - mg);
        sxx += (p - mp).powi(2);
        syy += (g - mg).powi(2);
    }
    // a constant series has no correlation; summation noise would fake one
    let varies = |v: &[f64]| v.iter().any(|x| *x != v[0]);
    let pearson = (varies(predicted) && varies(gold) && sxx > 0.0 && syy > 0.0)
        .then(|| (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0));
    Ok(RegressionReport { mse, mae, pearson, n })
}

/// A generated question with its features and human rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedCandidate {
    pub question: String,
    pub features: FeatureVector,
    pub gold: Option<f64>,
}

/// All rated candidates for one reference solution, in listing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsefulnessGroup {
    pub key: String,
    pub candidates: Vec<RatedCandidate>,
}

/// Mean gold rating of the top-predicted candidate per group; ties go to the
/// earliest candidate.
pub fn usefulness_metric(model: &RerankerModel, groups: &[UsefulnessGroup]) -> Result<f64> {
    let scored = groups
        .iter()
        .map(|g| {
            g.candidates
                .iter()
                .map(|c| {
                    let gold =
                        c.gold.ok_or_else(|| Error::Validation(format!("missing gold rating in group {}", g.key)))?;
                    Ok((model.predict(&c.features)?, gold))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    usefulness_from_predictions(&scored)
}

/// As [`usefulness_metric`], on precomputed `(prediction, gold)` pairs.
pub fn usefulness_from_predictions(groups: &[Vec<(f64, f64)>]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("usefulness groups"));
    }
    let mut total = 0.0;
    for g in groups {
        let preds: Vec<f64> = g.iter().map(|(p, _)| *p).collect();
        let i = argmax_first(&preds).ok_or(Error::EmptyInput("usefulness group"))?;
        total += g[i].1;
    }
    Ok(total / groups.len() as f64)
}

/// Groups annotations by reference (first-appearance order) and extracts
/// features for every rated question.
pub fn rated_groups(
    annotations: &[UsefulnessAnnotation],
    scorers: &dyn AuxiliaryScorers,
) -> Result<Vec<UsefulnessGroup>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RatedCandidate>> = HashMap::new();
    for a in annotations {
        a.validate()?;
        let key = a.group_key().to_string();
        let candidate = QuestionCandidate::new(a.question.clone(), 0.0, a.confidence_loss);
        let rated = RatedCandidate {
            question: a.question.clone(),
            features: extract_features(&candidate, scorers)?,
            gold: Some(a.rating as f64),
        };
        match groups.get_mut(&key) {
            Some(g) => g.push(rated),
            None => {
                order.push(key.clone());
                groups.insert(key, vec![rated]);
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let candidates = groups.remove(&key).unwrap_or_default();
            UsefulnessGroup { key, candidates }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainScope {
    FirstAttempt,
    AllAttempts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    /// Percentage in `[0, 100]`.
    pub gain: f64,
    /// Normal-approximation 95% half-width, in percentage points.
    pub ci95_half_width: f64,
    pub correct: usize,
    pub n: usize,
}

impl GainEstimate {
    pub fn from_counts(correct: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("feedback events"));
        }
        let p = correct as f64 / n as f64;
        Ok(GainEstimate {
            gain: 100.0 * p,
            ci95_half_width: 100.0 * 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
            correct,
            n,
        })
    }
}

/// Feedback events for `label` and whether the next attempt was correct.
///
/// An event is an incorrect attempt that received feedback. Attempts are
/// grouped per session and exercise and ordered by attempt index; events
/// with no later attempt are not counted.
pub fn feedback_events(records: &[InteractionRecord], label: FeedbackModel, scope: GainScope) -> Vec<bool> {
    let mut by_attempt: BTreeMap<(&str, &str), Vec<&InteractionRecord>> = BTreeMap::new();
    for r in records {
        by_attempt.entry((r.session_id.as_str(), r.exercise_id.as_str())).or_default().push(r);
    }
    let mut outcomes = Vec::new();
    for attempts in by_attempt.values_mut() {
        attempts.sort_by_key(|r| r.attempt_index);
        let mut failures = 0usize;
        for (i, r) in attempts.iter().enumerate() {
            if r.checker_verdict {
                continue;
            }
            failures += 1;
            let shown = r.feedback_shown.as_deref().is_some_and(|f| !f.trim().is_empty());
            if !shown || r.feedback_model != label {
                continue;
            }
            if scope == GainScope::FirstAttempt && failures != 1 {
                continue;
            }
            if let Some(next) = attempts.get(i + 1) {
                outcomes.push(next.checker_verdict);
            }
        }
    }
    outcomes
}

pub fn learning_gain(records: &[InteractionRecord], label: FeedbackModel, scope: GainScope) -> Result<GainEstimate> {
    let events = feedback_events(records, label, scope);
    GainEstimate::from_counts(events.iter().filter(|&&c| c).count(), events.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningGainReport {
    pub model: FeedbackModel,
    pub gain_first_attempt: f64,
    pub gain_all_attempts: f64,
    /// Half-width for the all-attempts gain.
    pub ci95_half_width: f64,
    pub ci95_first_attempt: f64,
    pub n: usize,
    pub n_first_attempt: usize,
}

pub fn learning_gain_report(records: &[InteractionRecord], label: FeedbackModel) -> Result<LearningGainReport> {
    let all = learning_gain(records, label, GainScope::AllAttempts)?;
    let first = learning_gain(records, label, GainScope::FirstAttempt)?;
    Ok(LearningGainReport {
        model: label,
        gain_first_attempt: first.gain,
        gain_all_attempts: all.gain,
        ci95_half_width: all.ci95_half_width,
        ci95_first_attempt: first.ci95_half_width,
        n: all.n,
        n_first_attempt: first.n,
    })
}

/// Reports for every label that has at least one feedback event.
pub fn learning_gain_reports(records: &[InteractionRecord]) -> Vec<LearningGainReport> {
    FeedbackModel::ALL.iter().filter_map(|&m| learning_gain_report(records, m).ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::{TimeZone, Utc};

    #[test]
    fn bleu_hand_cases() {
        assert_abs_diff_eq!(bleu(&["the cat"], &["the cat sat"], 1).unwrap(), 60.653, epsilon = 1e-3);
        for n in 1..=4 {
            assert_eq!(bleu(&["a b c d e", "x"], &["a b c d e", "x"], n).unwrap(), 100.0);
        }
        assert!(bleu(&["p q r"], &["x y z"], 1).unwrap() < 1e-6);
        assert!(bleu(&["a"], &["a", "b"], 1).is_err());
        assert!(bleu(&["a"], &["a"], 5).is_err());
    }

    #[test]
    fn rouge_hand_cases() {
        assert_abs_diff_eq!(rouge_l(&["a b c"], &["a x c"]).unwrap(), 66.6667, epsilon = 1e-3);
        assert_eq!(rouge_l(&["a b"], &["a b"]).unwrap(), 100.0);
        assert_eq!(rouge_l(&["a b"], &["c d"]).unwrap(), 0.0);
    }

    #[test]
    fn regression_cases() {
        let gold = [1.0, 2.0, 4.0, 5.0];
        let r = regression_metrics(&gold, &gold).unwrap();
        assert_eq!((r.mse, r.mae), (0.0, 0.0));
        assert_abs_diff_eq!(r.pearson.unwrap(), 1.0, epsilon = 1e-12);
        let affine: Vec<f64> = gold.iter().map(|g| 2.0 * g + 1.0).collect();
        let r = regression_metrics(&affine, &gold).unwrap();
        assert_abs_diff_eq!(r.pearson.unwrap(), 1.0, epsilon = 1e-12);
        let brute = gold.iter().map(|g: &f64| (g + 1.0).powi(2)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(r.mse, brute, epsilon = 1e-12);
        assert!(regression_metrics(&[3.0; 4], &gold).unwrap().pearson.is_none());
        assert!(regression_metrics(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn usefulness_argmax() {
        let g = vec![vec![(0.1, 2.0), (0.9, 5.0), (0.5, 3.0)]];
        assert_eq!(usefulness_from_predictions(&g).unwrap(), 5.0);
        let tie = vec![vec![(1.0, 2.0), (1.0, 5.0)], vec![(0.0, 4.0)]];
        assert_eq!(usefulness_from_predictions(&tie).unwrap(), 3.0);
    }

    fn rec(session: &str, attempt: u32, verdict: bool, feedback: bool) -> InteractionRecord {
        InteractionRecord {
            session_id: session.into(),
            exercise_id: "e".into(),
            student_answer: format!("answer {attempt}"),
            feedback_shown: feedback.then(|| "hint".to_string()),
            checker_verdict: verdict,
            attempt_index: attempt,
            feedback_model: FeedbackModel::QuestionBased,
            timestamp: Utc.timestamp_opt(1_700_000_000 + attempt as i64, 0).unwrap(),
        }
    }

    #[test]
    fn learning_gain_ten_events() {
        let mut log = Vec::new();
        for s in 0..10 {
            let id = format!("s{s}");
            log.push(rec(&id, 1, false, true));
            log.push(rec(&id, 2, s < 4, false));
        }
        let g = learning_gain(&log, FeedbackModel::QuestionBased, GainScope::AllAttempts).unwrap();
        assert_eq!((g.correct, g.n), (4, 10));
        assert_abs_diff_eq!(g.gain, 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.ci95_half_width, 30.36419, epsilon = 1e-5);
        assert!(learning_gain(&log, FeedbackModel::Minimal, GainScope::AllAttempts).is_err());
    }

    #[test]
    fn first_attempt_filter() {
        let log = vec![rec("a", 1, false, true), rec("a", 2, false, true), rec("a", 3, true, false)];
        let all = learning_gain(&log, FeedbackModel::QuestionBased, GainScope::AllAttempts).unwrap();
        let first = learning_gain(&log, FeedbackModel::QuestionBased, GainScope::FirstAttempt).unwrap();
        assert_eq!((all.n, first.n), (2, 1));
        assert_eq!(first.gain, 0.0);
    }
}
