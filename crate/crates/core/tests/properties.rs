use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use qfeedback::corpus::{split_items, SplitRatio};
use qfeedback::hintqa::{entailment_select_index, NliBackend};
use qfeedback::reranker::ols;
use qfeedback::similarity::{HashEmbedding, OrthogonalEmbedding};
use qfeedback::{decompose, BackendError, Connective, Similarity};

const WORDS: &[&str] = &[
    "treatment",
    "a",
    "b",
    "results",
    "variance",
    "higher",
    "less",
    "homogeneous",
    "sample",
    "median",
    "mean",
    "robust",
    "data",
    "sorted",
    "search",
    "binary",
    "the",
    "is",
    "are",
    "it",
];

fn sentence(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..max).prop_map(|w| w.join(" "))
}

fn orthogonal() -> Similarity {
    Similarity::new(Arc::new(OrthogonalEmbedding::default()))
}

fn hashed() -> Similarity {
    Similarity::new(Arc::new(HashEmbedding::default()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn similarity_identity_and_symmetry(a in sentence(12), b in sentence(12)) {
        for sim in [orthogonal(), hashed()] {
            let id = sim.token_similarity(&a, &a).unwrap();
            prop_assert!((id.f1 - 1.0).abs() <= 1e-6);
            let ab = sim.token_similarity(&a, &b).unwrap();
            let ba = sim.token_similarity(&b, &a).unwrap();
            prop_assert!((ab.f1 - ba.f1).abs() <= 1e-12);
            prop_assert!((ab.precision - ba.recall).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab.f1));
        }
    }

    #[test]
    fn raising_tau_never_creates_a_match(a in sentence(8), b in sentence(8), t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let sim = orthogonal();
        if sim.is_match(&a, &b, hi).unwrap() {
            prop_assert!(sim.is_match(&a, &b, lo).unwrap());
        }
    }

    #[test]
    fn decomposition_spans_point_into_the_text(text in "[ -~]{0,80}") {
        if let Ok(d) = decompose(&text) {
            prop_assert_eq!(&text[d.effect_span.clone()], d.effect.as_str());
            prop_assert_eq!(&text[d.cause_span.clone()], d.cause.as_str());
            prop_assert!(!d.effect.is_empty());
            if d.connective == Connective::None {
                prop_assert!(d.cause.is_empty());
            }
            // an empty span holds no bytes, so only non-empty ones can collide
            let disjoint = |a: &std::ops::Range<usize>, b: &std::ops::Range<usize>| {
                a.is_empty() || b.is_empty() || a.end <= b.start || b.end <= a.start
            };
            let (c, e) = (&d.cause_span, &d.effect_span);
            prop_assert!(disjoint(c, e), "spans overlap: {:?} {:?}", c, e);
            if let Some(k) = &d.connective_span {
                for s in [c, e] {
                    prop_assert!(disjoint(k, s), "connective {:?} inside {:?}", k, s);
                }
            }
        }
    }

    #[test]
    fn because_sentences_reconstruct(effect in sentence(6), cause in sentence(6)) {
        let text = format!("{effect} because {cause}");
        let d = decompose(&text).unwrap();
        // an earlier "as"/"since" can't occur: the vocabulary has neither
        prop_assert_eq!(d.connective, Connective::BecauseLike);
        prop_assert_eq!(d.effect, effect);
        prop_assert_eq!(d.cause, cause);
    }

    #[test]
    fn split_is_a_bijection(n in 3usize..400, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let part = split_items(&items, seed, SplitRatio::QUESTION_GENERATION).unwrap();
        let (tr, va, te) = SplitRatio::QUESTION_GENERATION.sizes(n);
        prop_assert_eq!(part.sizes(), (tr, va, te));
        let all: Vec<usize> = part.train.iter().chain(&part.valid).chain(&part.test).copied().collect();
        let unique: HashSet<usize> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(unique.len(), n);
        prop_assert_eq!(split_items(&items, seed, SplitRatio::QUESTION_GENERATION).unwrap(), part);
    }
}

struct TableNli(HashMap<String, f64>);

impl NliBackend for TableNli {
    fn entailment_prob(&self, premise: &str, _hypothesis: &str) -> Result<f64, BackendError> {
        Ok(self.0[premise])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entailment_pick_survives_monotone_transforms(
        probs in prop::collection::vec(1u32..=1000, 1..8),
        exponent in 0.2f64..5.0,
        scale in 0.1f64..1.0,
    ) {
        let answers: Vec<String> = (0..probs.len()).map(|i| format!("answer {i}")).collect();
        let raw: Vec<f64> = probs.iter().map(|&p| p as f64 / 1000.0).collect();
        let table = |f: &dyn Fn(f64) -> f64| {
            TableNli(answers.iter().cloned().zip(raw.iter().map(|&p| f(p))).collect())
        };
        let base = entailment_select_index(&answers, "hint", &table(&|p| p)).unwrap();
        let moved = entailment_select_index(&answers, "hint", &table(&|p| scale * p.powf(exponent))).unwrap();
        prop_assert_eq!(base, moved);
        let first_max = raw.iter().position(|&p| p == raw.iter().cloned().fold(f64::MIN, f64::max)).unwrap();
        prop_assert_eq!(base, first_max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ols_recovers_noiseless_linear_data(
        seed in any::<u64>(),
        n in 8usize..40,
        p in 1usize..6,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b = rng.random_range(-2.0..2.0);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| b + r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>()).collect();
        let fit = ols::fit(&x, &y, 0.0).unwrap();
        for (row, target) in x.iter().zip(&y) {
            prop_assert!((fit.predict(row) - target).abs() <= 1e-8);
        }
        prop_assert!((fit.intercept - b).abs() <= 1e-6);
    }
}
