//! Rule-based split of an answer into its effect (the main answer) and its
//! cause (the justification).
//!
//! Rules are tried in a fixed order and the first one that fires wins:
//!
//! 1. because-like connective (`because`, `since`, conjunctive `as`):
//!    left segment is the effect, right segment the cause. A leading
//!    connective (`Because X, Y`) reads the clause up to the first comma as
//!    the cause.
//! 2. conditional: `If X then Y` or `If X, Y`. `If X` is the cause, `Y` the
//!    effect.
//! 3. a first comma whose left segment has at most four words: left is the
//!    effect, right the cause.
//! 4. so-like connective (`so`, `therefore`, `hence`, `thus`): left is the
//!    cause, right the effect.
//! 5. no connective: the whole text is the effect and the cause is empty.
//!
//! Within a rule the leftmost usable occurrence is taken. Matching is
//! case-insensitive and only on word boundaries. Spans are byte ranges into
//! the input.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::is_blank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connective {
    BecauseLike,
    IfThen,
    Comma,
    SoLike,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub cause: String,
    pub effect: String,
    pub connective: Connective,
    pub cause_span: Range<usize>,
    pub effect_span: Range<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connective_span: Option<Range<usize>>,
}

impl Decomposition {
    pub fn has_cause(&self) -> bool {
        has_cause(self)
    }
}

/// True iff the decomposition carries a non-empty cause.
pub fn has_cause(d: &Decomposition) -> bool {
    !is_blank(&d.cause)
}

static BECAUSE_LIKE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(because|since|as)\b").unwrap());
static SO_LIKE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(so|therefore|hence|thus)\b").unwrap());
static LEADING_IF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*if\b").unwrap());
static THEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bthen\b").unwrap());

/// Words before `as` that mark a comparative or list rather than a reason.
const NON_CAUSAL_AS: &[&str] = &["such", "same", "so", "as", "well", "known", "just"];

const MAX_COMMA_EFFECT_WORDS: usize = 4;
const MIN_AS_CAUSE_WORDS: usize = 3;
const COMPARATIVE_WINDOW: usize = 3;

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | ';' | ':')
}

/// Trims a segment. Separators (`,;:`) are also stripped on the side that
/// touches the connective. A segment with no alphanumeric content collapses
/// to an empty range at its start.
fn clean(text: &str, range: Range<usize>, strip_end_sep: bool, strip_start_sep: bool) -> Range<usize> {
    let seg = &text[range.clone()];
    let lead = if strip_start_sep {
        seg.len() - seg.trim_start_matches(is_separator).len()
    } else {
        seg.len() - seg.trim_start().len()
    };
    let tail = if strip_end_sep { seg.trim_end_matches(is_separator).len() } else { seg.trim_end().len() };
    let start = range.start + lead;
    let end = (range.start + tail).max(start);
    if is_blank(&text[start..end]) {
        start..start
    } else {
        start..end
    }
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn build(
    text: &str,
    connective: Connective,
    cause: Range<usize>,
    effect: Range<usize>,
    conn: Option<Range<usize>>,
) -> Decomposition {
    Decomposition {
        cause: text[cause.clone()].to_string(),
        effect: text[effect.clone()].to_string(),
        connective,
        cause_span: cause,
        effect_span: effect,
        connective_span: conn,
    }
}

fn because_rule(text: &str) -> Option<Decomposition> {
    for m in BECAUSE_LIKE.find_iter(text) {
        let left = clean(text, 0..m.start(), true, false);
        let right = clean(text, m.end()..text.len(), false, true);
        let is_as = m.as_str().eq_ignore_ascii_case("as");
        if left.is_empty() {
            if is_as {
                continue;
            }
            // "Because X, Y": cause runs to the first comma.
            let Some(comma) = text[m.end()..].find(',').map(|i| i + m.end()) else {
                continue;
            };
            let cause = clean(text, m.end()..comma, true, true);
            let effect = clean(text, comma + 1..text.len(), false, true);
            if !cause.is_empty() && !effect.is_empty() {
                return Some(build(text, Connective::BecauseLike, cause, effect, Some(m.range())));
            }
            continue;
        }
        if right.is_empty() {
            continue;
        }
        if is_as {
            let prev = text[..m.start()]
                .split(|c: char| !c.is_alphanumeric())
                .rfind(|w| !w.is_empty())
                .unwrap_or("")
                .to_lowercase();
            // either "as" of "as good as"
            let near_as = |words: &mut dyn Iterator<Item = &str>| {
                words.filter(|w| !w.is_empty()).take(COMPARATIVE_WINDOW).any(|w| w.eq_ignore_ascii_case("as"))
            };
            let opens_comparative = near_as(&mut text[m.end()..].split(|c: char| !c.is_alphanumeric()))
                || near_as(&mut text[..m.start()].rsplit(|c: char| !c.is_alphanumeric()));
            if NON_CAUSAL_AS.contains(&prev.as_str())
                || opens_comparative
                || word_count(&text[right.clone()]) < MIN_AS_CAUSE_WORDS
            {
                continue;
            }
        }
        return Some(build(text, Connective::BecauseLike, right, left, Some(m.range())));
    }
    None
}

fn conditional_rule(text: &str) -> Option<Decomposition> {
    let start = LEADING_IF.find(text)?;
    let if_start = start.end() - 2;
    let (split, conn) = match THEN.find_at(text, start.end()) {
        Some(t) => (t.range(), t.range()),
        None => {
            let comma = text[start.end()..].find(',')? + start.end();
            (comma..comma + 1, comma..comma + 1)
        }
    };
    let cause = clean(text, if_start..split.start, true, false);
    let effect = clean(text, split.end..text.len(), false, true);
    (!cause.is_empty() && !effect.is_empty()).then(|| build(text, Connective::IfThen, cause, effect, Some(conn)))
}

fn comma_rule(text: &str) -> Option<Decomposition> {
    let comma = text.find(',')?;
    let effect = clean(text, 0..comma, true, false);
    if effect.is_empty() || word_count(&text[effect.clone()]) > MAX_COMMA_EFFECT_WORDS {
        return None;
    }
    let cause = clean(text, comma + 1..text.len(), false, true);
    Some(build(text, Connective::Comma, cause, effect, Some(comma..comma + 1)))
}

fn so_rule(text: &str) -> Option<Decomposition> {
    SO_LIKE.find_iter(text).find_map(|m| {
        let cause = clean(text, 0..m.start(), true, false);
        let effect = clean(text, m.end()..text.len(), false, true);
        (!cause.is_empty() && !effect.is_empty())
            .then(|| build(text, Connective::SoLike, cause, effect, Some(m.range())))
    })
}

/// Splits `text` into cause and effect. Pure and deterministic.
pub fn decompose(text: &str) -> Result<Decomposition> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("answer text"));
    }
    let decomposition = because_rule(text)
        .or_else(|| conditional_rule(text))
        .or_else(|| comma_rule(text))
        .or_else(|| so_rule(text))
        .unwrap_or_else(|| {
            let effect = clean(text, 0..text.len(), false, false);
            let effect = if effect.is_empty() {
                // punctuation-only answers still need a non-empty effect
                let lead = text.len() - text.trim_start().len();
                lead..lead + text.trim().len()
            } else {
                effect
            };
            build(text, Connective::None, effect.start..effect.start, effect, None)
        });
    Ok(decomposition)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(text: &str) -> (String, String, Connective) {
        let d = decompose(text).unwrap();
        (d.cause, d.effect, d.connective)
    }

    #[test]
    fn trailing_comma_leaves_an_empty_cause() {
        assert_eq!(parts("Yes,"), (String::new(), "Yes".into(), Connective::Comma));
    }

    #[test]
    fn reference_table_rows() {
        let (c, e, k) = parts("It's a discrete variable because it's counting the number of vehicles");
        assert_eq!(e, "It's a discrete variable");
        assert_eq!(c, "it's counting the number of vehicles");
        assert_eq!(k, Connective::BecauseLike);

        let (c, e, k) = parts("No, the feature has 0 weight in the model function.");
        assert_eq!(e, "No");
        assert_eq!(c, "the feature has 0 weight in the model function.");
        assert_eq!(k, Connective::Comma);

        let (c, e, k) = parts("If the output is over the threshold then x is fraudulent");
        assert_eq!(c, "If the output is over the threshold");
        assert_eq!(e, "x is fraudulent");
        assert_eq!(k, Connective::IfThen);
    }

    #[test]
    fn bare_answer_has_no_cause() {
        let d = decompose("Treatment A").unwrap();
        assert_eq!(d.effect, "Treatment A");
        assert_eq!(d.cause, "");
        assert_eq!(d.connective, Connective::None);
        assert!(!has_cause(&d));
    }

    #[test]
    fn conjunctive_as() {
        let (c, e, _) = parts("No, as the output variable of linear regression is continuous");
        assert_eq!(e, "No");
        assert_eq!(c, "the output variable of linear regression is continuous");
        // comparative "as" does not fire; the comma rule does not apply either
        let (c, e, k) = parts("Model A is as good as model B overall");
        assert_eq!((c.as_str(), k), ("", Connective::None));
        assert_eq!(e, "Model A is as good as model B overall");
    }

    #[test]
    fn punctuation_only_cause_is_empty() {
        let d = decompose("Yes, ...").unwrap();
        assert_eq!(d.effect, "Yes");
        assert_eq!(d.cause, "");
        assert!(!has_cause(&d));
    }

    #[test]
    fn rejects_blank() {
        assert!(decompose("   ").is_err());
        assert!(decompose("").is_err());
    }

    #[test]
    fn no_match_inside_words() {
        let (c, _, k) = parts("The basis is sound");
        assert_eq!((c.as_str(), k), ("", Connective::None));
    }

    #[test]
    fn spans_point_into_source() {
        let text = "  Treatment A, because results with higher variance are less homogeneous ";
        let d = decompose(text).unwrap();
        assert_eq!(&text[d.effect_span.clone()], "Treatment A");
        assert_eq!(&text[d.cause_span.clone()], "results with higher variance are less homogeneous");
        assert_eq!(&text[d.connective_span.clone().unwrap()], "because");
    }
}
