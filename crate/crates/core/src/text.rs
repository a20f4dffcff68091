//! Small text utilities shared by the stub backends and the metrics.

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// True when the text has no alphanumeric content at all.
pub fn is_blank(text: &str) -> bool {
    !text.chars().any(char::is_alphanumeric)
}

/// Normalizes a generated question so it ends with exactly one `?`.
pub fn as_question(text: &str) -> String {
    let trimmed = text.trim().trim_end_matches(|c: char| c == '?' || c == '.' || c == '!' || c.is_whitespace());
    format!("{trimmed}?")
}

/// Removes a single trailing `?` (and surrounding whitespace) from a question.
pub fn strip_question_mark(text: &str) -> &str {
    let t = text.trim_end();
    t.strip_suffix('?').unwrap_or(t).trim_end()
}
