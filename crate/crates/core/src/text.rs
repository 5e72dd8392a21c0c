//! Tokenization and sentence splitting shared by retrieval, generation,
//! template matching and the shadow agent.

/// Lowercases and splits on any non-alphanumeric character. Empty tokens
/// are dropped; there is no stemming and no stopword list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

/// Splits text into sentences. A sentence ends at `.`, `!` or `?` followed
/// by whitespace or end of input; the terminator stays with the sentence.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Normalized Levenshtein distance in `[0, 1]` (0 for identical strings).
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let len = a.chars().count().max(b.chars().count());
    if len == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / len as f64
}
