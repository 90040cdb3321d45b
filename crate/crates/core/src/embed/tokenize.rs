/// Lowercased maximal runs of Unicode letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// The first `limit` tokens of `text`.
pub fn tokenize_and_truncate(text: &str, limit: usize) -> Vec<String> {
    let mut tokens = tokenize(text);
    tokens.truncate(limit.max(1));
    tokens
}
