//! Answer metrics over normalized strings.

/// Normalizes an answer: lowercase, strip punctuation, drop the articles
/// "a", "an" and "the" as whole tokens, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|token| !matches!(*token, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exact match on normalized strings.
pub fn em(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

/// Cover exact match: the normalized gold answer occurs as a contiguous
/// substring of the normalized prediction.
pub fn cover_em(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred).contains(&normalize_answer(gold)))
}

/// Token-level F1 over normalized token multisets. Both-empty pairs score
/// 1; a single empty side scores 0.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred_tokens: Vec<String> = normalize_answer(pred)
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let gold_tokens: Vec<String> = normalize_answer(gold)
        .split_whitespace()
        .map(str::to_string)
        .collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return if pred_tokens.is_empty() && gold_tokens.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut gold_counts: std::collections::HashMap<&str, usize> = Default::default();
    for token in &gold_tokens {
        *gold_counts.entry(token).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for token in &pred_tokens {
        if let Some(count) = gold_counts.get_mut(token.as_str()) {
            if *count > 0 {
                *count -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
