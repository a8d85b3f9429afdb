//! Text canonicalization shared by dedup, features and metrics.

use alloc::string::String;
use alloc::vec::Vec;
use unicode_normalization::UnicodeNormalization;

/// Lowercased, NFC, whitespace runs collapsed to one space, trimmed.
pub fn normalize_text(raw: &str) -> String {
    let lowered: String = raw.to_lowercase().nfc().collect();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{02BC}')
}

/// Word tokens of the normalized text.
///
/// Tokens are maximal alphanumeric runs; an apostrophe survives only when it
/// sits between two alphanumeric characters (`it's`, `don't`). Curly
/// apostrophes are folded to `'`.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = normalize_text(text);
    let chars: Vec<char> = normalized.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}
