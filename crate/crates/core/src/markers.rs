//! Inline markers that tie memory text to simulated tool keys.
//!
//! The simulated environment writes `[key=K]` when a lookup of `K` produced
//! the answer and `[miss=K]` when it produced nothing. Memory content keeps
//! these markers, which is how the scripted agent and the diagnosis step
//! recognize which stored items carry usable information.

use std::collections::BTreeSet;

pub fn key_marker(key: &str) -> String {
    format!("[key={key}]")
}

pub fn miss_marker(key: &str) -> String {
    format!("[miss={key}]")
}

fn extract(text: &str, kind: &str) -> Vec<String> {
    let open = format!("[{kind}=");
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(&open) {
        let after = &rest[start + open.len()..];
        match after.find(']') {
            Some(end) => {
                let value = &after[..end];
                if !value.is_empty() && !value.contains(char::is_whitespace) && !out.iter().any(|v| v == value) {
                    out.push(value.to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

/// Distinct `[key=..]` values in order of first appearance.
pub fn keys(text: &str) -> Vec<String> {
    extract(text, "key")
}

/// Distinct `[miss=..]` values in order of first appearance.
pub fn misses(text: &str) -> Vec<String> {
    extract(text, "miss")
}

/// Every marker value of either kind.
pub fn all_tokens(text: &str) -> BTreeSet<String> {
    keys(text).into_iter().chain(misses(text)).collect()
}

/// Lowercase alphabetic words of a query, ignoring tokens with digits.
pub fn topic_words(query: &str) -> Vec<String> {
    query
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && w.chars().all(char::is_alphabetic))
        .map(str::to_lowercase)
        .collect()
}

/// Value of the first `label: value` line in `text`.
pub fn field<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    let prefix = format!("{label}:");
    text.lines().find_map(|l| l.trim_start().strip_prefix(prefix.as_str()).map(str::trim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_markers() {
        let t = "found [key=f01-k3] x; no result [miss=f01-k1] [miss=f01-k2] [miss=f01-k1] [key=]";
        assert_eq!(keys(t), vec!["f01-k3"]);
        assert_eq!(misses(t), vec!["f01-k1", "f01-k2"]);
        assert_eq!(all_tokens(t).len(), 3);
        assert!(keys("[key=unterminated").is_empty());
    }

    #[test]
    fn topic_and_field() {
        assert_eq!(topic_words("Amber harbor #12: lookup"), vec!["amber", "harbor", "lookup"]);
        assert_eq!(field("a: 1\ntask: hello world\n", "task"), Some("hello world"));
        assert_eq!(field("x", "task"), None);
    }
}
