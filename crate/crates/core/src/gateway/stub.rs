use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::eval::normalize_answer;
use crate::hash::stable_hex;
use crate::markers::{field, key_marker, keys, miss_marker, misses, topic_words};

/// Hash value in a fixture record that matches every prompt for its tag.
pub const WILDCARD: &str = "*";

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub tag: String,
    pub prompt_hash: String,
    pub response: String,
}

/// Canned responses keyed by (tag, stable prompt hash).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureTable {
    entries: BTreeMap<(String, String), String>,
}

impl FixtureTable {
    pub fn insert(&mut self, tag: &str, prompt: &str, response: &str) {
        self.entries.insert((tag.to_string(), stable_hex(prompt)), response.to_string());
    }

    /// Respond with `response` to every prompt under `tag` lacking an exact entry.
    pub fn insert_wildcard(&mut self, tag: &str, response: &str) {
        self.entries.insert((tag.to_string(), WILDCARD.to_string()), response.to_string());
    }

    pub fn push(&mut self, record: FixtureRecord) {
        self.entries.insert((record.tag, record.prompt_hash), record.response);
    }

    pub fn lookup(&self, tag: &str, prompt: &str) -> Option<&str> {
        self.entries
            .get(&(tag.to_string(), stable_hex(prompt)))
            .or_else(|| self.entries.get(&(tag.to_string(), WILDCARD.to_string())))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.entries
            .iter()
            .map(|((tag, prompt_hash), response)| FixtureRecord {
                tag: tag.clone(),
                prompt_hash: prompt_hash.clone(),
                response: response.clone(),
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("fixture file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| GatewayError::Config(format!("fixture file {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut table = FixtureTable::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            table.push(rec);
        }
        Ok(table)
    }

    pub fn to_jsonl(&self) -> String {
        self.records().iter().map(|r| serde_json::to_string(r).expect("fixture serializes") + "\n").collect()
    }
}

/// Deterministic stand-in responses for tags the stub understands.
///
/// The responder reads the structured lines our prompt templates emit and
/// condenses the key markers in them, which is roughly what a model asked to
/// distil a lookup trajectory would produce. Unknown tags get a fixed
/// placeholder so callers exercise their parse-failure paths.
pub(crate) fn synthesize(tag: &str, prompt: &str) -> String {
    let topic = field(prompt, "task").map(topic_words).unwrap_or_default().join(" ");
    let found = keys(prompt);
    let missed: Vec<String> = misses(prompt).into_iter().filter(|m| !found.contains(m)).collect();
    let found_m: Vec<String> = found.iter().map(|k| key_marker(k)).collect();
    let missed_m: Vec<String> = missed.iter().map(|k| miss_marker(k)).collect();
    match tag {
        "encode.summary" => {
            let outcome = field(prompt, "outcome").unwrap_or("unknown");
            let mut s = format!("Summary of '{topic}': {outcome}.");
            if !found_m.is_empty() {
                s.push_str(&format!(" Answer came from {}.", found_m.join(" ")));
            }
            if !missed_m.is_empty() {
                s.push_str(&format!(" Empty lookups: {}.", missed_m.join(" ")));
            }
            s
        }
        "encode.insight" => {
            let mut lines = Vec::new();
            if !found_m.is_empty() {
                lines.push(format!("- For '{topic}' questions the answer is stored under {}.", found_m.join(" ")));
            }
            if !missed_m.is_empty() {
                lines.push(format!("- For '{topic}' questions these keys hold nothing: {}.", missed_m.join(" ")));
            }
            if lines.is_empty() {
                lines.push(format!("- '{topic}' questions need broader exploration."));
            }
            lines.join("\n")
        }
        "encode.workflow" => match found_m.first() {
            Some(k) => format!("Workflow for '{topic}': 1) look up {k} 2) report the value."),
            None if !missed_m.is_empty() => {
                format!("Workflow for '{topic}': 1) skip {} 2) keep exploring unseen keys.", missed_m.join(" "))
            }
            None => format!("Workflow for '{topic}': explore keys one at a time."),
        },
        "encode.tips" => {
            let mut lines = Vec::new();
            if let Some(k) = found_m.first() {
                lines.push(format!("shortcut: {k} answers '{topic}' directly"));
                lines.push(format!("tip: for '{topic}' check {k} first"));
            }
            if !missed_m.is_empty() {
                lines.push(format!("tip: for '{topic}' avoid {}", missed_m.join(" ")));
            }
            if lines.is_empty() {
                lines.push(format!("tip: '{topic}' needs systematic exploration"));
            }
            lines.join("\n")
        }
        "encode.tool" => match found.first() {
            Some(k) => {
                let name = format!("lookup_{}", topic.replace(' ', "_"));
                format!("name: {name}\nfn {name}() -> Value {{ query({}) }}", key_marker(k))
            }
            None => "NO_TOOL".to_string(),
        },
        "judge" => {
            let pred = field(prompt, "prediction").unwrap_or("");
            let gold = field(prompt, "gold").unwrap_or("");
            if !gold.is_empty() && normalize_answer(pred) == normalize_answer(gold) {
                "CORRECT".to_string()
            } else {
                "INCORRECT".to_string()
            }
        }
        _ => format!("NO_RESPONSE stub:{}", &stable_hex(prompt)[..8]),
    }
}
