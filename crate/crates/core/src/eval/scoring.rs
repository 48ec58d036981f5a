use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gateway::{CompletionParams, Gateway};

const JUDGE: &str = include_str!("../../assets/prompts/judge.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Exact,
    Judge,
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Protocol::Exact),
            "judge" => Ok(Protocol::Judge),
            other => Err(format!("unknown protocol {other:?} (expected exact or judge)")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Exact => "exact",
            Protocol::Judge => "judge",
        })
    }
}

/// Trim, lowercase, collapse internal whitespace, then strip one layer of
/// matching surrounding quotes. Punctuation is kept.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    for q in ['"', '\''] {
        if collapsed.len() >= 2 && collapsed.starts_with(q) && collapsed.ends_with(q) {
            return collapsed[1..collapsed.len() - 1].trim().to_string();
        }
    }
    collapsed
}

pub fn score_exact(prediction: &str, gold: &str) -> bool {
    normalize_answer(prediction) == normalize_answer(gold)
}

/// Result of one judge call. `warning` is set when the verdict could not be
/// parsed or the gateway failed; both score as incorrect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeOutcome {
    pub correct: bool,
    pub warning: Option<String>,
}

/// Find the verdict token in a judge response.
pub fn parse_verdict(response: &str) -> Option<bool> {
    let words: Vec<String> = response
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_uppercase)
        .collect();
    if words.iter().any(|w| w == "INCORRECT") {
        Some(false)
    } else if words.iter().any(|w| w == "CORRECT") {
        Some(true)
    } else {
        None
    }
}

pub fn score_judge(gateway: &Gateway, question: &str, prediction: &str, gold: &str) -> JudgeOutcome {
    let prompt = JUDGE.replace("{question}", question).replace("{prediction}", prediction).replace("{gold}", gold);
    let params = CompletionParams { temperature: 0.0, max_tokens: 8, tag: "judge".into() };
    match gateway.complete(&prompt, &params) {
        Ok((text, _)) => match parse_verdict(&text) {
            Some(correct) => JudgeOutcome { correct, warning: None },
            None => JudgeOutcome { correct: false, warning: Some(format!("unparseable verdict: {:?}", text.trim())) },
        },
        Err(e) => JudgeOutcome { correct: false, warning: Some(format!("judge call failed: {e}")) },
    }
}
