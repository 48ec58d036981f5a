//! Encode stage: turning a finished trajectory into memory items.

use std::collections::BTreeMap;

use crate::gateway::{CompletionParams, Gateway, GatewayError};
use crate::genotype::{EncodeStage, EncodeStrategy, SuccessFilter};

use super::{MemoryKind, TrajectoryData};

const SUMMARY: &str = include_str!("../../assets/prompts/summary.txt");
const INSIGHT: &str = include_str!("../../assets/prompts/insight.txt");
const INSIGHT_CONTRASTIVE: &str = include_str!("../../assets/prompts/insight_contrastive.txt");
const WORKFLOW: &str = include_str!("../../assets/prompts/workflow.txt");
const TIPS: &str = include_str!("../../assets/prompts/tips.txt");
const TOOL: &str = include_str!("../../assets/prompts/tool.txt");

/// An item before the store assigns it an id and counters.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Draft {
    pub kind: MemoryKind,
    pub content: String,
    pub key: Option<String>,
    pub confidence: f64,
}

/// Plain-text rendering of a trajectory, used verbatim and inside prompts.
pub fn render_trajectory(t: &TrajectoryData) -> String {
    let mut out = format!(
        "task: {}\nfamily: {}\noutcome: {}\nanswer: {}\nsteps:\n",
        t.query,
        t.family_id,
        if t.success { "success" } else { "failure" },
        t.answer
    );
    for s in &t.steps {
        out.push_str(&format!("{}. {} -> {}\n", s.index, s.action, s.observation));
    }
    out
}

fn truncate(text: &str, max_chars: i64) -> String {
    let max = usize::try_from(max_chars).unwrap_or(0);
    match text.char_indices().nth(max) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text.to_string(),
    }
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    slots.iter().fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

fn ask(gateway: &Gateway, tag: &str, prompt: &str) -> Result<String, GatewayError> {
    let params = CompletionParams { temperature: 0.0, max_tokens: 512, tag: tag.to_string() };
    Ok(gateway.complete(prompt, &params)?.0)
}

/// Non-empty lines with list bullets removed.
fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(|l| l.trim().trim_start_matches("- ").trim()).filter(|l| !l.is_empty())
}

/// Run one encode strategy. `contrast` is the latest opposite-outcome
/// trajectory of the same family, supplied when the filter is contrastive.
fn run_strategy(
    strategy: EncodeStrategy,
    stage: &EncodeStage,
    t: &TrajectoryData,
    contrast: Option<&TrajectoryData>,
    gateway: &Gateway,
) -> Result<Vec<Draft>, GatewayError> {
    let confidence = if t.success { 1.0 } else { 0.5 };
    let limit = usize::try_from(stage.max_items_per_trajectory).unwrap_or(1);
    let rendered = render_trajectory(t);
    let traj = rendered.as_str();
    let one = |kind, content: String| {
        let content = truncate(content.trim(), stage.max_chars);
        if content.is_empty() {
            vec![]
        } else {
            vec![Draft { kind, content, key: None, confidence }]
        }
    };
    let many = |text: &str, kind_of: &dyn Fn(&str) -> MemoryKind, confidence: f64| {
        lines(text)
            .filter(|l| !l.starts_with('#'))
            .take(limit)
            .map(|l| Draft { kind: kind_of(l), content: truncate(l, stage.max_chars), key: None, confidence })
            .collect::<Vec<_>>()
    };
    let out = match strategy {
        EncodeStrategy::Verbatim => one(MemoryKind::RawTrajectory, rendered.clone()),
        EncodeStrategy::Summary => {
            one(MemoryKind::RawTrajectory, ask(gateway, "encode.summary", &fill(SUMMARY, &[("trajectory", traj)]))?)
        }
        EncodeStrategy::Workflow => {
            one(MemoryKind::Workflow, ask(gateway, "encode.workflow", &fill(WORKFLOW, &[("trajectory", traj)]))?)
        }
        EncodeStrategy::Insight => match (stage.success_filter, contrast) {
            (SuccessFilter::Contrastive, Some(other)) => {
                let other_text = render_trajectory(other);
                let (s, f) = if t.success { (traj, other_text.as_str()) } else { (other_text.as_str(), traj) };
                let text =
                    ask(gateway, "encode.insight", &fill(INSIGHT_CONTRASTIVE, &[("success", s), ("failure", f)]))?;
                many(&text, &|_| MemoryKind::Insight, 1.0)
            }
            // without a counterpart only successes teach anything
            (SuccessFilter::Contrastive, None) if !t.success => vec![],
            _ => {
                let text = ask(gateway, "encode.insight", &fill(INSIGHT, &[("trajectory", traj)]))?;
                many(&text, &|_| MemoryKind::Insight, confidence)
            }
        },
        EncodeStrategy::TipsShortcuts => {
            let text = ask(gateway, "encode.tips", &fill(TIPS, &[("trajectory", traj)]))?;
            let kind_of = |l: &str| {
                if l.to_ascii_lowercase().starts_with("shortcut:") {
                    MemoryKind::Shortcut
                } else {
                    MemoryKind::Tip
                }
            };
            many(&text, &kind_of, confidence)
        }
        EncodeStrategy::ToolSynthesis => {
            let text = ask(gateway, "encode.tool", &fill(TOOL, &[("trajectory", traj)]))?;
            let name = text
                .lines()
                .find_map(|l| l.trim().strip_prefix("name:"))
                .map(|n| n.trim().to_string())
                .filter(|n| !n.is_empty());
            match name {
                Some(name) => one(MemoryKind::ToolSpec, text.trim().to_string())
                    .into_iter()
                    .map(|d| Draft { key: Some(name.clone()), ..d })
                    .collect(),
                None => vec![],
            }
        }
    };
    Ok(out)
}

/// Apply the encode stage (primary strategy then companion) to one trajectory.
pub(crate) fn encode(
    stage: &EncodeStage,
    t: &TrajectoryData,
    contrast: Option<&TrajectoryData>,
    gateway: &Gateway,
) -> Result<Vec<Draft>, GatewayError> {
    if stage.success_filter == SuccessFilter::SuccessOnly && !t.success {
        return Ok(vec![]);
    }
    let mut drafts = run_strategy(stage.strategy, stage, t, contrast, gateway)?;
    if let Some(companion) = stage.companion {
        drafts.extend(run_strategy(companion, stage, t, contrast, gateway)?);
    }
    Ok(drafts)
}

/// `"0 items"` or e.g. `"1 raw_trajectory item, 2 tip items"`.
pub(crate) fn describe(kinds: impl IntoIterator<Item = MemoryKind>) -> String {
    let mut counts: BTreeMap<MemoryKind, usize> = BTreeMap::new();
    for k in kinds {
        *counts.entry(k).or_default() += 1;
    }
    if counts.is_empty() {
        return "0 items".into();
    }
    counts
        .iter()
        .map(|(k, n)| format!("{n} {} item{}", k.as_str(), if *n == 1 { "" } else { "s" }))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Parse an ingestion description back into per-kind counts.
/// Returns `None` for text not produced by a successful ingestion.
pub fn parse_description(text: &str) -> Option<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    if text == "0 items" {
        return Some(out);
    }
    for part in text.split(", ") {
        let mut words = part.split(' ');
        let n: usize = words.next()?.parse().ok()?;
        let kind = words.next()?;
        match words.next()? {
            "item" | "items" => {}
            _ => return None,
        }
        if words.next().is_some() {
            return None;
        }
        *out.entry(kind.to_string()).or_default() += n;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::TrajectoryStep;

    fn traj(success: bool, obs: &str) -> TrajectoryData {
        let step = TrajectoryStep {
            index: 0,
            agent_id: "agent-0".into(),
            state_summary: String::new(),
            action: "lookup f01-k2".into(),
            observation: obs.into(),
            tokens_in: 10,
            tokens_out: 2,
            memory_tokens: 0,
        };
        let reward = if success { 1.0 } else { 0.0 };
        TrajectoryData::new("t1", "f01", "amber harbor record", vec![step], reward, 1.0, 1.0, vec![], "v")
    }

    fn stage(strategy: EncodeStrategy, filter: SuccessFilter) -> EncodeStage {
        EncodeStage { strategy, companion: None, success_filter: filter, max_items_per_trajectory: 3, max_chars: 1200 }
    }

    #[test]
    fn verbatim_is_one_item_and_pure() {
        let g = Gateway::stub();
        let d = encode(
            &stage(EncodeStrategy::Verbatim, SuccessFilter::All),
            &traj(true, "found [key=f01-k2] value=v"),
            None,
            &g,
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, MemoryKind::RawTrajectory);
        assert!(d[0].content.contains("[key=f01-k2]"));
        assert_eq!(g.total().tokens(), 0);
    }

    #[test]
    fn success_only_skips_failures() {
        let g = Gateway::stub();
        let d = encode(
            &stage(EncodeStrategy::Verbatim, SuccessFilter::SuccessOnly),
            &traj(false, "no result [miss=f01-k2]"),
            None,
            &g,
        )
        .unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate("héllo", 2), "hé");
        assert_eq!(truncate("abc", 10), "abc");
        assert_eq!(truncate("abc", 0), "");
    }

    #[test]
    fn descriptions_round_trip() {
        let d = describe([MemoryKind::Tip, MemoryKind::RawTrajectory, MemoryKind::Tip]);
        assert_eq!(d, "1 raw_trajectory item, 2 tip items");
        let parsed = parse_description(&d).unwrap();
        assert_eq!(parsed["tip"], 2);
        assert_eq!(parsed["raw_trajectory"], 1);
        assert_eq!(parse_description("0 items").unwrap().len(), 0);
        assert!(parse_description("gateway failure").is_none());
    }
}
