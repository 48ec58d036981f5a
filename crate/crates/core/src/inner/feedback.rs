use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::InnerError;

/// Per-trajectory outcome triple: success, spend, and latency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackVector {
    pub perf: f64,
    /// USD when prices are configured, otherwise tokens.
    pub cost: f64,
    /// Steps in simulation, seconds in wall-clock mode.
    pub delay: f64,
}

impl FeedbackVector {
    pub fn new(perf: f64, cost: f64, delay: f64) -> Self {
        FeedbackVector { perf, cost, delay }
    }

    pub fn is_finite(&self) -> bool {
        self.perf.is_finite() && self.cost.is_finite() && self.delay.is_finite()
    }
}

/// Component-wise means over a batch, with the per-task vectors kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSummary {
    pub perf_mean: f64,
    pub cost_mean: f64,
    pub delay_mean: f64,
    pub n: usize,
    pub per_task: BTreeMap<String, FeedbackVector>,
}

impl FeedbackSummary {
    pub fn means(&self) -> FeedbackVector {
        FeedbackVector::new(self.perf_mean, self.cost_mean, self.delay_mean)
    }
}

/// Arithmetic mean of `(task_id, feedback)` pairs. Task ids must be unique.
pub fn aggregate<'a>(
    feedbacks: impl IntoIterator<Item = (&'a str, FeedbackVector)>,
) -> Result<FeedbackSummary, InnerError> {
    let mut per_task = BTreeMap::new();
    let (mut p, mut c, mut d) = (0.0, 0.0, 0.0);
    let mut n = 0usize;
    for (id, f) in feedbacks {
        p += f.perf;
        c += f.cost;
        d += f.delay;
        n += 1;
        if per_task.insert(id.to_string(), f).is_some() {
            return Err(InnerError::InvalidTask { task_id: id.to_string(), reason: "duplicate id in batch".into() });
        }
    }
    if n == 0 {
        return Err(InnerError::EmptyAggregate);
    }
    let k = n as f64;
    Ok(FeedbackSummary { perf_mean: p / k, cost_mean: c / k, delay_mean: d / k, n, per_task })
}
