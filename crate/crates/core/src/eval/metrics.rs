use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::inner::FeedbackVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub task_id: String,
    /// 1-based attempt number.
    pub attempt: usize,
    pub success: bool,
    pub feedback: FeedbackVector,
}

/// Fraction of tasks solved at least once within their first `k` attempts.
pub fn pass_at_k(outcomes: &[EpisodeOutcome], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_task: BTreeMap<&str, Vec<&EpisodeOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_task.entry(&o.task_id).or_default().push(o);
    }
    let mut solved = 0usize;
    for (task_id, mut attempts) in by_task.iter_mut().map(|(t, a)| (*t, std::mem::take(a))) {
        attempts.sort_by_key(|o| o.attempt);
        if attempts.iter().enumerate().any(|(i, o)| o.attempt != i + 1) {
            return Err(EvalError::NonContiguous { task_id: task_id.to_string() });
        }
        if attempts.len() < k {
            return Err(EvalError::TooFewAttempts { task_id: task_id.to_string(), attempts: attempts.len(), k });
        }
        if attempts[..k].iter().any(|o| o.success) {
            solved += 1;
        }
    }
    Ok(solved as f64 / by_task.len() as f64)
}

/// Running accuracy: entry `i` is the mean success over the first `i + 1` items.
pub fn cumulative_accuracy(successes: &[bool]) -> Result<Vec<f64>, EvalError> {
    if successes.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut hits = 0u64;
    Ok(successes
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            hits += u64::from(s);
            hits as f64 / (i + 1) as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(task: &str, attempt: usize, success: bool) -> EpisodeOutcome {
        EpisodeOutcome { task_id: task.into(), attempt, success, feedback: FeedbackVector::default() }
    }

    #[test]
    fn pass_at_k_enumeration() {
        let outs = [o("a", 1, false), o("a", 2, true), o("b", 1, false), o("b", 2, false)];
        assert_eq!(pass_at_k(&outs, 1).unwrap(), 0.0);
        assert_eq!(pass_at_k(&outs, 2).unwrap(), 0.5);
        assert!(matches!(pass_at_k(&outs, 3), Err(EvalError::TooFewAttempts { .. })));
        assert!(matches!(pass_at_k(&[o("a", 2, true)], 1), Err(EvalError::NonContiguous { .. })));
    }

    #[test]
    fn cumulative_prefix_means() {
        let c = cumulative_accuracy(&[true, false, true, true]).unwrap();
        assert_eq!(c[0], 1.0);
        assert_eq!(c[1], 0.5);
        assert!((c[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[3], 0.75);
        assert!(cumulative_accuracy(&[]).is_err());
    }
}
