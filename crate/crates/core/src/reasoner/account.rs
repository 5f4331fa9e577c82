use crate::assembler::{Outcome, VerdictRecord};
use crate::frontend::MethodId;
use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Published measurement at depth 3, shown next to ours for comparison.
pub const REFERENCE_CALLS_PER_ENTRY: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOverhead {
    pub entry: MethodId,
    pub merge_checks: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
    pub instantiations: usize,
    /// Requests issued, retries included.
    pub calls: u64,
    pub token_estimate: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl EntryOverhead {
    pub fn new(entry: MethodId, verdicts: &[VerdictRecord], instantiations: &[(u32, u64)], wall: Option<Duration>) -> Self {
        let count = |o: Outcome| verdicts.iter().filter(|v| v.outcome == o).count();
        EntryOverhead {
            entry,
            merge_checks: verdicts.len(),
            accepted: count(Outcome::Accepted),
            rejected: count(Outcome::Rejected),
            failed: count(Outcome::Failed),
            instantiations: instantiations.len(),
            calls: verdicts.iter().map(|v| u64::from(v.attempts)).sum::<u64>()
                + instantiations.iter().map(|&(a, _)| u64::from(a)).sum::<u64>(),
            token_estimate: verdicts.iter().map(|v| v.token_estimate).sum::<u64>() + instantiations.iter().map(|&(_, t)| t).sum::<u64>(),
            wall_time_secs: wall.map(|d| d.as_secs_f64()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub reference_calls_per_entry: f64,
    pub entries: Vec<EntryOverhead>,
    pub total_calls: u64,
    /// Mean over entries; zero when there are none.
    pub calls_per_entry: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_per_entry: Option<f64>,
}

pub fn account(entries: Vec<EntryOverhead>) -> OverheadReport {
    let total_calls = entries.iter().map(|e| e.calls).sum();
    let n = entries.len().max(1) as f64;
    let wall: Option<Vec<f64>> = entries.iter().map(|e| e.wall_time_secs).collect();
    OverheadReport {
        reference_calls_per_entry: REFERENCE_CALLS_PER_ENTRY,
        calls_per_entry: total_calls as f64 / n,
        wall_time_per_entry: wall.filter(|w| !w.is_empty()).map(|w| w.iter().sum::<f64>() / n),
        total_calls,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(outcome: Outcome) -> VerdictRecord {
        VerdictRecord {
            caller: MethodId::from("p.A.a/0"),
            callee: MethodId::from("p.A.b/0"),
            call_node: 1,
            callee_path: 0,
            outcome,
            verdict: None,
            error: None,
            attempts: 1,
            token_estimate: 10,
        }
    }

    #[test]
    fn counts_checks_and_instantiations() {
        let v: Vec<_> = (0..12).map(|i| rec(if i % 3 == 0 { Outcome::Rejected } else { Outcome::Accepted })).collect();
        let e = EntryOverhead::new("p.A.a/0".into(), &v, &[(1, 5); 6], None);
        assert_eq!((e.merge_checks, e.rejected, e.calls), (12, 4, 18));
        let r = account(vec![e]);
        assert_eq!(r.calls_per_entry, 18.0);
        assert_eq!(r.wall_time_per_entry, None);
    }

    #[test]
    fn no_sequences_means_checks_only() {
        let v = vec![rec(Outcome::Rejected); 3];
        assert_eq!(EntryOverhead::new("p.A.a/0".into(), &v, &[], None).calls, 3);
    }
}
