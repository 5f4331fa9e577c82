//! Rule-based anomaly labels and session packaging.

use crate::config::LabelsConfig;
use crate::frontend::Level;
use crate::reasoner::ParameterizedSequence;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashSet};
use std::fmt::{self, Write as _};

/// Reference accuracy of expert review on a sample of 141 sessions.
pub const REFERENCE_REVIEW_ACCURACY: &str = "95.74% (141 sessions)";

/// Rule kinds in evidence precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Severity,
    Exception,
    Keyword,
    Status,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Severity => "severity",
            RuleKind::Exception => "exception",
            RuleKind::Keyword => "keyword",
            RuleKind::Status => "status",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub rule: RuleKind,
    pub event: usize,
    /// The level, name, keyword or status text that matched.
    pub matched: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionEvent {
    pub template_id: u32,
    pub level: Level,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub label: Label,
    pub provenance: Provenance,
    pub context: String,
    pub events: Vec<SessionEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_evidence: Vec<Evidence>,
}

#[derive(Debug, Clone)]
pub struct LabelRuleSet {
    pub severity_triggers: BTreeSet<Level>,
    pub exception_names: BTreeSet<String>,
    pub keywords: Vec<String>,
    pub status_patterns: Vec<Regex>,
}

impl LabelRuleSet {
    pub fn from_config(c: &LabelsConfig) -> Result<Self> {
        if c.severity_triggers.is_empty() || c.exception_names.is_empty() || c.keywords.is_empty() || c.status_patterns.is_empty() {
            return Err(Error::Config("labels: every rule set must be nonempty".into()));
        }
        let status_patterns = c
            .status_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| Error::Config(format!("labels.status_patterns: {e}"))))
            .collect::<Result<_>>()?;
        Ok(LabelRuleSet {
            severity_triggers: c.severity_triggers.iter().copied().collect(),
            exception_names: c.exception_names.iter().cloned().collect(),
            keywords: c.keywords.iter().map(|k| k.to_lowercase()).collect(),
            status_patterns,
        })
    }

    /// What `rule` matches in one event, if anything.
    pub fn matches(&self, rule: RuleKind, level: Level, message: &str) -> Option<String> {
        match rule {
            RuleKind::Severity => self.severity_triggers.contains(&level).then(|| level.to_string()),
            RuleKind::Exception => message
                .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$' || c == '.'))
                .flat_map(|tok| [tok, tok.rsplit('.').next().unwrap_or(tok)])
                .find(|t| self.exception_names.contains(*t))
                .map(str::to_string),
            RuleKind::Keyword => {
                let lower = message.to_lowercase();
                self.keywords.iter().find(|k| lower.contains(k.as_str())).cloned()
            }
            RuleKind::Status => self.status_patterns.iter().find_map(|r| r.find(message)).map(|m| m.as_str().to_string()),
        }
    }
}

const RULES: [RuleKind; 4] = [RuleKind::Severity, RuleKind::Exception, RuleKind::Keyword, RuleKind::Status];

/// Anomalous iff some event matches some rule. Each matching event is cited
/// once, under its highest-precedence rule; citations are sorted by rule,
/// then event.
pub fn label_events(events: &[SessionEvent], rules: &LabelRuleSet) -> (Label, Vec<Evidence>) {
    let mut evidence: Vec<Evidence> = events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            RULES.iter().find_map(|&r| rules.matches(r, e.level, &e.message).map(|m| Evidence { rule: r, event: i, matched: m }))
        })
        .collect();
    evidence.sort_by_key(|e| (e.rule, e.event));
    let label = if evidence.is_empty() { Label::Normal } else { Label::Anomalous };
    (label, evidence)
}

pub fn label_sequence(seq: &ParameterizedSequence, rules: &LabelRuleSet) -> (Label, Vec<Evidence>) {
    label_events(&session_events(seq), rules)
}

fn session_events(seq: &ParameterizedSequence) -> Vec<SessionEvent> {
    seq.events
        .iter()
        .map(|e| SessionEvent { template_id: e.template_id, level: e.level, message: e.message.clone() })
        .collect()
}

pub fn session_id(entry: &str, template_ids: &[u32], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(entry.as_bytes());
    for t in template_ids {
        h.update(b"\x1f");
        h.update(t.to_string().as_bytes());
    }
    h.update(b"\x1e");
    h.update(seed.to_string().as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Entry method followed by every frame's branch outcomes.
pub fn context_text(seq: &ParameterizedSequence) -> String {
    let mut s = format!("entry {}", seq.sequence.entry);
    for c in seq.sequence.context.iter().flat_map(|f| &f.conditions) {
        let _ = write!(s, " | {c}");
    }
    s
}

pub fn make_session(seq: &ParameterizedSequence, label: Label, evidence: Vec<Evidence>, seed: u64) -> Session {
    Session {
        session_id: session_id(seq.sequence.entry.as_str(), &seq.sequence.template_ids(), seed),
        label,
        provenance: Provenance::Synthetic,
        context: context_text(seq),
        events: session_events(seq),
        label_evidence: evidence,
    }
}

/// Labels and packages sequences; repeated session ids keep the first
/// session. Returns the sessions and the number of duplicates dropped.
pub fn make_sessions(seqs: &[ParameterizedSequence], rules: &LabelRuleSet, seed: u64) -> (Vec<Session>, usize) {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut dups = 0;
    for q in seqs {
        let (label, ev) = label_sequence(q, rules);
        let s = make_session(q, label, ev, seed);
        if seen.insert(s.session_id.clone()) {
            out.push(s);
        } else {
            dups += 1;
        }
    }
    (out, dups)
}

/// Seeded sample without replacement, listed in session order.
pub fn sample_for_review(sessions: &[Session], n: usize, seed: u64) -> String {
    let n = if n > sessions.len() {
        log::warn!("review sample of {n} exceeds {} sessions; listing all", sessions.len());
        sessions.len()
    } else {
        n
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, sessions.len(), n).into_vec();
    picked.sort_unstable();
    let mut out = format!(
        "review sample: {n} of {} sessions, seed {seed}\nreference expert-review accuracy: {REFERENCE_REVIEW_ACCURACY}\n",
        sessions.len()
    );
    for i in picked {
        let s = &sessions[i];
        let _ = write!(out, "\n== {} [{}] {:?}\n", s.session_id, label_name(s.label), s.provenance);
        let _ = writeln!(out, "context: {}", s.context);
        for (k, e) in s.events.iter().enumerate() {
            let _ = writeln!(out, "  {k:>3} {:<5} {}", e.level, e.message);
        }
        for ev in &s.label_evidence {
            let _ = writeln!(out, "  evidence: {} at event {} ({})", ev.rule, ev.event, ev.matched);
        }
    }
    out
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Normal => "normal",
        Label::Anomalous => "anomalous",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules() -> LabelRuleSet {
        LabelRuleSet::from_config(&LabelsConfig::default()).unwrap()
    }

    fn ev(level: Level, msg: &str) -> SessionEvent {
        SessionEvent { template_id: 1, level, message: msg.into() }
    }

    #[test]
    fn fatal_is_severity() {
        let (l, e) = label_events(&[ev(Level::Info, "ok"), ev(Level::Fatal, "bye")], &rules());
        assert_eq!(l, Label::Anomalous);
        assert_eq!((e[0].rule, e[0].event), (RuleKind::Severity, 1));
    }

    #[test]
    fn benign_info_is_normal() {
        let (l, e) = label_events(&[ev(Level::Info, "Received block blk_1 of size 42")], &rules());
        assert_eq!(l, Label::Normal);
        assert!(e.is_empty());
    }

    #[test]
    fn keyword_exception_status() {
        let r = rules();
        let (_, e) = label_events(&[ev(Level::Info, "connection refused by peer")], &r);
        assert_eq!(e[0].rule, RuleKind::Keyword);
        let (_, e) = label_events(&[ev(Level::Warn, "caught java.io.IOException: disk")], &r);
        assert_eq!((e[0].rule, e[0].matched.as_str()), (RuleKind::Exception, "IOException"));
        let (_, e) = label_events(&[ev(Level::Info, "request done, HTTP 503")], &r);
        assert_eq!(e[0].rule, RuleKind::Status);
        let (l, _) = label_events(&[ev(Level::Info, "served blk_5031 to 10.0.0.1")], &r);
        assert_eq!(l, Label::Normal);
    }

    #[test]
    fn precedence_cites_highest_rule_per_event() {
        let (_, e) = label_events(&[ev(Level::Info, "timeout, status 504"), ev(Level::Error, "NullPointerException")], &rules());
        assert_eq!(e.iter().map(|e| (e.rule, e.event)).collect::<Vec<_>>(), [(RuleKind::Severity, 1), (RuleKind::Keyword, 0)]);
    }

    #[test]
    fn session_ids() {
        assert_eq!(session_id("a", &[1, 2], 42), session_id("a", &[1, 2], 42));
        assert_ne!(session_id("a", &[1, 2], 42), session_id("a", &[1, 3], 42));
        assert_ne!(session_id("a", &[12], 42), session_id("a", &[1, 2], 42));
    }

    #[test]
    fn review_sampling() {
        let s: Vec<Session> = (0..20)
            .map(|i| Session {
                session_id: format!("s{i}"),
                label: Label::Normal,
                provenance: Provenance::Synthetic,
                context: String::new(),
                events: vec![],
                label_evidence: vec![],
            })
            .collect();
        let a = sample_for_review(&s, 5, 7);
        assert_eq!(a, sample_for_review(&s, 5, 7));
        assert_eq!(a.matches("\n== ").count(), 5);
        assert_eq!(sample_for_review(&s, 0, 7).matches("\n== ").count(), 0);
        assert_eq!(sample_for_review(&s, 50, 7).matches("\n== ").count(), 20);
    }
}
