//! Merge verification and parameter instantiation.

mod account;
mod live;
mod mock;
mod prompt;

pub use account::{account, EntryOverhead, OverheadReport};
pub use live::{ChatReasoner, ChatRequest, Exchange, Message};
pub use mock::{mock_values, MockReasoner};
pub use prompt::{build_instantiation_prompt, build_verification_prompt, PromptDoc, CALLEE_PATH, CALLER_SOURCE, STATIC_HINTS};

use crate::assembler::{CandidateSequence, LocalPath};
use crate::config::Config;
use crate::frontend::{Level, MethodDecl, MethodId, PlaceholderKind, TemplateTable, PLACEHOLDER};
use crate::lcfg::Condition;
use crate::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub valid: bool,
    pub rationale: String,
    pub source: Source,
    pub attempts: u32,
    pub token_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReasonerError {
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<ReasonerError> },
}

/// A callee parameter and the caller expression passed for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub param: String,
    pub arg: String,
}

/// Caller state at one call site.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MergeContext {
    /// Bindings of the caller's own parameters, inherited from its caller.
    pub inherited: Vec<Binding>,
    /// Branch outcomes on the caller path before the call.
    pub conditions: Vec<Condition>,
    pub call_args: Vec<String>,
}

pub struct MergeQuery<'a> {
    pub caller: &'a MethodDecl,
    pub callee: &'a MethodDecl,
    pub context: &'a MergeContext,
    /// Callee parameters bound to the (resolved) argument texts.
    pub bindings: &'a [Binding],
    pub callee_path: &'a LocalPath,
    pub prompt: &'a PromptDoc,
}

pub struct InstantiateQuery<'a> {
    pub sequence_id: &'a str,
    /// Pattern and placeholder kinds per event.
    pub events: &'a [(String, Vec<PlaceholderKind>)],
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instantiation {
    /// One value list per event, in placeholder order.
    pub values: Vec<Vec<String>>,
    pub attempts: u32,
    /// Live values were unusable and seeded mock values were substituted.
    pub fallback: bool,
    pub token_estimate: u64,
}

pub trait Reasoner: Send + Sync {
    fn source(&self) -> Source;
    fn verify_merge(&self, q: &MergeQuery<'_>) -> Result<Verdict, ReasonerError>;
    fn instantiate(&self, q: &InstantiateQuery<'_>) -> Result<Instantiation, ReasonerError>;
}

/// Picks the reasoner the configuration asks for.
pub fn from_config(config: &Config) -> Result<Box<dyn Reasoner>> {
    config.validate_mode()?;
    Ok(match config.mode() {
        "mock" => Box::new(MockReasoner::new(config.seed())),
        _ => Box::new(ChatReasoner::from_config(config)?),
    })
}

/// Rough token count used for accounting: four characters per token.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Fields of the last well-formed JSON object in `raw` that has a boolean
/// `valid`. A rejection must carry a nonempty rationale.
pub fn parse_verdict(raw: &str) -> Result<(bool, String), ReasonerError> {
    let Some(obj) = objects(raw).filter(|o| o.get("valid").is_some_and(Value::is_boolean)).last() else {
        return Err(ReasonerError::Malformed("no object with a boolean \"valid\"".into()));
    };
    let valid = obj["valid"].as_bool().expect("checked boolean");
    let rationale = match obj.get("rationale") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.trim().to_string(),
        Some(_) => return Err(ReasonerError::Malformed("\"rationale\" is not a string".into())),
    };
    if !valid && rationale.is_empty() {
        return Err(ReasonerError::Malformed("rejection without a rationale".into()));
    }
    Ok((valid, rationale))
}

/// Top-level JSON objects embedded in free text, left to right. An object
/// that parses is consumed whole; otherwise scanning resumes after its brace.
pub(crate) fn objects(raw: &str) -> impl Iterator<Item = serde_json::Map<String, Value>> + '_ {
    let mut pos = 0;
    std::iter::from_fn(move || {
        while let Some(off) = raw[pos..].find('{') {
            let start = pos + off;
            let mut it = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
            match it.next() {
                Some(Ok(Value::Object(m))) => {
                    pos = start + it.byte_offset();
                    return Some(m);
                }
                _ => pos = start + 1,
            }
        }
        None
    })
}

/// Substitutes placeholders left to right. Surplus values are ignored and
/// missing ones leave the placeholder in place.
pub fn render(pattern: &str, values: &[String]) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    let mut vals = values.iter();
    while let Some(i) = rest.find(PLACEHOLDER) {
        out.push_str(&rest[..i]);
        match vals.next() {
            Some(v) => out.push_str(v),
            None => out.push_str(PLACEHOLDER),
        }
        rest = &rest[i + PLACEHOLDER.len()..];
    }
    out.push_str(rest);
    out
}

pub fn placeholder_count(pattern: &str) -> usize {
    pattern.matches(PLACEHOLDER).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedEvent {
    pub template_id: u32,
    pub level: Level,
    pub method_id: MethodId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterizedSequence {
    pub sequence: CandidateSequence,
    pub events: Vec<RenderedEvent>,
    /// Values came from the seeded generator after the live reply was unusable.
    pub params_fallback: bool,
    pub attempts: u32,
    pub token_estimate: u64,
}

/// Fills every placeholder of a sequence with one reasoner request.
pub fn instantiate_parameters(
    seq: CandidateSequence,
    templates: &TemplateTable,
    reasoner: &dyn Reasoner,
) -> Result<ParameterizedSequence, ReasonerError> {
    let mut specs = Vec::with_capacity(seq.events.len());
    for e in &seq.events {
        let t = templates
            .get(e.template_id)
            .ok_or_else(|| ReasonerError::Malformed(format!("unknown template {}", e.template_id)))?;
        let mut kinds = t.placeholder_kinds.clone();
        kinds.resize(placeholder_count(&t.pattern), PlaceholderKind::Generic);
        specs.push((t.pattern.clone(), kinds));
    }
    let prompt = build_instantiation_prompt(&seq.sequence_id, &specs);
    let inst = reasoner.instantiate(&InstantiateQuery { sequence_id: &seq.sequence_id, events: &specs, prompt: &prompt })?;
    let events = seq
        .events
        .iter()
        .zip(&specs)
        .zip(&inst.values)
        .map(|((e, (pattern, _)), vals)| {
            // A value may not reintroduce a placeholder.
            let vals: Vec<String> = vals.iter().map(|v| v.replace(PLACEHOLDER, "*")).collect();
            RenderedEvent {
                template_id: e.template_id,
                level: templates.get(e.template_id).expect("checked above").level,
                method_id: e.method_id.clone(),
                message: render(pattern, &vals),
            }
        })
        .collect();
    Ok(ParameterizedSequence {
        sequence: seq,
        events,
        params_fallback: inst.fallback,
        attempts: inst.attempts,
        token_estimate: inst.token_estimate,
    })
}
