//! Inter-procedural sequence assembly over a virtual call stack.

mod paths;

pub use paths::{enumerate_local_paths, LocalPath, LocalPaths, PathCondition, Step};

use crate::callgraph::Subgraph;
use crate::config::AssemblyBounds;
use crate::frontend::{MethodDecl, MethodId, ProjectIndex, TemplateTable};
use crate::lcfg::{Condition, LNode, LcfgSet};
use crate::reasoner::{build_verification_prompt, Binding, MergeContext, MergeQuery, Reasoner, Verdict};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub template_id: u32,
    pub method_id: MethodId,
    /// Index into the sequence's stack trace.
    pub frame: usize,
}

/// Half-open range of events produced while a frame was on the stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpan {
    pub method_id: MethodId,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Which of the method's local paths this frame followed.
    pub path_index: usize,
    pub start: usize,
    pub end: usize,
    /// Call node in the parent's body; `None` for the entry frame.
    pub call_node: Option<u32>,
    /// Accepting verdict for the merge that pushed this frame.
    pub verdict: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameContext {
    pub frame: usize,
    pub method_id: MethodId,
    pub bindings: Vec<Binding>,
    pub conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSequence {
    pub sequence_id: String,
    pub entry: MethodId,
    pub events: Vec<Event>,
    pub context: Vec<FrameContext>,
    /// Indices into the entry's verdict log, one per pushed frame.
    pub verdict_trace: Vec<usize>,
    pub stack_trace: Vec<FrameSpan>,
    /// A call was skipped because the callee was already on the stack too often.
    pub recursion_cut: bool,
}

impl CandidateSequence {
    pub fn template_ids(&self) -> Vec<u32> {
        self.events.iter().map(|e| e.template_id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Accepted,
    Rejected,
    Failed,
}

/// One (caller context, callee path) check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub caller: MethodId,
    pub callee: MethodId,
    pub call_node: u32,
    pub callee_path: usize,
    pub outcome: Outcome,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub attempts: u32,
    pub token_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assembly {
    pub entry: MethodId,
    pub sequences: Vec<CandidateSequence>,
    pub verdicts: Vec<VerdictRecord>,
    /// The per-entry sequence cap was hit.
    pub truncated: bool,
}

impl Assembly {
    pub fn failures(&self) -> usize {
        self.verdicts.iter().filter(|v| v.outcome == Outcome::Failed).count()
    }
}

/// Partial expansion of one frame; frame 0 is that frame.
#[derive(Clone)]
struct Partial {
    events: Vec<Event>,
    frames: Vec<FrameSpan>,
    context: Vec<FrameContext>,
    cut: bool,
}

impl Partial {
    fn splice(&mut self, child: &Partial, call_node: u32, verdict: usize) {
        let (ev, fr) = (self.events.len(), self.frames.len());
        self.events.extend(child.events.iter().map(|e| Event { frame: e.frame + fr, ..e.clone() }));
        for (i, f) in child.frames.iter().enumerate() {
            let mut f = f.clone();
            f.start += ev;
            f.end += ev;
            f.parent = Some(f.parent.map_or(0, |p| p + fr));
            if i == 0 {
                f.call_node = Some(call_node);
                f.verdict = Some(verdict);
            }
            self.frames.push(f);
        }
        self.context.extend(child.context.iter().map(|c| FrameContext { frame: c.frame + fr, ..c.clone() }));
        self.cut |= child.cut;
    }
}

struct EntryState<'r> {
    reasoner: &'r dyn Reasoner,
    subgraph: &'r Subgraph,
    verdicts: Vec<VerdictRecord>,
    memo: HashMap<(String, usize), usize>,
    stack: Vec<MethodId>,
    truncated: bool,
}

/// Local paths for every method with an LCFG, plus what assembly needs to
/// look up declarations and templates.
pub struct Assembler<'a> {
    pub index: &'a ProjectIndex,
    pub lcfgs: &'a LcfgSet,
    pub templates: &'a TemplateTable,
    pub bounds: AssemblyBounds,
    pub paths: BTreeMap<MethodId, LocalPaths>,
}

impl<'a> Assembler<'a> {
    pub fn new(index: &'a ProjectIndex, lcfgs: &'a LcfgSet, templates: &'a TemplateTable, bounds: AssemblyBounds) -> Self {
        let paths = lcfgs.graphs.par_iter().map(|(m, (_, l))| (m.clone(), enumerate_local_paths(l, &bounds))).collect();
        Assembler { index, lcfgs, templates, bounds, paths }
    }

    /// Depth-first assembly from the subgraph entry. Each call step into a
    /// member within the depth limit pushes a frame and tries every callee
    /// path the reasoner accepts; accepted events are spliced at the call.
    pub fn assemble(&self, subgraph: &Subgraph, reasoner: &dyn Reasoner) -> Assembly {
        let entry = &subgraph.entry;
        let mut st = EntryState {
            reasoner,
            subgraph,
            verdicts: Vec::new(),
            memo: HashMap::new(),
            stack: vec![entry.clone()],
            truncated: false,
        };
        let cap = self.bounds.max_sequences_per_entry;
        let mut out: Vec<Partial> = Vec::new();
        let n_paths = self.paths.get(entry).map_or(0, |p| p.paths.len());
        for k in 0..n_paths {
            if out.len() >= cap {
                st.truncated = true;
                break;
            }
            out.extend(self.expand(entry, k, 0, Vec::new(), &mut st));
        }
        if out.len() > cap {
            out.truncate(cap);
            st.truncated = true;
        }
        let sequences = out
            .into_iter()
            .enumerate()
            .map(|(k, p)| CandidateSequence {
                sequence_id: format!("{entry}#{k}"),
                entry: entry.clone(),
                verdict_trace: p.frames.iter().filter_map(|f| f.verdict).collect(),
                events: p.events,
                context: p.context,
                stack_trace: p.frames,
                recursion_cut: p.cut,
            })
            .collect();
        Assembly { entry: entry.clone(), sequences, verdicts: st.verdicts, truncated: st.truncated }
    }

    fn eligible(&self, callee: &MethodId, depth: usize, st: &EntryState) -> bool {
        depth < st.subgraph.depth_limit
            && st.subgraph.contains(callee)
            && self.paths.get(callee).is_some_and(|p| !p.paths.is_empty())
            && self.index.method(callee).is_some()
    }

    fn expand(&self, method: &MethodId, path_index: usize, depth: usize, inherited: Vec<Binding>, st: &mut EntryState) -> Vec<Partial> {
        let path = &self.paths[method].paths[path_index];
        let decl = self.index.method(method).expect("assembled methods are indexed");
        let cap = self.bounds.max_sequences_per_entry;
        let root = FrameSpan {
            method_id: method.clone(),
            parent: None,
            depth,
            path_index,
            start: 0,
            end: 0,
            call_node: None,
            verdict: None,
        };
        let ctx = FrameContext {
            frame: 0,
            method_id: method.clone(),
            bindings: inherited.clone(),
            conditions: path.conditions.iter().map(|c| c.condition.clone()).collect(),
        };
        let mut alts = vec![Partial { events: Vec::new(), frames: vec![root], context: vec![ctx], cut: false }];
        for (i, step) in path.steps.iter().enumerate() {
            match step {
                Step::Log { template_id } => {
                    for a in &mut alts {
                        a.events.push(Event { template_id: *template_id, method_id: method.clone(), frame: 0 });
                    }
                }
                Step::Call { callee, args, node } => {
                    if !self.eligible(callee, depth, st) {
                        continue;
                    }
                    if st.stack.iter().filter(|m| *m == callee).count() >= self.bounds.max_recursion_depth {
                        for a in &mut alts {
                            a.cut = true;
                        }
                        continue;
                    }
                    let callee_decl = self.index.method(callee).expect("eligible callee is indexed");
                    let bindings = bind(callee_decl, args, &inherited);
                    let context = MergeContext {
                        inherited: inherited.clone(),
                        conditions: path.conditions_before(i).cloned().collect(),
                        call_args: args.clone(),
                    };
                    let hints = self.hints(method, *node, callee_decl, &bindings);
                    let mut next = Vec::new();
                    st.stack.push(callee.clone());
                    for (j, q) in self.paths[callee].paths.iter().enumerate() {
                        let Some(v) = self.check(decl, callee_decl, *node, &context, &bindings, j, q, &hints, st) else {
                            continue;
                        };
                        for sub in self.expand(callee, j, depth + 1, bindings.clone(), st) {
                            for a in &alts {
                                if next.len() >= cap {
                                    st.truncated = true;
                                    break;
                                }
                                let mut a = a.clone();
                                a.splice(&sub, *node, v);
                                next.push(a);
                            }
                        }
                    }
                    st.stack.pop();
                    alts = next;
                    if alts.is_empty() {
                        return alts;
                    }
                }
            }
        }
        for a in &mut alts {
            a.frames[0].end = a.events.len();
        }
        alts
    }

    /// Runs or reuses the reasoner check for one (context, callee path)
    /// pair; the index of the verdict record when it accepts.
    #[allow(clippy::too_many_arguments)]
    fn check(
        &self,
        caller: &MethodDecl,
        callee: &MethodDecl,
        node: u32,
        context: &MergeContext,
        bindings: &[Binding],
        j: usize,
        q: &LocalPath,
        hints: &[String],
        st: &mut EntryState,
    ) -> Option<usize> {
        let prompt = build_verification_prompt(caller, context, callee, q, bindings, self.templates, hints);
        let key = (prompt.rendered.clone(), j);
        let idx = match st.memo.get(&key) {
            Some(&i) => i,
            None => {
                let query = MergeQuery { caller, callee, context, bindings, callee_path: q, prompt: &prompt };
                let rec = match st.reasoner.verify_merge(&query) {
                    Ok(v) => VerdictRecord {
                        caller: caller.method_id.clone(),
                        callee: callee.method_id.clone(),
                        call_node: node,
                        callee_path: j,
                        outcome: if v.valid { Outcome::Accepted } else { Outcome::Rejected },
                        attempts: v.attempts,
                        token_estimate: v.token_estimate,
                        verdict: Some(v),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("merge {} -> {} path {j} abandoned: {e}", caller.method_id, callee.method_id);
                        VerdictRecord {
                            caller: caller.method_id.clone(),
                            callee: callee.method_id.clone(),
                            call_node: node,
                            callee_path: j,
                            outcome: Outcome::Failed,
                            attempts: match &e {
                                crate::reasoner::ReasonerError::Exhausted { attempts, .. } => *attempts,
                                _ => 1,
                            },
                            token_estimate: 0,
                            verdict: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                st.verdicts.push(rec);
                st.memo.insert(key, st.verdicts.len() - 1);
                st.verdicts.len() - 1
            }
        };
        (st.verdicts[idx].outcome == Outcome::Accepted).then_some(idx)
    }

    fn hints(&self, caller: &MethodId, node: u32, callee: &MethodDecl, bindings: &[Binding]) -> Vec<String> {
        let mut hints: Vec<String> = callee.params.iter().map(|p| format!("parameter {}: {}", p.name, p.ty)).collect();
        for b in bindings.iter().filter(|b| is_literal(&b.arg)) {
            hints.push(format!("literal argument: {} = {}", b.param, b.arg));
        }
        if let Some(l) = self.lcfgs.lcfg(caller) {
            for n in &l.nodes {
                if let LNode::Call { node: id, constraint, .. } = n {
                    if *id == node {
                        hints.extend(constraint.iter().map(|c| format!("call site guarded by: {c}")));
                    }
                }
            }
        }
        hints
    }
}

fn is_literal(s: &str) -> bool {
    let s = s.trim();
    matches!(s, "null" | "true" | "false")
        || s.starts_with('"')
        || s.starts_with('\'')
        || s.trim_start_matches('-').chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// Pairs callee parameters with argument texts. An argument that is just a
/// caller parameter with a known binding is replaced by that binding.
fn bind(callee: &MethodDecl, args: &[String], inherited: &[Binding]) -> Vec<Binding> {
    callee
        .params
        .iter()
        .zip(args)
        .map(|(p, a)| {
            let a = a.trim();
            let arg = inherited.iter().find(|b| b.param == a).map_or_else(|| a.to_string(), |b| b.arg.clone());
            Binding { param: p.name.clone(), arg }
        })
        .collect()
}

/// One line per sequence: id, entry, template ids.
pub fn dump_sequences(seqs: &[CandidateSequence]) -> String {
    let mut s = String::new();
    for q in seqs {
        let ids: Vec<String> = q.events.iter().map(|e| e.template_id.to_string()).collect();
        let _ = writeln!(s, "{}\t{}\t{}", q.sequence_id, q.entry, ids.join(" "));
    }
    s
}
