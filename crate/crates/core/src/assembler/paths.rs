//! Bounded enumeration of intra-method paths over an LCFG.

use crate::config::AssemblyBounds;
use crate::frontend::MethodId;
use crate::lcfg::{Condition, LNode, Lcfg};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Step {
    Log { template_id: u32 },
    Call { callee: MethodId, args: Vec<String>, node: u32 },
}

/// A branch outcome and how many steps preceded it on the path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathCondition {
    #[serde(flatten)]
    pub condition: Condition,
    pub at_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalPath {
    pub method_id: MethodId,
    pub steps: Vec<Step>,
    pub conditions: Vec<PathCondition>,
}

impl LocalPath {
    pub fn conditions_before(&self, step: usize) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(move |c| c.at_step <= step).map(|c| &c.condition)
    }

    pub fn template_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.steps.iter().filter_map(|s| match s {
            Step::Log { template_id } => Some(*template_id),
            Step::Call { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalPaths {
    pub paths: Vec<LocalPath>,
    pub truncated: bool,
}

struct Walk<'a> {
    lcfg: &'a Lcfg,
    unroll: &'a std::collections::BTreeSet<u8>,
    max_unroll: u8,
    limit: usize,
    /// Edge visits left before the search gives up.
    budget: usize,
    counts: Vec<u8>,
    steps: Vec<Step>,
    conditions: Vec<PathCondition>,
    seen: HashSet<(Vec<Step>, Vec<PathCondition>)>,
    out: LocalPaths,
}

/// DFS from entry to exit in successor order (true before false, cases in
/// source order). Each loop body runs a number of times from the unroll set
/// per entry into the loop. Identical step/condition sequences are reported once.
pub fn enumerate_local_paths(lcfg: &Lcfg, bounds: &AssemblyBounds) -> LocalPaths {
    let mut w = Walk {
        lcfg,
        unroll: &bounds.loop_unroll,
        max_unroll: bounds.max_unroll(),
        limit: bounds.max_local_paths_per_method,
        budget: bounds.max_local_paths_per_method.saturating_mul(4096).max(1 << 16),
        counts: vec![0; lcfg.loops.len()],
        steps: Vec::new(),
        conditions: Vec::new(),
        seen: HashSet::new(),
        out: LocalPaths::default(),
    };
    if lcfg.exit.is_some() {
        w.visit(lcfg.entry);
    }
    w.out
}

impl Walk<'_> {
    fn stop(&self) -> bool {
        self.out.truncated
    }

    fn visit(&mut self, n: usize) {
        if self.stop() {
            return;
        }
        let pushed = match &self.lcfg.nodes[n] {
            LNode::Log { template_id, .. } => {
                self.steps.push(Step::Log { template_id: *template_id });
                true
            }
            LNode::Call { callee, args, node, .. } => {
                self.steps.push(Step::Call { callee: callee.clone(), args: args.clone(), node: *node });
                true
            }
            _ => false,
        };
        if Some(n) == self.lcfg.exit {
            self.emit();
        } else {
            let edges: Vec<_> = self.lcfg.out_edges(n).cloned().collect();
            for e in edges {
                if self.stop() {
                    break;
                }
                if self.budget == 0 {
                    self.out.truncated = true;
                    break;
                }
                self.budget -= 1;
                let saved = self.counts.clone();
                if self.cross(e.from, e.to) {
                    let had = e.condition.is_some();
                    if let Some(c) = &e.condition {
                        self.conditions.push(PathCondition { condition: c.clone(), at_step: self.steps.len() });
                    }
                    self.visit(e.to);
                    if had {
                        self.conditions.pop();
                    }
                }
                self.counts = saved;
            }
        }
        if pushed {
            self.steps.pop();
        }
    }

    /// Applies the loop policy to edge `u → v`; false when the edge is not allowed.
    fn cross(&mut self, u: usize, v: usize) -> bool {
        for (i, l) in self.lcfg.loops.iter().enumerate() {
            let (in_u, in_v) = (l.nodes.contains(&u), l.nodes.contains(&v));
            if in_u && !in_v {
                if !self.unroll.contains(&self.counts[i]) {
                    return false;
                }
                self.counts[i] = 0;
            } else if !in_u && in_v {
                self.counts[i] = 0;
            }
            if u == l.header && in_v {
                self.counts[i] += 1;
                if self.counts[i] > self.max_unroll {
                    return false;
                }
            }
        }
        true
    }

    fn emit(&mut self) {
        let key = (self.steps.clone(), self.conditions.clone());
        if !self.seen.insert(key) {
            return;
        }
        if self.out.paths.len() == self.limit {
            self.out.truncated = true;
            return;
        }
        self.out.paths.push(LocalPath {
            method_id: self.lcfg.method_id.clone(),
            steps: self.steps.clone(),
            conditions: self.conditions.clone(),
        });
    }
}
