//! Log-oriented control-flow graphs: a per-method CFG reduced to log points,
//! call sites, branches and merges.

pub mod cfg;
pub mod dom;

pub use cfg::{build_cfg, Cfg, EdgeKind, ItemKind};
pub use dom::{dominators, DomTree};

use crate::frontend::{AstNode, MethodDecl, MethodId, NodeKind, ProjectIndex, TemplateTable};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

/// Outcome taken at a branch.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taken {
    True,
    False,
    Case(String),
    Exception,
}

impl fmt::Display for Taken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Taken::True => f.write_str("true"),
            Taken::False => f.write_str("false"),
            Taken::Case(l) => write!(f, "case {l}"),
            Taken::Exception => f.write_str("exception"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    /// Condition text, switch selector, or caught types for exceptions.
    pub text: String,
    pub taken: Taken,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.taken {
            Taken::True => write!(f, "{}", self.text),
            Taken::False => write!(f, "!({})", self.text),
            Taken::Case(l) => write!(f, "{} == {l}", self.text),
            Taken::Exception => write!(f, "caught {}", self.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LNode {
    Entry,
    Exit,
    Log {
        template_id: u32,
        node: u32,
    },
    Call {
        callee: MethodId,
        args: Vec<String>,
        node: u32,
        /// Branch outcomes that dominate the call site.
        constraint: Vec<Condition>,
    },
    Branch {
        condition: String,
    },
    Merge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LEdge {
    pub from: usize,
    pub to: usize,
    pub condition: Option<Condition>,
    pub back: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopAnnotation {
    /// Last node of the header block; leaving it into the loop starts an iteration.
    pub header: usize,
    /// Every node of the loop, header block included.
    pub nodes: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lcfg {
    pub method_id: MethodId,
    pub nodes: Vec<LNode>,
    /// Grouped by source node, in deterministic successor order.
    pub edges: Vec<LEdge>,
    pub entry: usize,
    pub exit: Option<usize>,
    pub loops: Vec<LoopAnnotation>,
}

impl Lcfg {
    pub fn out_edges(&self, n: usize) -> impl Iterator<Item = &LEdge> {
        self.edges.iter().filter(move |e| e.from == n)
    }

    pub fn log_nodes(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            LNode::Log { template_id, .. } => Some((i, *template_id)),
            _ => None,
        })
    }

    pub fn to_dot(&self) -> String {
        let mut s = format!("digraph {:?} {{\n", self.method_id.as_str());
        for (i, n) in self.nodes.iter().enumerate() {
            let (label, shape) = match n {
                LNode::Entry => ("entry".to_string(), "circle"),
                LNode::Exit => ("exit".to_string(), "doublecircle"),
                LNode::Log { template_id, .. } => (format!("log E{template_id}"), "box"),
                LNode::Call { callee, .. } => (format!("call {callee}"), "box"),
                LNode::Branch { condition } => (condition.clone(), "diamond"),
                LNode::Merge => ("merge".to_string(), "point"),
            };
            let _ = writeln!(s, "  n{i} [label={label:?}, shape={shape}];");
        }
        for e in &self.edges {
            let mut attrs = Vec::new();
            if let Some(c) = &e.condition {
                attrs.push(format!("label={:?}", c.taken.to_string()));
            }
            if e.back {
                attrs.push("style=dashed".into());
            }
            let attrs = if attrs.is_empty() { String::new() } else { format!(" [{}]", attrs.join(", ")) };
            let _ = writeln!(s, "  n{} -> n{}{attrs};", e.from, e.to);
        }
        s.push_str("}\n");
        s
    }
}

/// Log calls with a template are log items; calls to project methods are call
/// items; everything else, including calls into unknown code, is elided.
pub fn classifier<'a>(method: &'a MethodDecl, templates: &'a TemplateTable) -> impl Fn(&AstNode) -> ItemKind + 'a {
    move |n: &AstNode| match n.kind {
        NodeKind::LogCall if templates.at(&method.method_id, n.id).is_some() => ItemKind::Log,
        NodeKind::MethodCall if n.call().and_then(|c| c.callee.as_ref()).is_some_and(|c| !c.is_external()) => ItemKind::Call,
        _ => ItemKind::Other,
    }
}

/// Reduces a CFG. Non-log, non-call content is dropped; blocks with several
/// predecessors start with a merge node; blocks that branch end with a branch
/// node; empty pass-through blocks are contracted.
pub fn build_lcfg(method: &MethodDecl, cfg: &Cfg, dom: &DomTree, templates: &TemplateTable) -> Lcfg {
    let body = method.body.as_ref().expect("only methods with bodies have a CFG");
    let succ = cfg.successors();
    let pred = cfg.predecessors();
    let mut nodes = Vec::new();
    // First and last node of each block's chain; None when contracted.
    let mut chains: Vec<Option<(usize, usize)>> = vec![None; cfg.len()];
    for (b, block) in cfg.blocks.iter().enumerate() {
        let start = nodes.len();
        if b == cfg.entry {
            nodes.push(LNode::Entry);
        }
        if Some(b) == cfg.exit {
            nodes.push(LNode::Exit);
            chains[b] = Some((start, nodes.len() - 1));
            continue;
        }
        if pred[b].len() >= 2 {
            nodes.push(LNode::Merge);
        }
        for item in &block.items {
            let ast = body.find(item.node).expect("items reference body nodes");
            match item.kind {
                ItemKind::Log => {
                    let t = templates.at(&method.method_id, item.node).expect("log items have templates");
                    nodes.push(LNode::Log { template_id: t.template_id, node: item.node });
                }
                ItemKind::Call => {
                    let call = ast.call().expect("call items are calls");
                    nodes.push(LNode::Call {
                        callee: call.callee.clone().expect("resolved"),
                        args: call.arg_texts.clone(),
                        node: item.node,
                        constraint: call_constraint(cfg, dom, &pred, b),
                    });
                }
                ItemKind::Other => {}
            }
        }
        if succ[b].len() >= 2 && (block.branch.is_some() || nodes.len() == start) {
            let condition = block.branch.as_ref().map(|br| br.condition.clone()).unwrap_or_default();
            nodes.push(LNode::Branch { condition });
        }
        if nodes.len() > start {
            chains[b] = Some((start, nodes.len() - 1));
        }
    }

    // Follow contracted blocks to the first real node.
    let resolve = |mut b: usize| -> usize {
        let mut hops = 0;
        loop {
            if let Some((first, _)) = chains[b] {
                return first;
            }
            debug_assert_eq!(succ[b].len(), 1, "contracted blocks pass straight through");
            b = succ[b][0];
            hops += 1;
            assert!(hops <= cfg.len(), "cycle of empty blocks");
        }
    };

    let mut edges = Vec::new();
    for b in 0..cfg.len() {
        let Some((first, last)) = chains[b] else { continue };
        for k in first..last {
            edges.push(LEdge { from: k, to: k + 1, condition: None, back: false });
        }
        let degree = succ[b].len();
        for (_, e) in cfg.out_edges(b) {
            let to = resolve(e.to);
            let back = e.kind == EdgeKind::Back;
            let condition = cfg.edge_condition(e, degree).map(|(text, taken)| Condition { text, taken });
            edges.push(LEdge { from: last, to, condition, back });
        }
    }

    let loops = cfg
        .loops
        .iter()
        .map(|l| LoopAnnotation {
            header: chains[l.header].expect("loop headers have a merge node").1,
            nodes: l.blocks.iter().filter_map(|&b| chains[b]).flat_map(|(a, z)| a..=z).collect(),
        })
        .collect();

    Lcfg {
        method_id: method.method_id.clone(),
        nodes,
        edges,
        entry: chains[cfg.entry].expect("entry node").0,
        exit: cfg.exit.map(|x| chains[x].expect("exit node").0),
        loops,
    }
}

/// Outcomes of the branches that must have been taken to reach block `b`.
fn call_constraint(cfg: &Cfg, dom: &DomTree, pred: &[Vec<usize>], b: usize) -> Vec<Condition> {
    let mut out = Vec::new();
    for &d in dom.chain(b).iter().skip(1).rev() {
        let degree = cfg.out_edges(d).count();
        for (_, e) in cfg.out_edges(d) {
            if pred[e.to].len() == 1 && dom.dominates(e.to, b) {
                if let Some((text, taken)) = cfg.edge_condition(e, degree) {
                    out.push(Condition { text, taken });
                }
            }
        }
    }
    out
}

/// Per-method graphs for every method with a body.
#[derive(Debug, Clone, Default)]
pub struct LcfgSet {
    pub graphs: BTreeMap<MethodId, (Cfg, Lcfg)>,
}

impl LcfgSet {
    pub fn build<'a>(index: &ProjectIndex, templates: &TemplateTable, methods: impl IntoIterator<Item = &'a MethodId>) -> LcfgSet {
        use rayon::prelude::*;
        let ids: Vec<&MethodId> = methods.into_iter().collect();
        let graphs = ids
            .par_iter()
            .filter_map(|id| {
                let m = index.method(id)?;
                let classify = classifier(m, templates);
                let cfg = build_cfg(m, &classify)?;
                let dom = cfg.dominators();
                let l = build_lcfg(m, &cfg, &dom, templates);
                Some(((*id).clone(), (cfg, l)))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        LcfgSet { graphs }
    }

    pub fn lcfg(&self, m: &MethodId) -> Option<&Lcfg> {
        self.graphs.get(m).map(|(_, l)| l)
    }

    pub fn cfg(&self, m: &MethodId) -> Option<&Cfg> {
        self.graphs.get(m).map(|(c, _)| c)
    }
}
