//! Basic-block control-flow graph lowered from a method body.

use super::dom::{dominators, DomTree};
use crate::frontend::{AstNode, Detail, JumpKind, LoopForm, MethodDecl, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Exception edge label for a throw that leaves the method; it carries no
/// path condition since it is the only way out of its block.
pub const UNCAUGHT: &str = "uncaught";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Log,
    Call,
    Other,
}

/// One statement-level AST node placed in a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub node: u32,
    pub kind: ItemKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construct {
    If,
    Loop,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchInfo {
    pub condition: String,
    pub construct: Construct,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub items: Vec<Item>,
    /// Set when the block ends by evaluating a condition.
    pub branch: Option<BranchInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Seq,
    True,
    False,
    /// Case label text; `default` for the default arm.
    Case(String),
    Back,
    /// Caught types, `|`-joined.
    Exception(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub header: usize,
    /// Natural-loop blocks, header included.
    pub blocks: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    /// In creation order, which is also the deterministic successor order.
    pub edges: Vec<Edge>,
    pub entry: usize,
    /// `None` when no path leaves the method.
    pub exit: Option<usize>,
    pub loops: Vec<LoopInfo>,
}

/// Decides what a call or log node contributes. Log calls without a template
/// and calls to unknown code count as ordinary statements.
pub trait ItemClassifier {
    fn classify(&self, node: &AstNode) -> ItemKind;
}

impl<F: Fn(&AstNode) -> ItemKind> ItemClassifier for F {
    fn classify(&self, node: &AstNode) -> ItemKind {
        self(node)
    }
}

/// Default classification straight from the node kind.
pub fn by_kind(node: &AstNode) -> ItemKind {
    match node.kind {
        NodeKind::LogCall => ItemKind::Log,
        NodeKind::MethodCall => ItemKind::Call,
        _ => ItemKind::Other,
    }
}

struct Frame {
    label: Option<String>,
    break_to: usize,
    continue_to: Option<usize>,
}

struct Builder<'c> {
    blocks: Vec<Block>,
    edges: Vec<Edge>,
    cur: usize,
    exit: usize,
    frames: Vec<Frame>,
    /// Innermost last: catch heads with their types.
    handlers: Vec<Vec<(usize, String)>>,
    classify: &'c dyn ItemClassifier,
}

impl Builder<'_> {
    fn new_block(&mut self) -> usize {
        self.blocks.push(Block::default());
        self.blocks.len() - 1
    }

    fn edge(&mut self, from: usize, to: usize, kind: EdgeKind) {
        self.edges.push(Edge { from, to, kind });
    }

    /// Continues in a fresh block with no predecessors after a jump.
    fn dead_end(&mut self) {
        self.cur = self.new_block();
    }

    fn seq(&mut self, nodes: &[AstNode]) {
        for n in nodes {
            self.stmt(n);
        }
    }

    fn raise(&mut self, from: usize) {
        if let Some(hs) = self.handlers.last().cloned() {
            for (head, types) in hs {
                self.edge(from, head, EdgeKind::Exception(types));
            }
        }
    }

    fn stmt(&mut self, n: &AstNode) {
        match n.kind {
            NodeKind::Sequence => self.seq(&n.children),
            NodeKind::LogCall | NodeKind::MethodCall => {
                let kind = self.classify.classify(n);
                self.blocks[self.cur].items.push(Item { node: n.id, kind });
                if n.kind == NodeKind::MethodCall && !self.handlers.is_empty() {
                    let from = self.cur;
                    let next = self.new_block();
                    self.edge(from, next, EdgeKind::Seq);
                    self.raise(from);
                    self.cur = next;
                }
            }
            NodeKind::Return => {
                self.blocks[self.cur].items.push(Item { node: n.id, kind: ItemKind::Other });
                self.edge(self.cur, self.exit, EdgeKind::Seq);
                self.dead_end();
            }
            NodeKind::Throw => {
                self.blocks[self.cur].items.push(Item { node: n.id, kind: ItemKind::Other });
                if self.handlers.is_empty() {
                    self.edge(self.cur, self.exit, EdgeKind::Exception(UNCAUGHT.into()));
                } else {
                    self.raise(self.cur);
                }
                self.dead_end();
            }
            NodeKind::OtherStatement => match &n.detail {
                Detail::Jump { kind, label } => self.jump(n, *kind, label.as_deref()),
                _ => self.blocks[self.cur].items.push(Item { node: n.id, kind: ItemKind::Other }),
            },
            NodeKind::If => self.if_stmt(n),
            NodeKind::Loop => self.loop_stmt(n),
            NodeKind::Switch => self.switch_stmt(n),
            NodeKind::Try => self.try_stmt(n),
            // Only reachable through their parents.
            NodeKind::ElseBranch | NodeKind::SwitchCase | NodeKind::Catch => self.seq(&n.children),
        }
    }

    fn jump(&mut self, n: &AstNode, kind: JumpKind, label: Option<&str>) {
        let target = self.frames.iter().rev().find_map(|f| {
            if label.is_some() && f.label.as_deref() != label {
                return None;
            }
            match kind {
                JumpKind::Break => Some(f.break_to),
                JumpKind::Continue => f.continue_to,
            }
        });
        match target {
            Some(t) => {
                self.edge(self.cur, t, EdgeKind::Seq);
                self.dead_end();
            }
            None => self.blocks[self.cur].items.push(Item { node: n.id, kind: ItemKind::Other }),
        }
    }

    fn if_stmt(&mut self, n: &AstNode) {
        let cond = match &n.detail {
            Detail::Condition(c) => c.clone(),
            _ => String::new(),
        };
        let head = self.cur;
        self.blocks[head].branch = Some(BranchInfo { condition: cond, construct: Construct::If });
        let then_b = self.new_block();
        self.edge(head, then_b, EdgeKind::True);
        let else_b = n.children.get(1).map(|_| {
            let b = self.new_block();
            self.edge(head, b, EdgeKind::False);
            b
        });
        let merge = self.new_block();
        if else_b.is_none() {
            self.edge(head, merge, EdgeKind::False);
        }
        self.cur = then_b;
        if let Some(t) = n.children.first() {
            self.seq(&t.children);
        }
        self.edge(self.cur, merge, EdgeKind::Seq);
        if let (Some(b), Some(e)) = (else_b, n.children.get(1)) {
            self.cur = b;
            self.seq(&e.children);
            self.edge(self.cur, merge, EdgeKind::Seq);
        }
        self.cur = merge;
    }

    fn loop_stmt(&mut self, n: &AstNode) {
        let Detail::Loop { form, condition, label } = &n.detail else {
            return self.seq(&n.children);
        };
        let infinite = match (form, condition.as_deref()) {
            (LoopForm::For, None) => true,
            (_, Some(c)) => c.trim() == "true",
            _ => false,
        };
        let header = self.new_block();
        self.edge(self.cur, header, EdgeKind::Seq);
        let after = self.new_block();
        if *form == LoopForm::DoWhile {
            let cond_b = self.new_block();
            let body = self.new_block();
            self.edge(header, body, EdgeKind::Seq);
            self.frames.push(Frame { label: label.clone(), break_to: after, continue_to: Some(cond_b) });
            self.cur = body;
            self.seq(&n.children);
            self.frames.pop();
            self.edge(self.cur, cond_b, EdgeKind::Seq);
            let latch = self.new_block();
            if infinite {
                self.edge(cond_b, latch, EdgeKind::Seq);
            } else {
                self.blocks[cond_b].branch =
                    Some(BranchInfo { condition: condition.clone().unwrap_or_default(), construct: Construct::Loop });
                self.edge(cond_b, latch, EdgeKind::True);
                self.edge(cond_b, after, EdgeKind::False);
            }
            self.edge(latch, header, EdgeKind::Seq);
        } else {
            let body = self.new_block();
            if infinite {
                self.edge(header, body, EdgeKind::Seq);
            } else {
                self.blocks[header].branch =
                    Some(BranchInfo { condition: condition.clone().unwrap_or_default(), construct: Construct::Loop });
                self.edge(header, body, EdgeKind::True);
                self.edge(header, after, EdgeKind::False);
            }
            self.frames.push(Frame { label: label.clone(), break_to: after, continue_to: Some(header) });
            self.cur = body;
            self.seq(&n.children);
            self.frames.pop();
            self.edge(self.cur, header, EdgeKind::Seq);
        }
        self.cur = after;
    }

    fn switch_stmt(&mut self, n: &AstNode) {
        let selector = match &n.detail {
            Detail::Switch { selector } => selector.clone(),
            _ => String::new(),
        };
        let head = self.cur;
        self.blocks[head].branch = Some(BranchInfo { condition: selector, construct: Construct::Switch });
        let after = self.new_block();
        let heads: Vec<usize> = n.children.iter().map(|_| self.new_block()).collect();
        let mut has_default = false;
        for (c, &h) in n.children.iter().zip(&heads) {
            let label = match &c.detail {
                Detail::Case { labels } if !labels.is_empty() => labels.join(" | "),
                _ => {
                    has_default = true;
                    "default".to_string()
                }
            };
            self.edge(head, h, EdgeKind::Case(label));
        }
        if !has_default {
            self.edge(head, after, EdgeKind::Case("default".into()));
        }
        self.frames.push(Frame { label: None, break_to: after, continue_to: None });
        for (i, c) in n.children.iter().enumerate() {
            self.cur = heads[i];
            self.seq(&c.children);
            let next = heads.get(i + 1).copied().unwrap_or(after);
            self.edge(self.cur, next, EdgeKind::Seq);
        }
        self.frames.pop();
        self.cur = after;
    }

    fn try_stmt(&mut self, n: &AstNode) {
        let catches: Vec<&AstNode> = n.children.iter().filter(|c| c.kind == NodeKind::Catch).collect();
        let finally = n.children.iter().find(|c| c.detail == Detail::Finally);
        let heads: Vec<(usize, String)> = catches
            .iter()
            .map(|c| {
                let types = match &c.detail {
                    Detail::Catch { types, .. } => types.join(" | "),
                    _ => String::new(),
                };
                (self.new_block(), types)
            })
            .collect();
        let merge = self.new_block();
        let body = self.new_block();
        self.edge(self.cur, body, EdgeKind::Seq);
        self.cur = body;
        if !heads.is_empty() {
            self.handlers.push(heads.clone());
        }
        if let Some(b) = n.children.first() {
            self.seq(&b.children);
        }
        if !heads.is_empty() {
            self.handlers.pop();
        }
        self.edge(self.cur, merge, EdgeKind::Seq);
        for (c, (h, _)) in catches.iter().zip(&heads) {
            self.cur = *h;
            self.seq(&c.children);
            self.edge(self.cur, merge, EdgeKind::Seq);
        }
        self.cur = merge;
        if let Some(f) = finally {
            self.seq(&f.children);
        }
    }
}

/// Lowers a method body. Returns `None` for methods without a body.
pub fn build_cfg(method: &MethodDecl, classify: &dyn ItemClassifier) -> Option<Cfg> {
    let body = method.body.as_ref()?;
    Some(build_cfg_from_body(body, classify))
}

pub fn build_cfg_from_body(body: &AstNode, classify: &dyn ItemClassifier) -> Cfg {
    let mut b = Builder {
        blocks: vec![Block::default(), Block::default()],
        edges: Vec::new(),
        cur: 0,
        exit: 1,
        frames: Vec::new(),
        handlers: Vec::new(),
        classify,
    };
    b.seq(&body.children);
    b.edge(b.cur, b.exit, EdgeKind::Seq);
    finish(b.blocks, b.edges, 0, 1)
}

/// Drops unreachable blocks, renumbers in creation order with the exit last,
/// and marks back edges.
fn finish(blocks: Vec<Block>, edges: Vec<Edge>, entry: usize, exit: usize) -> Cfg {
    let n = blocks.len();
    let mut succ = vec![Vec::new(); n];
    for e in &edges {
        succ[e.from].push(e.to);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![entry];
    seen[entry] = true;
    while let Some(v) = stack.pop() {
        for &w in &succ[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    // The exit block sorts last so dumps read top to bottom.
    let mut order: Vec<usize> = (0..n).filter(|&i| seen[i] && i != exit).collect();
    if seen[exit] {
        order.push(exit);
    }
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let blocks: Vec<Block> = order.iter().map(|&i| blocks[i].clone()).collect();
    let edges: Vec<Edge> = edges
        .into_iter()
        .filter(|e| seen[e.from])
        .map(|e| Edge { from: remap[e.from], to: remap[e.to], kind: e.kind })
        .collect();
    let mut cfg = Cfg {
        blocks,
        edges,
        entry: remap[entry],
        exit: seen[exit].then(|| remap[exit]),
        loops: Vec::new(),
    };
    let dom = cfg.dominators();
    for e in &mut cfg.edges {
        if e.kind == EdgeKind::Seq && dom.dominates(e.to, e.from) {
            e.kind = EdgeKind::Back;
        }
    }
    cfg.loops = cfg.natural_loops(&dom);
    cfg
}

impl Cfg {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.blocks.len()];
        for e in &self.edges {
            succ[e.from].push(e.to);
        }
        succ
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.blocks.len()];
        for e in &self.edges {
            pred[e.to].push(e.from);
        }
        pred
    }

    pub fn out_edges(&self, b: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == b)
    }

    pub fn dominators(&self) -> DomTree {
        dominators(self.blocks.len(), self.entry, &self.successors()).expect("every block is reachable after pruning")
    }

    /// Loops keyed by header, from back edges (target dominates source).
    pub fn natural_loops(&self, dom: &DomTree) -> Vec<LoopInfo> {
        let pred = self.predecessors();
        let mut loops: Vec<LoopInfo> = Vec::new();
        for e in &self.edges {
            if !dom.dominates(e.to, e.from) {
                continue;
            }
            let h = e.to;
            let idx = match loops.iter().position(|l| l.header == h) {
                Some(i) => i,
                None => {
                    loops.push(LoopInfo { header: h, blocks: BTreeSet::from([h]) });
                    loops.len() - 1
                }
            };
            let body = &mut loops[idx].blocks;
            let mut stack = vec![e.from];
            while let Some(v) = stack.pop() {
                if body.insert(v) {
                    stack.extend(pred[v].iter().copied());
                }
            }
        }
        loops.sort_by_key(|l| l.header);
        loops
    }

    /// Path condition attached to an edge: a branch outcome, or a caught exception.
    pub fn edge_condition(&self, e: &Edge, out_degree: usize) -> Option<(String, super::Taken)> {
        use super::Taken;
        let cond = || self.blocks[e.from].branch.as_ref().map(|b| b.condition.clone()).unwrap_or_default();
        match &e.kind {
            EdgeKind::True if out_degree >= 2 => Some((cond(), Taken::True)),
            EdgeKind::False if out_degree >= 2 => Some((cond(), Taken::False)),
            EdgeKind::Case(l) if out_degree >= 2 => Some((cond(), Taken::Case(l.clone()))),
            EdgeKind::Exception(t) if t != UNCAUGHT => Some((t.clone(), Taken::Exception)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parser::parse_file;

    fn cfg_of(body: &str) -> Cfg {
        let src = format!("class T {{ Logger LOG; void m(boolean c, int x) {{ {body} }} }}");
        let u = parse_file("T.java", &src).unwrap().remove(0);
        let m = &u.methods[0];
        // Receiver `LOG` resolves to type Logger; treat it as a log.
        let classify = |n: &AstNode| match n.call() {
            Some(c) if c.receiver.as_deref() == Some("LOG") => ItemKind::Log,
            Some(_) => ItemKind::Call,
            None => ItemKind::Other,
        };
        build_cfg(m, &classify).unwrap()
    }

    fn kinds(cfg: &Cfg) -> Vec<(usize, usize, EdgeKind)> {
        cfg.edges.iter().map(|e| (e.from, e.to, e.kind.clone())).collect()
    }

    #[test]
    fn straight_line_is_one_block() {
        let cfg = cfg_of("a(); b(); c();");
        assert_eq!(cfg.len(), 2);
        assert_eq!(cfg.blocks[0].items.len(), 3);
        assert_eq!(kinds(&cfg), [(0, 1, EdgeKind::Seq)]);
    }

    #[test]
    fn if_else_is_a_diamond() {
        let cfg = cfg_of("if (c) { a(); } else { b(); }");
        assert_eq!(cfg.len(), 5);
        assert_eq!(
            kinds(&cfg),
            [(0, 1, EdgeKind::True), (0, 2, EdgeKind::False), (1, 3, EdgeKind::Seq), (2, 3, EdgeKind::Seq), (3, 4, EdgeKind::Seq)]
        );
        let dom = cfg.dominators();
        assert_eq!([dom.idom[1], dom.idom[2], dom.idom[3]], [0, 0, 0]);
    }

    #[test]
    fn while_loop_has_back_edge_and_loop() {
        let cfg = cfg_of("while (c) { LOG.info(\"x\"); } a();");
        assert!(cfg.edges.iter().any(|e| e.kind == EdgeKind::Back));
        assert_eq!(cfg.loops.len(), 1);
        let l = &cfg.loops[0];
        assert_eq!(l.blocks.len(), 2);
        assert!(cfg.blocks[l.header].branch.is_some());
    }

    #[test]
    fn infinite_loop_without_break_has_no_exit() {
        let cfg = cfg_of("while (true) { a(); }");
        assert!(cfg.exit.is_none());
        assert!(!cfg.edges.iter().any(|e| e.kind == EdgeKind::False));
    }

    #[test]
    fn switch_edges_in_source_order() {
        let cfg = cfg_of("switch (x) { case 1: a(); break; case 2: b(); }");
        let labels: Vec<_> = cfg.edges.iter().filter_map(|e| match &e.kind { EdgeKind::Case(l) => Some(l.as_str()), _ => None }).collect();
        assert_eq!(labels, ["1", "2", "default"]);
    }

    #[test]
    fn try_calls_get_exception_edges() {
        let cfg = cfg_of("try { a(); b(); } catch (IOException e) { LOG.error(\"x\"); }");
        let exc = cfg.edges.iter().filter(|e| matches!(e.kind, EdgeKind::Exception(_))).count();
        assert_eq!(exc, 2);
    }

    #[test]
    fn unreachable_code_is_pruned() {
        let cfg = cfg_of("return; a();");
        assert_eq!(cfg.len(), 2);
        let all = cfg.successors();
        assert!(all.iter().flatten().all(|&b| b < cfg.len()));
    }

    #[test]
    fn labeled_continue_targets_outer_header() {
        let cfg = cfg_of("outer: while (c) { while (c) { if (c) continue outer; a(); } }");
        assert_eq!(cfg.loops.len(), 2);
        let outer = cfg.loops.iter().max_by_key(|l| l.blocks.len()).unwrap();
        let inner = cfg.loops.iter().min_by_key(|l| l.blocks.len()).unwrap();
        assert!(inner.blocks.is_subset(&outer.blocks));
    }
}
