//! Project call graph, log roles, reachability pruning and entry subgraphs.

use crate::frontend::{MethodId, NodeKind, ProjectIndex, Span, TemplateTable};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Calls a logging API directly.
    Anchor,
    /// Reaches an anchor through calls.
    Transitive,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: MethodId,
    pub callee: MethodId,
    pub span: Span,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<MethodId>,
    /// One per call site, in caller order then source order.
    pub edges: Vec<CallEdge>,
    pub roles: BTreeMap<MethodId, Role>,
    /// Templates emitted directly by each method.
    pub templates: BTreeMap<MethodId, BTreeSet<u32>>,
}

pub fn build_call_graph(index: &ProjectIndex, templates: &TemplateTable) -> CallGraph {
    let mut g = CallGraph::default();
    let mut anchors = BTreeSet::new();
    for m in index.methods() {
        g.nodes.insert(m.method_id.clone());
        let Some(body) = &m.body else { continue };
        for n in body.walk() {
            match n.kind {
                NodeKind::LogCall => {
                    anchors.insert(m.method_id.clone());
                }
                NodeKind::MethodCall => {
                    let Some(callee) = n.call().and_then(|c| c.callee.clone()) else { continue };
                    g.nodes.insert(callee.clone());
                    g.edges.push(CallEdge { caller: m.method_id.clone(), callee, span: n.span });
                }
                _ => {}
            }
        }
    }
    for t in &templates.templates {
        g.templates.entry(t.method_id.clone()).or_default().insert(t.template_id);
    }
    let ids: Vec<MethodId> = g.nodes.iter().cloned().collect();
    let pos: BTreeMap<&MethodId, usize> = ids.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (pos[&e.caller], pos[&e.callee])).collect();
    let anchor_idx: Vec<usize> = anchors.iter().map(|a| pos[a]).collect();
    let reaches = reverse_reachable(ids.len(), &edges, &anchor_idx);
    g.roles = ids
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let role = if anchors.contains(m) {
                Role::Anchor
            } else if reaches[i] {
                Role::Transitive
            } else {
                Role::Irrelevant
            };
            (m.clone(), role)
        })
        .collect();
    g
}

/// Nodes that reach some anchor: a BFS from the anchors over inverted edges.
pub fn reverse_reachable(n: usize, edges: &[(usize, usize)], anchors: &[usize]) -> Vec<bool> {
    let mut preds = vec![Vec::new(); n];
    for &(a, b) in edges {
        preds[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = anchors.iter().copied().collect();
    for &a in anchors {
        seen[a] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &p in &preds[v] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub original_nodes: usize,
    pub retained_nodes: usize,
    pub ratio: f64,
    /// Set when no method calls a logging API.
    pub no_logging: bool,
}

impl PruneReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "original_nodes: {}\nretained_nodes: {}\nratio: {:.4}\n",
            self.original_nodes, self.retained_nodes, self.ratio
        );
        if self.no_logging {
            s.push_str("status: no logging detected\n");
        }
        s
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PrunedGraph {
    pub nodes: BTreeSet<MethodId>,
    pub edges: Vec<CallEdge>,
    pub templates: BTreeMap<MethodId, BTreeSet<u32>>,
    /// Sorted, deduplicated callees per retained node.
    pub succ: BTreeMap<MethodId, Vec<MethodId>>,
}

pub fn prune(graph: &CallGraph) -> (PrunedGraph, PruneReport) {
    let nodes: BTreeSet<MethodId> =
        graph.roles.iter().filter(|(_, r)| **r != Role::Irrelevant).map(|(m, _)| m.clone()).collect();
    let edges: Vec<CallEdge> = graph
        .edges
        .iter()
        .filter(|e| nodes.contains(&e.caller) && nodes.contains(&e.callee))
        .cloned()
        .collect();
    let mut succ: BTreeMap<MethodId, Vec<MethodId>> = nodes.iter().map(|m| (m.clone(), vec![])).collect();
    for e in &edges {
        succ.get_mut(&e.caller).expect("retained").push(e.callee.clone());
    }
    for v in succ.values_mut() {
        v.sort();
        v.dedup();
    }
    let templates = graph.templates.iter().filter(|(m, _)| nodes.contains(*m)).map(|(m, t)| (m.clone(), t.clone())).collect();
    let report = PruneReport {
        original_nodes: graph.nodes.len(),
        retained_nodes: nodes.len(),
        ratio: if graph.nodes.is_empty() { 0.0 } else { nodes.len() as f64 / graph.nodes.len() as f64 },
        no_logging: nodes.is_empty(),
    };
    (PrunedGraph { nodes, edges, templates, succ }, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub entry: MethodId,
    /// BFS order from the entry.
    pub members: Vec<MethodId>,
    pub depth_limit: usize,
    pub contained_templates: BTreeSet<u32>,
}

impl Subgraph {
    pub fn contains(&self, m: &MethodId) -> bool {
        self.members.contains(m)
    }
}

impl PrunedGraph {
    /// Members within `depth` call edges of `entry`, in BFS order.
    pub fn bfs(&self, entry: &MethodId, depth: usize) -> Vec<MethodId> {
        let mut seen = BTreeSet::from([entry.clone()]);
        let mut order = vec![entry.clone()];
        let mut frontier = vec![entry.clone()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for v in &frontier {
                for w in self.succ.get(v).into_iter().flatten() {
                    if seen.insert(w.clone()) {
                        order.push(w.clone());
                        next.push(w.clone());
                    }
                }
            }
            frontier = next;
        }
        order
    }

    fn templates_of(&self, members: &[MethodId]) -> BTreeSet<u32> {
        members.iter().filter_map(|m| self.templates.get(m)).flatten().copied().collect()
    }

    /// Sources of the SCC condensation; a cyclic component is represented by
    /// its least member.
    pub fn entry_candidates(&self) -> Vec<MethodId> {
        let ids: Vec<&MethodId> = self.nodes.iter().collect();
        let pos: BTreeMap<&MethodId, usize> = ids.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        let mut g = DiGraph::<(), ()>::with_capacity(ids.len(), self.edges.len());
        let nodes: Vec<_> = ids.iter().map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(nodes[pos[&e.caller]], nodes[pos[&e.callee]], ());
        }
        let mut comp = vec![0usize; ids.len()];
        let sccs = tarjan_scc(&g);
        for (c, scc) in sccs.iter().enumerate() {
            for n in scc {
                comp[n.index()] = c;
            }
        }
        let mut has_in = vec![false; sccs.len()];
        for e in &self.edges {
            let (a, b) = (comp[pos[&e.caller]], comp[pos[&e.callee]]);
            if a != b {
                has_in[b] = true;
            }
        }
        let mut out: Vec<MethodId> = sccs
            .iter()
            .enumerate()
            .filter(|(c, _)| !has_in[*c])
            .map(|(_, scc)| scc.iter().map(|n| ids[n.index()]).min().expect("nonempty scc").clone())
            .collect();
        out.sort();
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphSelection {
    pub subgraphs: Vec<Subgraph>,
    pub candidates: usize,
    pub warnings: Vec<String>,
}

pub fn extract_subgraphs(pruned: &PrunedGraph, t_entry: usize, t_depth: usize) -> SubgraphSelection {
    assert!(t_entry >= 1, "t_entry must be at least 1");
    let candidates = pruned.entry_candidates();
    let mut warnings = Vec::new();
    if t_entry > candidates.len() {
        warnings.push(format!("t_entry={t_entry} exceeds {} entry candidates; using all", candidates.len()));
    }
    let mut ranked: Vec<(usize, MethodId, Vec<MethodId>)> = candidates
        .iter()
        .map(|e| {
            let members = pruned.bfs(e, t_depth);
            (pruned.templates_of(&members).len(), e.clone(), members)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let subgraphs = ranked
        .into_iter()
        .take(t_entry)
        .filter(|(n, _, _)| *n > 0)
        .map(|(_, entry, members)| Subgraph {
            contained_templates: pruned.templates_of(&members),
            entry,
            members,
            depth_limit: t_depth,
        })
        .collect();
    SubgraphSelection { subgraphs, candidates: candidates.len(), warnings }
}

/// `digraph { "a" -> "b"; }` with anchors boxed and irrelevant nodes dashed.
pub fn to_dot(nodes: &BTreeSet<MethodId>, edges: &[CallEdge], roles: &BTreeMap<MethodId, Role>) -> String {
    let mut s = String::from("digraph {\n");
    for n in nodes {
        let attr = match roles.get(n) {
            Some(Role::Anchor) => " [shape=box]",
            Some(Role::Irrelevant) => " [style=dashed]",
            _ => "",
        };
        let _ = writeln!(s, "  {:?}{attr};", n.as_str());
    }
    let mut seen = BTreeSet::new();
    for e in edges {
        if seen.insert((&e.caller, &e.callee)) {
            let _ = writeln!(s, "  {:?} -> {:?};", e.caller.as_str(), e.callee.as_str());
        }
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> MethodId {
        MethodId(s.into())
    }

    fn graph(nodes: &[&str], edges: &[(&str, &str)], anchors: &[(&str, &[u32])]) -> CallGraph {
        let mut g = CallGraph { nodes: nodes.iter().map(|n| m(n)).collect(), ..Default::default() };
        let span = Span { start_line: 1, end_line: 1, col: 1 };
        g.edges = edges.iter().map(|(a, b)| CallEdge { caller: m(a), callee: m(b), span }).collect();
        g.templates = anchors.iter().map(|(a, t)| (m(a), t.iter().copied().collect())).collect();
        let ids: Vec<_> = g.nodes.iter().cloned().collect();
        let pos: BTreeMap<_, _> = ids.iter().enumerate().map(|(i, x)| (x.clone(), i)).collect();
        let e: Vec<_> = g.edges.iter().map(|x| (pos[&x.caller], pos[&x.callee])).collect();
        let a: Vec<_> = anchors.iter().map(|(x, _)| pos[&m(x)]).collect();
        let r = reverse_reachable(ids.len(), &e, &a);
        g.roles = ids
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let role = if a.contains(&i) { Role::Anchor } else if r[i] { Role::Transitive } else { Role::Irrelevant };
                (x.clone(), role)
            })
            .collect();
        g
    }

    #[test]
    fn prune_example() {
        let g = graph(&["A", "B", "C", "D", "E"], &[("A", "B"), ("B", "C"), ("A", "D"), ("D", "E")], &[("C", &[1])]);
        let (p, r) = prune(&g);
        assert_eq!(p.nodes, ["A", "B", "C"].map(m).into_iter().collect());
        assert_eq!((r.original_nodes, r.retained_nodes), (5, 3));
        assert!((r.ratio - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_anchors_reports_no_logging() {
        let g = graph(&["A", "B"], &[("A", "B")], &[]);
        let (p, r) = prune(&g);
        assert!(p.nodes.is_empty());
        assert!(r.no_logging);
        assert!(r.render().contains("no logging detected"));
    }

    #[test]
    fn recursive_pair_retained_with_cycle_representative() {
        let g = graph(&["a", "b"], &[("a", "b"), ("b", "a")], &[("b", &[1])]);
        let (p, _) = prune(&g);
        assert_eq!(p.nodes.len(), 2);
        assert_eq!(p.entry_candidates(), [m("a")]);
    }

    #[test]
    fn ranking_by_reach_then_name() {
        // Entries x (5 templates), y (3), z (3).
        let g = graph(
            &["x", "y", "z", "p", "q", "r"],
            &[("x", "p"), ("y", "q"), ("z", "r")],
            &[("p", &[1, 2, 3, 4, 5]), ("q", &[6, 7, 8]), ("r", &[9, 10, 11])],
        );
        let (p, _) = prune(&g);
        let sel = extract_subgraphs(&p, 2, 3);
        let entries: Vec<_> = sel.subgraphs.iter().map(|s| s.entry.0.as_str()).collect();
        assert_eq!(entries, ["x", "y"]);
        assert!(sel.warnings.is_empty());
        let sel = extract_subgraphs(&p, 9, 3);
        assert_eq!(sel.subgraphs.len(), 3);
        assert_eq!(sel.warnings.len(), 1);
    }

    #[test]
    fn depth_zero_anchor_entry() {
        let g = graph(&["a"], &[], &[("a", &[1])]);
        let (p, _) = prune(&g);
        let sel = extract_subgraphs(&p, 1, 0);
        assert_eq!(sel.subgraphs[0].members, [m("a")]);
    }

    #[test]
    fn depth_bounds_members_and_drops_empty() {
        let g = graph(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("c", "d")], &[("d", &[1])]);
        let (p, _) = prune(&g);
        assert_eq!(p.bfs(&m("a"), 2), ["a", "b", "c"].map(m));
        assert!(extract_subgraphs(&p, 1, 2).subgraphs.is_empty());
        assert_eq!(extract_subgraphs(&p, 1, 3).subgraphs[0].members.len(), 4);
    }

    #[test]
    fn dot_format() {
        let g = graph(&["a", "b"], &[("a", "b"), ("a", "b")], &[("b", &[1])]);
        let dot = to_dot(&g.nodes, &g.edges, &g.roles);
        assert_eq!(dot, "digraph {\n  \"a\";\n  \"b\" [shape=box];\n  \"a\" -> \"b\";\n}\n");
    }
}
