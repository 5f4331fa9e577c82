//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero when any criterion fails.

mod common;

use common::{corpus_config, fixtures, read_tree, run, StubServer};
use logsynth::assembler::{Assembler, CandidateSequence, LocalPath, Outcome, Step};
use logsynth::callgraph::{build_call_graph, prune};
use logsynth::config::{Config, LabelsConfig, LogApiPattern};
use logsynth::coverage::{audit_coverage, compute_prf, percent, Prf};
use logsynth::dataset::{plan_augmentation, split_guard, DatasetSplit};
use logsynth::frontend::parser::parse_file;
use logsynth::frontend::{mark_log_calls, Level, LoggingApis, MethodId, ProjectIndex, TemplateTable};
use logsynth::labeler::{label_events, Label, LabelRuleSet, Provenance, RuleKind, Session, SessionEvent};
use logsynth::lcfg::cfg::{Construct, UNCAUGHT};
use logsynth::lcfg::{dominators, Cfg, EdgeKind, ItemKind, LcfgSet, Taken};
use logsynth::pipeline::{analyze, build_lcfgs};
use logsynth::reasoner::{parse_verdict, MockReasoner};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

type CheckResult = Result<String, String>;
type Check = (&'static str, fn() -> CheckResult);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let checks: [Check; 12] = [
        ("pruning matches forward reachability", c01_pruning),
        ("dominators match the removal oracle", c02_dominators),
        ("local paths match a brute-force walker", c03_paths),
        ("sibling-branch logs never share a path", c04_exclusivity),
        ("stack discipline and per-frame projection", c05_stack),
        ("golden run is byte-identical", c06_golden),
        ("labels match the hand-built fixture", c07_labels),
        ("augmentation counts and leakage guard", c08_augmentation),
        ("coverage ratios from published counts", c09_coverage),
        ("precision, recall and F1", c10_prf),
        ("reasoner contract", c11_reasoner),
        ("overhead accounting", c12_overhead),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        match res {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{took:.2?}]", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {e} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("\n{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn info_api() -> LoggingApis {
    LoggingApis::new(&[LogApiPattern { pattern: "*.Logger.info".into(), level: Level::Info }]).expect("valid glob")
}

fn c01_pruning() -> CheckResult {
    const GRAPHS: usize = 200;
    const LIMIT: Duration = Duration::from_secs(5);
    let start = Instant::now();
    let apis = info_api();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let (mut mismatches, mut total, mut kept) = (0, 0, 0);
    for g in 0..GRAPHS {
        let n = rng.random_range(1..=50usize);
        let p_edge = rng.random_range(0.0..0.12);
        let p_log = rng.random_range(0.0..0.2);
        let adj: Vec<Vec<usize>> = (0..n).map(|_| (0..n).filter(|_| rng.random_bool(p_edge)).collect()).collect();
        let logs: Vec<bool> = (0..n).map(|_| rng.random_bool(p_log)).collect();
        let class = format!("G{g}");
        let mut src = format!("import org.slf4j.Logger;\nclass {class} {{\n    Logger LOG;\n");
        for i in 0..n {
            src.push_str(&format!("    void m{i}() {{\n"));
            if logs[i] {
                src.push_str(&format!("        LOG.info(\"m{i} ran\");\n"));
            }
            for j in &adj[i] {
                src.push_str(&format!("        m{j}();\n"));
            }
            src.push_str("    }\n");
        }
        src.push_str("}\n");
        let units = parse_file(&format!("{class}.java"), &src).map_err(|e| format!("graph {g}: {e}"))?;
        let mut index = ProjectIndex::from_units(units, vec![]).map_err(|e| e.to_string())?;
        mark_log_calls(&mut index, &apis);
        let templates = TemplateTable::build(&index, &apis);
        let (pruned, _) = prune(&build_call_graph(&index, &templates));

        // Oracle: forward search from each node until a logging node turns up.
        let expected: BTreeSet<MethodId> = (0..n)
            .filter(|&i| {
                let mut seen = vec![false; n];
                let mut queue = VecDeque::from([i]);
                seen[i] = true;
                while let Some(v) = queue.pop_front() {
                    if logs[v] {
                        return true;
                    }
                    for &w in &adj[v] {
                        if !seen[w] {
                            seen[w] = true;
                            queue.push_back(w);
                        }
                    }
                }
                false
            })
            .map(|i| MethodId::new(&class, &format!("m{i}"), 0))
            .collect();
        total += n;
        kept += expected.len();
        if pruned.nodes != expected {
            mismatches += 1;
        }
    }
    let took = start.elapsed();
    ensure(mismatches == 0, || format!("{mismatches} of {GRAPHS} graphs differ"))?;
    ensure(took < LIMIT, || format!("took {took:.2?}, limit {LIMIT:?}"))?;
    Ok(format!("{GRAPHS} graphs, {total} nodes, {kept} retained, 0 mismatches"))
}

fn reachable_without(n: usize, succ: &[Vec<usize>], removed: Option<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    if removed == Some(0) {
        return seen;
    }
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        for &w in &succ[v] {
            if Some(w) != removed && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

fn c02_dominators() -> CheckResult {
    const GRAPHS: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let (mut mismatches, mut pairs) = (0usize, 0usize);
    for _ in 0..GRAPHS {
        let n = rng.random_range(1..=15usize);
        let mut succ = vec![Vec::new(); n];
        for v in 1..n {
            let parent = rng.random_range(0..v);
            succ[parent].push(v);
        }
        for _ in 0..rng.random_range(0..=2 * n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if !succ[a].contains(&b) {
                succ[a].push(b);
            }
        }
        let dom = dominators(n, 0, &succ).map_err(|e| format!("{e:?}"))?;
        // v dominates u iff u == v or removing v cuts u off from the entry.
        let oracle: Vec<Vec<bool>> = (0..n)
            .map(|v| {
                let r = reachable_without(n, &succ, Some(v));
                (0..n).map(|u| u == v || !r[u]).collect()
            })
            .collect();
        for (v, row) in oracle.iter().enumerate() {
            for (u, &want) in row.iter().enumerate() {
                pairs += 1;
                if dom.dominates(v, u) != want {
                    mismatches += 1;
                }
            }
        }
        for u in 1..n {
            let strict: Vec<usize> = (0..n).filter(|&v| v != u && oracle[v][u]).collect();
            let idom = strict.iter().copied().find(|&d| strict.iter().all(|&s| oracle[s][d]));
            if idom != Some(dom.idom[u]) {
                mismatches += 1;
            }
        }
        if dom.idom[0] != 0 {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("{GRAPHS} graphs, {pairs} pairs, 0 mismatches"))
}

/// Every method of a fixture project with its CFG and LCFG.
fn all_graphs(config: &Path) -> (ProjectIndex, TemplateTable, LcfgSet) {
    let cfg = Config::load(config).expect("fixture config");
    let a = analyze(&cfg).expect("analysis");
    let ids: Vec<MethodId> = a.index.methods().map(|m| m.method_id.clone()).collect();
    let set = LcfgSet::build(&a.index, &a.templates, &ids);
    (a.index, a.templates, set)
}

fn shapes_config() -> std::path::PathBuf {
    fixtures().join("shapes/logsynth.toml")
}

type PathKey = (Vec<(char, u32)>, Vec<(String, String, usize)>);

fn taken_text(t: &Taken) -> String {
    match t {
        Taken::True => "T".into(),
        Taken::False => "F".into(),
        Taken::Case(l) => format!("case {l}"),
        Taken::Exception => "exception".into(),
    }
}

fn key_of(p: &LocalPath) -> PathKey {
    let steps = p
        .steps
        .iter()
        .map(|s| match s {
            Step::Log { template_id } => ('L', *template_id),
            Step::Call { node, .. } => ('C', *node),
        })
        .collect();
    let conds = p.conditions.iter().map(|c| (c.condition.text.clone(), taken_text(&c.condition.taken), c.at_step)).collect();
    (steps, conds)
}

/// Exhaustive DFS over raw CFG blocks with the same loop policy: each loop
/// body runs 0 or 1 times per entry into the loop.
struct Brute<'a> {
    cfg: &'a Cfg,
    log_template: &'a dyn Fn(u32) -> u32,
    counts: Vec<u8>,
    steps: Vec<(char, u32)>,
    conds: Vec<(String, String, usize)>,
    out: BTreeSet<PathKey>,
}

impl Brute<'_> {
    fn condition(&self, from: usize, kind: &EdgeKind, degree: usize) -> Option<(String, String)> {
        let text = || self.cfg.blocks[from].branch.as_ref().map(|b| b.condition.clone()).unwrap_or_default();
        match kind {
            EdgeKind::True if degree >= 2 => Some((text(), "T".into())),
            EdgeKind::False if degree >= 2 => Some((text(), "F".into())),
            EdgeKind::Case(l) if degree >= 2 => Some((text(), format!("case {l}"))),
            EdgeKind::Exception(t) if t != UNCAUGHT => Some((t.clone(), "exception".into())),
            _ => None,
        }
    }

    fn walk(&mut self, b: usize) {
        let before = self.steps.len();
        for it in &self.cfg.blocks[b].items {
            match it.kind {
                ItemKind::Log => self.steps.push(('L', (self.log_template)(it.node))),
                ItemKind::Call => self.steps.push(('C', it.node)),
                ItemKind::Other => {}
            }
        }
        if Some(b) == self.cfg.exit {
            self.out.insert((self.steps.clone(), self.conds.clone()));
        } else {
            let edges: Vec<_> = self.cfg.edges.iter().filter(|e| e.from == b).cloned().collect();
            let degree = edges.len();
            for e in edges {
                let saved = self.counts.clone();
                let mut ok = true;
                for (i, l) in self.cfg.loops.iter().enumerate() {
                    let (in_u, in_v) = (l.blocks.contains(&e.from), l.blocks.contains(&e.to));
                    if in_u && !in_v {
                        ok &= self.counts[i] <= 1;
                        self.counts[i] = 0;
                    } else if !in_u && in_v {
                        self.counts[i] = 0;
                    }
                    if e.from == l.header && in_v {
                        self.counts[i] += 1;
                        ok &= self.counts[i] <= 1;
                    }
                }
                if ok {
                    let c = self.condition(e.from, &e.kind, degree);
                    if let Some((t, k)) = &c {
                        self.conds.push((t.clone(), k.clone(), self.steps.len()));
                    }
                    self.walk(e.to);
                    if c.is_some() {
                        self.conds.pop();
                    }
                }
                self.counts = saved;
            }
        }
        self.steps.truncate(before);
    }
}

fn c03_paths() -> CheckResult {
    const MAX_BLOCKS: usize = 10;
    let (mut methods, mut paths, mut skipped, mut mismatched) = (0, 0, 0, Vec::new());
    for config in [corpus_config(), shapes_config()] {
        let cfg = Config::load(&config).map_err(|e| e.to_string())?;
        let (index, templates, set) = all_graphs(&config);
        let asm = Assembler::new(&index, &set, &templates, cfg.bounds.clone());
        for (m, (g, _)) in &set.graphs {
            if g.blocks.len() > MAX_BLOCKS {
                skipped += 1;
                continue;
            }
            let lookup = |node: u32| templates.at(m, node).expect("log item has a template").template_id;
            let mut brute = Brute { cfg: g, log_template: &lookup, counts: vec![0; g.loops.len()], steps: vec![], conds: vec![], out: BTreeSet::new() };
            if g.exit.is_some() {
                brute.walk(g.entry);
            }
            let local = &asm.paths[m];
            ensure(!local.truncated, || format!("{m}: enumeration truncated"))?;
            let got: BTreeSet<PathKey> = local.paths.iter().map(key_of).collect();
            methods += 1;
            paths += got.len();
            if got != brute.out || got.len() != local.paths.len() {
                mismatched.push(m.to_string());
            }
        }
    }
    ensure(mismatched.is_empty(), || format!("differ: {}", mismatched.join(", ")))?;
    ensure(methods >= 30, || format!("only {methods} methods checked"))?;
    Ok(format!("{methods} methods, {paths} paths, {skipped} over {MAX_BLOCKS} blocks skipped"))
}

fn c04_exclusivity() -> CheckResult {
    let (mut pairs, mut violations, mut branches) = (0usize, Vec::new(), 0usize);
    for config in [corpus_config(), shapes_config()] {
        let cfg = Config::load(&config).map_err(|e| e.to_string())?;
        let (index, templates, set) = all_graphs(&config);
        let asm = Assembler::new(&index, &set, &templates, cfg.bounds.clone());
        for (m, (g, _)) in &set.graphs {
            let dom = g.dominators();
            let pred = g.predecessors();
            for (b, block) in g.blocks.iter().enumerate() {
                if !matches!(block.branch.as_ref().map(|br| br.construct), Some(Construct::If | Construct::Switch)) {
                    continue;
                }
                // Logs in the region each arm owns: blocks dominated by an arm
                // target that only the branch block can enter.
                let arms: Vec<BTreeSet<u32>> = g
                    .edges
                    .iter()
                    .filter(|e| e.from == b && pred[e.to] == [b])
                    .map(|e| {
                        (0..g.blocks.len())
                            .filter(|&x| dom.dominates(e.to, x))
                            .flat_map(|x| &g.blocks[x].items)
                            .filter(|it| it.kind == ItemKind::Log)
                            .map(|it| templates.at(m, it.node).expect("template").template_id)
                            .collect()
                    })
                    .collect();
                branches += 1;
                for i in 0..arms.len() {
                    for j in i + 1..arms.len() {
                        for a in &arms[i] {
                            for c in &arms[j] {
                                pairs += 1;
                                for p in &asm.paths[m].paths {
                                    let ids: Vec<u32> = p.template_ids().collect();
                                    if ids.contains(a) && ids.contains(c) {
                                        violations.push(format!("{m}: {a} with {c}"));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    ensure(pairs > 0, || "no sibling pairs found".into())?;
    Ok(format!("{branches} branch blocks, {pairs} sibling log pairs, 0 violations"))
}

/// Replays `frame` against its local path, consuming events from `pos`.
fn replay(seq: &CandidateSequence, paths: &BTreeMap<MethodId, logsynth::assembler::LocalPaths>, frame: usize, pos: &mut usize) -> Result<(), String> {
    let f = &seq.stack_trace[frame];
    ensure(f.start == *pos, || format!("frame {frame} starts at {} not {pos}", f.start))?;
    let path = paths
        .get(&f.method_id)
        .and_then(|p| p.paths.get(f.path_index))
        .ok_or_else(|| format!("frame {frame}: no path {} for {}", f.path_index, f.method_id))?;
    let mut children = seq.stack_trace.iter().enumerate().filter(|(_, c)| c.parent == Some(frame)).peekable();
    for step in &path.steps {
        match step {
            Step::Log { template_id } => {
                let e = seq.events.get(*pos).ok_or_else(|| format!("frame {frame}: ran out of events"))?;
                ensure(e.frame == frame && e.template_id == *template_id && e.method_id == f.method_id, || {
                    format!("event {pos}: expected {template_id} in frame {frame}, got {} in frame {}", e.template_id, e.frame)
                })?;
                *pos += 1;
            }
            Step::Call { node, callee, .. } => {
                if let Some((ci, c)) = children.peek() {
                    if c.call_node == Some(*node) {
                        ensure(c.method_id == *callee && c.depth == f.depth + 1, || format!("frame {ci}: bad callee or depth"))?;
                        let ci = *ci;
                        children.next();
                        replay(seq, paths, ci, pos)?;
                    }
                }
            }
        }
    }
    ensure(children.next().is_none(), || format!("frame {frame}: child frame without a call step"))?;
    ensure(f.end == *pos, || format!("frame {frame} ends at {} not {pos}", f.end))
}

fn c05_stack() -> CheckResult {
    let cfg = Config::load(&corpus_config()).map_err(|e| e.to_string())?;
    let a = analyze(&cfg).map_err(|e| e.to_string())?;
    let lcfgs = build_lcfgs(&a);
    let asm = Assembler::new(&a.index, &lcfgs, &a.templates, cfg.bounds.clone());
    let reasoner = MockReasoner::new(cfg.seed());
    let (mut seqs, mut frames, mut violations) = (0, 0, Vec::new());
    for sg in &a.selection.subgraphs {
        let assembly = asm.assemble(sg, &reasoner);
        for s in &assembly.sequences {
            seqs += 1;
            frames += s.stack_trace.len();
            let check = || -> Result<(), String> {
                // Well-nested spans: children inside parents, siblings disjoint.
                let root = s.stack_trace.first().ok_or("no frames")?;
                ensure(root.parent.is_none() && root.depth == 0 && root.method_id == s.entry, || "bad root frame".into())?;
                ensure(root.start == 0 && root.end == s.events.len(), || "root span does not cover the sequence".into())?;
                for (i, f) in s.stack_trace.iter().enumerate().skip(1) {
                    let p = f.parent.ok_or_else(|| format!("frame {i} has no parent"))?;
                    ensure(p < i, || format!("frame {i} precedes its parent"))?;
                    let pf = &s.stack_trace[p];
                    ensure(pf.start <= f.start && f.end <= pf.end && f.start <= f.end, || format!("frame {i} escapes its parent"))?;
                    let v = f.verdict.ok_or_else(|| format!("frame {i} has no verdict"))?;
                    let r = &assembly.verdicts[v];
                    ensure(r.outcome == Outcome::Accepted && r.callee == f.method_id && r.callee_path == f.path_index, || {
                        format!("frame {i} pushed without an accepting verdict")
                    })?;
                }
                for e in &s.events {
                    let f = &s.stack_trace[e.frame];
                    ensure(f.method_id == e.method_id, || "event method differs from its frame".into())?;
                }
                let mut pos = 0;
                replay(s, &asm.paths, 0, &mut pos)?;
                ensure(pos == s.events.len(), || "replay left events unconsumed".into())
            };
            if let Err(e) = check() {
                violations.push(format!("{}: {e}", s.sequence_id));
            }
        }
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    ensure(seqs > 0, || "no sequences".into())?;
    Ok(format!("{seqs} sequences, {frames} frames, 0 violations"))
}

fn c06_golden() -> CheckResult {
    const LIMIT: Duration = Duration::from_secs(10);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = corpus_config();
    let mut trees = Vec::new();
    let mut slowest = Duration::ZERO;
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let start = Instant::now();
        let o = run(&["pipeline", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"]);
        slowest = slowest.max(start.elapsed());
        ensure(o.status.success(), || format!("run {k} failed: {}", String::from_utf8_lossy(&o.stderr)))?;
        trees.push(read_tree(&out));
    }
    ensure(trees[0] == trees[1], || "the two runs differ".into())?;
    let golden = read_tree(&fixtures().join("golden"));
    let differ: Vec<&String> = golden
        .keys()
        .chain(trees[0].keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| golden.get(*k) != trees[0].get(*k))
        .collect();
    ensure(differ.is_empty(), || format!("differs from golden: {differ:?}"))?;
    ensure(slowest < LIMIT, || format!("slowest run {slowest:.2?}, limit {LIMIT:?}"))?;
    Ok(format!("{} files identical across runs and golden, slowest run {slowest:.2?}", golden.len()))
}

fn c07_labels() -> CheckResult {
    let rules = LabelRuleSet::from_config(&LabelsConfig::default()).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(fixtures().join("labels/golden.jsonl")).map_err(|e| e.to_string())?;
    let (mut total, mut wrong, mut kinds) = (0, Vec::new(), BTreeSet::new());
    for line in text.lines() {
        let row: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let name = row["name"].as_str().unwrap_or_default();
        let events: Vec<SessionEvent> = row["events"]
            .as_array()
            .ok_or("events")?
            .iter()
            .map(|e| SessionEvent {
                template_id: 0,
                level: serde_json::from_value(e["level"].clone()).expect("level"),
                message: e["message"].as_str().expect("message").to_string(),
            })
            .collect();
        let want_label: Label = serde_json::from_value(row["label"].clone()).map_err(|e| e.to_string())?;
        let want_first: Option<(RuleKind, usize)> = row
            .get("rule")
            .map(|r| (serde_json::from_value(r.clone()).expect("rule"), row["event"].as_u64().expect("event") as usize));
        let (label, evidence) = label_events(&events, &rules);
        total += 1;
        let first = evidence.first().map(|e| (e.rule, e.event));
        // Every cited rule must really match the cited event.
        let sound = evidence.iter().all(|e| rules.matches(e.rule, events[e.event].level, &events[e.event].message).is_some());
        if label != want_label || first != want_first || !sound || (label == Label::Anomalous) == evidence.is_empty() {
            wrong.push(name.to_string());
        }
        if let Some((k, _)) = want_first {
            kinds.insert(k);
        }
    }
    ensure(total == 60, || format!("fixture has {total} rows"))?;
    ensure(kinds.len() == 4, || format!("fixture covers only {kinds:?}"))?;
    ensure(wrong.is_empty(), || format!("mislabeled: {}", wrong.join(", ")))?;
    Ok(format!("{total}/{total} labels and first evidence match (100.00%)"))
}

fn session(id: String, label: Label, provenance: Provenance) -> Session {
    Session {
        session_id: id,
        label,
        provenance,
        context: String::new(),
        events: vec![SessionEvent { template_id: 1, level: Level::Info, message: "m".into() }],
        label_evidence: vec![],
    }
}

fn c08_augmentation() -> CheckResult {
    const PLANS: usize = 300;
    const MUTATIONS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let mut limited = 0;
    for k in 0..PLANS {
        let q = rng.random_range(1..=1000u64);
        let p = rng.random_range(0..=q);
        let n_real = rng.random_range(0..=5000u64);
        // Round half up: floor, plus one when the remainder is at least half.
        let (whole, rem) = ((p * n_real) / q, (p * n_real) % q);
        let want = whole + u64::from(2 * rem >= q);
        let (n_norm, n_anom) = if rng.random_bool(0.8) {
            (want as usize + rng.random_range(0..20), want as usize + rng.random_range(0..20))
        } else {
            let a = rng.random_range(0..=want as usize / 2);
            (want as usize - a + rng.random_range(0..5), a)
        };
        let pool: Vec<Session> = (0..n_norm)
            .map(|i| session(format!("n{i:05}"), Label::Normal, Provenance::Synthetic))
            .chain((0..n_anom).map(|i| session(format!("a{i:05}"), Label::Anomalous, Provenance::Synthetic)))
            .collect();
        let plan = plan_augmentation(n_real, &pool, Ratio::new(p, q), k as u64).map_err(|e| e.to_string())?;
        ensure(plan.picks.len() as u64 == want && plan.n_syn_target == want, || format!("plan {k}: {} picks, want {want}", plan.picks.len()))?;
        ensure(plan.picks.iter().collect::<BTreeSet<_>>().len() == plan.picks.len(), || format!("plan {k}: repeated pick"))?;
        let normal = plan.picks.iter().filter(|id| id.starts_with('n')).count() as u64;
        ensure(normal == plan.normal_picked && plan.picks.len() as u64 - normal == plan.anomalous_picked, || format!("plan {k}: class counts"))?;
        let half = want.div_ceil(2) as usize;
        if n_norm >= half && n_anom >= half {
            ensure(plan.normal_picked.abs_diff(plan.anomalous_picked) <= 1 && !plan.pool_limited, || format!("plan {k}: unbalanced"))?;
        } else {
            limited += 1;
        }
    }

    let mut detected = 0;
    for k in 0..MUTATIONS {
        let train: Vec<Session> = (0..30).map(|i| session(format!("r{i}"), Label::Normal, Provenance::Real)).collect();
        let test: Vec<Session> = (0..10).map(|i| session(format!("t{i}"), Label::Normal, Provenance::Real)).collect();
        let mut split = DatasetSplit { train, test };
        ensure(split_guard(&split).ok(), || format!("clean split {k} flagged"))?;
        let planted = match k % 4 {
            0 => {
                let s = session(format!("syn{k}"), Label::Anomalous, Provenance::Synthetic);
                let at = rng.random_range(0..=split.test.len());
                split.test.insert(at, s);
                format!("syn{k}")
            }
            1 => {
                let s = split.train[rng.random_range(0..split.train.len())].clone();
                let id = s.session_id.clone();
                split.test.push(s);
                id
            }
            2 => {
                let s = split.test[rng.random_range(0..split.test.len())].clone();
                let id = s.session_id.clone();
                split.test.push(s);
                id
            }
            _ => {
                let i = rng.random_range(0..split.test.len());
                split.test[i].provenance = Provenance::Synthetic;
                split.test[i].session_id.clone()
            }
        };
        let g = split_guard(&split);
        if !g.ok() && (g.synthetic_in_test.contains(&planted) || g.duplicated.contains(&planted)) {
            detected += 1;
        }
    }
    ensure(detected == MUTATIONS, || format!("guard caught {detected} of {MUTATIONS} leaks"))?;
    Ok(format!("{PLANS} plans exact ({limited} pool-limited), {detected}/{MUTATIONS} leaks detected"))
}

fn c09_coverage() -> CheckResult {
    const TOL_PP: f64 = 0.01;
    let cases = [(48u64, 4846u64, 0.99), (80, 998, 8.02), (2874, 2889, 99.48)];
    let mut out = Vec::new();
    for (matched, n_source, published) in cases {
        let source: Vec<(String, Level)> = (0..n_source).map(|i| (format!("event {i} <*>"), Level::Info)).collect();
        let observed: Vec<String> = (0..matched).map(|i| format!("event {i} value")).collect();
        let r = audit_coverage("published", &source, &observed).map_err(|e| e.to_string())?;
        let pp = r.coverage * 100.0;
        ensure(r.n_observed_matched == matched, || format!("{matched}/{n_source}: matched {}", r.n_observed_matched))?;
        ensure((pp - published).abs() <= TOL_PP, || format!("{matched}/{n_source}: {pp:.4}% vs {published}%"))?;
        out.push(format!("{matched}/{n_source} = {}", percent(r.coverage)));
    }
    Ok(out.join(", "))
}

fn c10_prf() -> CheckResult {
    const TRIPLES: usize = 1000;
    const REL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0010);
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    let (mut worst, mut bounded) = (0.0f64, 0);
    for k in 0..TRIPLES {
        let scale = [10u64, 1000, 1_000_000][k % 3];
        let (tp, fp, fn_) = (rng.random_range(0..=scale), rng.random_range(0..=scale), rng.random_range(0..=scale));
        let m: Prf = compute_prf(tp, fp, fn_);
        let (tp_f, fp_f, fn_f) = (tp as f64, fp as f64, fn_ as f64);
        let p = if tp + fp == 0 { 0.0 } else { tp_f / (tp_f + fp_f) };
        let r = if tp + fn_ == 0 { 0.0 } else { tp_f / (tp_f + fn_f) };
        // F1 in count form, independent of P and R.
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp_f / (2.0 * tp_f + fp_f + fn_f) };
        for (got, want) in [(m.precision, p), (m.recall, r), (m.f1, f1)] {
            worst = worst.max(rel(got, want));
        }
        if tp > 0 {
            bounded += 1;
            ensure(m.precision.min(m.recall) <= m.f1 + 1e-15 && m.f1 <= m.precision.max(m.recall) + 1e-15, || {
                format!("({tp},{fp},{fn_}): F1 {} outside [{}, {}]", m.f1, m.precision.min(m.recall), m.precision.max(m.recall))
            })?;
        }
    }
    ensure(worst <= REL, || format!("worst relative error {worst:e}"))?;
    Ok(format!("{TRIPLES} triples, worst relative error {worst:e}, bound held on {bounded}"))
}

fn live_config(dir: &Path, endpoint: &str) -> std::path::PathBuf {
    let base = std::fs::read_to_string(corpus_config()).expect("config");
    let src = fixtures().join("corpus/src");
    let mut text = String::new();
    for line in base.lines() {
        let line = match line {
            l if l.starts_with("source_root") => format!("source_root = {:?}", src.to_str().unwrap()),
            l if l.starts_with("mock") => "mock = false".into(),
            l if l.starts_with("real_") || l.starts_with("observed") => continue,
            l => l.to_string(),
        };
        text.push_str(&line);
        text.push('\n');
    }
    text.push_str(&format!(
        "\n[reasoner]\nendpoint_url = {endpoint:?}\nmodel_name = \"stub-model\"\napi_key_env = \"LOGSYNTH_STUB_KEY\"\nmax_retries = 0\nbackoff_ms = 1\nrequest_timeout_secs = 10\n"
    ));
    let path = dir.join("live.toml");
    std::fs::write(&path, text).expect("write config");
    path
}

fn c11_reasoner() -> CheckResult {
    // Live requests carry temperature 0.
    let stub = StubServer::start(r#"{"valid": true, "rationale": "consistent"}"#);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = live_config(tmp.path(), &stub.url);
    let out = tmp.path().join("out");
    let o = common::bin()
        .env("LOGSYNTH_STUB_KEY", "test-key")
        .args(["generate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("live run failed: {}", String::from_utf8_lossy(&o.stderr)))?;
    let bodies = stub.bodies.lock().map_err(|e| e.to_string())?.clone();
    ensure(!bodies.is_empty(), || "stub saw no requests".into())?;
    for b in &bodies {
        let v: Value = serde_json::from_str(b).map_err(|e| format!("request is not JSON: {e}"))?;
        ensure(v["temperature"] == serde_json::json!(0), || format!("temperature {} in a request", v["temperature"]))?;
    }

    // Golden parsing table.
    let table: Value = serde_json::from_str(&std::fs::read_to_string(fixtures().join("verdict_shapes.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let rows = table.as_array().ok_or("table")?;
    ensure(rows.len() == 12, || format!("table has {} shapes", rows.len()))?;
    for row in rows {
        let got = parse_verdict(row["raw"].as_str().unwrap_or_default()).ok();
        let want = row["expect"].as_array().map(|a| (a[0].as_bool().unwrap(), a[1].as_str().unwrap().to_string()));
        ensure(got == want, || format!("shape {:?}: got {got:?}, want {want:?}", row["name"]))?;
    }

    // Mock pipeline with the network namespace emptied. The new user
    // namespace cannot traverse directories owned by unmapped users, so the
    // binary runs from a copy and every input path is relative.
    let offline = tmp.path().join("offline");
    let exe = tmp.path().join("logsynth");
    std::fs::copy(env!("CARGO_BIN_EXE_logsynth"), &exe).map_err(|e| e.to_string())?;
    let o = std::process::Command::new("unshare")
        .args(["-rn", exe.to_str().unwrap(), "pipeline", "--config", "fixtures/corpus/logsynth.toml"])
        .args(["--out", offline.to_str().unwrap(), "--threads", "1"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| format!("unshare unavailable: {e}"))?;
    ensure(o.status.success(), || format!("offline run failed: {}", String::from_utf8_lossy(&o.stderr)))?;
    ensure(read_tree(&offline) == read_tree(&fixtures().join("golden")), || "offline output differs from golden".into())?;
    Ok(format!("{} live requests at temperature 0, 12/12 shapes, offline mock run matches golden", bodies.len()))
}

fn c12_overhead() -> CheckResult {
    let golden = fixtures().join("golden");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(golden.join("manifest.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut counted: BTreeMap<String, u64> = BTreeMap::new();
    for (file, field) in [("verdicts.jsonl", "/entry"), ("sequences.jsonl", "/sequence/entry")] {
        let text = std::fs::read_to_string(golden.join(file)).map_err(|e| e.to_string())?;
        for line in text.lines() {
            let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let entry = v.pointer(field).and_then(Value::as_str).ok_or_else(|| format!("{file}: no entry"))?;
            *counted.entry(entry.to_string()).or_default() += 1;
        }
    }
    let oh = &manifest["overhead"];
    let entries = oh["entries"].as_array().ok_or("no overhead entries")?;
    let mut total = 0;
    for e in entries {
        let name = e["entry"].as_str().unwrap_or_default();
        let calls = e["calls"].as_u64().ok_or("calls")?;
        let checks = e["merge_checks"].as_u64().ok_or("merge_checks")?;
        let inst = e["instantiations"].as_u64().ok_or("instantiations")?;
        let want = counted.get(name).copied().unwrap_or(0);
        ensure(calls == want && calls == checks + inst, || format!("{name}: manifest {calls}, counted {want}"))?;
        total += want;
    }
    let mean = total as f64 / entries.len() as f64;
    ensure(oh["total_calls"].as_u64() == Some(total), || "total_calls differs".into())?;
    ensure(oh["calls_per_entry"].as_f64() == Some(mean), || format!("calls_per_entry {} vs counted {mean}", oh["calls_per_entry"]))?;
    Ok(format!("{} entries, {total} calls, {mean:.3} per entry, all exact", entries.len()))
}
