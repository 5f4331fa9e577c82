//! Stage orchestration, artifact writing and the run manifest.

use crate::assembler::{dump_sequences, Assembler, Assembly, VerdictRecord};
use crate::callgraph::{build_call_graph, extract_subgraphs, prune, to_dot, CallGraph, PruneReport, PrunedGraph, SubgraphSelection};
use crate::config::Config;
use crate::coverage::{audit_coverage, CoverageReport};
use crate::dataset::{apply_augmentation, plan_augmentation, read_sessions, sessions_to_string, split_guard, AugPlan, DatasetSplit, GuardReport};
use crate::frontend::{mark_log_calls, LoggingApis, MethodId, ProjectIndex, SkippedLogCall, TemplateTable};
use crate::labeler::{make_sessions, sample_for_review, LabelRuleSet, Provenance, Session};
use crate::lcfg::LcfgSet;
use crate::reasoner::{account, instantiate_parameters, EntryOverhead, OverheadReport, ParameterizedSequence, Reasoner, Source};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Analyze,
    Lcfg,
    Generate,
    Label,
    Augment,
    AuditCoverage,
    /// Every stage; augmentation and the audit run when their inputs are configured.
    Pipeline,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::Lcfg => "lcfg",
            Stage::Generate => "generate",
            Stage::Label => "label",
            Stage::Augment => "augment",
            Stage::AuditCoverage => "audit-coverage",
            Stage::Pipeline => "pipeline",
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub mode: String,
    /// Counts per stage that has run against this output directory.
    pub stages: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead: Option<OverheadReport>,
    /// sha256 of every other file in the output directory.
    pub artifacts: BTreeMap<String, String>,
}

pub struct Analysis {
    pub index: ProjectIndex,
    pub templates: TemplateTable,
    pub graph: CallGraph,
    pub pruned: PrunedGraph,
    pub report: PruneReport,
    pub selection: SubgraphSelection,
}

pub fn analyze(cfg: &Config) -> Result<Analysis> {
    let root = cfg.resolve(&cfg.pipeline.source_root);
    let mut index = ProjectIndex::parse_source(&root, &cfg.language)?;
    let apis = LoggingApis::new(&cfg.logging_apis)?;
    if apis.is_empty() {
        log::warn!("no logging APIs configured");
    }
    mark_log_calls(&mut index, &apis);
    let templates = TemplateTable::build(&index, &apis);
    let graph = build_call_graph(&index, &templates);
    let (pruned, report) = prune(&graph);
    let selection = extract_subgraphs(&pruned, cfg.pipeline.t_entry, cfg.pipeline.t_depth);
    for w in &selection.warnings {
        log::warn!("{w}");
    }
    Ok(Analysis { index, templates, graph, pruned, report, selection })
}

/// Graphs for every member of every selected subgraph.
pub fn build_lcfgs(a: &Analysis) -> LcfgSet {
    let members: BTreeSet<&MethodId> = a.selection.subgraphs.iter().flat_map(|s| &s.members).collect();
    LcfgSet::build(&a.index, &a.templates, members)
}

pub struct Generation {
    pub assemblies: Vec<Assembly>,
    pub sequences: Vec<ParameterizedSequence>,
    /// Sequences dropped because instantiation failed outright.
    pub abandoned: usize,
    pub overhead: OverheadReport,
}

pub fn generate(cfg: &Config, a: &Analysis, lcfgs: &LcfgSet, reasoner: &dyn Reasoner) -> Result<Generation> {
    let assembler = Assembler::new(&a.index, lcfgs, &a.templates, cfg.bounds.clone());
    let timed = reasoner.source() == Source::Live;
    let per_entry: Vec<(Assembly, Vec<ParameterizedSequence>, usize, EntryOverhead)> = a
        .selection
        .subgraphs
        .par_iter()
        .map(|sg| {
            let start = Instant::now();
            let asm = assembler.assemble(sg, reasoner);
            let mut seqs = Vec::new();
            let mut inst = Vec::new();
            let mut abandoned = 0;
            for s in asm.sequences.iter().cloned() {
                let id = s.sequence_id.clone();
                match instantiate_parameters(s, &a.templates, reasoner) {
                    Ok(p) => {
                        inst.push((p.attempts, p.token_estimate));
                        seqs.push(p);
                    }
                    Err(e) => {
                        log::warn!("sequence {id} abandoned: {e}");
                        abandoned += 1;
                    }
                }
            }
            let wall = timed.then(|| start.elapsed());
            let oh = EntryOverhead::new(sg.entry.clone(), &asm.verdicts, &inst, wall);
            (asm, seqs, abandoned, oh)
        })
        .collect();
    let mut g = Generation { assemblies: Vec::new(), sequences: Vec::new(), abandoned: 0, overhead: account(Vec::new()) };
    let mut entries = Vec::new();
    for (asm, seqs, abandoned, oh) in per_entry {
        g.assemblies.push(asm);
        g.sequences.extend(seqs);
        g.abandoned += abandoned;
        entries.push(oh);
    }
    g.overhead = account(entries);
    Ok(g)
}

pub struct Labeling {
    pub sessions: Vec<Session>,
    pub duplicates: usize,
    /// Sequences that logged nothing.
    pub empty: usize,
    pub review: String,
}

pub fn label(cfg: &Config, g: &Generation) -> Result<Labeling> {
    let rules = LabelRuleSet::from_config(&cfg.labels)?;
    let logged: Vec<_> = g.sequences.iter().filter(|q| !q.events.is_empty()).cloned().collect();
    let empty = g.sequences.len() - logged.len();
    let (sessions, duplicates) = make_sessions(&logged, &rules, cfg.seed());
    let review = sample_for_review(&sessions, cfg.labels.review_sample, cfg.seed());
    Ok(Labeling { sessions, duplicates, empty, review })
}

pub struct Augmentation {
    pub plan: AugPlan,
    pub split: DatasetSplit,
    pub guard: GuardReport,
}

fn read_real(cfg: &Config, p: &Path) -> Result<Vec<Session>> {
    let path = cfg.resolve(p);
    let sessions = read_sessions(&path)?;
    if let Some(s) = sessions.iter().find(|s| s.provenance != Provenance::Real) {
        return Err(Error::Data(format!("{}: session {} is not real", path.display(), s.session_id)));
    }
    Ok(sessions)
}

pub fn augment(cfg: &Config, pool: &[Session]) -> Result<Augmentation> {
    let d = &cfg.dataset;
    let (Some(train), Some(test)) = (&d.real_train, &d.real_test) else {
        return Err(Error::Config("augment needs dataset.real_train and dataset.real_test".into()));
    };
    let split = DatasetSplit { train: read_real(cfg, train)?, test: read_real(cfg, test)? };
    let before = split_guard(&split);
    before.into_result()?;
    let plan = plan_augmentation(split.train.len() as u64, pool, d.ratio.0, cfg.seed())?;
    let split = apply_augmentation(&split, pool, &plan)?;
    let guard = split_guard(&split).into_result()?;
    Ok(Augmentation { plan, split, guard })
}

pub fn audit(cfg: &Config, templates: &TemplateTable) -> Result<CoverageReport> {
    let Some(p) = &cfg.coverage.observed else {
        return Err(Error::Config("audit-coverage needs coverage.observed".into()));
    };
    let path = cfg.resolve(p);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let observed: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    let source: Vec<_> = templates.templates.iter().map(|t| (t.pattern.clone(), t.level)).collect();
    audit_coverage(cfg.coverage.system_name.as_deref().unwrap_or("project"), &source, &observed)
}

/// Collects artifacts in memory, then writes them and the manifest.
struct Out {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
    stages: BTreeMap<String, Value>,
    overhead: Option<OverheadReport>,
}

impl Out {
    fn put(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.insert(name.to_string(), content.into());
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) {
        let s: String = rows.into_iter().map(|r| serde_json::to_string(&r).expect("serializable") + "\n").collect();
        self.put(name, s);
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        self.put(name, serde_json::to_string_pretty(v).expect("serializable") + "\n");
    }
}

/// File name for a method's graph: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn dot_file_name(m: &MethodId) -> String {
    let s: String = m.as_str().chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect();
    format!("lcfg/{s}.dot")
}

#[derive(Serialize)]
struct VerdictRow<'a> {
    entry: &'a MethodId,
    index: usize,
    #[serde(flatten)]
    record: &'a VerdictRecord,
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    files_with_errors: Vec<(&'a str, &'a str)>,
    methods: usize,
    templates: usize,
    skipped_log_calls: &'a [SkippedLogCall],
}

/// Runs `stage` and everything it depends on, writing their artifacts and
/// merging their counts into the manifest.
pub fn run(cfg: &Config, stage: Stage, reasoner: Option<&dyn Reasoner>) -> Result<Manifest> {
    let mut out = Out { dir: cfg.resolve(&cfg.pipeline.out), files: BTreeMap::new(), stages: BTreeMap::new(), overhead: None };
    let upto = |s: Stage| stage == Stage::Pipeline || (stage != Stage::AuditCoverage && stage >= s);

    let a = analyze(cfg).map_err(|e| e.in_stage("analyze"))?;
    out.put("templates.tsv", a.templates.dump());
    out.put("callgraph.dot", to_dot(&a.graph.nodes, &a.graph.edges, &a.graph.roles));
    out.put("pruned.dot", to_dot(&a.pruned.nodes, &a.pruned.edges, &a.graph.roles));
    out.put("prune_report.txt", a.report.render());
    out.json("subgraphs.json", &a.selection);
    out.json(
        "analysis.json",
        &AnalysisSummary {
            files_with_errors: a.index.errors.iter().map(|e| (e.path.as_str(), e.message.as_str())).collect(),
            methods: a.index.len(),
            templates: a.templates.templates.len(),
            skipped_log_calls: &a.templates.skipped,
        },
    );
    out.stages.insert(
        "analyze".into(),
        json!({
            "files_with_errors": a.index.errors.len(),
            "methods": a.index.len(),
            "templates": a.templates.templates.len(),
            "skipped_log_calls": a.templates.skipped.len(),
            "callgraph_nodes": a.report.original_nodes,
            "retained_nodes": a.report.retained_nodes,
            "no_logging": a.report.no_logging,
            "entry_candidates": a.selection.candidates,
            "subgraphs": a.selection.subgraphs.len(),
        }),
    );

    if upto(Stage::Lcfg) {
        let lcfgs = build_lcfgs(&a);
        for (m, (_, l)) in &lcfgs.graphs {
            out.put(&dot_file_name(m), l.to_dot());
        }
        out.stages.insert(
            "lcfg".into(),
            json!({
                "graphs": lcfgs.graphs.len(),
                "nodes": lcfgs.graphs.values().map(|(_, l)| l.nodes.len()).sum::<usize>(),
            }),
        );

        if upto(Stage::Generate) {
            let reasoner = reasoner.ok_or_else(|| Error::Config("generate needs a reasoner".into()))?;
            let g = generate(cfg, &a, &lcfgs, reasoner).map_err(|e| e.in_stage("generate"))?;
            let cands: Vec<_> = g.assemblies.iter().flat_map(|x| x.sequences.iter().cloned()).collect();
            out.put("sequences.tsv", dump_sequences(&cands));
            out.jsonl("sequences.jsonl", &g.sequences);
            out.jsonl(
                "verdicts.jsonl",
                g.assemblies.iter().flat_map(|x| x.verdicts.iter().enumerate().map(|(index, record)| VerdictRow { entry: &x.entry, index, record })),
            );
            out.stages.insert(
                "generate".into(),
                json!({
                    "entries": g.assemblies.len(),
                    "candidate_sequences": cands.len(),
                    "parameterized_sequences": g.sequences.len(),
                    "abandoned_sequences": g.abandoned,
                    "merge_checks": g.assemblies.iter().map(|x| x.verdicts.len()).sum::<usize>(),
                    "failed_checks": g.assemblies.iter().map(Assembly::failures).sum::<usize>(),
                    "truncated_entries": g.assemblies.iter().filter(|x| x.truncated).count(),
                    "recursion_cut_sequences": cands.iter().filter(|s| s.recursion_cut).count(),
                    "param_fallbacks": g.sequences.iter().filter(|s| s.params_fallback).count(),
                }),
            );
            out.overhead = Some(g.overhead.clone());

            if upto(Stage::Label) {
                let l = label(cfg, &g).map_err(|e| e.in_stage("label"))?;
                out.put("sessions.jsonl", sessions_to_string(&l.sessions));
                out.put("review.txt", l.review.clone());
                let anomalous = l.sessions.iter().filter(|s| s.label == crate::labeler::Label::Anomalous).count();
                out.stages.insert(
                    "label".into(),
                    json!({
                        "sessions": l.sessions.len(),
                        "anomalous": anomalous,
                        "normal": l.sessions.len() - anomalous,
                        "duplicates_dropped": l.duplicates,
                        "empty_dropped": l.empty,
                    }),
                );

                let configured = cfg.dataset.real_train.is_some() && cfg.dataset.real_test.is_some();
                if stage == Stage::Augment || (stage == Stage::Pipeline && configured) {
                    let x = augment(cfg, &l.sessions).map_err(|e| e.in_stage("augment"))?;
                    out.json("augment_plan.json", &x.plan);
                    out.put("train.jsonl", sessions_to_string(&x.split.train));
                    out.put("test.jsonl", sessions_to_string(&x.split.test));
                    out.json("split_guard.json", &x.guard);
                    out.stages.insert(
                        "augment".into(),
                        json!({
                            "n_real": x.plan.n_real,
                            "n_syn_target": x.plan.n_syn_target,
                            "normal_picked": x.plan.normal_picked,
                            "anomalous_picked": x.plan.anomalous_picked,
                            "pool_limited": x.plan.pool_limited,
                            "train": x.split.train.len(),
                            "test": x.split.test.len(),
                        }),
                    );
                }
            }
        }
    }

    if stage == Stage::AuditCoverage || (stage == Stage::Pipeline && cfg.coverage.observed.is_some()) {
        let r = audit(cfg, &a.templates).map_err(|e| e.in_stage("audit-coverage"))?;
        out.put("coverage.txt", r.render());
        out.json("coverage.json", &r);
        out.stages.insert(
            "audit-coverage".into(),
            json!({ "n_source": r.n_source, "n_observed_matched": r.n_observed_matched, "coverage": r.coverage }),
        );
    }

    write(cfg, out)
}

fn write(cfg: &Config, out: Out) -> Result<Manifest> {
    let dir = &out.dir;
    std::fs::create_dir_all(dir.join("lcfg")).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in &out.files {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let seed = cfg.pipeline.mock.then(|| cfg.seed()).or(cfg.pipeline.seed);
    let mut manifest = Manifest {
        config_hash: cfg.hash.clone(),
        seed,
        mode: cfg.mode().to_string(),
        stages: BTreeMap::new(),
        overhead: None,
        artifacts: BTreeMap::new(),
    };
    // Earlier runs with the same configuration contribute their stages.
    if let Ok(prev) = std::fs::read(dir.join(MANIFEST)) {
        if let Ok(prev) = serde_json::from_slice::<Manifest>(&prev) {
            if (&prev.config_hash, prev.seed, &prev.mode) == (&manifest.config_hash, manifest.seed, &manifest.mode) {
                manifest.stages = prev.stages;
                manifest.overhead = prev.overhead;
            }
        }
    }
    manifest.stages.extend(out.stages);
    if out.overhead.is_some() {
        manifest.overhead = out.overhead;
    }
    manifest.artifacts = hash_dir(dir)?;
    let p = dir.join(MANIFEST);
    std::fs::write(&p, serde_json::to_string_pretty(&manifest).expect("serializable") + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("under dir");
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel == MANIFEST {
            continue;
        }
        let bytes = std::fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        out.insert(rel, hex::encode(Sha256::digest(&bytes)));
    }
    Ok(out)
}
