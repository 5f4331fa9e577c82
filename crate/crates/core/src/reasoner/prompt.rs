use super::{Binding, MergeContext};
use crate::assembler::{LocalPath, Step};
use crate::frontend::{MethodDecl, PlaceholderKind, TemplateTable};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const CALLER_SOURCE: &str = "### CALLER SOURCE";
pub const CALLEE_PATH: &str = "### CANDIDATE CALLEE PATH";
pub const STATIC_HINTS: &str = "### STATIC HINTS";

const PREAMBLE: &str = "\
Decide whether the candidate callee path below can actually execute when the
callee is invoked from the caller at the marked call site. Reason step by step
about argument values, branch conditions and exceptions. Then answer with one
fenced JSON object with exactly two keys: \"valid\" (boolean) and \"rationale\"
(one sentence).";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDoc {
    pub caller_source: String,
    pub callee_path: String,
    pub hints: String,
    pub rendered: String,
}

pub fn build_verification_prompt(
    caller: &MethodDecl,
    context: &MergeContext,
    callee: &MethodDecl,
    path: &LocalPath,
    bindings: &[Binding],
    templates: &TemplateTable,
    hints: &[String],
) -> PromptDoc {
    let mut caller_source = caller.source_text.trim_end().to_string();
    let _ = write!(caller_source, "\n\n// call site: {}({})", callee.name, context.call_args.join(", "));
    for b in &context.inherited {
        let _ = write!(caller_source, "\n// caller parameter: {} = {}", b.param, b.arg);
    }
    for c in &context.conditions {
        let _ = write!(caller_source, "\n// holds before the call: {c}");
    }

    let mut callee_path = format!("method {}", callee.method_id);
    for b in bindings {
        let _ = write!(callee_path, "\n  bind {} = {}", b.param, b.arg);
    }
    let mut conds = path.conditions.iter().peekable();
    let mut k = 1;
    for (i, step) in path.steps.iter().enumerate() {
        while let Some(c) = conds.next_if(|c| c.at_step <= i) {
            let _ = write!(callee_path, "\n  {k}. branch {}", c.condition);
            k += 1;
        }
        let line = match step {
            Step::Log { template_id } => match templates.get(*template_id) {
                Some(t) => format!("log {} \"{}\"", t.level, t.pattern),
                None => format!("log #{template_id}"),
            },
            Step::Call { callee, args, .. } => format!("call {callee}({})", args.join(", ")),
        };
        let _ = write!(callee_path, "\n  {k}. {line}");
        k += 1;
    }
    for c in conds {
        let _ = write!(callee_path, "\n  {k}. branch {}", c.condition);
        k += 1;
    }
    if k == 1 {
        callee_path.push_str("\n  (no steps)");
    }

    let hints = if hints.is_empty() { "- none".to_string() } else { hints.iter().map(|h| format!("- {h}")).collect::<Vec<_>>().join("\n") };
    let rendered = format!("{PREAMBLE}\n\n{CALLER_SOURCE}\n{caller_source}\n\n{CALLEE_PATH}\n{callee_path}\n\n{STATIC_HINTS}\n{hints}\n");
    PromptDoc { caller_source, callee_path, hints, rendered }
}

/// One request covering every placeholder of a sequence.
pub fn build_instantiation_prompt(sequence_id: &str, events: &[(String, Vec<PlaceholderKind>)]) -> String {
    let mut s = format!(
        "Fill in realistic runtime values for the placeholders <*> of log sequence {sequence_id}.\n\
         Values should be consistent across events, for example the same block id where the\n\
         same entity is meant. Answer with one JSON object mapping each event index (as a\n\
         string) to the list of values for that event, one per placeholder, in order.\n"
    );
    for (i, (pattern, kinds)) in events.iter().enumerate() {
        let kinds: Vec<String> = kinds.iter().map(|k| format!("{k:?}").to_lowercase()).collect();
        let _ = write!(s, "\n{i}: {pattern}  [{}]", kinds.join(", "));
    }
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcfg::tests::fixture;

    fn doc(hints: &[String]) -> PromptDoc {
        let (index, templates, set) = fixture(
            "void a(String s) { b(s, 1); }\nvoid b(String s, int n) { if (s == null) { LOG.info(\"null \" + n); } c(); }\nvoid c() { }",
        );
        let caller = index.methods().find(|m| m.name == "a").unwrap();
        let callee = index.methods().find(|m| m.name == "b").unwrap();
        let lcfg = set.lcfg(&callee.method_id).unwrap();
        let paths = crate::assembler::enumerate_local_paths(lcfg, &Default::default());
        let ctx = MergeContext { call_args: vec!["s".into(), "1".into()], ..Default::default() };
        let bindings = [Binding { param: "s".into(), arg: "s".into() }, Binding { param: "n".into(), arg: "1".into() }];
        build_verification_prompt(caller, &ctx, callee, &paths.paths[0], &bindings, &templates, hints)
    }

    #[test]
    fn sections_in_order() {
        let d = doc(&[]);
        let r = &d.rendered;
        let (a, b, c) = (r.find(CALLER_SOURCE).unwrap(), r.find(CALLEE_PATH).unwrap(), r.find(STATIC_HINTS).unwrap());
        assert!(a < b && b < c);
        assert!(r.contains("\"valid\"") && r.contains("\"rationale\""));
        assert!(d.callee_path.contains("1. branch s == null"));
        assert!(d.callee_path.contains("2. log INFO \"null <*>\""));
        assert!(d.callee_path.contains("3. call"));
    }

    #[test]
    fn deterministic_and_hints_verbatim() {
        let hints = vec!["parameter s: String".to_string(), "parameter n: int".to_string()];
        let (x, y) = (doc(&hints), doc(&hints));
        assert_eq!(x, y);
        assert!(x.hints.contains("- parameter s: String\n- parameter n: int"));
    }
}
