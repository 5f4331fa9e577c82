//! Log-call recognition and `<*>` template extraction.

use super::ast::*;
use super::index::ProjectIndex;
use crate::config::{compile_glob, LogApiPattern};
use crate::error::{Error, Result};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const PLACEHOLDER: &str = "<*>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceholderKind {
    Numeric,
    Identifier,
    Path,
    Address,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogTemplate {
    pub template_id: u32,
    pub pattern: String,
    pub level: Level,
    pub method_id: MethodId,
    pub line: u32,
    /// Preorder id of the log-call node inside the method body.
    pub node_id: u32,
    pub placeholder_kinds: Vec<PlaceholderKind>,
}

/// Log call that produced no template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLogCall {
    pub method_id: MethodId,
    pub line: u32,
    pub reason: String,
}

/// Compiled logging-API patterns.
#[derive(Debug, Clone)]
pub struct LoggingApis {
    patterns: Vec<(Regex, Level)>,
}

impl LoggingApis {
    pub fn new(apis: &[LogApiPattern]) -> Result<Self> {
        let patterns = apis
            .iter()
            .map(|a| compile_glob(&a.pattern).map(|r| (r, a.level)).map_err(Error::Config))
            .collect::<Result<_>>()?;
        Ok(LoggingApis { patterns })
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Severity of the first pattern matching the call target.
    pub fn level_of(&self, call: &CallSite) -> Option<Level> {
        let target = call.qualified_target();
        self.patterns.iter().find(|(re, _)| re.is_match(&target)).map(|(_, l)| *l)
    }
}

/// Log-call nodes of one method in source order, with their severities.
pub fn recognize_log_calls<'m>(method: &'m MethodDecl, apis: &LoggingApis) -> Vec<(&'m AstNode, Level)> {
    let Some(body) = &method.body else { return vec![] };
    body.walk()
        .filter(|n| matches!(n.kind, NodeKind::MethodCall | NodeKind::LogCall))
        .filter_map(|n| apis.level_of(n.call()?).map(|l| (n, l)))
        .collect()
}

/// Marks matching method-call nodes as log calls across the whole index.
pub fn mark_log_calls(index: &mut ProjectIndex, apis: &LoggingApis) {
    for m in index.methods_mut() {
        if let Some(body) = &mut m.body {
            body.walk_mut(&mut |n| {
                if n.kind == NodeKind::MethodCall && n.call().is_some_and(|c| apis.level_of(c).is_some()) {
                    n.kind = NodeKind::LogCall;
                }
            });
        }
    }
}

/// A message piece: literal text, or one placeholder with the expression that fills it.
#[derive(Debug, Clone, PartialEq)]
enum Piece<'e> {
    Text(String),
    Hole(Option<&'e Expr>, Option<char>),
}

/// Template pattern and placeholder kinds for one log call.
pub fn extract_template(call: &CallSite) -> std::result::Result<(String, Vec<PlaceholderKind>), String> {
    let Some(msg) = call.args.first() else {
        return Err("log call without a message argument".into());
    };
    let mut pieces = Vec::new();
    let format_args = &call.args[1..];
    message_pieces(msg, format_args, &mut pieces);
    Ok(render(&pieces))
}

fn message_pieces<'e>(msg: &'e Expr, format_args: &'e [Expr], out: &mut Vec<Piece<'e>>) {
    // String.format(...) / formatted(...) nested as the message.
    if let Expr::Call { name, args, target, .. } = msg {
        let is_format = name == "format"
            && matches!(target.as_deref(), Some(Expr::Name(t)) if t == "String" || t == "MessageFormat")
            && !args.is_empty();
        if is_format {
            return message_pieces(&args[0], &args[1..], out);
        }
    }
    let mut leaves = Vec::new();
    flatten_concat(msg, &mut leaves);
    let is_concat = leaves.iter().any(|l| l.as_str_literal().is_some());
    if !is_concat {
        out.push(Piece::Hole(Some(msg), None));
        return;
    }
    let mut args = format_args.iter();
    for leaf in leaves {
        match leaf {
            Expr::Literal(Literal::Str(s)) => expand_format(s, &mut args, out),
            Expr::Literal(Literal::Char(c)) => out.push(Piece::Text(c.clone())),
            Expr::Literal(Literal::Number(n)) => out.push(Piece::Text(n.clone())),
            Expr::Literal(Literal::Bool(b)) => out.push(Piece::Text(b.to_string())),
            Expr::Literal(Literal::Null) => out.push(Piece::Text("null".into())),
            other => out.push(Piece::Hole(Some(other), None)),
        }
    }
}

/// Operands of a left-nested `+` chain that is a string concatenation.
fn flatten_concat<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Binary { op, lhs, rhs } if op == "+" && contains_string(e) => {
            flatten_concat(lhs, out);
            flatten_concat(rhs, out);
        }
        _ => out.push(e),
    }
}

fn contains_string(e: &Expr) -> bool {
    match e {
        Expr::Literal(Literal::Str(_)) => true,
        Expr::Binary { op, lhs, rhs } if op == "+" => contains_string(lhs) || contains_string(rhs),
        _ => false,
    }
}

/// Splits a literal on `{}` and printf conversions, pulling one argument per hole.
fn expand_format<'e>(s: &str, args: &mut std::slice::Iter<'e, Expr>, out: &mut Vec<Piece<'e>>) {
    let mut text = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'}') => {
                chars.next();
                out.push(Piece::Text(std::mem::take(&mut text)));
                out.push(Piece::Hole(args.next(), None));
            }
            '%' => {
                let mut spec = String::new();
                let mut lookahead = chars.clone();
                while let Some(&d) = lookahead.peek() {
                    if d.is_ascii_digit() || matches!(d, '.' | '-' | '+' | '#' | ',') && spec.len() < 8 {
                        spec.push(d);
                        lookahead.next();
                    } else {
                        break;
                    }
                }
                match lookahead.peek().copied() {
                    Some('%') if spec.is_empty() => {
                        chars.next();
                        text.push('%');
                    }
                    Some(conv @ ('s' | 'd' | 'f' | 'x' | 'X' | 'e' | 'g' | 'b' | 'c' | 'S' | 'o')) => {
                        chars = lookahead;
                        chars.next();
                        out.push(Piece::Text(std::mem::take(&mut text)));
                        out.push(Piece::Hole(args.next(), Some(conv)));
                    }
                    Some('n') if spec.is_empty() => {
                        chars.next();
                        text.push(' ');
                    }
                    _ => text.push('%'),
                }
            }
            c => text.push(c),
        }
    }
    out.push(Piece::Text(text));
}

/// Joins pieces; a run of adjacent holes renders as a single `<*>`.
fn render(pieces: &[Piece]) -> (String, Vec<PlaceholderKind>) {
    let mut raw = String::new();
    let mut kinds = Vec::new();
    let mut prev_hole = false;
    for p in pieces {
        match p {
            Piece::Text(t) if t.is_empty() => {}
            Piece::Text(t) => {
                raw.push_str(t);
                prev_hole = false;
            }
            Piece::Hole(expr, conv) => {
                if !prev_hole {
                    raw.push_str(PLACEHOLDER);
                    kinds.push(placeholder_kind(*expr, *conv));
                }
                prev_hole = true;
            }
        }
    }
    (normalize_ws(&raw), kinds)
}

pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Name-based kind inference for the expression filling a placeholder.
pub fn placeholder_kind(expr: Option<&Expr>, conv: Option<char>) -> PlaceholderKind {
    if let Some(e) = expr {
        if let Some(k) = kind_from_name(&expr_name_words(e)) {
            return k;
        }
        if is_numeric_expr(e) {
            return PlaceholderKind::Numeric;
        }
    }
    match conv {
        Some('d' | 'f' | 'x' | 'X' | 'e' | 'g' | 'o') => PlaceholderKind::Numeric,
        _ => PlaceholderKind::Generic,
    }
}

fn kind_from_name(words: &[String]) -> Option<PlaceholderKind> {
    let has = |ws: &[&str]| words.iter().any(|w| ws.contains(&w.as_str()));
    if has(&["id", "ids", "blk", "uuid", "key"]) {
        Some(PlaceholderKind::Identifier)
    } else if has(&["addr", "address", "host", "hostname", "ip", "endpoint", "port", "peer"]) {
        Some(PlaceholderKind::Address)
    } else if has(&["path", "file", "filename", "dir", "directory"]) {
        Some(PlaceholderKind::Path)
    } else if has(&["count", "size", "num", "len", "length", "bytes", "total", "millis", "ms", "seconds", "timeout", "retries", "attempt", "attempts"]) {
        Some(PlaceholderKind::Numeric)
    } else {
        None
    }
}

/// Lowercased camel/snake words of the most specific name in an expression:
/// `this.blockId` → ["block", "id"], `req.getFilePath()` → ["file", "path"].
fn expr_name_words(e: &Expr) -> Vec<String> {
    let name = match e {
        Expr::Name(n) => n.as_str(),
        Expr::Field { name, .. } => name.as_str(),
        Expr::Call { name, .. } => name.strip_prefix("get").filter(|s| !s.is_empty()).unwrap_or(name),
        Expr::Paren(inner) | Expr::Cast { expr: inner, .. } => return expr_name_words(inner),
        _ => return vec![],
    };
    split_words(name)
}

fn split_words(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = name.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '$' {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let boundary = c.is_uppercase()
            && i > 0
            && (chars[i - 1].is_lowercase() || chars.get(i + 1).is_some_and(|n| n.is_lowercase()) && chars[i - 1].is_uppercase());
        if boundary && !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

fn is_numeric_expr(e: &Expr) -> bool {
    match e {
        Expr::Literal(Literal::Number(_)) => true,
        Expr::Binary { op, .. } => matches!(op.as_str(), "-" | "*" | "/" | "%" | "+"),
        Expr::Call { name, .. } => matches!(name.as_str(), "size" | "length" | "currentTimeMillis" | "nanoTime"),
        Expr::Paren(inner) => is_numeric_expr(inner),
        Expr::Cast { ty, .. } => matches!(ty.as_str(), "int" | "long" | "short" | "double" | "float"),
        _ => false,
    }
}

/// Templates of the whole project plus the log calls that produced none.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TemplateTable {
    pub templates: Vec<LogTemplate>,
    pub skipped: Vec<SkippedLogCall>,
    #[serde(skip)]
    by_site: BTreeMap<(MethodId, u32), u32>,
}

impl TemplateTable {
    /// Extracts every template. Ids are dense from 1 in (method_id, line, col, pattern) order.
    pub fn build(index: &ProjectIndex, apis: &LoggingApis) -> TemplateTable {
        let mut rows = Vec::new();
        let mut skipped = Vec::new();
        for m in index.methods() {
            for (node, level) in recognize_log_calls(m, apis) {
                let call = node.call().expect("log calls carry call sites");
                match extract_template(call) {
                    Ok((pattern, kinds)) => rows.push((m.method_id.clone(), node.span.start_line, node.span.col, pattern, level, node.id, kinds)),
                    Err(reason) => {
                        log::warn!("{}:{}: {reason}", m.method_id, node.span.start_line);
                        skipped.push(SkippedLogCall { method_id: m.method_id.clone(), line: node.span.start_line, reason });
                    }
                }
            }
        }
        rows.sort_by(|a, b| (&a.0, a.1, a.2, &a.3, a.5).cmp(&(&b.0, b.1, b.2, &b.3, b.5)));
        let templates = rows
            .into_iter()
            .enumerate()
            .map(|(i, (method_id, line, _, pattern, level, node_id, placeholder_kinds))| LogTemplate {
                template_id: i as u32 + 1,
                pattern,
                level,
                method_id,
                line,
                node_id,
                placeholder_kinds,
            })
            .collect();
        Self::from_templates(templates, skipped)
    }

    pub fn from_templates(templates: Vec<LogTemplate>, skipped: Vec<SkippedLogCall>) -> TemplateTable {
        let by_site = templates.iter().map(|t| ((t.method_id.clone(), t.node_id), t.template_id)).collect();
        TemplateTable { templates, skipped, by_site }
    }

    pub fn get(&self, id: u32) -> Option<&LogTemplate> {
        // Ids are dense from 1.
        self.templates.get((id as usize).checked_sub(1)?).filter(|t| t.template_id == id)
    }

    /// Template produced by the log call `node_id` of `method`.
    pub fn at(&self, method: &MethodId, node_id: u32) -> Option<&LogTemplate> {
        self.by_site.get(&(method.clone(), node_id)).and_then(|&id| self.get(id))
    }

    pub fn in_method<'a>(&'a self, method: &'a MethodId) -> impl Iterator<Item = &'a LogTemplate> + 'a {
        self.templates.iter().filter(move |t| &t.method_id == method)
    }

    /// One line per template: `id<TAB>level<TAB>method_id<TAB>line<TAB>pattern`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for t in &self.templates {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", t.template_id, t.level, t.method_id, t.line, t.pattern);
        }
        s
    }
}

/// Row of a template dump file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpRow {
    pub template_id: u32,
    pub level: Level,
    pub method_id: MethodId,
    pub line: u32,
    pub pattern: String,
}

pub fn read_dump(path: &Path) -> Result<Vec<DumpRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dump(&text).map_err(|(line, message)| Error::Malformed { path: path.to_path_buf(), line, message })
}

pub fn parse_dump(text: &str) -> std::result::Result<Vec<DumpRow>, (usize, String)> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(5, '\t').collect();
        let [id, level, method, ln, pattern] = f[..] else {
            return Err((i + 1, "expected 5 tab-separated fields".into()));
        };
        rows.push(DumpRow {
            template_id: id.parse().map_err(|_| (i + 1, format!("bad template id `{id}`")))?,
            level: level.parse().map_err(|e| (i + 1, e))?,
            method_id: MethodId(method.to_string()),
            line: ln.parse().map_err(|_| (i + 1, format!("bad line `{ln}`")))?,
            pattern: pattern.to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parser::parse_file;

    fn call_of(stmt: &str) -> CallSite {
        let src = format!("class T {{ Logger LOG; void m() {{ {stmt} }} }}");
        let u = parse_file("T.java", &src).unwrap().remove(0);
        let body = u.methods[0].body.clone().unwrap();
        body.walk().filter_map(|n| n.call()).filter(|c| c.receiver.as_deref() == Some("LOG")).last().unwrap().clone()
    }

    // (call, pattern, placeholder count)
    const GOLDEN: &[(&str, &str, usize)] = &[
        (r#"LOG.info("Received block " + blockId);"#, "Received block <*>", 1),
        (r#"LOG.warn("shutting down");"#, "shutting down", 0),
        (r#"LOG.error("Deleting block {} file {}", a, b);"#, "Deleting block <*> file <*>", 2),
        (r#"LOG.info("a" + "b");"#, "ab", 0),
        (r#"LOG.info("Served " + n + " bytes to " + host);"#, "Served <*> bytes to <*>", 2),
        (r#"LOG.info(x + y + " items");"#, "<*> items", 1),
        (r#"LOG.info("sum " + (x + y));"#, "sum <*>", 1),
        (r#"LOG.info("Opened %s with %d entries", path, n);"#, "Opened <*> with <*> entries", 2),
        (r#"LOG.info("100%% done");"#, "100% done", 0),
        (r#"LOG.info("  lots   of\tspace  " + v);"#, "lots of space <*>", 1),
        (r#"LOG.info(String.format("Took %.2f ms", t));"#, "Took <*> ms", 1),
        (r#"LOG.info(msg);"#, "<*>", 1),
        (r#"LOG.error("Failed to write", e);"#, "Failed to write", 0),
        (r#"LOG.info("k=" + k + "v=" + v);"#, "k=<*>v=<*>", 2),
        (r#"LOG.info("id:" + a + b);"#, "id:<*>", 1),
        (r#"LOG.info("flag " + true + " n " + 3);"#, "flag true n 3", 0),
        (r#"LOG.info("user {} logged in from {}", user.getName(), addr);"#, "user <*> logged in from <*>", 2),
        (r#"LOG.debug("state " + (ok ? "up" : "down"));"#, "state <*>", 1),
        (r#"LOG.info("ch " + 'x');"#, "ch x", 0),
        (r#"LOG.warn("Retry {} of {}: " + reason, i, max);"#, "Retry <*> of <*>: <*>", 3),
    ];

    #[test]
    fn golden_table() {
        for (src, want, n) in GOLDEN {
            let (pattern, kinds) = extract_template(&call_of(src)).unwrap();
            assert_eq!(&pattern, want, "{src}");
            assert_eq!(kinds.len(), *n, "{src}");
            assert_eq!(pattern.matches(PLACEHOLDER).count(), kinds.len(), "{src}");
        }
    }

    #[test]
    fn extraction_is_idempotent() {
        for (_, want, _) in GOLDEN {
            let lit = want.replace('\\', "\\\\").replace('"', "\\\"");
            // A rendered pattern used as a literal message maps to itself.
            let (again, _) = extract_template(&call_of(&format!("LOG.info(\"{lit}\");"))).unwrap();
            assert_eq!(&again, want);
        }
    }

    #[test]
    fn missing_message_is_skipped() {
        assert!(extract_template(&call_of("LOG.info();")).is_err());
    }

    #[test]
    fn kinds_from_names() {
        let (_, k) = extract_template(&call_of(r#"LOG.info("{} {} {} {} {}", blockId, remoteAddr, srcPath, 3, thing);"#)).unwrap();
        use PlaceholderKind::*;
        assert_eq!(k, [Identifier, Address, Path, Numeric, Generic]);
        let (_, k) = extract_template(&call_of(r#"LOG.info("n=%d", thing);"#)).unwrap();
        assert_eq!(k, [Numeric]);
        assert_eq!(split_words("getHTTPStatus_code"), ["get", "http", "status", "code"]);
    }

    #[test]
    fn dump_round_trips() {
        let t = LogTemplate {
            template_id: 1,
            pattern: "Received block <*>".into(),
            level: Level::Info,
            method_id: MethodId("a.B.c/0".into()),
            line: 7,
            node_id: 3,
            placeholder_kinds: vec![PlaceholderKind::Identifier],
        };
        let table = TemplateTable::from_templates(vec![t], vec![]);
        let text = table.dump();
        assert_eq!(text, "1\tINFO\ta.B.c/0\t7\tReceived block <*>\n");
        let rows = parse_dump(&text).unwrap();
        assert_eq!(rows[0].pattern, "Received block <*>");
        assert_eq!(parse_dump("1\tINFO\tx").unwrap_err().0, 1);
    }
}
