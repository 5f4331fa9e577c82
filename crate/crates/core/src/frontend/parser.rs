//! Recursive-descent parser for the class-based source subset.
//!
//! The parser is deliberately forgiving inside method bodies: a statement it
//! cannot understand is kept as an `other-statement` node carrying its source
//! text, and parsing resumes at the next statement boundary. Declaration-level
//! syntax errors abort the file.

use super::ast::*;
use super::lexer::{tokenize, LexError, Token, TokenKind};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError { line: e.line, col: e.col, message: e.message }
    }
}

type PResult<T> = Result<T, ParseError>;

const MODIFIERS: &[&str] = &[
    "public", "protected", "private", "static", "final", "abstract", "native", "synchronized",
    "transient", "volatile", "strictfp", "default", "sealed", "non-sealed",
];

const PRIMITIVES: &[&str] = &["int", "long", "short", "byte", "char", "boolean", "float", "double", "void"];

const STATEMENT_KEYWORDS: &[&str] = &[
    "if", "else", "while", "do", "for", "switch", "case", "try", "catch", "finally", "return",
    "throw", "break", "continue", "new", "instanceof", "assert", "yield",
];

/// Parses one file into its type declarations (nested types become their own units).
pub fn parse_file(path: &str, src: &str) -> PResult<Vec<SourceUnit>> {
    let toks = tokenize(src)?;
    let mut p = Parser { src, toks, pos: 0 };
    p.compilation_unit(path)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

/// Method whose body is parsed after every field of its class is known.
struct PendingBody {
    unit: usize,
    method: usize,
    body_start: usize,
}

#[derive(Clone)]
struct ClassCtx {
    qualified: String,
    superclass: Option<String>,
    /// Own fields first, then enclosing classes' fields.
    fields: Vec<BTreeMap<String, String>>,
    imports: BTreeMap<String, String>,
    /// Simple names of types declared in this file.
    local_types: BTreeMap<String, String>,
}

impl<'a> Parser<'a> {
    // ---- token helpers ----

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Token> {
        self.toks.get(self.pos + k)
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn at_ident(&self, w: &str) -> bool {
        self.peek().is_some_and(|t| t.is_ident(w))
    }

    fn bump(&mut self) -> PResult<Token> {
        let t = self.peek().cloned().ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, w: &str) -> bool {
        if self.at_ident(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Token> {
        if self.at_punct(p) {
            self.bump()
        } else {
            Err(self.err(&format!("expected `{p}`")))
        }
    }

    fn expect_ident(&mut self) -> PResult<String> {
        match self.peek().and_then(Token::ident) {
            Some(w) => {
                let w = w.to_string();
                self.pos += 1;
                Ok(w)
            }
            None => Err(self.err("expected identifier")),
        }
    }

    fn err(&self, message: &str) -> ParseError {
        let (line, col, found) = match self.peek() {
            Some(t) => (t.line, t.col, format!(", found `{}`", t.kind)),
            None => {
                let last = self.toks.last();
                (last.map_or(1, |t| t.line), last.map_or(1, |t| t.col), ", found end of file".into())
            }
        };
        ParseError { line, col, message: format!("{message}{found}") }
    }

    fn eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Index of the token closing the group opened at `open_idx`.
    fn matching(&self, open_idx: usize) -> PResult<usize> {
        let (open, close) = match &self.toks[open_idx].kind {
            TokenKind::Punct("(") => ("(", ")"),
            TokenKind::Punct("{") => ("{", "}"),
            TokenKind::Punct("[") => ("[", "]"),
            _ => return Err(self.err("expected group opener")),
        };
        let mut depth = 0usize;
        for (i, t) in self.toks.iter().enumerate().skip(open_idx) {
            if t.is_punct(open) {
                depth += 1;
            } else if t.is_punct(close) {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
        }
        let t = &self.toks[open_idx];
        Err(ParseError { line: t.line, col: t.col, message: format!("unbalanced `{open}`") })
    }

    fn skip_group(&mut self) -> PResult<()> {
        let end = self.matching(self.pos)?;
        self.pos = end + 1;
        Ok(())
    }

    /// Skips `<...>` counting angle brackets only.
    fn skip_angles(&mut self) -> PResult<()> {
        let mut depth = 0i32;
        loop {
            let t = self.bump()?;
            if t.is_punct("<") {
                depth += 1;
            } else if t.is_punct(">") {
                depth -= 1;
                if depth == 0 {
                    return Ok(());
                }
            } else if t.is_punct(";") || t.is_punct("{") {
                return Err(self.err("unterminated type arguments"));
            }
        }
    }

    fn text(&self, from: usize, to_exclusive: usize) -> &'a str {
        if from >= to_exclusive {
            return "";
        }
        &self.src[self.toks[from].start..self.toks[to_exclusive - 1].end]
    }

    fn compact_text(&self, from: usize, to_exclusive: usize) -> String {
        self.text(from, to_exclusive).split_whitespace().collect()
    }

    fn spaced_text(&self, from: usize, to_exclusive: usize) -> String {
        normalize_ws(self.text(from, to_exclusive))
    }

    fn pos_of(&self, from: usize, to_exclusive: usize) -> Pos {
        let first = &self.toks[from.min(self.toks.len() - 1)];
        let last = &self.toks[to_exclusive.saturating_sub(1).max(from).min(self.toks.len() - 1)];
        Pos { line: first.line, end_line: last.line, col: first.col }
    }

    fn span_of(&self, from: usize, to_exclusive: usize) -> Span {
        self.pos_of(from, to_exclusive).into()
    }

    // ---- declarations ----

    fn compilation_unit(&mut self, path: &str) -> PResult<Vec<SourceUnit>> {
        let mut package = String::new();
        let mut imports = BTreeMap::new();
        self.skip_annotations()?;
        if self.eat_ident("package") {
            let start = self.pos;
            while !self.at_punct(";") {
                self.bump()?;
            }
            package = self.compact_text(start, self.pos);
            self.expect_punct(";")?;
        }
        while self.at_ident("import") {
            self.bump()?;
            let is_static = self.eat_ident("static");
            let start = self.pos;
            while !self.at_punct(";") {
                self.bump()?;
            }
            let name = self.compact_text(start, self.pos);
            self.expect_punct(";")?;
            if !is_static && !name.ends_with(".*") {
                let simple = name.rsplit('.').next().unwrap_or(&name).to_string();
                imports.insert(simple, name);
            }
        }

        let mut units = Vec::new();
        let mut ctxs = Vec::new();
        let mut pending = Vec::new();
        while !self.eof() {
            if self.eat_punct(";") {
                continue;
            }
            self.type_decl(path, &package, &imports, None, &mut units, &mut ctxs, &mut pending)?;
        }

        let local_types: BTreeMap<String, String> =
            units.iter().map(|u| (u.simple_name.clone(), u.qualified_type_name.clone())).collect();
        for ctx in &mut ctxs {
            ctx.local_types = local_types.clone();
        }
        for pb in pending {
            let ctx = ctxs[pb.unit].clone();
            self.pos = pb.body_start;
            let params = units[pb.unit].methods[pb.method].params.clone();
            let body = {
                let mut bp = BodyParser { p: self, ctx: &ctx, scopes: vec![] };
                bp.method_body(&params)?
            };
            units[pb.unit].methods[pb.method].body = Some(body);
        }
        Ok(units)
    }

    fn skip_annotations(&mut self) -> PResult<()> {
        while self.at_punct("@") && !self.peek_at(1).is_some_and(|t| t.is_ident("interface")) {
            self.bump()?;
            self.expect_ident()?;
            while self.at_punct(".") {
                self.bump()?;
                self.expect_ident()?;
            }
            if self.at_punct("(") {
                self.skip_group()?;
            }
        }
        Ok(())
    }

    fn skip_modifiers(&mut self) -> PResult<()> {
        loop {
            self.skip_annotations()?;
            match self.peek().and_then(Token::ident) {
                Some(w) if MODIFIERS.contains(&w) => {
                    self.pos += 1;
                }
                // `non-sealed` lexes as three tokens.
                Some("non") if self.peek_at(1).is_some_and(|t| t.is_punct("-")) => {
                    self.pos += 3;
                }
                _ => return Ok(()),
            }
        }
    }

    fn at_type_decl_keyword(&self) -> bool {
        match self.peek().and_then(Token::ident) {
            Some("class" | "interface" | "enum") => true,
            Some("record") => self.peek_at(1).is_some_and(|t| t.ident().is_some())
                && self.peek_at(2).is_some_and(|t| t.is_punct("(") || t.is_punct("<")),
            _ => self.at_punct("@") && self.peek_at(1).is_some_and(|t| t.is_ident("interface")),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn type_decl(
        &mut self,
        path: &str,
        package: &str,
        imports: &BTreeMap<String, String>,
        outer: Option<&ClassCtx>,
        units: &mut Vec<SourceUnit>,
        ctxs: &mut Vec<ClassCtx>,
        pending: &mut Vec<PendingBody>,
    ) -> PResult<()> {
        self.skip_modifiers()?;
        if self.at_punct("@") {
            // Annotation type declaration: nothing executable inside.
            self.bump()?;
            self.bump()?;
            self.expect_ident()?;
            return self.skip_group();
        }
        let kind = self.expect_ident()?;
        if !matches!(kind.as_str(), "class" | "interface" | "enum" | "record") {
            return Err(ParseError {
                line: self.toks[self.pos - 1].line,
                col: self.toks[self.pos - 1].col,
                message: format!("expected type declaration, found `{kind}`"),
            });
        }
        let simple = self.expect_ident()?;
        let qualified = match outer {
            Some(o) => format!("{}.{simple}", o.qualified),
            None if package.is_empty() => simple.clone(),
            None => format!("{package}.{simple}"),
        };
        if self.at_punct("<") {
            self.skip_angles()?;
        }
        let mut fields = BTreeMap::new();
        if kind == "record" && self.at_punct("(") {
            let close = self.matching(self.pos)?;
            self.bump()?;
            while self.pos < close {
                self.skip_modifiers()?;
                let ty = self.parse_type()?;
                let name = self.expect_ident()?;
                fields.insert(name, ty);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.pos = close + 1;
        }
        let mut superclass = None;
        let mut interfaces = Vec::new();
        loop {
            if self.eat_ident("extends") {
                let list = self.type_list()?;
                if kind == "interface" {
                    interfaces.extend(list);
                } else {
                    superclass = list.into_iter().next();
                }
            } else if self.eat_ident("implements") {
                interfaces.extend(self.type_list()?);
            } else if self.eat_ident("permits") {
                self.type_list()?;
            } else {
                break;
            }
        }
        let qualify = |t: &str| qualify_with(imports, t);
        let superclass = superclass.map(|s| qualify(&erase(&s)));
        let interfaces = interfaces.iter().map(|s| qualify(&erase(s))).collect();
        self.expect_punct("{")?;

        let unit_idx = units.len();
        units.push(SourceUnit {
            path: path.to_string(),
            qualified_type_name: qualified.clone(),
            simple_name: simple.clone(),
            package: package.to_string(),
            superclass: superclass.clone(),
            interfaces,
            fields: BTreeMap::new(),
            imports: imports.clone(),
            methods: Vec::new(),
        });
        let mut ctx = ClassCtx {
            qualified: qualified.clone(),
            superclass,
            fields: vec![],
            imports: imports.clone(),
            local_types: BTreeMap::new(),
        };
        ctxs.push(ctx.clone());

        if kind == "enum" {
            self.skip_enum_constants()?;
        }

        let mut nested = Vec::new();
        while !self.at_punct("}") {
            if self.eof() {
                return Err(self.err("unterminated type body"));
            }
            if self.eat_punct(";") {
                continue;
            }
            if self.at_punct("{") {
                self.skip_group()?;
                continue;
            }
            if self.at_ident("static") && self.peek_at(1).is_some_and(|t| t.is_punct("{")) {
                self.bump()?;
                self.skip_group()?;
                continue;
            }
            let member_start = self.pos;
            self.skip_modifiers()?;
            if self.at_type_decl_keyword() {
                self.pos = member_start;
                nested.push(self.pos);
                // Parsed after this class so the nested context sees all outer fields.
                self.skip_modifiers()?;
                if self.at_punct("@") {
                    self.bump()?;
                }
                while !self.at_punct("{") {
                    if self.at_punct("(") {
                        self.skip_group()?;
                    } else {
                        self.bump()?;
                    }
                }
                self.skip_group()?;
                continue;
            }
            self.member(member_start, &simple, &qualified, unit_idx, units, &mut fields, pending)?;
        }
        self.expect_punct("}")?;
        let end = self.pos;

        units[unit_idx].fields = fields.clone();
        ctx.fields.push(fields);
        if let Some(o) = outer {
            ctx.fields.extend(o.fields.iter().cloned());
        }
        ctxs[unit_idx] = ctx.clone();

        for start in nested {
            self.pos = start;
            self.type_decl(path, package, imports, Some(&ctx), units, ctxs, pending)?;
        }
        self.pos = end;
        Ok(())
    }

    fn skip_enum_constants(&mut self) -> PResult<()> {
        loop {
            if self.at_punct("}") {
                return Ok(());
            }
            if self.eat_punct(";") {
                return Ok(());
            }
            if self.at_punct("(") || self.at_punct("{") {
                self.skip_group()?;
            } else {
                self.bump()?;
            }
        }
    }

    fn type_list(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.parse_type()?];
        while self.eat_punct(",") {
            out.push(self.parse_type()?);
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn member(
        &mut self,
        member_start: usize,
        class_simple: &str,
        class_qualified: &str,
        unit_idx: usize,
        units: &mut [SourceUnit],
        fields: &mut BTreeMap<String, String>,
        pending: &mut Vec<PendingBody>,
    ) -> PResult<()> {
        if self.at_punct("<") {
            self.skip_angles()?;
        }
        let is_ctor = self.at_ident(class_simple) && self.peek_at(1).is_some_and(|t| t.is_punct("("));
        let (name, return_type) = if is_ctor {
            self.bump()?;
            ("<init>".to_string(), None)
        } else {
            let ty = self.parse_type()?;
            (self.expect_ident()?, Some(ty))
        };

        if !self.at_punct("(") {
            // Field declaration, possibly several declarators.
            let ty = return_type.unwrap_or_default();
            let mut name = name;
            loop {
                let mut this_ty = ty.clone();
                while self.at_punct("[") {
                    self.bump()?;
                    self.expect_punct("]")?;
                    this_ty.push_str("[]");
                }
                fields.insert(name, this_ty);
                if self.eat_punct("=") {
                    self.skip_initializer()?;
                }
                if self.eat_punct(",") {
                    name = self.expect_ident()?;
                    continue;
                }
                self.expect_punct(";")?;
                return Ok(());
            }
        }

        let params = self.params()?;
        while self.at_punct("[") {
            self.bump()?;
            self.expect_punct("]")?;
        }
        if self.eat_ident("throws") {
            self.type_list()?;
        }
        if self.eat_ident("default") {
            // Annotation element default value.
            self.skip_initializer()?;
        }
        let method_id = MethodId::new(class_qualified, &name, params.len());
        let line = self.toks[member_start].line;
        let has_body = self.at_punct("{");
        let body_start = self.pos;
        if has_body {
            self.skip_group()?;
        } else {
            self.expect_punct(";")?;
        }
        let decl_end = self.pos;
        let source_text = self.text(member_start, decl_end).to_string();
        let unit = &mut units[unit_idx];
        unit.methods.push(MethodDecl {
            method_id,
            type_name: class_qualified.to_string(),
            name,
            params,
            return_type,
            body: None,
            source_text,
            path: unit.path.clone(),
            line,
        });
        if has_body {
            pending.push(PendingBody { unit: unit_idx, method: unit.methods.len() - 1, body_start });
        }
        Ok(())
    }

    fn skip_initializer(&mut self) -> PResult<()> {
        while !(self.at_punct(",") || self.at_punct(";")) {
            if self.eof() {
                return Err(self.err("unterminated initializer"));
            }
            if self.at_punct("(") || self.at_punct("{") || self.at_punct("[") {
                self.skip_group()?;
            } else {
                self.bump()?;
            }
        }
        Ok(())
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if self.eat_punct(")") {
            return Ok(out);
        }
        loop {
            self.skip_modifiers()?;
            let mut ty = self.parse_type()?;
            if self.eat_punct("...") {
                ty.push_str("...");
            }
            // Receiver parameter `Foo this`.
            if self.eat_ident("this") {
                if !self.eat_punct(",") {
                    self.expect_punct(")")?;
                    return Ok(out);
                }
                continue;
            }
            let name = self.expect_ident()?;
            while self.at_punct("[") {
                self.bump()?;
                self.expect_punct("]")?;
                ty.push_str("[]");
            }
            out.push(Param { name, ty });
            if self.eat_punct(")") {
                return Ok(out);
            }
            self.expect_punct(",")?;
        }
    }

    /// Parses a type reference and returns its whitespace-free text.
    fn parse_type(&mut self) -> PResult<String> {
        let start = self.pos;
        self.skip_annotations()?;
        if self.eat_punct("?") {
            if self.eat_ident("extends") || self.eat_ident("super") {
                self.parse_type()?;
            }
            return Ok(self.compact_text(start, self.pos));
        }
        let first = self.expect_ident()?;
        if STATEMENT_KEYWORDS.contains(&first.as_str()) {
            self.pos = start;
            return Err(self.err("expected type"));
        }
        if self.at_punct("<") {
            self.type_args()?;
        }
        while self.at_punct(".") && self.peek_at(1).is_some_and(|t| t.ident().is_some()) {
            self.bump()?;
            self.bump()?;
            if self.at_punct("<") {
                self.type_args()?;
            }
        }
        while self.at_punct("[") && self.peek_at(1).is_some_and(|t| t.is_punct("]")) {
            self.bump()?;
            self.bump()?;
        }
        Ok(self.compact_text(start, self.pos))
    }

    fn type_args(&mut self) -> PResult<()> {
        self.expect_punct("<")?;
        if self.eat_punct(">") {
            return Ok(());
        }
        loop {
            self.parse_type()?;
            if self.eat_punct(">") {
                return Ok(());
            }
            self.expect_punct(",")?;
        }
    }

    /// Speculatively checks for `Type name` followed by a declarator terminator.
    fn looks_like_declaration(&mut self) -> bool {
        let save = self.pos;
        let ok = (|| {
            let ty = self.parse_type().ok()?;
            if ty == "var" && self.peek().and_then(Token::ident).is_none() {
                return None;
            }
            let name = self.peek()?.ident()?.to_string();
            if name == "instanceof" {
                return None;
            }
            let after = self.peek_at(1)?;
            (after.is_punct("=") || after.is_punct(";") || after.is_punct(",") || after.is_punct(":") || after.is_punct("["))
                .then_some(())
        })()
        .is_some();
        self.pos = save;
        ok
    }
}

/// Strips generic arguments and array suffixes: `Map<K,V>[]` → `Map`.
pub fn erase(ty: &str) -> String {
    let mut out = String::new();
    let mut depth = 0;
    for c in ty.chars() {
        match c {
            '<' => depth += 1,
            '>' => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out.trim_end_matches("...").trim_end_matches("[]").trim_end_matches("[]").to_string()
}

fn qualify_with(imports: &BTreeMap<String, String>, ty: &str) -> String {
    let head = ty.split('.').next().unwrap_or(ty);
    match imports.get(head) {
        Some(q) if head == ty => q.clone(),
        Some(q) => format!("{q}{}", &ty[head.len()..]),
        None => ty.to_string(),
    }
}

pub(crate) fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---- method bodies ----

struct BodyParser<'p, 'a> {
    p: &'p mut Parser<'a>,
    ctx: &'p ClassCtx,
    scopes: Vec<HashMap<String, String>>,
}

fn node(kind: NodeKind, span: Span, detail: Detail, children: Vec<AstNode>) -> AstNode {
    AstNode { id: 0, kind, span, detail, children }
}

impl BodyParser<'_, '_> {
    fn method_body(&mut self, params: &[Param]) -> PResult<AstNode> {
        self.scopes.push(params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect());
        let mut root = self.block()?;
        self.scopes.pop();
        root.renumber();
        Ok(root)
    }

    fn declare(&mut self, name: &str, ty: &str) {
        if let Some(s) = self.scopes.last_mut() {
            s.insert(name.to_string(), ty.to_string());
        }
    }

    fn lookup_var(&self, name: &str) -> Option<String> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).cloned())
            .or_else(|| self.ctx.fields.iter().find_map(|f| f.get(name).cloned()))
    }

    fn qualify(&self, ty: &str) -> String {
        let erased = erase(ty);
        if let Some(q) = self.ctx.local_types.get(&erased) {
            return q.clone();
        }
        qualify_with(&self.ctx.imports, &erased)
    }

    /// Parses `{ ... }` into a sequence node.
    fn block(&mut self) -> PResult<AstNode> {
        let start = self.p.pos;
        self.p.expect_punct("{")?;
        self.scopes.push(HashMap::new());
        let mut children = Vec::new();
        while !self.p.at_punct("}") {
            if self.p.eof() {
                return Err(self.p.err("unterminated block"));
            }
            self.statement(&mut children)?;
        }
        self.p.bump()?;
        self.scopes.pop();
        Ok(node(NodeKind::Sequence, self.p.span_of(start, self.p.pos), Detail::None, children))
    }

    /// One statement, flattening a block body into the returned list.
    fn body_statements(&mut self) -> PResult<Vec<AstNode>> {
        if self.p.at_punct("{") {
            Ok(self.block()?.children)
        } else {
            self.scopes.push(HashMap::new());
            let mut out = Vec::new();
            self.statement(&mut out)?;
            self.scopes.pop();
            Ok(out)
        }
    }

    fn statement(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        let start = self.p.pos;
        let scope_depth = self.scopes.len();
        let mark = out.len();
        match self.statement_inner(out) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.scopes.truncate(scope_depth);
                out.truncate(mark);
                self.p.pos = start;
                self.recover()?;
                let end = self.p.pos.max(start + 1);
                self.p.pos = end;
                let text = self.p.spaced_text(start, end);
                log::debug!("unparsed statement at {}:{}: {}", e.line, e.col, e.message);
                out.push(node(
                    NodeKind::OtherStatement,
                    self.p.span_of(start, end),
                    Detail::Text(text),
                    vec![],
                ));
                Ok(())
            }
        }
    }

    /// Moves past the current statement: to the next top-level `;`, or past a
    /// group when the statement is block-shaped.
    fn recover(&mut self) -> PResult<()> {
        loop {
            let Some(t) = self.p.peek() else { return Ok(()) };
            if t.is_punct("}") {
                return Ok(());
            }
            if t.is_punct(";") {
                self.p.bump()?;
                return Ok(());
            }
            if t.is_punct("{") {
                self.p.skip_group()?;
                if !self.p.at_ident("else") && !self.p.at_ident("catch") && !self.p.at_ident("finally") && !self.p.at_ident("while") {
                    return Ok(());
                }
                continue;
            }
            if t.is_punct("(") || t.is_punct("[") {
                self.p.skip_group()?;
                continue;
            }
            self.p.bump()?;
        }
    }

    fn paren_condition(&mut self, out: &mut Vec<AstNode>) -> PResult<(String, Expr)> {
        self.p.expect_punct("(")?;
        let start = self.p.pos;
        let e = self.expr()?;
        let text = self.p.spaced_text(start, self.p.pos);
        self.p.expect_punct(")")?;
        self.lower(&e, out);
        Ok((text, e))
    }

    fn statement_inner(&mut self, out: &mut Vec<AstNode>) -> PResult<()> {
        let start = self.p.pos;
        let Some(tok) = self.p.peek().cloned() else { return Err(self.p.err("expected statement")) };

        if tok.is_punct(";") {
            self.p.bump()?;
            return Ok(());
        }
        if tok.is_punct("{") {
            out.push(self.block()?);
            return Ok(());
        }
        // Labeled statement.
        if tok.ident().is_some() && self.p.peek_at(1).is_some_and(|t| t.is_punct(":")) && !tok.is_ident("default") {
            let label = self.p.expect_ident()?;
            self.p.bump()?;
            let mark = out.len();
            self.statement(out)?;
            if let Some(last) = out[mark..].last_mut() {
                if let Detail::Loop { label: l, .. } = &mut last.detail {
                    *l = Some(label);
                }
            }
            return Ok(());
        }

        match tok.ident() {
            Some("if") => {
                self.p.bump()?;
                let (cond, _) = self.paren_condition(out)?;
                let then_start = self.p.pos;
                let then_children = self.body_statements()?;
                let then = node(NodeKind::Sequence, self.p.span_of(then_start, self.p.pos), Detail::None, then_children);
                let mut children = vec![then];
                if self.p.eat_ident("else") {
                    let else_start = self.p.pos;
                    let else_children = self.body_statements()?;
                    children.push(node(
                        NodeKind::ElseBranch,
                        self.p.span_of(else_start, self.p.pos),
                        Detail::None,
                        else_children,
                    ));
                }
                out.push(node(NodeKind::If, self.p.span_of(start, self.p.pos), Detail::Condition(cond), children));
                Ok(())
            }
            Some("while") => {
                self.p.bump()?;
                let (cond, _) = self.paren_condition(out)?;
                let body = self.body_statements()?;
                out.push(node(
                    NodeKind::Loop,
                    self.p.span_of(start, self.p.pos),
                    Detail::Loop { form: LoopForm::While, condition: Some(cond), label: None },
                    body,
                ));
                Ok(())
            }
            Some("do") => {
                self.p.bump()?;
                let mut body = self.body_statements()?;
                if !self.p.eat_ident("while") {
                    return Err(self.p.err("expected `while` after do body"));
                }
                // Condition calls run after each pass through the body.
                let (cond, _) = self.paren_condition(&mut body)?;
                self.p.expect_punct(";")?;
                out.push(node(
                    NodeKind::Loop,
                    self.p.span_of(start, self.p.pos),
                    Detail::Loop { form: LoopForm::DoWhile, condition: Some(cond), label: None },
                    body,
                ));
                Ok(())
            }
            Some("for") => self.for_statement(start, out),
            Some("switch") => self.switch_statement(start, out),
            Some("try") => self.try_statement(start, out),
            Some("return") => {
                self.p.bump()?;
                let mut text = String::new();
                if !self.p.at_punct(";") {
                    let s = self.p.pos;
                    let e = self.expr()?;
                    text = self.p.spaced_text(s, self.p.pos);
                    self.lower(&e, out);
                }
                self.p.expect_punct(";")?;
                out.push(node(NodeKind::Return, self.p.span_of(start, self.p.pos), Detail::Text(text), vec![]));
                Ok(())
            }
            Some("throw") => {
                self.p.bump()?;
                let s = self.p.pos;
                let e = self.expr()?;
                let text = self.p.spaced_text(s, self.p.pos);
                self.lower(&e, out);
                self.p.expect_punct(";")?;
                out.push(node(NodeKind::Throw, self.p.span_of(start, self.p.pos), Detail::Text(text), vec![]));
                Ok(())
            }
            Some(w @ ("break" | "continue")) => {
                let kind = if w == "break" { JumpKind::Break } else { JumpKind::Continue };
                self.p.bump()?;
                let label = match self.p.peek().and_then(Token::ident) {
                    Some(l) => {
                        let l = l.to_string();
                        self.p.bump()?;
                        Some(l)
                    }
                    None => None,
                };
                self.p.expect_punct(";")?;
                out.push(node(
                    NodeKind::OtherStatement,
                    self.p.span_of(start, self.p.pos),
                    Detail::Jump { kind, label },
                    vec![],
                ));
                Ok(())
            }
            Some("synchronized") if self.p.peek_at(1).is_some_and(|t| t.is_punct("(")) => {
                self.p.bump()?;
                self.paren_condition(out)?;
                out.push(self.block()?);
                Ok(())
            }
            Some("assert" | "yield") => self.opaque_statement(start, out),
            Some("class" | "interface" | "enum" | "abstract" | "static") => {
                // Local type declaration.
                while !self.p.at_punct("{") {
                    self.p.bump()?;
                }
                self.p.skip_group()?;
                out.push(node(
                    NodeKind::OtherStatement,
                    self.p.span_of(start, self.p.pos),
                    Detail::Text("local type declaration".into()),
                    vec![],
                ));
                Ok(())
            }
            Some("final") | None if tok.is_ident("final") || tok.is_punct("@") => {
                self.p.skip_modifiers()?;
                self.local_declaration(start, out)
            }
            _ => {
                if self.p.looks_like_declaration() {
                    return self.local_declaration(start, out);
                }
                let e = self.expr()?;
                self.p.expect_punct(";")?;
                let mark = out.len();
                self.lower(&e, out);
                if out.len() == mark {
                    out.push(node(
                        NodeKind::OtherStatement,
                        self.p.span_of(start, self.p.pos),
                        Detail::Text(self.p.spaced_text(start, self.p.pos)),
                        vec![],
                    ));
                }
                Ok(())
            }
        }
    }

    fn opaque_statement(&mut self, start: usize, out: &mut Vec<AstNode>) -> PResult<()> {
        self.recover()?;
        out.push(node(
            NodeKind::OtherStatement,
            self.p.span_of(start, self.p.pos),
            Detail::Text(self.p.spaced_text(start, self.p.pos)),
            vec![],
        ));
        Ok(())
    }

    fn local_declaration(&mut self, start: usize, out: &mut Vec<AstNode>) -> PResult<()> {
        let ty = self.p.parse_type()?;
        let mark = out.len();
        loop {
            let name = self.p.expect_ident()?;
            let mut this_ty = ty.clone();
            while self.p.eat_punct("[") {
                self.p.expect_punct("]")?;
                this_ty.push_str("[]");
            }
            if self.p.eat_punct("=") {
                let init = if self.p.at_punct("{") { self.array_init("")? } else { self.expr()? };
                if this_ty == "var" {
                    if let Expr::New { ty, .. } = &init {
                        this_ty = ty.clone();
                    }
                }
                self.lower(&init, out);
            }
            self.declare(&name, &this_ty);
            if !self.p.eat_punct(",") {
                break;
            }
        }
        self.p.expect_punct(";")?;
        if out.len() == mark {
            out.push(node(
                NodeKind::OtherStatement,
                self.p.span_of(start, self.p.pos),
                Detail::Text(self.p.spaced_text(start, self.p.pos)),
                vec![],
            ));
        }
        Ok(())
    }

    fn for_statement(&mut self, start: usize, out: &mut Vec<AstNode>) -> PResult<()> {
        self.p.bump()?;
        self.p.expect_punct("(")?;
        self.scopes.push(HashMap::new());

        // for-each: `[final] Type name : expr`
        let save = self.p.pos;
        self.p.skip_modifiers()?;
        let foreach = (|| -> Option<(String, String)> {
            let ty = self.p.parse_type().ok()?;
            let name = self.p.expect_ident().ok()?;
            self.p.at_punct(":").then_some((ty, name))
        })();
        if let Some((ty, name)) = foreach {
            self.p.bump()?;
            let iter_start = self.p.pos;
            let iter = self.expr()?;
            let iter_text = self.p.spaced_text(iter_start, self.p.pos);
            self.p.expect_punct(")")?;
            self.lower(&iter, out);
            self.declare(&name, &ty);
            let body = self.body_statements()?;
            self.scopes.pop();
            out.push(node(
                NodeKind::Loop,
                self.p.span_of(start, self.p.pos),
                Detail::Loop { form: LoopForm::ForEach, condition: Some(format!("{name} : {iter_text}")), label: None },
                body,
            ));
            return Ok(());
        }
        self.p.pos = save;

        // Classic three-part header.
        if !self.p.at_punct(";") {
            if self.p.looks_like_declaration() || self.p.at_ident("final") {
                self.p.skip_modifiers()?;
                let ty = self.p.parse_type()?;
                loop {
                    let name = self.p.expect_ident()?;
                    if self.p.eat_punct("=") {
                        let init = self.expr()?;
                        self.lower(&init, out);
                    }
                    self.declare(&name, &ty);
                    if !self.p.eat_punct(",") {
                        break;
                    }
                }
            } else {
                loop {
                    let e = self.expr()?;
                    self.lower(&e, out);
                    if !self.p.eat_punct(",") {
                        break;
                    }
                }
            }
        }
        self.p.expect_punct(";")?;
        let mut condition = None;
        if !self.p.at_punct(";") {
            let s = self.p.pos;
            let c = self.expr()?;
            condition = Some(self.p.spaced_text(s, self.p.pos));
            self.lower(&c, out);
        }
        self.p.expect_punct(";")?;
        let mut updates = Vec::new();
        if !self.p.at_punct(")") {
            loop {
                let e = self.expr()?;
                self.lower(&e, &mut updates);
                if !self.p.eat_punct(",") {
                    break;
                }
            }
        }
        self.p.expect_punct(")")?;
        let mut body = self.body_statements()?;
        body.extend(updates);
        self.scopes.pop();
        out.push(node(
            NodeKind::Loop,
            self.p.span_of(start, self.p.pos),
            Detail::Loop { form: LoopForm::For, condition, label: None },
            body,
        ));
        Ok(())
    }

    fn switch_statement(&mut self, start: usize, out: &mut Vec<AstNode>) -> PResult<()> {
        self.p.bump()?;
        let (selector, _) = self.paren_condition(out)?;
        self.p.expect_punct("{")?;
        self.scopes.push(HashMap::new());
        let mut cases = Vec::new();
        while !self.p.at_punct("}") {
            let case_start = self.p.pos;
            let labels = if self.p.eat_ident("default") {
                vec![]
            } else if self.p.eat_ident("case") {
                let mut labels = Vec::new();
                let mut label_start = self.p.pos;
                let mut depth = 0i32;
                loop {
                    let t = self.p.peek().ok_or_else(|| self.p.err("unterminated case label"))?;
                    if depth == 0 && (t.is_punct(":") || t.is_punct("->") || t.is_punct(",")) {
                        labels.push(self.p.spaced_text(label_start, self.p.pos));
                        if t.is_punct(",") {
                            self.p.bump()?;
                            label_start = self.p.pos;
                            continue;
                        }
                        break;
                    }
                    if t.is_punct("(") {
                        depth += 1;
                    } else if t.is_punct(")") {
                        depth -= 1;
                    }
                    self.p.bump()?;
                }
                labels
            } else {
                return Err(self.p.err("expected `case` or `default`"));
            };
            let mut body = Vec::new();
            if self.p.eat_punct("->") {
                if self.p.at_punct("{") {
                    body = self.block()?.children;
                } else if self.p.at_ident("throw") {
                    self.statement(&mut body)?;
                } else {
                    let e = self.expr()?;
                    self.p.expect_punct(";")?;
                    self.lower(&e, &mut body);
                }
                body.push(node(
                    NodeKind::OtherStatement,
                    self.p.span_of(self.p.pos - 1, self.p.pos),
                    Detail::Jump { kind: JumpKind::Break, label: None },
                    vec![],
                ));
            } else {
                self.p.expect_punct(":")?;
                while !(self.p.at_ident("case") || self.p.at_ident("default") && !self.p.peek_at(1).is_some_and(|t| t.is_punct(".")) || self.p.at_punct("}")) {
                    if self.p.eof() {
                        return Err(self.p.err("unterminated switch"));
                    }
                    self.statement(&mut body)?;
                }
            }
            cases.push(node(
                NodeKind::SwitchCase,
                self.p.span_of(case_start, self.p.pos),
                Detail::Case { labels },
                body,
            ));
        }
        self.p.bump()?;
        self.scopes.pop();
        out.push(node(NodeKind::Switch, self.p.span_of(start, self.p.pos), Detail::Switch { selector }, cases));
        Ok(())
    }

    fn try_statement(&mut self, start: usize, out: &mut Vec<AstNode>) -> PResult<()> {
        self.p.bump()?;
        self.scopes.push(HashMap::new());
        let mut resource_nodes = Vec::new();
        if self.p.at_punct("(") {
            self.p.bump()?;
            while !self.p.at_punct(")") {
                if self.p.looks_like_declaration() || self.p.at_ident("final") {
                    self.p.skip_modifiers()?;
                    let ty = self.p.parse_type()?;
                    let name = self.p.expect_ident()?;
                    self.p.expect_punct("=")?;
                    let init = self.expr()?;
                    self.lower(&init, &mut resource_nodes);
                    self.declare(&name, &ty);
                } else {
                    let e = self.expr()?;
                    self.lower(&e, &mut resource_nodes);
                }
                if !self.p.eat_punct(";") {
                    break;
                }
            }
            self.p.expect_punct(")")?;
        }
        let body_start = self.p.pos;
        let mut body = self.block()?;
        if !resource_nodes.is_empty() {
            resource_nodes.append(&mut body.children);
            body.children = resource_nodes;
        }
        body.span = self.p.span_of(body_start, self.p.pos);
        self.scopes.pop();
        let mut children = vec![body];
        while self.p.at_ident("catch") {
            let catch_start = self.p.pos;
            self.p.bump()?;
            self.p.expect_punct("(")?;
            self.p.skip_modifiers()?;
            let mut types = vec![self.p.parse_type()?];
            while self.p.eat_punct("|") {
                types.push(self.p.parse_type()?);
            }
            let var = self.p.expect_ident()?;
            self.p.expect_punct(")")?;
            self.scopes.push(HashMap::from([(var.clone(), types[0].clone())]));
            let block = self.block()?;
            self.scopes.pop();
            children.push(node(
                NodeKind::Catch,
                self.p.span_of(catch_start, self.p.pos),
                Detail::Catch { types, var },
                block.children,
            ));
        }
        if self.p.at_ident("finally") {
            let fin_start = self.p.pos;
            self.p.bump()?;
            let block = self.block()?;
            children.push(node(NodeKind::Sequence, self.p.span_of(fin_start, self.p.pos), Detail::Finally, block.children));
        }
        out.push(node(NodeKind::Try, self.p.span_of(start, self.p.pos), Detail::None, children));
        Ok(())
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        self.assignment()
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let lhs = self.ternary()?;
        const OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<="];
        if let Some(op) = OPS.iter().find(|op| self.p.at_punct(op)) {
            self.p.bump()?;
            let value = self.assignment()?;
            return Ok(Expr::Assign { op: op.to_string(), target: Box::new(lhs), value: Box::new(value) });
        }
        // `>>=` and `>>>=` arrive as `>` ... `>=`.
        if self.p.at_punct(">") {
            let mut k = 0;
            while self.p.peek_at(k).is_some_and(|t| t.is_punct(">")) {
                k += 1;
            }
            if self.p.peek_at(k).is_some_and(|t| t.is_punct(">=")) && self.adjacent(k + 1) {
                self.p.pos += k + 1;
                let value = self.assignment()?;
                return Ok(Expr::Assign { op: ">>=".into(), target: Box::new(lhs), value: Box::new(value) });
            }
        }
        Ok(lhs)
    }

    /// True when the next `n` tokens touch each other.
    fn adjacent(&self, n: usize) -> bool {
        (1..n).all(|k| match (self.p.peek_at(k - 1), self.p.peek_at(k)) {
            (Some(a), Some(b)) => a.end == b.start,
            _ => false,
        })
    }

    fn ternary(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if self.p.eat_punct("?") {
            let then = self.expr()?;
            self.p.expect_punct(":")?;
            let otherwise = self.ternary()?;
            return Ok(Expr::Ternary { cond: Box::new(cond), then: Box::new(then), otherwise: Box::new(otherwise) });
        }
        Ok(cond)
    }

    fn binary_op(&self) -> Option<(String, u8, usize)> {
        let t = self.p.peek()?;
        let TokenKind::Punct(p) = &t.kind else {
            return t.is_ident("instanceof").then(|| ("instanceof".to_string(), 7, 1));
        };
        let prec = match *p {
            "||" => 1,
            "&&" => 2,
            "|" => 3,
            "^" => 4,
            "&" => 5,
            "==" | "!=" => 6,
            "<" | "<=" | ">=" => 7,
            ">" => {
                let mut k = 1;
                while k < 3 && self.p.peek_at(k).is_some_and(|t| t.is_punct(">")) && self.adjacent(k + 1) {
                    k += 1;
                }
                if k > 1 {
                    // Followed by `>=`: that's a compound assignment, not ours.
                    if self.p.peek_at(k).is_some_and(|t| t.is_punct(">=")) && self.adjacent(k + 1) {
                        return None;
                    }
                    return Some((">".repeat(k), 8, k));
                }
                7
            }
            "<<" => 8,
            "+" | "-" => 9,
            "*" | "/" | "%" => 10,
            _ => return None,
        };
        Some((p.to_string(), prec, 1))
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, prec, width)) = self.binary_op() {
            if prec < min_prec {
                break;
            }
            self.p.pos += width;
            if op == "instanceof" {
                self.p.eat_ident("final");
                let ty = self.p.parse_type()?;
                // Pattern binding.
                if let Some(name) = self.p.peek().and_then(Token::ident).map(str::to_string) {
                    if !STATEMENT_KEYWORDS.contains(&name.as_str()) {
                        self.p.bump()?;
                        self.declare(&name, &ty);
                    }
                }
                lhs = Expr::InstanceOf { expr: Box::new(lhs), ty };
                continue;
            }
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        for op in ["++", "--", "+", "-", "!", "~"] {
            if self.p.at_punct(op) {
                self.p.bump()?;
                let e = self.unary()?;
                return Ok(Expr::Unary { op: op.into(), expr: Box::new(e) });
            }
        }
        if self.p.at_punct("(") {
            if let Some(cast) = self.try_cast()? {
                return Ok(cast);
            }
        }
        let e = self.primary()?;
        self.postfix(e)
    }

    fn try_cast(&mut self) -> PResult<Option<Expr>> {
        let open = self.p.pos;
        let close = self.p.matching(open)?;
        if self.p.toks.get(close + 1).is_some_and(|t| t.is_punct("->")) {
            return Ok(None);
        }
        self.p.pos = open + 1;
        let ty = match self.p.parse_type() {
            Ok(ty) if self.p.pos == close => ty,
            _ => {
                self.p.pos = open;
                return Ok(None);
            }
        };
        let primitive = PRIMITIVES.contains(&ty.trim_end_matches("[]"));
        let next = self.p.toks.get(close + 1);
        let operand_follows = next.is_some_and(|t| match &t.kind {
            TokenKind::Ident(w) => w != "instanceof",
            TokenKind::Str(_) | TokenKind::Char(_) | TokenKind::Number(_) => true,
            TokenKind::Punct(p) => matches!(*p, "(" | "!" | "~") || (primitive && matches!(*p, "-" | "+")),
        });
        let looks_like_type = primitive || ty.chars().next().is_some_and(char::is_uppercase) || ty.contains('<');
        if !(operand_follows && looks_like_type) {
            self.p.pos = open;
            return Ok(None);
        }
        self.p.pos = close + 1;
        let e = self.unary()?;
        Ok(Some(Expr::Cast { ty, expr: Box::new(e) }))
    }

    fn opaque(&mut self, what: &str, start: usize) -> Expr {
        Expr::Opaque {
            what: what.to_string(),
            text: self.p.spaced_text(start, self.p.pos),
            pos: self.p.pos_of(start, self.p.pos),
        }
    }

    fn lambda_body(&mut self, start: usize) -> PResult<Expr> {
        self.p.expect_punct("->")?;
        if self.p.at_punct("{") {
            self.p.skip_group()?;
        } else {
            // Expression bodies are parsed only to find where they end.
            let save_scopes = self.scopes.len();
            self.expr()?;
            self.scopes.truncate(save_scopes);
        }
        Ok(self.opaque("lambda", start))
    }

    fn args(&mut self) -> PResult<(Vec<Expr>, Vec<String>)> {
        self.p.expect_punct("(")?;
        let mut args = Vec::new();
        let mut texts = Vec::new();
        if self.p.eat_punct(")") {
            return Ok((args, texts));
        }
        loop {
            let s = self.p.pos;
            args.push(self.expr()?);
            texts.push(self.p.spaced_text(s, self.p.pos));
            if self.p.eat_punct(")") {
                return Ok((args, texts));
            }
            self.p.expect_punct(",")?;
        }
    }

    fn array_init(&mut self, ty: &str) -> PResult<Expr> {
        self.p.expect_punct("{")?;
        let mut elems = Vec::new();
        while !self.p.at_punct("}") {
            elems.push(if self.p.at_punct("{") { self.array_init("")? } else { self.expr()? });
            if !self.p.eat_punct(",") {
                break;
            }
        }
        self.p.expect_punct("}")?;
        Ok(Expr::NewArray { ty: ty.to_string(), elems })
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.p.pos;
        let tok = self.p.bump()?;
        match &tok.kind {
            TokenKind::Str(s) => Ok(Expr::Literal(Literal::Str(s.clone()))),
            TokenKind::Char(s) => Ok(Expr::Literal(Literal::Char(s.clone()))),
            TokenKind::Number(s) => Ok(Expr::Literal(Literal::Number(s.clone()))),
            TokenKind::Punct("(") => {
                let close = self.p.matching(start)?;
                if self.p.toks.get(close + 1).is_some_and(|t| t.is_punct("->")) {
                    self.p.pos = close + 1;
                    return self.lambda_body(start);
                }
                let e = self.expr()?;
                self.p.expect_punct(")")?;
                Ok(Expr::Paren(Box::new(e)))
            }
            TokenKind::Punct("{") => {
                self.p.pos = start;
                self.array_init("")
            }
            TokenKind::Punct(p) => {
                self.p.pos = start;
                Err(self.p.err(&format!("unexpected `{p}` in expression")))
            }
            TokenKind::Ident(w) => match w.as_str() {
                "true" => Ok(Expr::Literal(Literal::Bool(true))),
                "false" => Ok(Expr::Literal(Literal::Bool(false))),
                "null" => Ok(Expr::Literal(Literal::Null)),
                "new" => self.creator(start),
                "switch" => {
                    self.p.skip_group()?;
                    self.p.skip_group()?;
                    Ok(self.opaque("switch-expression", start))
                }
                _ if self.p.at_punct("->") => self.lambda_body(start),
                _ if self.p.at_punct("(") => {
                    let (args, arg_texts) = self.args()?;
                    Ok(Expr::Call {
                        target: None,
                        target_text: None,
                        name: w.clone(),
                        args,
                        arg_texts,
                        pos: self.p.pos_of(start, self.p.pos),
                    })
                }
                _ if STATEMENT_KEYWORDS.contains(&w.as_str()) => {
                    self.p.pos = start;
                    Err(self.p.err("unexpected keyword in expression"))
                }
                _ => Ok(Expr::Name(w.clone())),
            },
        }
    }

    fn creator(&mut self, start: usize) -> PResult<Expr> {
        if self.p.at_punct("<") {
            self.p.skip_angles()?;
        }
        let ty_start = self.p.pos;
        self.p.skip_annotations()?;
        self.p.expect_ident()?;
        loop {
            if self.p.at_punct("<") {
                self.p.type_args()?;
            }
            if self.p.at_punct(".") && self.p.peek_at(1).is_some_and(|t| t.ident().is_some()) {
                self.p.pos += 2;
                continue;
            }
            break;
        }
        let ty = self.p.compact_text(ty_start, self.p.pos);
        if self.p.at_punct("[") {
            let mut elems = Vec::new();
            while self.p.at_punct("[") {
                self.p.bump()?;
                if !self.p.at_punct("]") {
                    elems.push(self.expr()?);
                }
                self.p.expect_punct("]")?;
            }
            if self.p.at_punct("{") {
                if let Expr::NewArray { elems: init, .. } = self.array_init(&ty)? {
                    elems.extend(init);
                }
            }
            return Ok(Expr::NewArray { ty, elems });
        }
        let (args, arg_texts) = self.args()?;
        let mut anonymous_body = false;
        if self.p.at_punct("{") {
            self.p.skip_group()?;
            anonymous_body = true;
        }
        Ok(Expr::New { ty, args, arg_texts, anonymous_body, pos: self.p.pos_of(start, self.p.pos) })
    }

    fn postfix(&mut self, mut e: Expr) -> PResult<Expr> {
        let start = self.expr_start_hint();
        loop {
            if self.p.at_punct(".") {
                let target_end = self.p.pos;
                self.p.bump()?;
                if self.p.at_punct("<") {
                    self.p.skip_angles()?;
                }
                if self.p.at_ident("new") {
                    let s = self.p.pos;
                    self.p.bump()?;
                    e = self.creator(s)?;
                    continue;
                }
                let name_tok = self.p.pos;
                let name = self.p.expect_ident()?;
                if self.p.at_punct("(") {
                    let (args, arg_texts) = self.args()?;
                    let target_text = self.p.spaced_text(start.min(target_end), target_end);
                    e = Expr::Call {
                        target: Some(Box::new(e)),
                        target_text: Some(target_text),
                        name,
                        args,
                        arg_texts,
                        pos: self.p.pos_of(name_tok, self.p.pos),
                    };
                } else {
                    e = Expr::Field { target: Box::new(e), name };
                }
            } else if self.p.at_punct("[") {
                self.p.bump()?;
                let idx = self.expr()?;
                self.p.expect_punct("]")?;
                e = Expr::Index { target: Box::new(e), index: Box::new(idx) };
            } else if self.p.at_punct("++") || self.p.at_punct("--") {
                let op = self.p.bump()?.kind.to_string();
                e = Expr::Postfix { op, expr: Box::new(e) };
            } else if self.p.at_punct("::") {
                self.p.bump()?;
                self.p.bump()?;
                e = self.opaque("method-reference", start);
            } else {
                return Ok(e);
            }
        }
    }

    /// Start token of the primary just parsed: scan back over the tokens that
    /// `primary` consumed.
    fn expr_start_hint(&self) -> usize {
        // `primary` always consumes at least one token; walk back over a
        // balanced group when the primary ended with one.
        let mut i = self.p.pos.saturating_sub(1);
        let mut depth = 0i32;
        loop {
            let t = &self.p.toks[i];
            if t.is_punct(")") || t.is_punct("}") || t.is_punct("]") {
                depth += 1;
            } else if t.is_punct("(") || t.is_punct("{") || t.is_punct("[") {
                depth -= 1;
            }
            if depth <= 0 {
                // Include a `new`/type prefix for creators and call names.
                let mut j = i;
                while j > 0 {
                    let prev = &self.p.toks[j - 1];
                    if depth == 0 && (prev.ident().is_some() && !STATEMENT_KEYWORDS.contains(&prev.ident().unwrap()) || prev.is_ident("new"))
                        && (j == i || self.p.toks[j].is_punct("(") || self.p.toks[j].ident().is_some() || self.p.toks[j].is_punct("<"))
                    {
                        j -= 1;
                        if prev.is_ident("new") {
                            break;
                        }
                        continue;
                    }
                    break;
                }
                return j;
            }
            if i == 0 {
                return 0;
            }
            i -= 1;
        }
    }

    // ---- lowering expressions to call nodes ----

    fn receiver_type(&self, target: Option<&Expr>) -> Option<String> {
        match target {
            None => Some(self.ctx.qualified.clone()),
            Some(Expr::Name(n)) if n == "this" => Some(self.ctx.qualified.clone()),
            Some(Expr::Name(n)) if n == "super" => self.ctx.superclass.clone(),
            Some(Expr::Name(n)) => match self.lookup_var(n) {
                Some(ty) => Some(self.qualify(&ty)),
                None if n.chars().next().is_some_and(char::is_uppercase) => Some(self.qualify(n)),
                None => None,
            },
            Some(Expr::Field { target, name }) if matches!(target.as_ref(), Expr::Name(t) if t == "this") => {
                self.ctx.fields.iter().find_map(|f| f.get(name)).map(|t| self.qualify(t))
            }
            Some(Expr::Field { .. }) => {
                // `pkg.Type` or `Outer.Inner` static references.
                let text = dotted_name(target?)?;
                let last = text.rsplit('.').next()?;
                last.chars().next().is_some_and(char::is_uppercase).then(|| self.qualify(&text))
            }
            Some(Expr::New { ty, .. }) => Some(self.qualify(ty)),
            Some(Expr::Paren(inner)) => self.receiver_type(Some(inner)),
            Some(Expr::Cast { ty, .. }) => Some(self.qualify(ty)),
            _ => None,
        }
    }

    fn lower(&self, e: &Expr, out: &mut Vec<AstNode>) {
        match e {
            Expr::Call { target, target_text, name, args, arg_texts, pos } => {
                if let Some(t) = target {
                    self.lower(t, out);
                }
                for a in args {
                    self.lower(a, out);
                }
                let receiver_type = self.receiver_type(target.as_deref());
                out.push(node(
                    NodeKind::MethodCall,
                    (*pos).into(),
                    Detail::Call(CallSite {
                        receiver: target_text.clone(),
                        receiver_type,
                        name: name.clone(),
                        args: args.clone(),
                        arg_texts: arg_texts.clone(),
                        callee: None,
                    }),
                    vec![],
                ));
            }
            Expr::New { ty, args, arg_texts, anonymous_body, pos } => {
                for a in args {
                    self.lower(a, out);
                }
                out.push(node(
                    NodeKind::MethodCall,
                    (*pos).into(),
                    Detail::Call(CallSite {
                        receiver: None,
                        receiver_type: Some(self.qualify(ty)),
                        name: "<init>".into(),
                        args: args.clone(),
                        arg_texts: arg_texts.clone(),
                        callee: None,
                    }),
                    vec![],
                ));
                if *anonymous_body {
                    out.push(node(
                        NodeKind::OtherStatement,
                        (*pos).into(),
                        Detail::Text(format!("anonymous class body: new {ty}")),
                        vec![],
                    ));
                }
            }
            Expr::Opaque { what, text, pos } => {
                if what != "method-reference" {
                    out.push(node(NodeKind::OtherStatement, (*pos).into(), Detail::Text(format!("{what}: {text}")), vec![]));
                }
            }
            Expr::Literal(_) | Expr::Name(_) => {}
            Expr::Field { target, .. } => self.lower(target, out),
            Expr::NewArray { elems, .. } => elems.iter().for_each(|x| self.lower(x, out)),
            Expr::Unary { expr, .. } | Expr::Postfix { expr, .. } | Expr::Cast { expr, .. } | Expr::InstanceOf { expr, .. } | Expr::Paren(expr) => {
                self.lower(expr, out)
            }
            Expr::Binary { lhs, rhs, .. } => {
                self.lower(lhs, out);
                self.lower(rhs, out);
            }
            Expr::Ternary { cond, then, otherwise } => {
                self.lower(cond, out);
                self.lower(then, out);
                self.lower(otherwise, out);
            }
            Expr::Assign { target, value, .. } => {
                self.lower(target, out);
                self.lower(value, out);
            }
            Expr::Index { target, index } => {
                self.lower(target, out);
                self.lower(index, out);
            }
        }
    }
}

fn dotted_name(e: &Expr) -> Option<String> {
    match e {
        Expr::Name(n) => Some(n.clone()),
        Expr::Field { target, name } => Some(format!("{}.{name}", dotted_name(target)?)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_one(src: &str) -> SourceUnit {
        let mut units = parse_file("T.java", src).unwrap();
        assert_eq!(units.len(), 1);
        units.remove(0)
    }

    fn body(src: &str) -> AstNode {
        let u = parse_one(&format!("class T {{ Logger LOG; void m(String a, boolean f) {{ {src} }} }}"));
        u.methods[0].body.clone().unwrap()
    }

    fn kinds(n: &AstNode) -> Vec<NodeKind> {
        n.children.iter().map(|c| c.kind).collect()
    }

    #[test]
    fn class_with_methods_fields_and_imports() {
        let u = parse_one(
            "package a.b;\nimport org.slf4j.Logger;\n@Deprecated public class Foo extends Bar implements Baz {\n\
             private static final Logger LOG = LoggerFactory.getLogger(Foo.class);\n\
             int x, y = 2;\n public Foo(int x) { this.x = x; }\n abstract void a();\n\
             public <T> List<T> b(final Map<String, T> m, int... rest) throws IOException { return null; }\n}",
        );
        assert_eq!(u.qualified_type_name, "a.b.Foo");
        assert_eq!(u.superclass.as_deref(), Some("Bar"));
        assert_eq!(u.fields.get("LOG").map(String::as_str), Some("Logger"));
        assert_eq!(u.fields.get("y").map(String::as_str), Some("int"));
        let ids: Vec<_> = u.methods.iter().map(|m| m.method_id.0.clone()).collect();
        assert_eq!(ids, ["a.b.Foo.<init>/1", "a.b.Foo.a/0", "a.b.Foo.b/2"]);
        assert!(u.methods[1].is_abstract());
        assert!(u.methods[2].source_text.starts_with("public <T> List<T> b("));
        assert!(u.methods[2].source_text.ends_with("return null; }"));
    }

    #[test]
    fn receiver_types_resolve_through_imports_and_fields() {
        let u = parse_one(
            "import org.slf4j.Logger; class T { Logger LOG; void m(Foo f) { LOG.info(\"x\"); f.go(1); helper(); } }",
        );
        let b = u.methods[0].body.as_ref().unwrap();
        let calls: Vec<_> = b.children.iter().map(|c| c.call().unwrap().qualified_target()).collect();
        assert_eq!(calls, ["org.slf4j.Logger.info", "Foo.go", "T.helper"]);
    }

    #[test]
    fn if_else_structure() {
        let b = body("if (a == null) { LOG.warn(\"none\"); } else LOG.info(\"some\");");
        assert_eq!(kinds(&b), [NodeKind::If]);
        let iff = &b.children[0];
        assert_eq!(iff.detail, Detail::Condition("a == null".into()));
        assert_eq!(kinds(iff), [NodeKind::Sequence, NodeKind::ElseBranch]);
        assert_eq!(iff.children[1].children[0].kind, NodeKind::MethodCall);
    }

    #[test]
    fn loops_switch_try() {
        let b = body(
            "for (int i = 0; i < n; i++) { go(i); }\n\
             for (String s : items()) { }\n\
             while (f) { break; }\n\
             do { x(); } while (more());\n\
             switch (a) { case \"x\": case \"y\": go(1); break; default: go(2); }\n\
             try { go(3); } catch (IOException | RuntimeException e) { LOG.error(\"bad\", e); } finally { close(); }",
        );
        assert_eq!(
            kinds(&b),
            [
                NodeKind::Loop,
                NodeKind::MethodCall,
                NodeKind::Loop,
                NodeKind::Loop,
                NodeKind::Loop,
                NodeKind::Switch,
                NodeKind::Try
            ]
        );
        let dw = &b.children[4];
        assert_eq!(kinds(dw), [NodeKind::MethodCall, NodeKind::MethodCall]);
        let sw = &b.children[5];
        assert_eq!(sw.children.len(), 3);
        assert_eq!(sw.children[2].detail, Detail::Case { labels: vec![] });
        let t = &b.children[6];
        assert_eq!(kinds(t), [NodeKind::Sequence, NodeKind::Catch, NodeKind::Sequence]);
        assert_eq!(t.children[2].detail, Detail::Finally);
    }

    #[test]
    fn lambda_body_is_one_other_statement() {
        let b = body("pool.submit(() -> { LOG.info(\"in lambda\"); work(); });");
        assert_eq!(kinds(&b), [NodeKind::OtherStatement, NodeKind::MethodCall]);
        match &b.children[0].detail {
            Detail::Text(t) => assert!(t.starts_with("lambda:")),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn casts_generics_and_shifts() {
        let b = body("long v = (long) x >> 2; List<String> xs = new ArrayList<>(); Object o = (String) get(a); int q = a < b ? 1 : 2;");
        assert_eq!(b.children.len(), 4);
        assert_eq!(b.children[1].call().unwrap().name, "<init>");
        assert_eq!(b.children[2].call().unwrap().name, "get");
    }

    #[test]
    fn unsupported_statement_kept_as_other() {
        let b = body("assert a != null : \"x\"; go(1);");
        assert_eq!(kinds(&b), [NodeKind::OtherStatement, NodeKind::MethodCall]);
    }

    #[test]
    fn call_evaluation_order_inner_first() {
        let b = body("outer(inner(a), other());");
        let names: Vec<_> = b.children.iter().map(|c| c.call().unwrap().name.clone()).collect();
        assert_eq!(names, ["inner", "other", "outer"]);
    }

    #[test]
    fn nested_type_gets_qualified_name() {
        let units = parse_file("O.java", "package p; class O { int f; static class I { void m() { } } }").unwrap();
        let names: Vec<_> = units.iter().map(|u| u.qualified_type_name.as_str()).collect();
        assert_eq!(names, ["p.O", "p.O.I"]);
    }

    #[test]
    fn labeled_loop_records_label() {
        let b = body("outer: while (f) { for (;;) { continue outer; } }");
        match &b.children[0].detail {
            Detail::Loop { label, .. } => assert_eq!(label.as_deref(), Some("outer")),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn ids_are_preorder() {
        let b = body("if (f) { go(1); } go(2);");
        let ids: Vec<u32> = b.walk().map(|n| n.id).collect();
        assert_eq!(ids, (0..ids.len() as u32).collect::<Vec<_>>());
    }
}
