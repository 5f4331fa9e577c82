//! Syntax tree for method bodies and the project-level declarations around them.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Qualified method key: `pkg.Type.name/arity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodId(pub String);

impl MethodId {
    pub fn new(type_name: &str, method: &str, arity: usize) -> Self {
        MethodId(format!("{type_name}.{method}/{arity}"))
    }

    /// Placeholder for callees that resolve to nothing in the project.
    pub fn external(type_hint: Option<&str>, method: &str, arity: usize) -> Self {
        MethodId(format!("ext:{}.{method}/{arity}", type_hint.unwrap_or("?")))
    }

    pub fn is_external(&self) -> bool {
        self.0.starts_with("ext:")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `pkg.Type.name` with the arity suffix removed.
    pub fn qualified_name(&self) -> &str {
        self.0.rsplit_once('/').map_or(&self.0, |(q, _)| q)
    }
}

impl From<&str> for MethodId {
    fn from(s: &str) -> Self {
        MethodId(s.to_string())
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Trace,
    Debug,
    Info,
    Warn,
    Error,
    Fatal,
}

impl Level {
    pub const ALL: [Level; 6] = [Level::Trace, Level::Debug, Level::Info, Level::Warn, Level::Error, Level::Fatal];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Trace => "TRACE",
            Level::Debug => "DEBUG",
            Level::Info => "INFO",
            Level::Warn => "WARN",
            Level::Error => "ERROR",
            Level::Fatal => "FATAL",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Level::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown log level `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub end_line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Sequence,
    If,
    ElseBranch,
    Switch,
    SwitchCase,
    Loop,
    Try,
    Catch,
    LogCall,
    MethodCall,
    Return,
    Throw,
    OtherStatement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopForm {
    While,
    DoWhile,
    For,
    ForEach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpKind {
    Break,
    Continue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detail {
    None,
    Condition(String),
    Loop { form: LoopForm, condition: Option<String>, label: Option<String> },
    Switch { selector: String },
    /// Empty label list marks `default`.
    Case { labels: Vec<String> },
    Catch { types: Vec<String>, var: String },
    Finally,
    Call(CallSite),
    Jump { kind: JumpKind, label: Option<String> },
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSite {
    /// Source text of the receiver expression, if any.
    pub receiver: Option<String>,
    /// Static type of the receiver as far as local declarations tell.
    pub receiver_type: Option<String>,
    pub name: String,
    pub args: Vec<Expr>,
    pub arg_texts: Vec<String>,
    /// Filled in by call resolution once every file is parsed.
    pub callee: Option<MethodId>,
}

impl CallSite {
    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Dotted name used for logging-API matching, e.g. `org.slf4j.Logger.info`.
    pub fn qualified_target(&self) -> String {
        match (&self.receiver_type, &self.receiver) {
            (Some(t), _) => format!("{t}.{}", self.name),
            (None, Some(r)) => format!("{r}.{}", self.name),
            (None, None) => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Literal {
    Str(String),
    Char(String),
    Number(String),
    Bool(bool),
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expr {
    Literal(Literal),
    Name(String),
    Field { target: Box<Expr>, name: String },
    Call {
        target: Option<Box<Expr>>,
        target_text: Option<String>,
        name: String,
        args: Vec<Expr>,
        arg_texts: Vec<String>,
        pos: Pos,
    },
    New { ty: String, args: Vec<Expr>, arg_texts: Vec<String>, anonymous_body: bool, pos: Pos },
    NewArray { ty: String, elems: Vec<Expr> },
    Unary { op: String, expr: Box<Expr> },
    Postfix { op: String, expr: Box<Expr> },
    Binary { op: String, lhs: Box<Expr>, rhs: Box<Expr> },
    Ternary { cond: Box<Expr>, then: Box<Expr>, otherwise: Box<Expr> },
    Assign { op: String, target: Box<Expr>, value: Box<Expr> },
    Cast { ty: String, expr: Box<Expr> },
    Index { target: Box<Expr>, index: Box<Expr> },
    InstanceOf { expr: Box<Expr>, ty: String },
    Paren(Box<Expr>),
    /// Lambda, method reference, switch expression: kept as source text only.
    Opaque { what: String, text: String, pos: Pos },
}

/// Source position of an expression: first line, last line, first column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub end_line: u32,
    pub col: u32,
}

impl From<Pos> for Span {
    fn from(p: Pos) -> Span {
        Span { start_line: p.line, end_line: p.end_line, col: p.col }
    }
}

impl Expr {
    pub fn is_literal(&self) -> bool {
        matches!(self, Expr::Literal(_))
    }

    pub fn as_str_literal(&self) -> Option<&str> {
        match self {
            Expr::Literal(Literal::Str(s)) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AstNode {
    /// Preorder number within the owning method body.
    pub id: u32,
    pub kind: NodeKind,
    pub span: Span,
    pub detail: Detail,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn call(&self) -> Option<&CallSite> {
        match &self.detail {
            Detail::Call(c) => Some(c),
            _ => None,
        }
    }

    /// Preorder walk.
    pub fn walk(&self) -> impl Iterator<Item = &AstNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut AstNode)) {
        f(self);
        for c in &mut self.children {
            c.walk_mut(f);
        }
    }

    pub fn find(&self, id: u32) -> Option<&AstNode> {
        self.walk().find(|n| n.id == id)
    }

    pub(crate) fn renumber(&mut self) {
        let mut next = 0u32;
        self.walk_mut(&mut |n| {
            n.id = next;
            next += 1;
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDecl {
    pub method_id: MethodId,
    pub type_name: String,
    pub name: String,
    pub params: Vec<Param>,
    pub return_type: Option<String>,
    /// `None` for abstract, interface and native methods.
    pub body: Option<AstNode>,
    /// Exact slice of the original file.
    pub source_text: String,
    pub path: String,
    pub line: u32,
}

impl MethodDecl {
    pub fn is_abstract(&self) -> bool {
        self.body.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub path: String,
    pub qualified_type_name: String,
    pub simple_name: String,
    pub package: String,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    /// Field name to declared type.
    pub fields: std::collections::BTreeMap<String, String>,
    pub imports: std::collections::BTreeMap<String, String>,
    pub methods: Vec<MethodDecl>,
}
