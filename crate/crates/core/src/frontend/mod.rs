//! Source ingestion: parsing, project indexing, log-call recognition and template extraction.

pub mod ast;
pub mod index;
pub mod lexer;
pub mod parser;
pub mod templates;

pub use ast::*;
pub use index::{FileError, ProjectIndex};
pub use templates::{
    extract_template, mark_log_calls, recognize_log_calls, LogTemplate, LoggingApis, PlaceholderKind, SkippedLogCall, TemplateTable,
    PLACEHOLDER,
};
