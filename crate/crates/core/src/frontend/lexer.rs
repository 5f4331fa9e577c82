//! Tokenizer for the curly-brace source subset.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    /// Decoded string literal value.
    Str(String),
    Char(String),
    Number(String),
    Punct(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: u32,
    pub col: u32,
    /// Byte offsets into the source text.
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.kind, TokenKind::Punct(q) if *q == p)
    }

    pub fn is_ident(&self, word: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(w) if w == word)
    }

    pub fn ident(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::Ident(w) => Some(w),
            _ => None,
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) | TokenKind::Number(s) => f.write_str(s),
            TokenKind::Str(s) => write!(f, "{s:?}"),
            TokenKind::Char(s) => write!(f, "'{s}'"),
            TokenKind::Punct(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}:{col}: {message}")]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

// Longest first. `>>` and `>>>` are deliberately absent so generic closers
// stay single tokens; the expression parser reassembles shifts.
const PUNCTS: &[&str] = &[
    "<<=", "...", "->", "::", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "<<", "{", "}", "(", ")", "[", "]", ";", ",", ".", "@", "=", "<",
    ">", "!", "~", "?", ":", "+", "-", "*", "/", "%", "&", "|", "^",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;

    while i < bytes.len() {
        let c = bytes[i];
        let col = (i - line_start) as u32 + 1;
        if c == b'\n' {
            line += 1;
            i += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(LexError { line, col, message: "unterminated block comment".into() });
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    line_start = i + 1;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        if c == b'"' {
            if src[i..].starts_with("\"\"\"") {
                // Text block: keep the raw body, folded later by whitespace normalization.
                let body_start = i + 3;
                let Some(rel) = src[body_start..].find("\"\"\"") else {
                    return Err(LexError { line, col, message: "unterminated text block".into() });
                };
                let body = &src[body_start..body_start + rel];
                let (start_line, start_col) = (line, col);
                for (k, b) in body.bytes().enumerate() {
                    if b == b'\n' {
                        line += 1;
                        line_start = body_start + k + 1;
                    }
                }
                i = body_start + rel + 3;
                out.push(Token {
                    kind: TokenKind::Str(unescape(body)),
                    line: start_line,
                    col: start_col,
                    start,
                    end: i,
                });
                continue;
            }
            i += 1;
            let mut raw_end = None;
            while i < bytes.len() {
                match bytes[i] {
                    b'\\' => i += 2,
                    b'"' => {
                        raw_end = Some(i);
                        i += 1;
                        break;
                    }
                    b'\n' => break,
                    _ => i += 1,
                }
            }
            let Some(raw_end) = raw_end else {
                return Err(LexError { line, col, message: "unterminated string literal".into() });
            };
            out.push(Token {
                kind: TokenKind::Str(unescape(&src[start + 1..raw_end])),
                line,
                col,
                start,
                end: i,
            });
            continue;
        }
        if c == b'\'' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'\'' && bytes[i] != b'\n' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            if i >= bytes.len() || bytes[i] != b'\'' {
                return Err(LexError { line, col, message: "unterminated char literal".into() });
            }
            i += 1;
            out.push(Token {
                kind: TokenKind::Char(src[start + 1..i - 1].to_string()),
                line,
                col,
                start,
                end: i,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() {
                let d = bytes[i];
                let exp_sign = (d == b'+' || d == b'-')
                    && matches!(bytes[i - 1], b'e' | b'E')
                    && !src[start..i].starts_with("0x");
                if d.is_ascii_alphanumeric() || d == b'_' || d == b'.' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Token {
                kind: TokenKind::Number(src[start..i].to_string()),
                line,
                col,
                start,
                end: i,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80 {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$' || bytes[i] >= 0x80)
            {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(src[start..i].to_string()),
                line,
                col,
                start,
                end: i,
            });
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                i += p.len();
                out.push(Token { kind: TokenKind::Punct(p), line, col, start, end: i });
            }
            None => {
                return Err(LexError {
                    line,
                    col,
                    message: format!("unexpected character {:?}", src[i..].chars().next().unwrap_or('?')),
                })
            }
        }
    }
    Ok(out)
}

fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('b') | Some('f') => out.push(' '),
            Some('0') => out.push('\0'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn strings_and_comments() {
        let k = kinds("LOG.info(\"a \\\"b\\\"\" + x); // tail\n/* c */ y");
        assert_eq!(k[0], TokenKind::Ident("LOG".into()));
        assert_eq!(k[4], TokenKind::Str("a \"b\"".into()));
        assert_eq!(k.last().unwrap(), &TokenKind::Ident("y".into()));
    }

    #[test]
    fn generic_closers_stay_split() {
        let k = kinds("Map<String, List<Long>> m;");
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Punct(">")).count(), 2);
    }

    #[test]
    fn numbers_with_exponent_and_suffix() {
        assert_eq!(kinds("1e-3 0xFFL 10_000")[0], TokenKind::Number("1e-3".into()));
        assert_eq!(kinds("0xFFL")[0], TokenKind::Number("0xFFL".into()));
    }

    #[test]
    fn line_tracking() {
        let toks = tokenize("a\n\n  b").unwrap();
        assert_eq!((toks[1].line, toks[1].col), (3, 3));
    }

    #[test]
    fn unterminated_string_is_an_error() {
        assert!(tokenize("\"abc").is_err());
    }
}
