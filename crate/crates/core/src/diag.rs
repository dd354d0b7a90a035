//! Source positions and non-fatal diagnostics shared across the pipeline.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

/// A 1-based line/column position in a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A half-open region of source text, used for error reporting only.
/// Synthetic nodes (built in memory rather than parsed) carry a zero span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn new(start: Pos, end: Pos) -> Self {
        Span { start, end }
    }

    pub fn point(line: u32, col: u32) -> Self {
        let p = Pos::new(line, col);
        Span { start: p, end: p }
    }

    /// Marker for nodes that were constructed programmatically.
    pub fn synthetic() -> Self {
        Span::point(0, 0)
    }

    pub fn is_synthetic(&self) -> bool {
        self.start.line == 0
    }
}

impl Default for Span {
    fn default() -> Self {
        Span::synthetic()
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)
    }
}

/// A non-fatal finding surfaced to the user but never failing the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    /// File the warning refers to, when known.
    pub path: Option<PathBuf>,
    /// Position inside that file, when known.
    pub span: Option<Span>,
    pub message: String,
}

impl Warning {
    pub fn new(message: impl Into<String>) -> Self {
        Warning { path: None, span: None, message: message.into() }
    }

    pub fn at(path: impl Into<PathBuf>, span: Span, message: impl Into<String>) -> Self {
        Warning { path: Some(path.into()), span: Some(span), message: message.into() }
    }

    pub fn at_span(span: Span, message: impl Into<String>) -> Self {
        Warning { path: None, span: Some(span), message: message.into() }
    }

    pub fn in_file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Warning { path: Some(path.into()), span: None, message: message.into() }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, &self.span) {
            (Some(p), Some(s)) => write!(f, "{}:{}: {}", p.display(), s, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}
