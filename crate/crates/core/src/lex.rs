//! Shared tokenizer for the two configuration DSLs.
//!
//! Both languages use the same lexical vocabulary: identifiers, double-quoted
//! strings, a handful of punctuation tokens, and `//` line comments. Keywords
//! are plain identifiers; the parsers match on their text so error messages
//! can list the exact words expected at a given point.

use std::fmt;

use crate::diag::Pos;

/// Returns true when `s` is a valid DSL identifier: `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Hash,
    Dot,
    Eq,
    Eof,
}

impl Token {
    /// Human-readable rendering used in the `found ...` part of errors.
    pub fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("'{s}'"),
            Token::Str(s) => format!("string \"{s}\""),
            Token::LBrace => "'{'".into(),
            Token::RBrace => "'}'".into(),
            Token::Comma => "','".into(),
            Token::Semi => "';'".into(),
            Token::Colon => "':'".into(),
            Token::Hash => "'#'".into(),
            Token::Dot => "'.'".into(),
            Token::Eq => "'='".into(),
            Token::Eof => "end of input".into(),
        }
    }
}

/// A parse failure with its position and the set of tokens that would have
/// been accepted there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub pos: Pos,
    pub found: String,
    pub expected: Vec<String>,
}

impl SyntaxError {
    pub fn new(pos: Pos, found: impl Into<String>, expected: Vec<String>) -> Self {
        SyntaxError { pos, found: found.into(), expected }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected ", self.pos)?;
        match self.expected.len() {
            0 => write!(f, "nothing further")?,
            1 => write!(f, "{}", self.expected[0])?,
            _ => write!(f, "one of {}", self.expected.join(", "))?,
        }
        write!(f, "; found {}", self.found)
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Clone)]
pub struct SpannedToken {
    pub token: Token,
    pub pos: Pos,
}

/// Tokenizes `src` completely, ending with an explicit `Eof` token.
pub fn tokenize(src: &str) -> Result<Vec<SpannedToken>, SyntaxError> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = src.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(ch) = c {
                if ch == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos::new(line, col);
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&n) = chars.peek() {
                        if n == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(SyntaxError::new(pos, "'/'", vec!["'//' comment".into()]));
                }
            }
            '{' => {
                bump!();
                out.push(SpannedToken { token: Token::LBrace, pos });
            }
            '}' => {
                bump!();
                out.push(SpannedToken { token: Token::RBrace, pos });
            }
            ',' => {
                bump!();
                out.push(SpannedToken { token: Token::Comma, pos });
            }
            ';' => {
                bump!();
                out.push(SpannedToken { token: Token::Semi, pos });
            }
            ':' => {
                bump!();
                out.push(SpannedToken { token: Token::Colon, pos });
            }
            '#' => {
                bump!();
                out.push(SpannedToken { token: Token::Hash, pos });
            }
            '.' => {
                bump!();
                out.push(SpannedToken { token: Token::Dot, pos });
            }
            '=' => {
                bump!();
                out.push(SpannedToken { token: Token::Eq, pos });
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match chars.peek() {
                        Some('"') => {
                            bump!();
                            break;
                        }
                        Some('\n') | None => {
                            return Err(SyntaxError::new(
                                pos,
                                "unterminated string",
                                vec!["closing '\"'".into()],
                            ));
                        }
                        Some(&ch) => {
                            s.push(ch);
                            bump!();
                        }
                    }
                }
                out.push(SpannedToken { token: Token::Str(s), pos });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        ident.push(ch);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(SpannedToken { token: Token::Ident(ident), pos });
            }
            other => {
                return Err(SyntaxError::new(
                    pos,
                    format!("'{other}'"),
                    vec!["a token".into()],
                ));
            }
        }
    }
    out.push(SpannedToken { token: Token::Eof, pos: Pos::new(line, col) });
    Ok(out)
}

/// Cursor over a token list with the `expect` helpers both parsers share.
pub struct TokenStream {
    tokens: Vec<SpannedToken>,
    index: usize,
}

impl TokenStream {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(TokenStream { tokens: tokenize(src)?, index: 0 })
    }

    pub fn peek(&self) -> &Token {
        &self.tokens[self.index].token
    }

    pub fn pos(&self) -> Pos {
        self.tokens[self.index].pos
    }

    pub fn advance(&mut self) -> SpannedToken {
        let t = self.tokens[self.index].clone();
        if self.index + 1 < self.tokens.len() {
            self.index += 1;
        }
        t
    }

    pub fn error(&self, expected: Vec<String>) -> SyntaxError {
        SyntaxError::new(self.pos(), self.peek().describe(), expected)
    }

    /// Consumes the next token if it equals `tok`.
    pub fn eat(&mut self, tok: &Token) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: Token, expected: &str) -> Result<(), SyntaxError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(vec![expected.into()]))
        }
    }

    /// Consumes any identifier and returns its text.
    pub fn expect_ident(&mut self, expected: &str) -> Result<(String, Pos), SyntaxError> {
        let pos = self.pos();
        match self.peek() {
            Token::Ident(_) => {
                let t = self.advance();
                match t.token {
                    Token::Ident(s) => Ok((s, pos)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.error(vec![expected.into()])),
        }
    }

    /// Consumes the identifier `kw` specifically.
    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Token::Ident(s) if s == kw => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error(vec![format!("'{kw}'")])),
        }
    }

    pub fn expect_string(&mut self, expected: &str) -> Result<(String, Pos), SyntaxError> {
        let pos = self.pos();
        match self.peek() {
            Token::Str(_) => {
                let t = self.advance();
                match t.token {
                    Token::Str(s) => Ok((s, pos)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.error(vec![expected.into()])),
        }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Token::Eof)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers_and_punctuation() {
        let toks = tokenize("layer A refines B { X.Y:Z#Q replaces W; }").unwrap();
        let kinds: Vec<&Token> = toks.iter().map(|t| &t.token).collect();
        assert!(matches!(kinds[0], Token::Ident(s) if s == "layer"));
        assert!(kinds.contains(&&Token::Hash));
        assert!(matches!(kinds.last(), Some(Token::Eof)));
    }

    #[test]
    fn line_comments_are_skipped() {
        let toks = tokenize("a // comment until eol\nb").unwrap();
        let idents: Vec<String> = toks
            .iter()
            .filter_map(|t| match &t.token {
                Token::Ident(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(idents, vec!["a", "b"]);
    }

    #[test]
    fn string_token_carries_text() {
        let toks = tokenize("layers = \"factoryVariant\";").unwrap();
        assert!(toks
            .iter()
            .any(|t| matches!(&t.token, Token::Str(s) if s == "factoryVariant")));
    }

    #[test]
    fn unterminated_string_errors_at_opening_quote() {
        let err = tokenize("x = \"abc").unwrap_err();
        assert_eq!(err.pos, Pos::new(1, 5));
        assert_eq!(err.found, "unterminated string");
    }

    #[test]
    fn positions_are_one_based_lines_and_columns() {
        let toks = tokenize("a\n  b").unwrap();
        assert_eq!(toks[0].pos, Pos::new(1, 1));
        assert_eq!(toks[1].pos, Pos::new(2, 3));
    }

    #[test]
    fn identifier_predicate() {
        assert!(is_identifier("Class_1"));
        assert!(is_identifier("_x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("a-b"));
    }
}
