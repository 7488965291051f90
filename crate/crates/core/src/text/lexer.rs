//! Tokenizer shared by the model and property parsers.

use std::sync::Arc;

use super::SourceSpan;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Real(f64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Arrow,
    Assign,
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Int(v) => format!("integer `{v}`"),
            TokenKind::Real(v) => format!("number `{v}`"),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::Arrow => "`->`".into(),
            TokenKind::Assign => "`=`".into(),
            TokenKind::Eq => "`==`".into(),
            TokenKind::Ne => "`!=`".into(),
            TokenKind::Le => "`<=`".into(),
            TokenKind::Ge => "`>=`".into(),
            TokenKind::Lt => "`<`".into(),
            TokenKind::Gt => "`>`".into(),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Percent => "`%`".into(),
            TokenKind::Bang => "`!`".into(),
            TokenKind::AndAnd => "`&&`".into(),
            TokenKind::OrOr => "`||`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub message: String,
    pub span: SourceSpan,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    file: Arc<str>,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span(&self, line: u32, column: u32, length: u32) -> SourceSpan {
        SourceSpan::new(self.file.clone(), line, column, length)
    }
}

/// Tokenizes a whole input. Any byte sequence yields either tokens or an
/// error value; the lexer never panics.
pub fn tokenize(input: &str, file: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer {
        chars: input.chars().peekable(),
        file: Arc::from(file),
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();

    loop {
        // Skip whitespace and // comments.
        loop {
            match lx.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    lx.bump();
                }
                Some('/') => {
                    let mut ahead = lx.chars.clone();
                    ahead.next();
                    if ahead.peek() == Some(&'/') {
                        while let Some(c) = lx.chars.peek() {
                            if *c == '\n' {
                                break;
                            }
                            lx.bump();
                        }
                    } else {
                        break;
                    }
                }
                _ => break,
            }
        }

        let (line, column) = (lx.line, lx.column);
        let c = match lx.bump() {
            None => {
                tokens.push(Token { kind: TokenKind::Eof, span: lx.span(line, column, 0) });
                return Ok(tokens);
            }
            Some(c) => c,
        };

        // Each arm yields the token kind and its length; compound tokens
        // consume their extra characters first.
        let (kind, len): (TokenKind, u32) = match c {
            '{' => (TokenKind::LBrace, 1),
            '}' => (TokenKind::RBrace, 1),
            '(' => (TokenKind::LParen, 1),
            ')' => (TokenKind::RParen, 1),
            '[' => (TokenKind::LBracket, 1),
            ']' => (TokenKind::RBracket, 1),
            ',' => (TokenKind::Comma, 1),
            ';' => (TokenKind::Semi, 1),
            '.' => (TokenKind::Dot, 1),
            '+' => (TokenKind::Plus, 1),
            '*' => (TokenKind::Star, 1),
            '/' => (TokenKind::Slash, 1),
            '%' => (TokenKind::Percent, 1),
            '-' => {
                if lx.chars.peek() == Some(&'>') {
                    lx.bump();
                    (TokenKind::Arrow, 2)
                } else {
                    (TokenKind::Minus, 1)
                }
            }
            '=' => {
                if lx.chars.peek() == Some(&'=') {
                    lx.bump();
                    (TokenKind::Eq, 2)
                } else {
                    (TokenKind::Assign, 1)
                }
            }
            '!' => {
                if lx.chars.peek() == Some(&'=') {
                    lx.bump();
                    (TokenKind::Ne, 2)
                } else {
                    (TokenKind::Bang, 1)
                }
            }
            '<' => {
                if lx.chars.peek() == Some(&'=') {
                    lx.bump();
                    (TokenKind::Le, 2)
                } else {
                    (TokenKind::Lt, 1)
                }
            }
            '>' => {
                if lx.chars.peek() == Some(&'=') {
                    lx.bump();
                    (TokenKind::Ge, 2)
                } else {
                    (TokenKind::Gt, 1)
                }
            }
            '&' => {
                if lx.chars.peek() == Some(&'&') {
                    lx.bump();
                    (TokenKind::AndAnd, 2)
                } else {
                    return Err(LexError {
                        message: "expected `&&`".into(),
                        span: lx.span(line, column, 1),
                    });
                }
            }
            '|' => {
                if lx.chars.peek() == Some(&'|') {
                    lx.bump();
                    (TokenKind::OrOr, 2)
                } else {
                    return Err(LexError {
                        message: "expected `||`".into(),
                        span: lx.span(line, column, 1),
                    });
                }
            }
            c if c.is_ascii_digit() => {
                let mut text = String::from(c);
                while let Some(d) = lx.chars.peek() {
                    if d.is_ascii_digit() {
                        text.push(*d);
                        lx.bump();
                    } else {
                        break;
                    }
                }
                let mut is_real = false;
                if lx.chars.peek() == Some(&'.') {
                    // Only consume the dot when a digit follows, so `1.x`
                    // stays an integer followed by a member access.
                    let mut ahead = lx.chars.clone();
                    ahead.next();
                    if ahead.peek().is_some_and(|d| d.is_ascii_digit()) {
                        is_real = true;
                        text.push('.');
                        lx.bump();
                        while let Some(d) = lx.chars.peek() {
                            if d.is_ascii_digit() {
                                text.push(*d);
                                lx.bump();
                            } else {
                                break;
                            }
                        }
                    }
                }
                let len = text.chars().count() as u32;
                if is_real {
                    match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => (TokenKind::Real(v), len),
                        _ => {
                            return Err(LexError {
                                message: format!("number `{text}` is out of range"),
                                span: lx.span(line, column, len),
                            })
                        }
                    }
                } else {
                    match text.parse::<i64>() {
                        Ok(v) => (TokenKind::Int(v), len),
                        Err(_) => {
                            return Err(LexError {
                                message: format!("integer `{text}` is out of range"),
                                span: lx.span(line, column, len),
                            })
                        }
                    }
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut text = String::from(c);
                while let Some(d) = lx.chars.peek() {
                    if d.is_alphanumeric() || *d == '_' {
                        text.push(*d);
                        lx.bump();
                    } else {
                        break;
                    }
                }
                let len = text.chars().count() as u32;
                (TokenKind::Ident(text), len)
            }
            other => {
                return Err(LexError {
                    message: format!("unexpected character `{}`", other.escape_default()),
                    span: lx.span(line, column, 1),
                })
            }
        };
        tokens.push(Token { kind, span: lx.span(line, column, len) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_a_transition_line() {
        let tokens = tokenize("on RA -> HA guard x <= 2.5 prob 0.5", "t").unwrap();
        let kinds: Vec<_> = tokens.iter().map(|t| &t.kind).collect();
        assert!(matches!(kinds[0], TokenKind::Ident(s) if s == "on"));
        assert!(matches!(kinds[2], TokenKind::Arrow));
        assert!(matches!(kinds[6], TokenKind::Le));
        assert!(matches!(kinds[7], TokenKind::Real(v) if *v == 2.5));
    }

    #[test]
    fn comments_and_newlines_are_skipped() {
        let tokens = tokenize("a // note\n b", "t").unwrap();
        assert_eq!(tokens.len(), 3);
        assert_eq!(tokens[1].span.line, 2);
    }

    #[test]
    fn reports_stray_characters_with_spans() {
        let err = tokenize("ok @", "t").unwrap_err();
        assert_eq!(err.span.column, 4);
    }

    #[test]
    fn huge_integer_is_an_error_not_a_panic() {
        assert!(tokenize(&"9".repeat(40), "t").is_err());
    }
}
