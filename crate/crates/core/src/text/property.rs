//! Property-string parser.
//!
//! Grammar (loosest binding first): `||`, `&&`, `U`/`U[<=d]`, then the unary
//! operators `!`, `F`, `G`, `X` with optional bounds `F[SystemTime<=d]` /
//! `F[<=d]`, then atoms. Atoms are `true`/`false`, `Inst.State` (including
//! `Inst.terminated` / `Inst.successful`), bare boolean globals, and
//! comparisons between numbers, globals, `SystemTime`, `<state>Num` counts
//! and `<class>SFNum` counts. Derived operators desugar to the until core.

use super::lexer::{tokenize, Token, TokenKind};
use super::parser::ParseError;
use super::SourceSpan;
use crate::monitor::{CmpOp, MtlFormula, PropTerm, Proposition};

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn error(&self, expected: &str) -> ParseError {
        err(
            format!("expected {expected}, found {}", self.peek().kind.describe()),
            self.peek().span.clone(),
        )
    }
}

fn err(message: String, span: SourceSpan) -> ParseError {
    ParseError {
        diagnostics: vec![crate::sta::Diagnostic {
            severity: crate::sta::Severity::Error,
            message,
            subject: None,
            span: Some(span),
        }],
    }
}

const MAX_DEPTH: u32 = 64;

/// Parses an MTL property string.
pub fn parse_property(input: &str) -> Result<MtlFormula, ParseError> {
    let tokens = tokenize(input, "<property>").map_err(|e| err(e.message, e.span))?;
    let mut cur = Cursor { tokens, pos: 0 };
    let formula = parse_or(&mut cur, 0)?;
    if !cur.at_eof() {
        return Err(cur.error("end of property"));
    }
    Ok(formula)
}

fn parse_or(cur: &mut Cursor, depth: u32) -> Result<MtlFormula, ParseError> {
    if depth > MAX_DEPTH {
        return Err(err("property is nested too deeply".into(), cur.peek().span.clone()));
    }
    let mut lhs = parse_and(cur, depth + 1)?;
    while cur.peek().kind == TokenKind::OrOr {
        cur.bump();
        let rhs = parse_and(cur, depth + 1)?;
        lhs = lhs.or(rhs);
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor, depth: u32) -> Result<MtlFormula, ParseError> {
    let mut lhs = parse_until(cur, depth + 1)?;
    while cur.peek().kind == TokenKind::AndAnd {
        cur.bump();
        let rhs = parse_until(cur, depth + 1)?;
        lhs = lhs.and(rhs);
    }
    Ok(lhs)
}

fn parse_until(cur: &mut Cursor, depth: u32) -> Result<MtlFormula, ParseError> {
    let lhs = parse_unary(cur, depth + 1)?;
    if matches!(&cur.peek().kind, TokenKind::Ident(s) if s == "U") {
        cur.bump();
        let bound = parse_bound(cur)?.unwrap_or(f64::INFINITY);
        // Right associative: `a U b U c` is `a U (b U c)`.
        let rhs = parse_until(cur, depth + 1)?;
        return Ok(MtlFormula::until_within(bound, lhs, rhs));
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cursor, depth: u32) -> Result<MtlFormula, ParseError> {
    if depth > MAX_DEPTH {
        return Err(err("property is nested too deeply".into(), cur.peek().span.clone()));
    }
    match cur.peek().kind.clone() {
        TokenKind::Bang => {
            cur.bump();
            Ok(parse_unary(cur, depth + 1)?.not())
        }
        TokenKind::Ident(word) if word == "F" => {
            cur.bump();
            let bound = parse_bound(cur)?;
            let inner = parse_unary(cur, depth + 1)?;
            Ok(match bound {
                Some(d) => MtlFormula::eventually_within(d, inner),
                None => MtlFormula::eventually(inner),
            })
        }
        TokenKind::Ident(word) if word == "G" => {
            cur.bump();
            let bound = parse_bound(cur)?;
            let inner = parse_unary(cur, depth + 1)?;
            Ok(match bound {
                Some(d) => MtlFormula::always_within(d, inner),
                None => MtlFormula::always(inner),
            })
        }
        TokenKind::Ident(word) if word == "X" => {
            cur.bump();
            Ok(parse_unary(cur, depth + 1)?.next())
        }
        _ => parse_atom(cur, depth),
    }
}

/// `[SystemTime<=d]` or `[<=d]`; absent means unbounded.
fn parse_bound(cur: &mut Cursor) -> Result<Option<f64>, ParseError> {
    if cur.peek().kind != TokenKind::LBracket {
        return Ok(None);
    }
    cur.bump();
    if let TokenKind::Ident(clock) = cur.peek().kind.clone() {
        let span = cur.bump().span;
        if clock != "SystemTime" {
            return Err(err(
                format!("unknown clock `{clock}`; bounds range over SystemTime"),
                span,
            ));
        }
    }
    if cur.peek().kind != TokenKind::Le {
        return Err(cur.error("`<=`"));
    }
    cur.bump();
    let (value, span) = parse_number(cur)?;
    if value < 0.0 {
        return Err(err(format!("bound must be nonnegative, got {value}"), span));
    }
    if cur.peek().kind != TokenKind::RBracket {
        return Err(cur.error("`]`"));
    }
    cur.bump();
    Ok(Some(value))
}

fn parse_number(cur: &mut Cursor) -> Result<(f64, SourceSpan), ParseError> {
    let negate = if cur.peek().kind == TokenKind::Minus {
        cur.bump();
        true
    } else {
        false
    };
    match cur.peek().kind.clone() {
        TokenKind::Int(v) => {
            let span = cur.bump().span;
            Ok((if negate { -(v as f64) } else { v as f64 }, span))
        }
        TokenKind::Real(v) => {
            let span = cur.bump().span;
            Ok((if negate { -v } else { v }, span))
        }
        _ => Err(cur.error("a number")),
    }
}

fn parse_atom(cur: &mut Cursor, depth: u32) -> Result<MtlFormula, ParseError> {
    match cur.peek().kind.clone() {
        TokenKind::LParen => {
            cur.bump();
            let inner = parse_or(cur, depth + 1)?;
            if cur.peek().kind != TokenKind::RParen {
                return Err(cur.error("`)`"));
            }
            cur.bump();
            Ok(inner)
        }
        TokenKind::Ident(name) => {
            match name.as_str() {
                "true" => {
                    cur.bump();
                    return Ok(MtlFormula::tt());
                }
                "false" => {
                    cur.bump();
                    return Ok(MtlFormula::ff());
                }
                _ => {}
            }
            cur.bump();
            // Inst.State
            if cur.peek().kind == TokenKind::Dot {
                cur.bump();
                let state = match cur.peek().kind.clone() {
                    TokenKind::Ident(state) => {
                        cur.bump();
                        state
                    }
                    _ => return Err(cur.error("a state name")),
                };
                return Ok(MtlFormula::Ap(Proposition::InstState { instance: name, state }));
            }
            // Comparison or bare boolean global.
            match comparison_op(&cur.peek().kind) {
                Some(op) => {
                    cur.bump();
                    let rhs = parse_term(cur)?;
                    Ok(MtlFormula::Ap(Proposition::Compare {
                        lhs: PropTerm::Ident(name),
                        op,
                        rhs,
                    }))
                }
                None => Ok(MtlFormula::Ap(Proposition::BoolVar(name))),
            }
        }
        TokenKind::Int(_) | TokenKind::Real(_) | TokenKind::Minus => {
            let (value, _) = parse_number(cur)?;
            let op = comparison_op(&cur.peek().kind)
                .ok_or_else(|| cur.error("a comparison operator"))?;
            cur.bump();
            let rhs = parse_term(cur)?;
            Ok(MtlFormula::Ap(Proposition::Compare { lhs: PropTerm::Num(value), op, rhs }))
        }
        _ => Err(cur.error("a proposition")),
    }
}

fn parse_term(cur: &mut Cursor) -> Result<PropTerm, ParseError> {
    match cur.peek().kind.clone() {
        TokenKind::Ident(name) => {
            cur.bump();
            Ok(PropTerm::Ident(name))
        }
        _ => {
            let (value, _) = parse_number(cur)?;
            Ok(PropTerm::Num(value))
        }
    }
}

fn comparison_op(kind: &TokenKind) -> Option<CmpOp> {
    match kind {
        TokenKind::Eq => Some(CmpOp::Eq),
        TokenKind::Ne => Some(CmpOp::Ne),
        TokenKind::Lt => Some(CmpOp::Lt),
        TokenKind::Le => Some(CmpOp::Le),
        TokenKind::Gt => Some(CmpOp::Gt),
        TokenKind::Ge => Some(CmpOp::Ge),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_bounded_mission_property() {
        let f = parse_property("F[SystemTime<=10] (numFlag==3 && robotSFNum<=1)").unwrap();
        let MtlFormula::Until { bound, lhs, rhs } = f else {
            panic!("expected bounded eventually, got {f:?}");
        };
        assert_eq!(bound, 10.0);
        assert_eq!(*lhs, MtlFormula::tt());
        assert!(matches!(*rhs, MtlFormula::And(..)));
    }

    #[test]
    fn parses_always_true() {
        let f = parse_property("G true").unwrap();
        // G p desugars to !(true U !p).
        let MtlFormula::Not(inner) = f else { panic!("expected negation") };
        assert!(matches!(*inner, MtlFormula::Until { bound, .. } if bound.is_infinite()));
    }

    #[test]
    fn parses_the_rescue_property() {
        let f = parse_property(
            "F (CrashNum<=1 && OutofBatteryNum<=1 && SavedVictimNum>=250)",
        )
        .unwrap();
        let MtlFormula::Until { bound, .. } = &f else { panic!("expected eventually") };
        assert!(bound.is_infinite());
    }

    #[test]
    fn parses_location_and_absorbing_propositions() {
        let f = parse_property("RobotA.RC && !Robot0.terminated").unwrap();
        assert!(matches!(
            f,
            MtlFormula::And(lhs, _) if matches!(*lhs, MtlFormula::Ap(Proposition::InstState { .. }))
        ));
    }

    #[test]
    fn rejects_negative_bounds_and_unknown_clocks() {
        assert!(parse_property("F[SystemTime<=-1] x==1").is_err());
        assert!(parse_property("F[OtherClock<=3] x==1").is_err());
    }

    #[test]
    fn parses_until_with_bound() {
        let f = parse_property("a==1 U[<=4] b==2").unwrap();
        assert!(matches!(f, MtlFormula::Until { bound, .. } if bound == 4.0));
    }

    #[test]
    fn rejects_trailing_tokens() {
        assert!(parse_property("true true").is_err());
    }
}
