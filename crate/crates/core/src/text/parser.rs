//! Recursive-descent parser for model files and script fragments.


use thiserror::Error;

use super::lexer::{tokenize, Token, TokenKind};
use super::{AgentClassDecl, ConstDecl, Hooks, ModelDocument, SourceSpan, VarDecl};
use crate::script::{
    check_block, check_guard, is_reserved_ident, BinaryOp, Block, Expr, ExprKind, Stmt, StmtKind,
    Type, TypeEnv, UnaryOp, Value,
};
use crate::sta::{
    Diagnostic, Distribution, PredicateKind, PredicateState, Severity, Sta, StaRole, StaState,
    StaTransition,
};

/// Parsing failed; carries one diagnostic per finding.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl ParseError {
    fn single(message: String, span: SourceSpan) -> Self {
        ParseError {
            diagnostics: vec![Diagnostic {
                severity: Severity::Error,
                message,
                subject: None,
                span: Some(span),
            }],
        }
    }
}

const MAX_DEPTH: u32 = 128;

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

    fn at_ident(&self, word: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s == word)
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if self.at_ident(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<SourceSpan, ParseError> {
        if self.at_ident(word) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&[&format!("`{word}`")]))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(s) => {
                let name = s.clone();
                let span = self.bump().span;
                Ok((name, span))
            }
            _ => Err(self.expected(&[what])),
        }
    }

    fn expect_kind(&mut self, kind: TokenKind, what: &str) -> Result<SourceSpan, ParseError> {
        if self.peek().kind == kind {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&[what]))
        }
    }

    /// Syntax error at the current token listing what would have been legal.
    fn expected(&self, options: &[&str]) -> ParseError {
        let found = self.peek().kind.describe();
        let expected = options.join(" or ");
        ParseError::single(
            format!("expected {expected}, found {found}"),
            self.peek().span.clone(),
        )
    }
}

/// Parses one model file. Scope and type errors are collected and reported
/// together; the first syntax error aborts immediately.
pub fn parse_model(input: &str) -> Result<ModelDocument, ParseError> {
    parse_model_named(input, "<input>")
}

pub fn parse_model_named(input: &str, file: &str) -> Result<ModelDocument, ParseError> {
    let tokens = tokenize(input, file)
        .map_err(|e| ParseError::single(e.message, e.span))?;
    let mut cur = Cursor { tokens, pos: 0 };
    let mut doc = ModelDocument::default();

    if cur.at_eof() {
        return Err(cur.expected(&["`globals`", "`const`", "`agentclass`"]));
    }
    while !cur.at_eof() {
        if cur.eat_ident("globals") {
            cur.expect_kind(TokenKind::LBrace, "`{`")?;
            while !matches!(cur.peek().kind, TokenKind::RBrace | TokenKind::Eof) {
                doc.globals.push(parse_var_decl(&mut cur)?);
            }
            cur.expect_kind(TokenKind::RBrace, "`}`")?;
        } else if cur.eat_ident("const") {
            let (name, span) = cur.expect_ident("constant name")?;
            cur.expect_kind(TokenKind::Assign, "`=`")?;
            let value = parse_scalar(&mut cur)?;
            if matches!(value, Value::Bool(_)) {
                return Err(ParseError::single(
                    "constants must be numeric".into(),
                    span,
                ));
            }
            cur.expect_kind(TokenKind::Semi, "`;`")?;
            doc.consts.push(ConstDecl { name, value, span });
        } else if cur.eat_ident("agentclass") {
            doc.classes.push(parse_agentclass(&mut cur)?);
        } else {
            return Err(cur.expected(&["`globals`", "`const`", "`agentclass`"]));
        }
    }

    let diagnostics = analyze(&doc);
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(ParseError { diagnostics });
    }
    Ok(doc)
}

fn parse_var_decl(cur: &mut Cursor) -> Result<VarDecl, ParseError> {
    let (name, span) = cur.expect_ident("variable name")?;
    cur.expect_kind(TokenKind::Assign, "`=`")?;
    let init = parse_value(cur)?;
    cur.expect_kind(TokenKind::Semi, "`;`")?;
    Ok(VarDecl { name, init, span })
}

fn parse_value(cur: &mut Cursor) -> Result<Value, ParseError> {
    if cur.peek().kind == TokenKind::LBracket {
        let open = cur.bump().span;
        let mut items = Vec::new();
        loop {
            items.push(parse_scalar(cur)?);
            if cur.peek().kind == TokenKind::Comma {
                cur.bump();
            } else {
                break;
            }
        }
        cur.expect_kind(TokenKind::RBracket, "`]`")?;
        let first = items[0].type_name();
        if items.iter().any(|v| v.type_name() != first) {
            return Err(ParseError::single("array elements must share one type".into(), open));
        }
        Ok(Value::Array(items))
    } else {
        parse_scalar(cur)
    }
}

fn parse_scalar(cur: &mut Cursor) -> Result<Value, ParseError> {
    let negate = if cur.peek().kind == TokenKind::Minus {
        cur.bump();
        true
    } else {
        false
    };
    match cur.peek().kind.clone() {
        TokenKind::Int(v) => {
            cur.bump();
            Ok(Value::Int(if negate { -v } else { v }))
        }
        TokenKind::Real(v) => {
            cur.bump();
            Ok(Value::Real(if negate { -v } else { v }))
        }
        TokenKind::Ident(ref s) if !negate && s == "true" => {
            cur.bump();
            Ok(Value::Bool(true))
        }
        TokenKind::Ident(ref s) if !negate && s == "false" => {
            cur.bump();
            Ok(Value::Bool(false))
        }
        _ => Err(cur.expected(&["a number", "`true`", "`false`"])),
    }
}

fn parse_number(cur: &mut Cursor) -> Result<f64, ParseError> {
    match parse_scalar(cur)? {
        Value::Int(v) => Ok(v as f64),
        Value::Real(v) => Ok(v),
        _ => Err(cur.expected(&["a number"])),
    }
}

fn parse_agentclass(cur: &mut Cursor) -> Result<AgentClassDecl, ParseError> {
    let (name, span) = cur.expect_ident("agent class name")?;
    cur.expect_kind(TokenKind::LBrace, "`{`")?;

    let mut locals = Vec::new();
    if cur.eat_ident("locals") {
        cur.expect_kind(TokenKind::LBrace, "`{`")?;
        while !matches!(cur.peek().kind, TokenKind::RBrace | TokenKind::Eof) {
            locals.push(parse_var_decl(cur)?);
        }
        cur.expect_kind(TokenKind::RBrace, "`}`")?;
    }

    cur.expect_word("spatial")?;
    let spatial = parse_sta_block(cur, StaRole::Spatial)?;

    let interaction = if cur.at_ident("interaction") {
        cur.bump();
        Some(parse_sta_block(cur, StaRole::Interaction)?)
    } else {
        None
    };

    let mut predicates = Vec::new();
    if cur.eat_ident("predicates") {
        cur.expect_kind(TokenKind::LBrace, "`{`")?;
        loop {
            let kind = if cur.at_ident("success") {
                cur.bump();
                PredicateKind::Success
            } else if cur.at_ident("failure") {
                cur.bump();
                PredicateKind::Failure
            } else {
                break;
            };
            let (id, _) = cur.expect_ident("predicate state name")?;
            cur.expect_word("when")?;
            let guard = parse_expr(cur, 0)?;
            let on_enter = if cur.eat_ident("do") { parse_block(cur, 0)? } else { Block::empty() };
            predicates.push(PredicateState { id, kind, guard, on_enter });
        }
        cur.expect_kind(TokenKind::RBrace, "`}`")?;
    }

    let mut hooks = Hooks::default();
    if cur.eat_ident("hooks") {
        cur.expect_kind(TokenKind::LBrace, "`{`")?;
        loop {
            if cur.eat_ident("on_move") {
                hooks.on_move = parse_block(cur, 0)?;
            } else if cur.eat_ident("check_interaction") {
                hooks.check_interaction = Some(parse_expr(cur, 0)?);
            } else if cur.eat_ident("on_interaction_entry") {
                hooks.on_interaction_entry = parse_block(cur, 0)?;
            } else if cur.eat_ident("on_interaction_exit") {
                hooks.on_interaction_exit = parse_block(cur, 0)?;
            } else {
                break;
            }
        }
        cur.expect_kind(TokenKind::RBrace, "`}`")?;
    }

    cur.expect_kind(TokenKind::RBrace, "`}`")?;

    Ok(AgentClassDecl { name, locals, spatial, interaction, predicates, hooks, span })
}

fn parse_sta_block(cur: &mut Cursor, role: StaRole) -> Result<Sta, ParseError> {
    let open = cur.expect_kind(TokenKind::LBrace, "`{`")?;
    let mut sta = Sta::new(role, String::new());

    if role == StaRole::Interaction {
        cur.expect_word("entry")?;
        let (entry, _) = cur.expect_ident("entry state name")?;
        cur.expect_word("exit")?;
        let (exit, _) = cur.expect_ident("exit state name")?;
        sta.interaction_entry = Some(entry.clone());
        sta.interaction_exit = Some(exit);
        sta.initial = entry;
    }

    // Endpoint spans for declared-state checks after the block closes.
    let mut endpoint_spans: Vec<(String, SourceSpan)> = Vec::new();

    loop {
        if cur.eat_ident("state") {
            let (id, id_span) = cur.expect_ident("state name")?;
            cur.expect_word("delay")?;
            let delay = parse_distribution(cur)?;
            let mut state = StaState::new(id, delay);
            if cur.eat_ident("cap") {
                state.invariant_cap = Some(parse_number(cur)?);
            }
            if cur.eat_ident("labels") {
                while let TokenKind::Ident(word) = &cur.peek().kind {
                    if word == "state" || word == "on" || word == "labels" {
                        break;
                    }
                    state.labels.push(word.clone());
                    cur.bump();
                }
                if state.labels.is_empty() {
                    return Err(cur.expected(&["at least one label"]));
                }
            }
            if sta.states.iter().any(|s| s.id == state.id) {
                return Err(ParseError::single(
                    format!("duplicate state `{}`", state.id),
                    id_span,
                ));
            }
            sta.states.push(state);
        } else if cur.eat_ident("on") {
            let (source, src_span) = cur.expect_ident("source state")?;
            cur.expect_kind(TokenKind::Arrow, "`->`")?;
            let (target, tgt_span) = cur.expect_ident("target state")?;
            let mut transition = StaTransition::new(source.clone(), target.clone());
            if cur.eat_ident("guard") {
                transition.guard = parse_expr(cur, 0)?;
            }
            if cur.eat_ident("prob") {
                transition.prob = parse_number(cur)?;
            }
            if cur.eat_ident("do") {
                transition.action = parse_block(cur, 0)?;
            }
            endpoint_spans.push((source, src_span));
            endpoint_spans.push((target, tgt_span));
            sta.transitions.push(transition);
        } else {
            break;
        }
    }
    cur.expect_kind(TokenKind::RBrace, "`}`")?;

    // Entry/exit states may be left implicit; they join with zero delay.
    if role == StaRole::Interaction {
        for marker in [sta.interaction_entry.clone(), sta.interaction_exit.clone()] {
            let id = marker.expect("set above");
            if sta.state_index(&id).is_none() {
                sta.states.push(StaState::new(id, Distribution::Deterministic { value: 0.0 }));
            }
        }
    }

    if sta.states.is_empty() {
        return Err(ParseError::single("automaton needs at least one state".into(), open));
    }
    if sta.initial.is_empty() {
        sta.initial = sta.states[0].id.clone();
    }

    for (id, span) in endpoint_spans {
        if sta.state_index(&id).is_none() {
            return Err(ParseError::single(
                format!("transition references undeclared state `{id}`"),
                span,
            ));
        }
    }

    Ok(sta)
}

fn parse_distribution(cur: &mut Cursor) -> Result<Distribution, ParseError> {
    let (kind, span) = cur.expect_ident("`exp`, `uniform` or `det`")?;
    cur.expect_kind(TokenKind::LParen, "`(`")?;
    let dist = match kind.as_str() {
        "exp" => Distribution::Exponential { rate: parse_number(cur)? },
        "uniform" => {
            let lo = parse_number(cur)?;
            cur.expect_kind(TokenKind::Comma, "`,`")?;
            let hi = parse_number(cur)?;
            Distribution::Uniform { lo, hi }
        }
        "det" => Distribution::Deterministic { value: parse_number(cur)? },
        other => {
            return Err(ParseError::single(
                format!("unknown distribution `{other}`; expected `exp`, `uniform` or `det`"),
                span,
            ))
        }
    };
    cur.expect_kind(TokenKind::RParen, "`)`")?;
    Ok(dist)
}

// --- scripts ---------------------------------------------------------------

fn parse_block(cur: &mut Cursor, depth: u32) -> Result<Block, ParseError> {
    if depth > MAX_DEPTH {
        return Err(ParseError::single("script is nested too deeply".into(), cur.peek().span.clone()));
    }
    cur.expect_kind(TokenKind::LBrace, "`{`")?;
    let mut stmts = Vec::new();
    while !matches!(cur.peek().kind, TokenKind::RBrace | TokenKind::Eof) {
        stmts.push(parse_stmt(cur, depth + 1)?);
    }
    cur.expect_kind(TokenKind::RBrace, "`}`")?;
    Ok(Block(stmts))
}

fn parse_stmt(cur: &mut Cursor, depth: u32) -> Result<Stmt, ParseError> {
    if depth > MAX_DEPTH {
        return Err(ParseError::single("script is nested too deeply".into(), cur.peek().span.clone()));
    }
    if cur.at_ident("if") {
        let span = cur.bump().span;
        cur.expect_kind(TokenKind::LParen, "`(`")?;
        let cond = parse_expr(cur, depth + 1)?;
        cur.expect_kind(TokenKind::RParen, "`)`")?;
        let then_block = parse_block(cur, depth + 1)?;
        let else_block = if cur.eat_ident("else") {
            parse_block(cur, depth + 1)?
        } else {
            Block::empty()
        };
        return Ok(Stmt { kind: StmtKind::If { cond, then_block, else_block }, span });
    }

    let (name, span) = cur.expect_ident("statement")?;
    let index = if cur.peek().kind == TokenKind::LBracket {
        cur.bump();
        let idx = parse_expr(cur, depth + 1)?;
        cur.expect_kind(TokenKind::RBracket, "`]`")?;
        Some(Box::new(idx))
    } else {
        None
    };
    cur.expect_kind(TokenKind::Assign, "`=`")?;
    let value = parse_expr(cur, depth + 1)?;
    cur.expect_kind(TokenKind::Semi, "`;`")?;
    Ok(Stmt { kind: StmtKind::Assign { name, index, value }, span })
}

fn parse_expr(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    if depth > MAX_DEPTH {
        return Err(ParseError::single(
            "expression is nested too deeply".into(),
            cur.peek().span.clone(),
        ));
    }
    parse_or(cur, depth)
}

fn parse_or(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    let mut lhs = parse_and(cur, depth)?;
    while cur.peek().kind == TokenKind::OrOr {
        let span = cur.bump().span;
        let rhs = parse_and(cur, depth)?;
        lhs = Expr::new(ExprKind::Binary(BinaryOp::Or, Box::new(lhs), Box::new(rhs)), span);
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    let mut lhs = parse_cmp(cur, depth)?;
    while cur.peek().kind == TokenKind::AndAnd {
        let span = cur.bump().span;
        let rhs = parse_cmp(cur, depth)?;
        lhs = Expr::new(ExprKind::Binary(BinaryOp::And, Box::new(lhs), Box::new(rhs)), span);
    }
    Ok(lhs)
}

fn parse_cmp(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    let lhs = parse_add(cur, depth)?;
    let op = match cur.peek().kind {
        TokenKind::Eq => BinaryOp::Eq,
        TokenKind::Ne => BinaryOp::Ne,
        TokenKind::Lt => BinaryOp::Lt,
        TokenKind::Le => BinaryOp::Le,
        TokenKind::Gt => BinaryOp::Gt,
        TokenKind::Ge => BinaryOp::Ge,
        _ => return Ok(lhs),
    };
    let span = cur.bump().span;
    let rhs = parse_add(cur, depth)?;
    // Comparisons do not chain; `a < b < c` needs explicit parentheses.
    Ok(Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span))
}

fn parse_add(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    let mut lhs = parse_mul(cur, depth)?;
    loop {
        let op = match cur.peek().kind {
            TokenKind::Plus => BinaryOp::Add,
            TokenKind::Minus => BinaryOp::Sub,
            _ => return Ok(lhs),
        };
        let span = cur.bump().span;
        let rhs = parse_mul(cur, depth)?;
        lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
    }
}

fn parse_mul(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    let mut lhs = parse_unary(cur, depth)?;
    loop {
        let op = match cur.peek().kind {
            TokenKind::Star => BinaryOp::Mul,
            TokenKind::Slash => BinaryOp::Div,
            TokenKind::Percent => BinaryOp::Rem,
            _ => return Ok(lhs),
        };
        let span = cur.bump().span;
        let rhs = parse_unary(cur, depth)?;
        lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
    }
}

fn parse_unary(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    if depth > MAX_DEPTH {
        return Err(ParseError::single(
            "expression is nested too deeply".into(),
            cur.peek().span.clone(),
        ));
    }
    match cur.peek().kind {
        TokenKind::Bang => {
            let span = cur.bump().span;
            let inner = parse_unary(cur, depth + 1)?;
            Ok(Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(inner)), span))
        }
        TokenKind::Minus => {
            let span = cur.bump().span;
            let inner = parse_unary(cur, depth + 1)?;
            // Fold literal negation so -1 round-trips as an integer literal.
            match inner.kind {
                ExprKind::Int(v) => Ok(Expr::new(ExprKind::Int(-v), span)),
                ExprKind::Real(v) => Ok(Expr::new(ExprKind::Real(-v), span)),
                _ => Ok(Expr::new(ExprKind::Unary(UnaryOp::Neg, Box::new(inner)), span)),
            }
        }
        _ => parse_postfix(cur, depth),
    }
}

fn parse_postfix(cur: &mut Cursor, depth: u32) -> Result<Expr, ParseError> {
    match cur.peek().kind.clone() {
        TokenKind::Int(v) => {
            let span = cur.bump().span;
            Ok(Expr::new(ExprKind::Int(v), span))
        }
        TokenKind::Real(v) => {
            let span = cur.bump().span;
            Ok(Expr::new(ExprKind::Real(v), span))
        }
        TokenKind::LParen => {
            cur.bump();
            let inner = parse_expr(cur, depth + 1)?;
            cur.expect_kind(TokenKind::RParen, "`)`")?;
            Ok(inner)
        }
        TokenKind::Ident(name) => {
            let span = cur.bump().span;
            match name.as_str() {
                "true" => return Ok(Expr::new(ExprKind::Bool(true), span)),
                "false" => return Ok(Expr::new(ExprKind::Bool(false), span)),
                _ => {}
            }
            if cur.peek().kind == TokenKind::LParen {
                cur.bump();
                let expr = match name.as_str() {
                    "self_pos" => Expr::new(ExprKind::SelfPos, span),
                    "now" => Expr::new(ExprKind::Now, span),
                    "agent_count" => {
                        let (arg, _) = cur.expect_ident("state name or label")?;
                        Expr::new(ExprKind::AgentCount(arg), span)
                    }
                    other => {
                        return Err(ParseError::single(
                            format!(
                                "unknown builtin `{other}`; available: self_pos(), agent_count(name), now()"
                            ),
                            span,
                        ))
                    }
                };
                cur.expect_kind(TokenKind::RParen, "`)`")?;
                Ok(expr)
            } else if cur.peek().kind == TokenKind::LBracket {
                cur.bump();
                let idx = parse_expr(cur, depth + 1)?;
                cur.expect_kind(TokenKind::RBracket, "`]`")?;
                Ok(Expr::new(ExprKind::Index(name, Box::new(idx)), span))
            } else {
                Ok(Expr::new(ExprKind::Var(name), span))
            }
        }
        _ => Err(cur.expected(&["an expression"])),
    }
}

/// Parses a standalone guard expression, e.g. for tests and tools.
pub fn parse_guard_expr(input: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(input, "<expr>")
        .map_err(|e| ParseError::single(e.message, e.span))?;
    let mut cur = Cursor { tokens, pos: 0 };
    let expr = parse_expr(&mut cur, 0)?;
    if !cur.at_eof() {
        return Err(cur.expected(&["end of input"]));
    }
    Ok(expr)
}

/// Parses a standalone action block, e.g. `{ x = 1; }`.
pub fn parse_action_block(input: &str) -> Result<Block, ParseError> {
    let tokens = tokenize(input, "<block>")
        .map_err(|e| ParseError::single(e.message, e.span))?;
    let mut cur = Cursor { tokens, pos: 0 };
    let block = parse_block(&mut cur, 0)?;
    if !cur.at_eof() {
        return Err(cur.expected(&["end of input"]));
    }
    Ok(block)
}

// --- semantic checks --------------------------------------------------------

/// Builds the script type environment visible inside one agent class.
pub fn class_type_env(doc: &ModelDocument, class: &AgentClassDecl) -> TypeEnv {
    let mut env = TypeEnv::new();
    for c in &doc.consts {
        if let Some(ty) = Type::of_value(&c.value) {
            env.declare_const(c.name.clone(), ty);
        }
    }
    for g in &doc.globals {
        if let Some(ty) = Type::of_value(&g.init) {
            env.declare(g.name.clone(), ty);
        }
    }
    for l in &class.locals {
        if let Some(ty) = Type::of_value(&l.init) {
            env.declare(l.name.clone(), ty);
        }
    }
    env
}

fn push_err(out: &mut Vec<Diagnostic>, message: String, span: &SourceSpan) {
    out.push(Diagnostic {
        severity: Severity::Error,
        message,
        subject: None,
        span: Some(span.clone()),
    });
}

fn analyze(doc: &ModelDocument) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    // Global-namespace uniqueness and value sanity.
    let mut seen: Vec<&str> = Vec::new();
    for (name, span) in doc
        .consts
        .iter()
        .map(|c| (&c.name, &c.span))
        .chain(doc.globals.iter().map(|g| (&g.name, &g.span)))
    {
        if seen.contains(&name.as_str()) {
            push_err(&mut out, format!("duplicate declaration of `{name}`"), span);
        }
        seen.push(name);
        if is_reserved_ident(name) {
            push_err(&mut out, format!("`{name}` is reserved"), span);
        }
    }
    for g in &doc.globals {
        if Type::of_value(&g.init).is_none() {
            push_err(&mut out, format!("cannot infer type for `{}`", g.name), &g.span);
        }
    }

    let mut class_names: Vec<&str> = Vec::new();
    for class in &doc.classes {
        if class_names.contains(&class.name.as_str()) {
            push_err(&mut out, format!("duplicate agent class `{}`", class.name), &class.span);
        }
        class_names.push(&class.name);

        for l in &class.locals {
            if is_reserved_ident(&l.name) {
                push_err(&mut out, format!("`{}` is reserved", l.name), &l.span);
            }
            if seen.contains(&l.name.as_str())
                || class.locals.iter().filter(|o| o.name == l.name).count() > 1
            {
                push_err(&mut out, format!("duplicate declaration of `{}`", l.name), &l.span);
            }
            if Type::of_value(&l.init).is_none() {
                push_err(&mut out, format!("cannot infer type for `{}`", l.name), &l.span);
            }
        }

        // State ids must be unique across the three concerns of one class,
        // so the weaving disjointness precondition holds by construction.
        let mut ids: Vec<&str> = Vec::new();
        let interaction_states =
            class.interaction.iter().flat_map(|i| i.states.iter().map(|s| &s.id));
        for id in class
            .spatial
            .states
            .iter()
            .map(|s| &s.id)
            .chain(interaction_states)
            .chain(class.predicates.iter().map(|p| &p.id))
        {
            if ids.contains(&id.as_str()) {
                push_err(&mut out, format!("state id `{id}` is declared more than once in class `{}`", class.name), &class.span);
            }
            ids.push(id);
        }

        // Script type checks.
        let env = class_type_env(doc, class);
        let check_expr = |expr: &Expr, out: &mut Vec<Diagnostic>| {
            if let Err(e) = check_guard(expr, &env) {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    message: e.to_string(),
                    subject: None,
                    span: Some(e.span().clone()),
                });
            }
        };
        let check_body = |block: &Block, out: &mut Vec<Diagnostic>| {
            if let Err(e) = check_block(block, &env) {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    message: e.to_string(),
                    subject: None,
                    span: Some(e.span().clone()),
                });
            }
        };

        for sta in std::iter::once(&class.spatial).chain(class.interaction.iter()) {
            for t in &sta.transitions {
                check_expr(&t.guard, &mut out);
                check_body(&t.action, &mut out);
            }
        }
        for p in &class.predicates {
            check_expr(&p.guard, &mut out);
            check_body(&p.on_enter, &mut out);
        }
        check_body(&class.hooks.on_move, &mut out);
        if let Some(ci) = &class.hooks.check_interaction {
            check_expr(ci, &mut out);
        }
        check_body(&class.hooks.on_interaction_entry, &mut out);
        check_body(&class.hooks.on_interaction_exit, &mut out);
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "
        globals { counter = 0; }
        agentclass Walker {
          locals { steps = 0; }
          spatial {
            state A delay exp(1.0)
            state B delay det(2.0) cap 5.0 labels roomy
            on A -> B guard counter >= 0 do { steps = steps + 1; }
            on B -> A
          }
          interaction {
            entry E exit X
            on E -> X do { counter = counter + 1; }
          }
          predicates {
            failure stuck when steps == 99
          }
          hooks {
            on_move { counter = counter + 1; }
            check_interaction steps == 3
          }
        }
    ";

    #[test]
    fn parses_a_full_class() {
        let doc = parse_model(TINY).unwrap();
        assert_eq!(doc.classes.len(), 1);
        let class = &doc.classes[0];
        assert_eq!(class.spatial.states.len(), 2);
        assert_eq!(class.spatial.initial, "A");
        assert_eq!(class.spatial.states[1].invariant_cap, Some(5.0));
        assert_eq!(class.spatial.states[1].labels, vec!["roomy".to_string()]);
        // Entry and exit were implicitly declared with zero delay.
        let interaction = class.interaction.as_ref().unwrap();
        assert_eq!(interaction.states.len(), 2);
        assert_eq!(
            interaction.state("E").unwrap().delay,
            crate::sta::Distribution::Deterministic { value: 0.0 }
        );
        assert!(class.hooks.check_interaction.is_some());
    }

    #[test]
    fn empty_input_is_a_syntax_error_at_line_one() {
        let err = parse_model("").unwrap_err();
        let span = err.diagnostics[0].span.as_ref().unwrap();
        assert_eq!((span.line, span.column), (1, 1));
    }

    #[test]
    fn undeclared_transition_target_names_the_state_and_its_span() {
        let input = "
agentclass A {
  spatial {
    state S delay det(1.0)
    on S -> RX
  }
}
";
        let err = parse_model(input).unwrap_err();
        let diag = &err.diagnostics[0];
        assert!(diag.message.contains("RX"), "{}", diag.message);
        let span = diag.span.as_ref().unwrap();
        assert_eq!(span.line, 5);
        assert_eq!(span.column, 13);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let dup_global = "globals { x = 1; x = 2; } agentclass A { spatial { state S delay det(1.0) } }";
        assert!(parse_model(dup_global).is_err());

        let dup_state =
            "agentclass A { spatial { state S delay det(1.0) state S delay det(1.0) } }";
        assert!(parse_model(dup_state).is_err());

        let local_shadows_global =
            "globals { x = 1; } agentclass A { locals { x = 2; } spatial { state S delay det(1.0) } }";
        assert!(parse_model(local_shadows_global).is_err());
    }

    #[test]
    fn script_type_errors_are_reported_with_spans() {
        let input = "
agentclass A {
  locals { n = 0; }
  spatial {
    state S delay det(1.0)
    on S -> S guard n + 1
  }
}
";
        let err = parse_model(input).unwrap_err();
        assert!(err.diagnostics.iter().any(|d| d.message.contains("guard must be bool")));
    }

    #[test]
    fn reserved_identifiers_are_rejected_in_scripts_and_declarations() {
        let in_script =
            "agentclass A { locals { n = 0; } spatial { state S delay det(1.0) on S -> S do { __origin = 1; } } }";
        let err = parse_model(in_script).unwrap_err();
        assert!(err.diagnostics.iter().any(|d| d.message.contains("reserved")));

        let in_decl = "globals { __x = 1; } agentclass A { spatial { state S delay det(1.0) } }";
        assert!(parse_model(in_decl).is_err());
    }

    #[test]
    fn deep_nesting_errors_instead_of_overflowing() {
        let mut expr = String::from("agentclass A { spatial { state S delay det(1.0) on S -> S guard ");
        expr.push_str(&"(".repeat(400));
        expr.push_str("true");
        expr.push_str(&")".repeat(400));
        expr.push_str(" } }");
        assert!(parse_model(&expr).is_err());
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        let err = parse_guard_expr("rand() > 1").unwrap_err();
        assert!(err.diagnostics[0].message.contains("unknown builtin"));
    }

    #[test]
    fn interaction_without_entry_marker_is_a_syntax_error() {
        let input = "agentclass A { spatial { state S delay det(1.0) } interaction { state E delay det(0) } }";
        let err = parse_model(input).unwrap_err();
        assert!(err.diagnostics[0].message.contains("entry"));
    }
}
