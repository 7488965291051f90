//! The guard/action expression language.
//!
//! Guards are side-effect-free boolean expressions; actions are loop-free
//! statement blocks (assignments and if/else), so every script terminates by
//! construction. Scripts reference global and agent-local variables, one
//! dimensional arrays indexed by integers, and three host builtins:
//! `self_pos()` (index of the agent's current spatial state), `agent_count(S)`
//! (number of live instances currently in a state named or labeled `S`) and
//! `now()` (global model time).
//!
//! `&&` and `||` short-circuit, so a guard may gate an array access on a
//! bounds condition. Identifiers starting with `__` are reserved for
//! composition machinery and rejected in user scripts.

mod check;
mod eval;
mod pretty;

pub use check::{check_block, check_guard, typecheck_expr, Type, TypeEnv, TypeError};
pub use eval::{eval_expr, exec_block, BuiltinCtx, Delta, Env, EvalFault, Scope, Write};
pub use pretty::{render_real as pretty_real, render_value as pretty_value};

use crate::text::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Int(i64),
    Real(f64),
    Bool(bool),
    Var(String),
    Index(String, Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    SelfPos,
    AgentCount(String),
    Now,
}

/// An expression node; comparison ignores spans.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Int(a), ExprKind::Int(b)) => a == b,
            (ExprKind::Real(a), ExprKind::Real(b)) => a.to_bits() == b.to_bits(),
            (ExprKind::Bool(a), ExprKind::Bool(b)) => a == b,
            (ExprKind::Var(a), ExprKind::Var(b)) => a == b,
            (ExprKind::Index(a, ai), ExprKind::Index(b, bi)) => a == b && ai == bi,
            (ExprKind::Unary(a, ax), ExprKind::Unary(b, bx)) => a == b && ax == bx,
            (ExprKind::Binary(a, al, ar), ExprKind::Binary(b, bl, br)) => {
                a == b && al == bl && ar == br
            }
            (ExprKind::SelfPos, ExprKind::SelfPos) => true,
            (ExprKind::AgentCount(a), ExprKind::AgentCount(b)) => a == b,
            (ExprKind::Now, ExprKind::Now) => true,
            _ => false,
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: SourceSpan) -> Self {
        Expr { kind, span }
    }

    /// Builds a node with a synthetic span, for programmatic construction.
    pub fn synth(kind: ExprKind) -> Self {
        Expr { kind, span: SourceSpan::synthetic() }
    }

    pub fn bool_lit(v: bool) -> Self {
        Expr::synth(ExprKind::Bool(v))
    }

    pub fn int_lit(v: i64) -> Self {
        Expr::synth(ExprKind::Int(v))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::synth(ExprKind::Var(name.into()))
    }

    pub fn not(self) -> Self {
        Expr::synth(ExprKind::Unary(UnaryOp::Not, Box::new(self)))
    }

    pub fn and(self, rhs: Expr) -> Self {
        Expr::synth(ExprKind::Binary(BinaryOp::And, Box::new(self), Box::new(rhs)))
    }

    pub fn eq_int(name: &str, v: i64) -> Self {
        Expr::synth(ExprKind::Binary(
            BinaryOp::Eq,
            Box::new(Expr::var(name)),
            Box::new(Expr::int_lit(v)),
        ))
    }

    /// Conjunction of a list, or `true` when empty.
    pub fn conj(terms: Vec<Expr>) -> Self {
        let mut iter = terms.into_iter();
        match iter.next() {
            None => Expr::bool_lit(true),
            Some(first) => iter.fold(first, |acc, t| acc.and(t)),
        }
    }

    /// Canonical source rendering; used as the grouping key for transitions.
    pub fn render(&self) -> String {
        pretty::render_expr(self)
    }
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Assign {
        name: String,
        index: Option<Box<Expr>>,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Block,
    },
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: SourceSpan,
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (
                StmtKind::Assign { name: a, index: ai, value: av },
                StmtKind::Assign { name: b, index: bi, value: bv },
            ) => a == b && ai == bi && av == bv,
            (
                StmtKind::If { cond: a, then_block: at, else_block: ae },
                StmtKind::If { cond: b, then_block: bt, else_block: be },
            ) => a == b && at == bt && ae == be,
            _ => false,
        }
    }
}

impl Stmt {
    pub fn synth(kind: StmtKind) -> Self {
        Stmt { kind, span: SourceSpan::synthetic() }
    }

    pub fn assign(name: impl Into<String>, value: Expr) -> Self {
        Stmt::synth(StmtKind::Assign { name: name.into(), index: None, value })
    }
}

/// A statement block; the empty block is a no-op.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Block(pub Vec<Stmt>);

impl Block {
    pub fn empty() -> Self {
        Block(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn render(&self) -> String {
        pretty::render_block(self)
    }

    /// Concatenation, preserving statement order.
    pub fn then(&self, other: &Block) -> Block {
        let mut stmts = self.0.clone();
        stmts.extend(other.0.iter().cloned());
        Block(stmts)
    }
}

/// Runtime values. Arrays are homogeneous and hold scalars only.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Array(Vec<Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Bool(_) => "bool",
            Value::Array(_) => "array",
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Numeric view with int-to-real promotion.
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }
}

/// True when a name is reserved for composition machinery.
pub fn is_reserved_ident(name: &str) -> bool {
    name.starts_with("__")
}
