//! Script interpreter: pure guard evaluation and atomic action execution.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{BinaryOp, Block, Expr, ExprKind, Stmt, StmtKind, UnaryOp, Value};
use crate::text::SourceSpan;

/// A variable environment; iteration order is the name order, so serialized
/// snapshots are deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Env {
    vars: BTreeMap<String, Value>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: Value) {
        self.vars.insert(name.into(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// Where a variable write landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Global,
    Local,
}

/// One element- or variable-level write produced by an action block.
#[derive(Debug, Clone, PartialEq)]
pub struct Write {
    pub scope: Scope,
    pub name: String,
    pub index: Option<usize>,
    pub value: Value,
}

/// The ordered set of writes produced by one action execution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Delta(pub Vec<Write>);

impl Delta {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Applies the writes in order. Targets were resolved during execution,
    /// so application cannot fail.
    pub fn apply(&self, globals: &mut Env, locals: &mut Env) {
        for w in &self.0 {
            let env = match w.scope {
                Scope::Global => &mut *globals,
                Scope::Local => &mut *locals,
            };
            match w.index {
                None => env.set(w.name.clone(), w.value.clone()),
                Some(i) => {
                    if let Some(Value::Array(items)) = env.vars.get_mut(&w.name) {
                        items[i] = w.value.clone();
                    }
                }
            }
        }
    }
}

/// Host-supplied builtins for one evaluation.
#[derive(Clone, Copy)]
pub struct BuiltinCtx<'a> {
    /// Index of the agent's current spatial state, -1 when not applicable.
    pub self_pos: i64,
    /// Global model time.
    pub now: f64,
    /// Live-instance count per state name or label; `None` yields 0.
    pub counts: Option<&'a dyn Fn(&str) -> i64>,
}

impl Default for BuiltinCtx<'_> {
    fn default() -> Self {
        BuiltinCtx { self_pos: -1, now: 0.0, counts: None }
    }
}

impl std::fmt::Debug for BuiltinCtx<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinCtx")
            .field("self_pos", &self.self_pos)
            .field("now", &self.now)
            .finish_non_exhaustive()
    }
}

/// A run-aborting script evaluation fault.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalFault {
    #[error("{span}: undefined variable `{name}`")]
    UndefinedVariable { name: String, span: SourceSpan },
    #[error("{span}: index {index} out of bounds for `{name}` (length {len})")]
    IndexOutOfBounds { name: String, index: i64, len: usize, span: SourceSpan },
    #[error("{span}: division by zero")]
    DivisionByZero { span: SourceSpan },
    #[error("{span}: {detail}")]
    TypeMismatch { detail: String, span: SourceSpan },
}

impl EvalFault {
    pub fn span(&self) -> &SourceSpan {
        match self {
            EvalFault::UndefinedVariable { span, .. }
            | EvalFault::IndexOutOfBounds { span, .. }
            | EvalFault::DivisionByZero { span }
            | EvalFault::TypeMismatch { span, .. } => span,
        }
    }
}

fn mismatch(detail: impl Into<String>, span: &SourceSpan) -> EvalFault {
    EvalFault::TypeMismatch { detail: detail.into(), span: span.clone() }
}

/// Read-only view of the two variable scopes plus any pending writes.
struct Frame<'a> {
    globals: &'a Env,
    locals: &'a Env,
    overlay: BTreeMap<(Scope, String), Value>,
    writes: Vec<Write>,
    ctx: BuiltinCtx<'a>,
}

impl<'a> Frame<'a> {
    fn lookup(&self, name: &str, span: &SourceSpan) -> Result<(Scope, Value), EvalFault> {
        for scope in [Scope::Local, Scope::Global] {
            if let Some(v) = self.overlay.get(&(scope, name.to_string())) {
                return Ok((scope, v.clone()));
            }
            let env = match scope {
                Scope::Local => self.locals,
                Scope::Global => self.globals,
            };
            if let Some(v) = env.get(name) {
                return Ok((scope, v.clone()));
            }
        }
        Err(EvalFault::UndefinedVariable { name: name.to_string(), span: span.clone() })
    }

    fn eval(&self, expr: &Expr) -> Result<Value, EvalFault> {
        let span = &expr.span;
        match &expr.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Real(v) => Ok(Value::Real(*v)),
            ExprKind::Bool(v) => Ok(Value::Bool(*v)),
            ExprKind::Var(name) => Ok(self.lookup(name, span)?.1),
            ExprKind::Index(name, idx) => {
                let (_, value) = self.lookup(name, span)?;
                let items = match value {
                    Value::Array(items) => items,
                    other => {
                        return Err(mismatch(
                            format!("`{name}` is {}, not an array", other.type_name()),
                            span,
                        ))
                    }
                };
                let i = self
                    .eval(idx)?
                    .as_int()
                    .ok_or_else(|| mismatch("array index must be an integer", &idx.span))?;
                if i < 0 || i as usize >= items.len() {
                    return Err(EvalFault::IndexOutOfBounds {
                        name: name.clone(),
                        index: i,
                        len: items.len(),
                        span: span.clone(),
                    });
                }
                Ok(items[i as usize].clone())
            }
            ExprKind::Unary(op, inner) => {
                let v = self.eval(inner)?;
                match op {
                    UnaryOp::Not => v
                        .as_bool()
                        .map(|b| Value::Bool(!b))
                        .ok_or_else(|| mismatch("`!` needs a boolean operand", span)),
                    UnaryOp::Neg => match v {
                        Value::Int(i) => Ok(Value::Int(-i)),
                        Value::Real(r) => Ok(Value::Real(-r)),
                        _ => Err(mismatch("unary `-` needs a numeric operand", span)),
                    },
                }
            }
            ExprKind::Binary(op, lhs, rhs) => self.eval_binary(*op, lhs, rhs, span),
            ExprKind::SelfPos => Ok(Value::Int(self.ctx.self_pos)),
            ExprKind::Now => Ok(Value::Real(self.ctx.now)),
            ExprKind::AgentCount(name) => {
                Ok(Value::Int(self.ctx.counts.map_or(0, |f| f(name))))
            }
        }
    }

    fn eval_binary(
        &self,
        op: BinaryOp,
        lhs: &Expr,
        rhs: &Expr,
        span: &SourceSpan,
    ) -> Result<Value, EvalFault> {
        // Short-circuit connectives first.
        if matches!(op, BinaryOp::And | BinaryOp::Or) {
            let l = self
                .eval(lhs)?
                .as_bool()
                .ok_or_else(|| mismatch("logical operand must be boolean", &lhs.span))?;
            let short = match op {
                BinaryOp::And => !l,
                _ => l,
            };
            if short {
                return Ok(Value::Bool(l));
            }
            let r = self
                .eval(rhs)?
                .as_bool()
                .ok_or_else(|| mismatch("logical operand must be boolean", &rhs.span))?;
            return Ok(Value::Bool(r));
        }

        let l = self.eval(lhs)?;
        let r = self.eval(rhs)?;

        match op {
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => {
                match (&l, &r) {
                    (Value::Int(a), Value::Int(b)) => {
                        let a = *a;
                        let b = *b;
                        let v = match op {
                            BinaryOp::Add => a.wrapping_add(b),
                            BinaryOp::Sub => a.wrapping_sub(b),
                            BinaryOp::Mul => a.wrapping_mul(b),
                            BinaryOp::Div | BinaryOp::Rem => {
                                if b == 0 {
                                    return Err(EvalFault::DivisionByZero { span: span.clone() });
                                }
                                if op == BinaryOp::Div {
                                    a.wrapping_div(b)
                                } else {
                                    a.wrapping_rem(b)
                                }
                            }
                            _ => unreachable!(),
                        };
                        Ok(Value::Int(v))
                    }
                    _ => {
                        let a = l
                            .as_real()
                            .ok_or_else(|| mismatch("arithmetic operand must be numeric", &lhs.span))?;
                        let b = r
                            .as_real()
                            .ok_or_else(|| mismatch("arithmetic operand must be numeric", &rhs.span))?;
                        let v = match op {
                            BinaryOp::Add => a + b,
                            BinaryOp::Sub => a - b,
                            BinaryOp::Mul => a * b,
                            BinaryOp::Div => {
                                if b == 0.0 {
                                    return Err(EvalFault::DivisionByZero { span: span.clone() });
                                }
                                a / b
                            }
                            BinaryOp::Rem => {
                                if b == 0.0 {
                                    return Err(EvalFault::DivisionByZero { span: span.clone() });
                                }
                                a % b
                            }
                            _ => unreachable!(),
                        };
                        Ok(Value::Real(v))
                    }
                }
            }
            BinaryOp::Eq | BinaryOp::Ne => {
                let equal = match (&l, &r) {
                    (Value::Bool(a), Value::Bool(b)) => a == b,
                    (Value::Int(a), Value::Int(b)) => a == b,
                    _ => {
                        let a = l.as_real().ok_or_else(|| {
                            mismatch("comparison operand must be numeric or boolean", &lhs.span)
                        })?;
                        let b = r.as_real().ok_or_else(|| {
                            mismatch("comparison operand must be numeric or boolean", &rhs.span)
                        })?;
                        a == b
                    }
                };
                Ok(Value::Bool(if op == BinaryOp::Eq { equal } else { !equal }))
            }
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                let a = l
                    .as_real()
                    .ok_or_else(|| mismatch("ordering operand must be numeric", &lhs.span))?;
                let b = r
                    .as_real()
                    .ok_or_else(|| mismatch("ordering operand must be numeric", &rhs.span))?;
                let v = match op {
                    BinaryOp::Lt => a < b,
                    BinaryOp::Le => a <= b,
                    BinaryOp::Gt => a > b,
                    BinaryOp::Ge => a >= b,
                    _ => unreachable!(),
                };
                Ok(Value::Bool(v))
            }
            BinaryOp::And | BinaryOp::Or => unreachable!(),
        }
    }

    fn exec(&mut self, stmt: &Stmt) -> Result<(), EvalFault> {
        match &stmt.kind {
            StmtKind::Assign { name, index, value } => {
                let new = self.eval(value)?;
                let (scope, current) = self.lookup(name, &stmt.span)?;
                match index {
                    None => {
                        if current.type_name() != new.type_name() {
                            // Int-to-real promotion on assignment is allowed.
                            if let (Value::Real(_), Value::Int(i)) = (&current, &new) {
                                let promoted = Value::Real(*i as f64);
                                self.record(scope, name, None, promoted);
                                return Ok(());
                            }
                            return Err(mismatch(
                                format!(
                                    "cannot assign {} to `{name}` of type {}",
                                    new.type_name(),
                                    current.type_name()
                                ),
                                &stmt.span,
                            ));
                        }
                        self.record(scope, name, None, new);
                    }
                    Some(idx_expr) => {
                        let mut items = match current {
                            Value::Array(items) => items,
                            other => {
                                return Err(mismatch(
                                    format!("`{name}` is {}, not an array", other.type_name()),
                                    &stmt.span,
                                ))
                            }
                        };
                        let i = self.eval(idx_expr)?.as_int().ok_or_else(|| {
                            mismatch("array index must be an integer", &idx_expr.span)
                        })?;
                        if i < 0 || i as usize >= items.len() {
                            return Err(EvalFault::IndexOutOfBounds {
                                name: name.clone(),
                                index: i,
                                len: items.len(),
                                span: stmt.span.clone(),
                            });
                        }
                        let elem = match (&items[i as usize], &new) {
                            (Value::Real(_), Value::Int(v)) => Value::Real(*v as f64),
                            (old, new_v) if old.type_name() == new_v.type_name() => new_v.clone(),
                            (old, new_v) => {
                                return Err(mismatch(
                                    format!(
                                        "cannot assign {} to element of {} array `{name}`",
                                        new_v.type_name(),
                                        old.type_name()
                                    ),
                                    &stmt.span,
                                ))
                            }
                        };
                        items[i as usize] = elem.clone();
                        self.overlay.insert((scope, name.clone()), Value::Array(items));
                        self.writes.push(Write {
                            scope,
                            name: name.clone(),
                            index: Some(i as usize),
                            value: elem,
                        });
                    }
                }
                Ok(())
            }
            StmtKind::If { cond, then_block, else_block } => {
                let c = self
                    .eval(cond)?
                    .as_bool()
                    .ok_or_else(|| mismatch("if condition must be boolean", &cond.span))?;
                let block = if c { then_block } else { else_block };
                for s in &block.0 {
                    self.exec(s)?;
                }
                Ok(())
            }
        }
    }

    fn record(&mut self, scope: Scope, name: &str, index: Option<usize>, value: Value) {
        self.overlay.insert((scope, name.to_string()), value.clone());
        self.writes.push(Write { scope, name: name.to_string(), index, value });
    }
}

/// Evaluates a pure expression against the two scopes. Locals shadow globals.
pub fn eval_expr(
    expr: &Expr,
    globals: &Env,
    locals: &Env,
    ctx: BuiltinCtx<'_>,
) -> Result<Value, EvalFault> {
    let frame =
        Frame { globals, locals, overlay: BTreeMap::new(), writes: Vec::new(), ctx };
    frame.eval(expr)
}

/// Runs a statement block and returns its writes without touching the
/// environments. A fault discards all pending writes, so application is
/// all-or-nothing.
pub fn exec_block(
    block: &Block,
    globals: &Env,
    locals: &Env,
    ctx: BuiltinCtx<'_>,
) -> Result<Delta, EvalFault> {
    let mut frame =
        Frame { globals, locals, overlay: BTreeMap::new(), writes: Vec::new(), ctx };
    for stmt in &block.0 {
        frame.exec(stmt)?;
    }
    Ok(Delta(frame.writes))
}
