//! Static checks for scripts: types, assignability and reserved names.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{is_reserved_ident, BinaryOp, Block, Expr, ExprKind, Stmt, StmtKind, UnaryOp, Value};
use crate::text::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Int,
    Real,
    Bool,
    ArrayInt,
    ArrayReal,
    ArrayBool,
}

impl Type {
    pub fn of_value(v: &Value) -> Option<Type> {
        match v {
            Value::Int(_) => Some(Type::Int),
            Value::Real(_) => Some(Type::Real),
            Value::Bool(_) => Some(Type::Bool),
            Value::Array(items) => match items.first() {
                Some(Value::Int(_)) => Some(Type::ArrayInt),
                Some(Value::Real(_)) => Some(Type::ArrayReal),
                Some(Value::Bool(_)) => Some(Type::ArrayBool),
                _ => None,
            },
        }
    }

    fn element(self) -> Option<Type> {
        match self {
            Type::ArrayInt => Some(Type::Int),
            Type::ArrayReal => Some(Type::Real),
            Type::ArrayBool => Some(Type::Bool),
            _ => None,
        }
    }

    fn is_numeric(self) -> bool {
        matches!(self, Type::Int | Type::Real)
    }

    pub fn name(self) -> &'static str {
        match self {
            Type::Int => "int",
            Type::Real => "real",
            Type::Bool => "bool",
            Type::ArrayInt => "int array",
            Type::ArrayReal => "real array",
            Type::ArrayBool => "bool array",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("{span}: unknown variable `{name}`")]
    UnknownVariable { name: String, span: SourceSpan },
    #[error("{span}: `{name}` is reserved and cannot appear in user scripts")]
    ReservedIdent { name: String, span: SourceSpan },
    #[error("{span}: cannot assign to constant `{name}`")]
    AssignToConst { name: String, span: SourceSpan },
    #[error("{span}: {detail}")]
    Mismatch { detail: String, span: SourceSpan },
}

impl TypeError {
    pub fn span(&self) -> &SourceSpan {
        match self {
            TypeError::UnknownVariable { span, .. }
            | TypeError::ReservedIdent { span, .. }
            | TypeError::AssignToConst { span, .. }
            | TypeError::Mismatch { span, .. } => span,
        }
    }
}

fn mismatch(detail: impl Into<String>, span: &SourceSpan) -> TypeError {
    TypeError::Mismatch { detail: detail.into(), span: span.clone() }
}

/// Declared variable types for one script scope chain.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    vars: BTreeMap<String, Type>,
    consts: BTreeMap<String, Type>,
    /// When set, reserved `__` identifiers type-check (weaver-built scripts).
    pub allow_reserved: bool,
}

impl TypeEnv {
    pub fn new() -> Self {
        TypeEnv::default()
    }

    pub fn declare(&mut self, name: impl Into<String>, ty: Type) {
        self.vars.insert(name.into(), ty);
    }

    pub fn declare_const(&mut self, name: impl Into<String>, ty: Type) {
        self.consts.insert(name.into(), ty);
    }

    fn lookup(&self, name: &str, span: &SourceSpan) -> Result<(Type, bool), TypeError> {
        if is_reserved_ident(name) && !self.allow_reserved {
            return Err(TypeError::ReservedIdent { name: name.to_string(), span: span.clone() });
        }
        if let Some(t) = self.vars.get(name) {
            return Ok((*t, false));
        }
        if let Some(t) = self.consts.get(name) {
            return Ok((*t, true));
        }
        Err(TypeError::UnknownVariable { name: name.to_string(), span: span.clone() })
    }
}

pub fn typecheck_expr(expr: &Expr, env: &TypeEnv) -> Result<Type, TypeError> {
    let span = &expr.span;
    match &expr.kind {
        ExprKind::Int(_) => Ok(Type::Int),
        ExprKind::Real(_) => Ok(Type::Real),
        ExprKind::Bool(_) => Ok(Type::Bool),
        ExprKind::Var(name) => Ok(env.lookup(name, span)?.0),
        ExprKind::Index(name, idx) => {
            let (ty, _) = env.lookup(name, span)?;
            let elem = ty
                .element()
                .ok_or_else(|| mismatch(format!("`{name}` is {}, not an array", ty.name()), span))?;
            let idx_ty = typecheck_expr(idx, env)?;
            if idx_ty != Type::Int {
                return Err(mismatch(
                    format!("array index must be int, found {}", idx_ty.name()),
                    &idx.span,
                ));
            }
            Ok(elem)
        }
        ExprKind::Unary(UnaryOp::Not, inner) => {
            let t = typecheck_expr(inner, env)?;
            if t != Type::Bool {
                return Err(mismatch(format!("`!` needs bool, found {}", t.name()), span));
            }
            Ok(Type::Bool)
        }
        ExprKind::Unary(UnaryOp::Neg, inner) => {
            let t = typecheck_expr(inner, env)?;
            if !t.is_numeric() {
                return Err(mismatch(format!("unary `-` needs a number, found {}", t.name()), span));
            }
            Ok(t)
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let lt = typecheck_expr(lhs, env)?;
            let rt = typecheck_expr(rhs, env)?;
            match op {
                BinaryOp::And | BinaryOp::Or => {
                    if lt != Type::Bool || rt != Type::Bool {
                        return Err(mismatch("logical operands must be bool", span));
                    }
                    Ok(Type::Bool)
                }
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => {
                    if !lt.is_numeric() || !rt.is_numeric() {
                        return Err(mismatch("arithmetic operands must be numeric", span));
                    }
                    Ok(if lt == Type::Real || rt == Type::Real { Type::Real } else { Type::Int })
                }
                BinaryOp::Eq | BinaryOp::Ne => {
                    let ok = (lt.is_numeric() && rt.is_numeric())
                        || (lt == Type::Bool && rt == Type::Bool);
                    if !ok {
                        return Err(mismatch(
                            format!("cannot compare {} with {}", lt.name(), rt.name()),
                            span,
                        ));
                    }
                    Ok(Type::Bool)
                }
                BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                    if !lt.is_numeric() || !rt.is_numeric() {
                        return Err(mismatch("ordering operands must be numeric", span));
                    }
                    Ok(Type::Bool)
                }
            }
        }
        ExprKind::SelfPos => Ok(Type::Int),
        ExprKind::AgentCount(_) => Ok(Type::Int),
        ExprKind::Now => Ok(Type::Real),
    }
}

/// Guards must be boolean; side effects are impossible by grammar.
pub fn check_guard(expr: &Expr, env: &TypeEnv) -> Result<(), TypeError> {
    let t = typecheck_expr(expr, env)?;
    if t != Type::Bool {
        return Err(mismatch(format!("guard must be bool, found {}", t.name()), &expr.span));
    }
    Ok(())
}

pub fn check_block(block: &Block, env: &TypeEnv) -> Result<(), TypeError> {
    for stmt in &block.0 {
        check_stmt(stmt, env)?;
    }
    Ok(())
}

fn check_stmt(stmt: &Stmt, env: &TypeEnv) -> Result<(), TypeError> {
    match &stmt.kind {
        StmtKind::Assign { name, index, value } => {
            let (target_ty, is_const) = env.lookup(name, &stmt.span)?;
            if is_const {
                return Err(TypeError::AssignToConst {
                    name: name.clone(),
                    span: stmt.span.clone(),
                });
            }
            let slot_ty = match index {
                None => target_ty,
                Some(idx) => {
                    let idx_ty = typecheck_expr(idx, env)?;
                    if idx_ty != Type::Int {
                        return Err(mismatch(
                            format!("array index must be int, found {}", idx_ty.name()),
                            &idx.span,
                        ));
                    }
                    target_ty.element().ok_or_else(|| {
                        mismatch(format!("`{name}` is {}, not an array", target_ty.name()), &stmt.span)
                    })?
                }
            };
            let value_ty = typecheck_expr(value, env)?;
            let compatible =
                slot_ty == value_ty || (slot_ty == Type::Real && value_ty == Type::Int);
            if !compatible {
                return Err(mismatch(
                    format!("cannot assign {} to {} `{name}`", value_ty.name(), slot_ty.name()),
                    &stmt.span,
                ));
            }
            Ok(())
        }
        StmtKind::If { cond, then_block, else_block } => {
            let t = typecheck_expr(cond, env)?;
            if t != Type::Bool {
                return Err(mismatch(
                    format!("if condition must be bool, found {}", t.name()),
                    &cond.span,
                ));
            }
            check_block(then_block, env)?;
            check_block(else_block, env)
        }
    }
}
