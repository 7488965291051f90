//! Canonical source rendering for scripts.
//!
//! The rendering is deterministic and parses back to an equal AST; it also
//! serves as the grouping key that identifies transitions sharing a guard.

use std::fmt::Write as _;

use super::{BinaryOp, Block, Expr, ExprKind, Stmt, StmtKind, UnaryOp};

fn precedence(op: BinaryOp) -> u8 {
    match op {
        BinaryOp::Or => 1,
        BinaryOp::And => 2,
        BinaryOp::Eq
        | BinaryOp::Ne
        | BinaryOp::Lt
        | BinaryOp::Le
        | BinaryOp::Gt
        | BinaryOp::Ge => 3,
        BinaryOp::Add | BinaryOp::Sub => 4,
        BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 5,
    }
}

fn is_comparison(op: BinaryOp) -> bool {
    precedence(op) == 3
}

/// Renders a value as a declaration literal.
pub fn render_value(v: &super::Value) -> String {
    use super::Value;
    match v {
        Value::Int(i) => format!("{i}"),
        Value::Real(r) => render_real(*r),
        Value::Bool(b) => format!("{b}"),
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(render_value).collect();
            format!("[{}]", inner.join(", "))
        }
    }
}

/// Formats a float so it parses back as a decimal literal.
pub fn render_real(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

pub fn render_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr, 0);
    out
}

fn write_expr(out: &mut String, expr: &Expr, parent_prec: u8) {
    match &expr.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Real(v) => out.push_str(&render_real(*v)),
        ExprKind::Bool(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Index(name, idx) => {
            out.push_str(name);
            out.push('[');
            write_expr(out, idx, 0);
            out.push(']');
        }
        ExprKind::Unary(op, inner) => {
            out.push(match op {
                UnaryOp::Not => '!',
                UnaryOp::Neg => '-',
            });
            let needs_parens = matches!(inner.kind, ExprKind::Binary(..));
            if needs_parens {
                out.push('(');
                write_expr(out, inner, 0);
                out.push(')');
            } else {
                write_expr(out, inner, 6);
            }
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let prec = precedence(*op);
            let needs_parens = prec < parent_prec
                || (is_comparison(*op) && parent_prec == 3);
            if needs_parens {
                out.push('(');
            }
            // Left-associative: right child binds one tighter.
            write_expr(out, lhs, prec);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, prec + 1);
            if needs_parens {
                out.push(')');
            }
        }
        ExprKind::SelfPos => out.push_str("self_pos()"),
        ExprKind::AgentCount(name) => {
            let _ = write!(out, "agent_count({name})");
        }
        ExprKind::Now => out.push_str("now()"),
    }
}

pub fn render_block(block: &Block) -> String {
    let mut out = String::new();
    out.push('{');
    if !block.0.is_empty() {
        out.push(' ');
        for stmt in &block.0 {
            write_stmt(&mut out, stmt);
            out.push(' ');
        }
    }
    out.push('}');
    out
}

fn write_stmt(out: &mut String, stmt: &Stmt) {
    match &stmt.kind {
        StmtKind::Assign { name, index, value } => {
            out.push_str(name);
            if let Some(idx) = index {
                out.push('[');
                write_expr(out, idx, 0);
                out.push(']');
            }
            out.push_str(" = ");
            write_expr(out, value, 0);
            out.push(';');
        }
        StmtKind::If { cond, then_block, else_block } => {
            out.push_str("if (");
            write_expr(out, cond, 0);
            out.push_str(") ");
            out.push_str(&render_block(then_block));
            if !else_block.0.is_empty() {
                out.push_str(" else ");
                out.push_str(&render_block(else_block));
            }
        }
    }
}
