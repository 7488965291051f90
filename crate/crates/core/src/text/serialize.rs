//! Canonical model serialization; inverse of `parse_model` up to spans.

use std::fmt::Write as _;

use super::{AgentClassDecl, ModelDocument};
use crate::script::pretty_value;
use crate::sta::{Distribution, PredicateKind, Sta};

/// Renders a document in canonical form. Output is deterministic: the same
/// document always serializes to the same bytes.
pub fn serialize_model(doc: &ModelDocument) -> String {
    let mut out = String::new();

    for c in &doc.consts {
        let _ = writeln!(out, "const {} = {};", c.name, pretty_value(&c.value));
    }
    if !doc.consts.is_empty() {
        out.push('\n');
    }

    if !doc.globals.is_empty() {
        out.push_str("globals {\n");
        for g in &doc.globals {
            let _ = writeln!(out, "  {} = {};", g.name, pretty_value(&g.init));
        }
        out.push_str("}\n\n");
    }

    for class in &doc.classes {
        write_class(&mut out, class);
    }

    out
}

fn write_class(out: &mut String, class: &AgentClassDecl) {
    let _ = writeln!(out, "agentclass {} {{", class.name);

    if !class.locals.is_empty() {
        out.push_str("  locals {\n");
        for l in &class.locals {
            let _ = writeln!(out, "    {} = {};", l.name, pretty_value(&l.init));
        }
        out.push_str("  }\n");
    }

    out.push_str("  spatial {\n");
    write_sta_body(out, &class.spatial);
    out.push_str("  }\n");

    if let Some(interaction) = &class.interaction {
        let entry = interaction.interaction_entry.as_deref().unwrap_or("?");
        let exit = interaction.interaction_exit.as_deref().unwrap_or("?");
        let _ = writeln!(out, "  interaction {{\n    entry {entry} exit {exit}");
        write_sta_body(out, interaction);
        out.push_str("  }\n");
    }

    if !class.predicates.is_empty() {
        out.push_str("  predicates {\n");
        for p in &class.predicates {
            let kind = match p.kind {
                PredicateKind::Success => "success",
                PredicateKind::Failure => "failure",
            };
            let _ = write!(out, "    {kind} {} when {}", p.id, p.guard.render());
            if !p.on_enter.is_empty() {
                let _ = write!(out, " do {}", p.on_enter.render());
            }
            out.push('\n');
        }
        out.push_str("  }\n");
    }

    let hooks = &class.hooks;
    let any_hook = !hooks.on_move.is_empty()
        || hooks.check_interaction.is_some()
        || !hooks.on_interaction_entry.is_empty()
        || !hooks.on_interaction_exit.is_empty();
    if any_hook {
        out.push_str("  hooks {\n");
        if !hooks.on_move.is_empty() {
            let _ = writeln!(out, "    on_move {}", hooks.on_move.render());
        }
        if let Some(ci) = &hooks.check_interaction {
            let _ = writeln!(out, "    check_interaction {}", ci.render());
        }
        if !hooks.on_interaction_entry.is_empty() {
            let _ = writeln!(out, "    on_interaction_entry {}", hooks.on_interaction_entry.render());
        }
        if !hooks.on_interaction_exit.is_empty() {
            let _ = writeln!(out, "    on_interaction_exit {}", hooks.on_interaction_exit.render());
        }
        out.push_str("  }\n");
    }

    out.push_str("}\n\n");
}

fn write_sta_body(out: &mut String, sta: &Sta) {
    for s in &sta.states {
        let _ = write!(out, "    state {} delay {}", s.id, render_distribution(&s.delay));
        if let Some(cap) = s.invariant_cap {
            let _ = write!(out, " cap {}", crate::script::pretty_real(cap));
        }
        if !s.labels.is_empty() {
            let _ = write!(out, " labels {}", s.labels.join(" "));
        }
        out.push('\n');
    }
    for t in &sta.transitions {
        let _ = write!(out, "    on {} -> {}", t.source, t.target);
        let guard_text = t.guard.render();
        if guard_text != "true" {
            let _ = write!(out, " guard {guard_text}");
        }
        if t.prob != 1.0 {
            let _ = write!(out, " prob {}", crate::script::pretty_real(t.prob));
        }
        if !t.action.is_empty() {
            let _ = write!(out, " do {}", t.action.render());
        }
        out.push('\n');
    }
}

fn render_distribution(d: &Distribution) -> String {
    use crate::script::pretty_real as real;
    match d {
        Distribution::Exponential { rate } => format!("exp({})", real(*rate)),
        Distribution::Uniform { lo, hi } => format!("uniform({}, {})", real(*lo), real(*hi)),
        Distribution::Deterministic { value } => format!("det({})", real(*value)),
    }
}
