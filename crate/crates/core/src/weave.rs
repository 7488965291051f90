//! Composition of the three agent concerns into one automaton, and
//! instantiation of agent classes into a runnable network.
//!
//! Given a spatial automaton `P`, predicate states `R` and an interaction
//! automaton `I`, the composed automaton contains four transition families:
//!
//! 1. from every spatial state to every predicate state, guarded by the
//!    predicate's guard;
//! 2. from every spatial state to the interaction entry, guarded by the
//!    interaction trigger and the negation of every predicate guard;
//! 3. from the interaction exit back to every spatial state, guarded on the
//!    recorded excursion origin, so interaction never relocates an agent;
//! 4. every original spatial transition, with the negated predicate guards
//!    and negated interaction trigger conjoined and the `on_move` hook
//!    appended to its action;
//!
//! plus the interaction automaton's own transitions unchanged. The origin of
//! an excursion is recorded in the reserved per-instance variable `__origin`
//! by the family-2 action and consulted by each family-3 guard.

use std::fmt::Write as _;

use thiserror::Error;

use crate::script::{Block, Env, Expr, ExprKind, Stmt, Value};
use crate::sta::{
    validate_sta, Distribution, PredicateKind, PredicateState, Sta, StaRole, StaState,
    StaTransition, ValidationReport,
};
use crate::text::{
    AgentClassDecl, Deployment, Hooks, InitialPlacement, ModelDocument, VarDecl,
};

/// Reserved per-instance variable holding the spatial index an interaction
/// excursion departed from.
pub const ORIGIN_VAR: &str = "__origin";
/// Reserved per-instance variable holding the instance index in the network.
pub const INDEX_VAR: &str = "__index";

/// Role of a composed-automaton transition; parallel to `composed.transitions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    /// Family 1; payload is the predicate index.
    PredicateEntry(usize),
    /// Family 2.
    InteractionEntry,
    /// Family 3; payload is the spatial state index returned to.
    InteractionReturn(usize),
    /// Family 4.
    Spatial,
    /// Interaction-internal, carried over unchanged.
    InteractionInternal,
}

/// Role of a composed-automaton state; parallel to `composed.states`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Spatial,
    Predicate(PredicateKind),
    Interaction,
}

/// A woven agent class: the composed automaton plus everything needed to
/// execute and display it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentClass {
    pub name: String,
    pub composed: Sta,
    pub predicate_states: Vec<PredicateState>,
    pub hooks: Hooks,
    pub locals: Vec<VarDecl>,
    pub transition_kinds: Vec<TransitionKind>,
    pub state_kinds: Vec<StateKind>,
    /// Number of spatial states; they occupy the first indices of
    /// `composed.states`, so spatial indices equal composed indices.
    pub spatial_count: usize,
    pub entry_index: usize,
    pub exit_index: usize,
}

impl AgentClass {
    pub fn state_id(&self, idx: usize) -> &str {
        &self.composed.states[idx].id
    }

    pub fn spatial_index(&self, id: &str) -> Option<usize> {
        self.composed.states[..self.spatial_count].iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Error)]
pub enum WeaveError {
    #[error("spatial automaton expected role `spatial`")]
    SpatialRole,
    #[error("interaction automaton expected role `interaction` with entry and exit")]
    InteractionRole,
    #[error("spatial automaton is not well-formed:\n{0}")]
    InvalidSpatial(ValidationReport),
    #[error("interaction automaton is not well-formed:\n{0}")]
    InvalidInteraction(ValidationReport),
    #[error("state id `{0}` appears in more than one concern")]
    NonDisjoint(String),
}

/// A trivially terminating interaction automaton (entry equals exit, no
/// transitions); the composition target when a class declares none.
pub fn trivial_interaction() -> Sta {
    let mut sta = Sta::new(StaRole::Interaction, "__idle");
    sta.states.push(StaState::new("__idle", Distribution::Deterministic { value: 0.0 }));
    sta.interaction_entry = Some("__idle".into());
    sta.interaction_exit = Some("__idle".into());
    sta
}

/// Weaves one agent class out of its three concern models.
pub fn weave(
    name: &str,
    spatial: &Sta,
    predicates: &[PredicateState],
    interaction: &Sta,
    hooks: &Hooks,
    locals: &[VarDecl],
) -> Result<AgentClass, WeaveError> {
    if spatial.role != StaRole::Spatial {
        return Err(WeaveError::SpatialRole);
    }
    if interaction.role != StaRole::Interaction
        || interaction.interaction_entry.is_none()
        || interaction.interaction_exit.is_none()
    {
        return Err(WeaveError::InteractionRole);
    }
    let spatial_report = validate_sta(spatial);
    if !spatial_report.is_ok() {
        return Err(WeaveError::InvalidSpatial(spatial_report));
    }
    let interaction_report = validate_sta(interaction);
    if !interaction_report.is_ok() {
        return Err(WeaveError::InvalidInteraction(interaction_report));
    }

    // The three state-id sets must be disjoint.
    let mut ids: Vec<&str> = Vec::new();
    for id in spatial
        .states
        .iter()
        .map(|s| s.id.as_str())
        .chain(predicates.iter().map(|p| p.id.as_str()))
        .chain(interaction.states.iter().map(|s| s.id.as_str()))
    {
        if ids.contains(&id) {
            return Err(WeaveError::NonDisjoint(id.to_string()));
        }
        ids.push(id);
    }

    let mut composed = Sta::new(StaRole::Composed, spatial.initial.clone());
    composed.clocks = spatial.clocks.iter().chain(interaction.clocks.iter()).cloned().collect();

    let mut state_kinds = Vec::new();
    for s in &spatial.states {
        composed.states.push(s.clone());
        state_kinds.push(StateKind::Spatial);
    }
    for p in predicates {
        composed
            .states
            .push(StaState::new(p.id.clone(), Distribution::Deterministic { value: 0.0 }));
        state_kinds.push(StateKind::Predicate(p.kind));
    }
    for s in &interaction.states {
        composed.states.push(s.clone());
        state_kinds.push(StateKind::Interaction);
    }

    let spatial_count = spatial.states.len();
    let entry_id = interaction.interaction_entry.as_deref().expect("checked above");
    let exit_id = interaction.interaction_exit.as_deref().expect("checked above");
    let entry_index = composed.state_index(entry_id).expect("interaction states added");
    let exit_index = composed.state_index(exit_id).expect("interaction states added");

    let check_interaction =
        hooks.check_interaction.clone().unwrap_or_else(|| Expr::bool_lit(false));
    let not_predicates: Vec<Expr> =
        predicates.iter().map(|p| p.guard.clone().not()).collect();

    let mut transition_kinds = Vec::new();

    // Family 1: spatial state -> predicate state.
    for q in 0..spatial_count {
        for (pi, p) in predicates.iter().enumerate() {
            composed.transitions.push(StaTransition {
                source: composed.states[q].id.clone(),
                target: p.id.clone(),
                guard: p.guard.clone(),
                prob: 1.0,
                action: p.on_enter.clone(),
            });
            transition_kinds.push(TransitionKind::PredicateEntry(pi));
        }
    }

    // Family 2: spatial state -> interaction entry. The action records the
    // origin before running the designer's entry hook.
    for q in 0..spatial_count {
        let mut guard_terms = vec![check_interaction.clone()];
        guard_terms.extend(not_predicates.iter().cloned());
        let mut action = Block(vec![Stmt::assign(ORIGIN_VAR, Expr::int_lit(q as i64))]);
        action = action.then(&hooks.on_interaction_entry);
        composed.transitions.push(StaTransition {
            source: composed.states[q].id.clone(),
            target: entry_id.to_string(),
            guard: Expr::conj(guard_terms),
            prob: 1.0,
            action,
        });
        transition_kinds.push(TransitionKind::InteractionEntry);
    }

    // Family 3: interaction exit -> originating spatial state.
    for q in 0..spatial_count {
        composed.transitions.push(StaTransition {
            source: exit_id.to_string(),
            target: composed.states[q].id.clone(),
            guard: Expr::synth(ExprKind::Binary(
                crate::script::BinaryOp::Eq,
                Box::new(Expr::var(ORIGIN_VAR)),
                Box::new(Expr::int_lit(q as i64)),
            )),
            prob: 1.0,
            action: hooks.on_interaction_exit.clone(),
        });
        transition_kinds.push(TransitionKind::InteractionReturn(q));
    }

    // Family 4: original spatial transitions with control-flow conjuncts and
    // the on_move hook appended.
    for t in &spatial.transitions {
        let mut guard_terms = vec![t.guard.clone()];
        guard_terms.extend(not_predicates.iter().cloned());
        guard_terms.push(check_interaction.clone().not());
        composed.transitions.push(StaTransition {
            source: t.source.clone(),
            target: t.target.clone(),
            guard: Expr::conj(guard_terms),
            prob: t.prob,
            action: t.action.then(&hooks.on_move),
        });
        transition_kinds.push(TransitionKind::Spatial);
    }

    // Interaction-internal transitions, unchanged.
    for t in &interaction.transitions {
        composed.transitions.push(t.clone());
        transition_kinds.push(TransitionKind::InteractionInternal);
    }

    Ok(AgentClass {
        name: name.to_string(),
        composed,
        predicate_states: predicates.to_vec(),
        hooks: hooks.clone(),
        locals: locals.to_vec(),
        transition_kinds,
        state_kinds,
        spatial_count,
        entry_index,
        exit_index,
    })
}

/// Weaves a parsed class declaration, synthesizing a trivial interaction
/// automaton when none is declared.
pub fn weave_class(class: &AgentClassDecl) -> Result<AgentClass, WeaveError> {
    let trivial;
    let interaction = match &class.interaction {
        Some(i) => i,
        None => {
            trivial = trivial_interaction();
            &trivial
        }
    };
    weave(&class.name, &class.spatial, &class.predicates, interaction, &class.hooks, &class.locals)
}

/// Structural checks over a composed automaton. Reports findings rather than
/// failing, so hand-built compositions can be inspected.
pub fn validate_composed(class: &AgentClass) -> ValidationReport {
    let mut report = validate_sta(&class.composed);
    let n_states = class.composed.states.len();
    let n_trans = class.composed.transitions.len();

    if class.state_kinds.len() != n_states || class.transition_kinds.len() != n_trans {
        report.error("kind tables do not match the composed automaton", None);
        return report;
    }
    if let Some(idx) = class.composed.state_index(&class.composed.initial) {
        if class.state_kinds[idx] != StateKind::Spatial {
            report.error("initial state must be a spatial state", Some(class.composed.initial.clone()));
        }
    }

    let check_interaction = class
        .hooks
        .check_interaction
        .clone()
        .unwrap_or_else(|| Expr::bool_lit(false));
    let not_predicates: Vec<Expr> =
        class.predicate_states.iter().map(|p| p.guard.clone().not()).collect();

    for (ti, t) in class.composed.transitions.iter().enumerate() {
        let kind = class.transition_kinds[ti];
        let subject = format!("transition #{ti} {} -> {}", t.source, t.target);
        let source_kind = class.composed.state_index(&t.source).map(|i| class.state_kinds[i]);
        let target_kind = class.composed.state_index(&t.target).map(|i| class.state_kinds[i]);

        // Predicate states are absorbing: nothing leaves them.
        if source_kind.is_some_and(|k| matches!(k, StateKind::Predicate(_))) {
            report.error("predicate states must be absorbing", Some(subject.clone()));
        }

        match kind {
            TransitionKind::PredicateEntry(pi) => {
                if let Some(p) = class.predicate_states.get(pi) {
                    if t.guard != p.guard {
                        report.error(
                            "predicate-entry guard must equal the predicate's guard",
                            Some(subject.clone()),
                        );
                    }
                }
            }
            TransitionKind::InteractionEntry => {
                let mut expected = vec![check_interaction.clone()];
                expected.extend(not_predicates.iter().cloned());
                if t.guard != Expr::conj(expected) {
                    report.error("control-flow guard missing on interaction-entry transition", Some(subject.clone()));
                }
            }
            TransitionKind::Spatial => {
                // The guard must end with the negated predicate guards and
                // the negated interaction trigger.
                let ok = spatial_guard_matches(&t.guard, &not_predicates, &check_interaction);
                if !ok {
                    report.error("control-flow guard missing on spatial transition", Some(subject.clone()));
                }
                if target_kind.is_some_and(|k| k != StateKind::Spatial) {
                    report.error("spatial transition must target a spatial state", Some(subject.clone()));
                }
            }
            TransitionKind::InteractionReturn(_) | TransitionKind::InteractionInternal => {}
        }
    }

    // Interaction excursions default to zero time; flag states that take time.
    for (si, s) in class.composed.states.iter().enumerate() {
        if class.state_kinds[si] == StateKind::Interaction
            && s.delay != (Distribution::Deterministic { value: 0.0 })
        {
            report.warning(
                format!("interaction state `{}` has a nonzero delay; the excursion will consume time", s.id),
                Some(s.id.clone()),
            );
        }
    }
    if class
        .composed
        .transitions
        .iter()
        .enumerate()
        .any(|(ti, t)| {
            class.transition_kinds[ti] == TransitionKind::InteractionInternal
                && t.source == class.composed.states[class.exit_index].id
        })
    {
        report.warning(
            "interaction exit state has internal outgoing transitions; they are unreachable because reaching the exit returns control",
            None,
        );
    }

    report
}

/// True when `guard` is `<anything> && !p1 && ... && !pn && !ci`.
fn spatial_guard_matches(guard: &Expr, not_predicates: &[Expr], check_interaction: &Expr) -> bool {
    let mut expected_tail: Vec<&Expr> = not_predicates.iter().collect();
    let not_ci = check_interaction.clone().not();
    expected_tail.push(&not_ci);

    // Peel conjuncts off the right end of the left-leaning && chain.
    let mut current = guard;
    for expected in expected_tail.iter().rev() {
        match &current.kind {
            ExprKind::Binary(crate::script::BinaryOp::And, lhs, rhs) if rhs.as_ref() == *expected => {
                current = lhs;
            }
            _ => return false,
        }
    }
    true
}

// --- instantiation -----------------------------------------------------------

#[derive(Debug, Error)]
pub enum InstantiateError {
    #[error(transparent)]
    Weave(#[from] WeaveError),
    #[error("unknown agent class `{0}`")]
    UnknownClass(String),
    #[error("class `{0}`: instance count must be at least 1")]
    ZeroCount(String),
    #[error("class `{class}`: initial state `{state}` is not a spatial state")]
    UnknownInitialState { class: String, state: String },
    #[error("class `{class}`: initial distribution weights sum to {sum}, expected 1")]
    BadWeights { class: String, sum: f64 },
    #[error("global override `{0}` does not match any declared global")]
    UnknownOverride(String),
    #[error("global override `{name}` has type {found}, expected {expected}")]
    OverrideType { name: String, found: &'static str, expected: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub time: f64,
    pub max_events: u64,
}

/// One declared instance; its concrete initial state may be a distribution
/// resolved at run initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDecl {
    pub class_idx: usize,
    pub name: String,
    pub initial: InitialPlacement,
    pub initial_locals: Env,
}

/// A deployable network: woven classes, instance declarations, the initial
/// global environment and the run horizon. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub classes: Vec<AgentClass>,
    pub instances: Vec<InstanceDecl>,
    pub globals: Env,
    pub horizon: Horizon,
}

impl Network {
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn instance_index(&self, name: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.name == name)
    }
}

/// Builds a network from a parsed model and a deployment: weaves every
/// declared class and lays out one instance per deployment count.
pub fn instantiate(doc: &ModelDocument, deployment: &Deployment) -> Result<Network, InstantiateError> {
    let mut classes = Vec::new();
    for class in &doc.classes {
        classes.push(weave_class(class)?);
    }

    // Initial global environment: constants first, then globals, then
    // deployment overrides.
    let mut globals = Env::new();
    for c in &doc.consts {
        globals.set(c.name.clone(), c.value.clone());
    }
    for g in &doc.globals {
        globals.set(g.name.clone(), g.init.clone());
    }
    for (name, value) in &deployment.global_overrides {
        let declared = doc
            .globals
            .iter()
            .find(|g| &g.name == name)
            .ok_or_else(|| InstantiateError::UnknownOverride(name.clone()))?;
        let expected = declared.init.type_name();
        let value = match (&declared.init, value) {
            (Value::Real(_), Value::Int(i)) => Value::Real(*i as f64),
            (d, v) if d.type_name() == v.type_name() => v.clone(),
            (_, v) => {
                return Err(InstantiateError::OverrideType {
                    name: name.clone(),
                    found: v.type_name(),
                    expected,
                })
            }
        };
        globals.set(name.clone(), value);
    }

    let mut instances = Vec::new();
    let mut per_class_counter = vec![0u32; classes.len()];
    for group in &deployment.groups {
        let class_idx = classes
            .iter()
            .position(|c| c.name == group.class)
            .ok_or_else(|| InstantiateError::UnknownClass(group.class.clone()))?;
        if group.count == 0 {
            return Err(InstantiateError::ZeroCount(group.class.clone()));
        }
        let class = &classes[class_idx];

        match &group.initial {
            InitialPlacement::Fixed(state) => {
                if class.spatial_index(state).is_none() {
                    return Err(InstantiateError::UnknownInitialState {
                        class: group.class.clone(),
                        state: state.clone(),
                    });
                }
            }
            InitialPlacement::Categorical(dist) => {
                for (state, _) in dist {
                    if class.spatial_index(state).is_none() {
                        return Err(InstantiateError::UnknownInitialState {
                            class: group.class.clone(),
                            state: state.clone(),
                        });
                    }
                }
                let sum: f64 = dist.iter().map(|(_, w)| *w).sum();
                if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|(_, w)| *w < 0.0) {
                    return Err(InstantiateError::BadWeights { class: group.class.clone(), sum });
                }
            }
        }

        for _ in 0..group.count {
            let ordinal = per_class_counter[class_idx];
            per_class_counter[class_idx] += 1;
            let mut locals = Env::new();
            for l in &classes[class_idx].locals {
                locals.set(l.name.clone(), l.init.clone());
            }
            locals.set(ORIGIN_VAR, Value::Int(-1));
            locals.set(INDEX_VAR, Value::Int(instances.len() as i64));
            instances.push(InstanceDecl {
                class_idx,
                name: format!("{}{}", group.class, ordinal),
                initial: group.initial.clone(),
                initial_locals: locals,
            });
        }
    }

    Ok(Network {
        classes,
        instances,
        globals,
        horizon: Horizon { time: deployment.horizon_time, max_events: deployment.max_events },
    })
}

/// Renders a composed automaton as a Graphviz digraph.
pub fn to_dot(class: &AgentClass) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", class.name);
    let _ = writeln!(out, "  rankdir=LR;");
    for (i, s) in class.composed.states.iter().enumerate() {
        let (shape, color) = match class.state_kinds[i] {
            StateKind::Spatial => ("ellipse", "black"),
            StateKind::Predicate(PredicateKind::Success) => ("doublecircle", "darkgreen"),
            StateKind::Predicate(PredicateKind::Failure) => ("doublecircle", "red"),
            StateKind::Interaction => ("box", "blue"),
        };
        let _ = writeln!(out, "  \"{}\" [shape={shape}, color={color}];", s.id);
    }
    let _ = writeln!(out, "  \"\" [shape=point];");
    let _ = writeln!(out, "  \"\" -> \"{}\";", class.composed.initial);
    for (ti, t) in class.composed.transitions.iter().enumerate() {
        let style = match class.transition_kinds[ti] {
            TransitionKind::PredicateEntry(_) => "dashed",
            TransitionKind::InteractionEntry | TransitionKind::InteractionReturn(_) => "dotted",
            _ => "solid",
        };
        let mut label = t.guard.render();
        if t.prob != 1.0 {
            let _ = write!(label, " | p={}", t.prob);
        }
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [style={style}, label=\"{}\"];",
            t.source,
            t.target,
            label.replace('"', "\\\"")
        );
    }
    out.push_str("}\n");
    out
}
