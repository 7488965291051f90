//! Stochastic timed automata: states with sojourn-time distributions and
//! guarded probabilistic transitions.
//!
//! A transition carries a guard (boolean script), a probability and an action
//! block. Transitions leaving one state with the same rendered guard form a
//! group; the probabilities within a group must sum to 1, and a simulation
//! step first picks uniformly among enabled groups, then by probability
//! within the chosen group.

use crate::rng::CounterRng;
use crate::script::{Block, Expr};
use crate::text::SourceSpan;

/// Which concern an automaton captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaRole {
    Spatial,
    Interaction,
    PredicateSet,
    /// Output of weaving; validated by `weave::validate_composed`.
    Composed,
}

/// Sojourn-time distributions supported by the modeling language.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Deterministic { value: f64 },
}

impl Distribution {
    /// Parameter bounds: rate > 0; 0 <= lo <= hi; value >= 0. All finite.
    pub fn params_valid(&self) -> Result<(), String> {
        match *self {
            Distribution::Exponential { rate } => {
                if rate.is_finite() && rate > 0.0 {
                    Ok(())
                } else {
                    Err(format!("exponential rate must be positive, got {rate}"))
                }
            }
            Distribution::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi {
                    Ok(())
                } else {
                    Err(format!("uniform bounds must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"))
                }
            }
            Distribution::Deterministic { value } => {
                if value.is_finite() && value >= 0.0 {
                    Ok(())
                } else {
                    Err(format!("deterministic delay must be nonnegative, got {value}"))
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Uniform { lo, hi } => (lo + hi) / 2.0,
            Distribution::Deterministic { value } => value,
        }
    }

    /// Draw consumption: exponential and uniform take one draw,
    /// deterministic takes none.
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match *self {
            Distribution::Exponential { rate } => {
                // u in [0,1) keeps 1-u in (0,1], so ln never sees zero.
                let u = rng.next_f64();
                -(1.0 - u).ln() / rate
            }
            Distribution::Uniform { lo, hi } => {
                let u = rng.next_f64();
                lo + u * (hi - lo)
            }
            Distribution::Deterministic { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaState {
    pub id: String,
    pub delay: Distribution,
    /// Maximum sojourn; a sampled delay is truncated to it.
    pub invariant_cap: Option<f64>,
    pub labels: Vec<String>,
}

impl StaState {
    pub fn new(id: impl Into<String>, delay: Distribution) -> Self {
        StaState { id: id.into(), delay, invariant_cap: None, labels: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaTransition {
    pub source: String,
    pub target: String,
    pub guard: Expr,
    pub prob: f64,
    pub action: Block,
}

impl StaTransition {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        StaTransition {
            source: source.into(),
            target: target.into(),
            guard: Expr::bool_lit(true),
            prob: 1.0,
            action: Block::empty(),
        }
    }

    pub fn with_guard(mut self, guard: Expr) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_prob(mut self, prob: f64) -> Self {
        self.prob = prob;
        self
    }

    pub fn with_action(mut self, action: Block) -> Self {
        self.action = action;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sta {
    pub role: StaRole,
    pub states: Vec<StaState>,
    pub initial: String,
    pub transitions: Vec<StaTransition>,
    /// Declared clock names; v1 semantics uses implicit clocks only.
    pub clocks: Vec<String>,
    /// Entry/exit markers, present exactly when `role` is `Interaction`.
    pub interaction_entry: Option<String>,
    pub interaction_exit: Option<String>,
}

impl Sta {
    pub fn new(role: StaRole, initial: impl Into<String>) -> Self {
        Sta {
            role,
            states: Vec::new(),
            initial: initial.into(),
            transitions: Vec::new(),
            clocks: Vec::new(),
            interaction_entry: None,
            interaction_exit: None,
        }
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    pub fn state(&self, id: &str) -> Option<&StaState> {
        self.states.iter().find(|s| s.id == id)
    }
}

/// Absorbing success/failure state of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredicateKind {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateState {
    pub id: String,
    pub kind: PredicateKind,
    pub guard: Expr,
    pub on_enter: Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// State or transition the finding refers to, when there is one.
    pub subject: Option<String>,
    pub span: Option<SourceSpan>,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if let Some(span) = &self.span {
            write!(f, "{span}: ")?;
        }
        write!(f, "{tag}: {}", self.message)?;
        if let Some(subject) = &self.subject {
            write!(f, " ({subject})")?;
        }
        Ok(())
    }
}

/// Collected findings; validation never aborts early.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub items: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn error(&mut self, message: impl Into<String>, subject: Option<String>) {
        self.items.push(Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            subject,
            span: None,
        });
    }

    pub fn warning(&mut self, message: impl Into<String>, subject: Option<String>) {
        self.items.push(Diagnostic {
            severity: Severity::Warning,
            message: message.into(),
            subject,
            span: None,
        });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Warning)
    }

    pub fn is_ok(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.items.extend(other.items);
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for item in &self.items {
            writeln!(f, "{item}")?;
        }
        Ok(())
    }
}

/// Probability masses within one guard group must sum to 1 within this slack.
pub const PROB_MASS_TOLERANCE: f64 = 1e-9;

/// Structural well-formedness of one automaton. Reports, never panics.
pub fn validate_sta(sta: &Sta) -> ValidationReport {
    let mut report = ValidationReport::default();

    // Unique state ids.
    for (i, s) in sta.states.iter().enumerate() {
        if sta.states[..i].iter().any(|p| p.id == s.id) {
            report.error(format!("duplicate state id `{}`", s.id), Some(s.id.clone()));
        }
        if let Err(msg) = s.delay.params_valid() {
            report.error(msg, Some(s.id.clone()));
        }
        if let Some(cap) = s.invariant_cap {
            if !(cap.is_finite() && cap >= 0.0) {
                report.error(
                    format!("invariant cap must be nonnegative, got {cap}"),
                    Some(s.id.clone()),
                );
            }
        }
    }

    let exists = |id: &str| sta.states.iter().any(|s| s.id == id);

    if !exists(&sta.initial) {
        report.error(
            format!("initial state `{}` is not declared", sta.initial),
            Some(sta.initial.clone()),
        );
    }

    for (i, t) in sta.transitions.iter().enumerate() {
        let subject = format!("transition #{i} {} -> {}", t.source, t.target);
        if !exists(&t.source) {
            report.error(
                format!("transition source `{}` is not declared", t.source),
                Some(subject.clone()),
            );
        }
        if !exists(&t.target) {
            report.error(
                format!("transition target `{}` is not declared", t.target),
                Some(subject.clone()),
            );
        }
        if !(t.prob.is_finite() && t.prob > 0.0 && t.prob <= 1.0) {
            report.error(
                format!("transition probability must lie in (0, 1], got {}", t.prob),
                Some(subject),
            );
        }
    }

    // Probability mass per (source, guard-text) group.
    let mut groups: Vec<(String, String, f64)> = Vec::new();
    for t in &sta.transitions {
        let key = t.guard.render();
        match groups.iter_mut().find(|(s, g, _)| *s == t.source && *g == key) {
            Some(entry) => entry.2 += t.prob,
            None => groups.push((t.source.clone(), key, t.prob)),
        }
    }
    for (source, guard, mass) in &groups {
        if (mass - 1.0).abs() > PROB_MASS_TOLERANCE {
            report.error(
                format!(
                    "probability mass {mass} != 1 for transitions from `{source}` with guard `{guard}`"
                ),
                Some(source.clone()),
            );
        }
    }

    // Role-specific checks.
    match sta.role {
        StaRole::Interaction => {
            let entry = sta.interaction_entry.as_deref();
            let exit = sta.interaction_exit.as_deref();
            match (entry, exit) {
                (Some(entry), Some(exit)) => {
                    if !exists(entry) {
                        report.error(
                            format!("interaction entry `{entry}` is not declared"),
                            Some(entry.to_string()),
                        );
                    }
                    if !exists(exit) {
                        report.error(
                            format!("interaction exit `{exit}` is not declared"),
                            Some(exit.to_string()),
                        );
                    }
                    if exists(entry) && exists(exit) {
                        if !reachable_from(sta, entry).contains(&exit.to_string()) {
                            report.error(
                                format!("interaction exit `{exit}` is unreachable from entry `{entry}`"),
                                Some(exit.to_string()),
                            );
                        }
                        if let Some(cycle_state) = find_cycle(sta) {
                            report.error(
                                format!(
                                    "interaction not guaranteed terminating: cycle through `{cycle_state}`"
                                ),
                                Some(cycle_state),
                            );
                        }
                    }
                }
                _ => report.error(
                    "interaction automaton needs both entry and exit states",
                    None,
                ),
            }
        }
        _ => {
            if sta.interaction_entry.is_some() || sta.interaction_exit.is_some() {
                report.error(
                    "entry/exit markers are only meaningful on interaction automata",
                    None,
                );
            }
        }
    }

    // Unreachable-state warnings (syntactic reachability, guards ignored).
    let root = match sta.role {
        StaRole::Interaction => sta.interaction_entry.clone().unwrap_or_else(|| sta.initial.clone()),
        _ => sta.initial.clone(),
    };
    if exists(&root) {
        let seen = reachable_from(sta, &root);
        for s in &sta.states {
            if !seen.contains(&s.id) {
                report.warning(format!("state `{}` is unreachable", s.id), Some(s.id.clone()));
            }
        }
    }

    report
}

fn reachable_from(sta: &Sta, root: &str) -> Vec<String> {
    let mut seen = vec![root.to_string()];
    let mut queue = vec![root.to_string()];
    while let Some(cur) = queue.pop() {
        for t in sta.transitions.iter().filter(|t| t.source == cur) {
            if !seen.contains(&t.target) {
                seen.push(t.target.clone());
                queue.push(t.target.clone());
            }
        }
    }
    seen
}

/// Detects a directed cycle; returns a state on one if present.
fn find_cycle(sta: &Sta) -> Option<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let n = sta.states.len();
    let index = |id: &str| sta.states.iter().position(|s| s.id == id);
    let mut marks = vec![Mark::White; n];

    fn visit(
        sta: &Sta,
        marks: &mut [Mark],
        index: &dyn Fn(&str) -> Option<usize>,
        node: usize,
    ) -> Option<usize> {
        marks[node] = Mark::Gray;
        let id = &sta.states[node].id;
        for t in sta.transitions.iter().filter(|t| &t.source == id) {
            if let Some(next) = index(&t.target) {
                match marks[next] {
                    Mark::Gray => return Some(next),
                    Mark::White => {
                        if let Some(found) = visit(sta, marks, index, next) {
                            return Some(found);
                        }
                    }
                    Mark::Black => {}
                }
            }
        }
        marks[node] = Mark::Black;
        None
    }

    for start in 0..n {
        if marks[start] == Mark::White {
            if let Some(found) = visit(sta, &mut marks, &index, start) {
                return Some(sta.states[found].id.clone());
            }
        }
    }
    None
}

/// Samples a sojourn time, truncated to the state's invariant cap.
pub fn sample_delay(state: &StaState, rng: &mut CounterRng) -> f64 {
    let d = state.delay.sample(rng);
    match state.invariant_cap {
        Some(cap) => d.min(cap),
        None => d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_sta(probs: &[f64]) -> Sta {
        let mut sta = Sta::new(StaRole::Spatial, "a");
        sta.states.push(StaState::new("a", Distribution::Exponential { rate: 1.0 }));
        sta.states.push(StaState::new("b", Distribution::Deterministic { value: 0.0 }));
        for &p in probs {
            sta.transitions.push(StaTransition::new("a", "b").with_prob(p));
        }
        sta
    }

    #[test]
    fn accepts_probability_mass_one() {
        let sta = two_state_sta(&[0.5, 0.5]);
        assert!(validate_sta(&sta).is_ok());
    }

    #[test]
    fn rejects_probability_mass_below_one() {
        let sta = two_state_sta(&[0.5, 0.4]);
        let report = validate_sta(&sta);
        let msg = report.errors().next().expect("expected an error").message.clone();
        assert!(msg.contains("0.9"), "message was: {msg}");
    }

    #[test]
    fn rejects_undeclared_endpoints_and_initial() {
        let mut sta = two_state_sta(&[1.0]);
        sta.initial = "zz".into();
        sta.transitions.push(StaTransition::new("a", "missing"));
        let report = validate_sta(&sta);
        assert!(!report.is_ok());
        let messages: Vec<_> = report.errors().map(|d| d.message.clone()).collect();
        assert!(messages.iter().any(|m| m.contains("zz")));
        assert!(messages.iter().any(|m| m.contains("missing")));
    }

    #[test]
    fn rejects_cyclic_interaction() {
        let mut sta = Sta::new(StaRole::Interaction, "entry");
        sta.interaction_entry = Some("entry".into());
        sta.interaction_exit = Some("exit".into());
        for id in ["entry", "s", "exit"] {
            sta.states.push(StaState::new(id, Distribution::Deterministic { value: 0.0 }));
        }
        sta.transitions.push(StaTransition::new("entry", "s").with_prob(0.5));
        sta.transitions.push(StaTransition::new("entry", "exit").with_prob(0.5));
        sta.transitions.push(StaTransition::new("s", "entry"));
        let report = validate_sta(&sta);
        assert!(report
            .errors()
            .any(|d| d.message.contains("not guaranteed terminating")));
    }

    #[test]
    fn accepts_entry_equals_exit_without_transitions() {
        let mut sta = Sta::new(StaRole::Interaction, "e");
        sta.interaction_entry = Some("e".into());
        sta.interaction_exit = Some("e".into());
        sta.states.push(StaState::new("e", Distribution::Deterministic { value: 0.0 }));
        assert!(validate_sta(&sta).is_ok());
    }

    #[test]
    fn warns_on_unreachable_state() {
        let mut sta = two_state_sta(&[1.0]);
        sta.states.push(StaState::new("stranded", Distribution::Deterministic { value: 0.0 }));
        let report = validate_sta(&sta);
        assert!(report.is_ok());
        assert!(report.warnings().any(|d| d.message.contains("stranded")));
    }

    #[test]
    fn exponential_sample_mean_matches_rate() {
        let state = StaState::new("s", Distribution::Exponential { rate: 1.0 });
        let mut rng = CounterRng::new(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_delay(&state, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");

        let state2 = StaState::new("s", Distribution::Exponential { rate: 2.0 });
        let mean2: f64 = (0..n).map(|_| sample_delay(&state2, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean2 - 0.5).abs() < 0.01, "mean {mean2}");
    }

    #[test]
    fn deterministic_zero_is_always_zero() {
        let state = StaState::new("s", Distribution::Deterministic { value: 0.0 });
        let mut rng = CounterRng::new(1);
        for _ in 0..100 {
            assert_eq!(sample_delay(&state, &mut rng), 0.0);
        }
        assert_eq!(rng.draws(), 0);
    }

    #[test]
    fn cap_truncates_samples() {
        let mut state = StaState::new("s", Distribution::Exponential { rate: 0.5 });
        state.invariant_cap = Some(1.5);
        let mut rng = CounterRng::new(9);
        for _ in 0..100_000 {
            let d = sample_delay(&state, &mut rng);
            assert!((0.0..=1.5).contains(&d));
        }
    }

    #[test]
    fn uniform_sample_stays_in_bounds() {
        let state = StaState::new("s", Distribution::Uniform { lo: 2.0, hi: 5.0 });
        let mut rng = CounterRng::new(3);
        let n = 50_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = sample_delay(&state, &mut rng);
            assert!((2.0..5.0).contains(&d));
            sum += d;
        }
        assert!((sum / n as f64 - 3.5).abs() < 0.02);
    }
}
