//! Metric temporal logic over finite timed traces.
//!
//! Formulas are built from atomic propositions with negation, conjunction,
//! disjunction, next and a time-bounded until; eventually and always are
//! derived (`F p = true U p`, `G p = !F !p`). Evaluation is pointwise over
//! the trace's event-indexed snapshots: position 0 is the initial snapshot
//! and position k reflects the state right after entry k. Finite-trace
//! semantics is strong: obligations left unresolved when the trace ends
//! evaluate false. An until's clock freezes at its activation position, so
//! `lhs U[<=d] rhs` needs a witness within `d` time units of activation.
//!
//! [`WatchMonitor`] evaluates the same semantics online and reports a
//! verdict as soon as no continuation of the run could change it.

use thiserror::Error;

use crate::engine::{RunState, Trace};
use crate::script::Value;
use crate::sta::PredicateKind;
use crate::weave::{Network, StateKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// One side of a comparison proposition.
#[derive(Debug, Clone, PartialEq)]
pub enum PropTerm {
    Num(f64),
    Ident(String),
}

/// Atomic propositions: locations, absorbing-state membership, auxiliary
/// counts and time, and global variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposition {
    Const(bool),
    /// `Inst.State`; `terminated` and `successful` report absorption.
    InstState { instance: String, state: String },
    /// Bare identifier naming a boolean global.
    BoolVar(String),
    Compare { lhs: PropTerm, op: CmpOp, rhs: PropTerm },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MtlFormula {
    Ap(Proposition),
    Not(Box<MtlFormula>),
    And(Box<MtlFormula>, Box<MtlFormula>),
    Or(Box<MtlFormula>, Box<MtlFormula>),
    Next(Box<MtlFormula>),
    /// `lhs U rhs` with a time bound; `f64::INFINITY` means unbounded.
    Until { bound: f64, lhs: Box<MtlFormula>, rhs: Box<MtlFormula> },
}

impl MtlFormula {
    pub fn tt() -> Self {
        MtlFormula::Ap(Proposition::Const(true))
    }

    pub fn ff() -> Self {
        MtlFormula::Ap(Proposition::Const(false))
    }

    pub fn not(self) -> Self {
        MtlFormula::Not(Box::new(self))
    }

    pub fn and(self, rhs: Self) -> Self {
        MtlFormula::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Self) -> Self {
        MtlFormula::Or(Box::new(self), Box::new(rhs))
    }

    pub fn next(self) -> Self {
        MtlFormula::Next(Box::new(self))
    }

    pub fn until(lhs: Self, rhs: Self) -> Self {
        MtlFormula::Until { bound: f64::INFINITY, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn until_within(bound: f64, lhs: Self, rhs: Self) -> Self {
        MtlFormula::Until { bound, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    /// `F p`, desugared to `true U p`.
    pub fn eventually(inner: Self) -> Self {
        Self::until(Self::tt(), inner)
    }

    /// `F[<=d] p`, desugared to `true U[<=d] p`.
    pub fn eventually_within(bound: f64, inner: Self) -> Self {
        Self::until_within(bound, Self::tt(), inner)
    }

    /// `G p`, desugared to `!F !p`.
    pub fn always(inner: Self) -> Self {
        Self::eventually(inner.not()).not()
    }

    /// `G[<=d] p`, desugared to `!F[<=d] !p`.
    pub fn always_within(bound: f64, inner: Self) -> Self {
        Self::eventually_within(bound, inner.not()).not()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("unknown proposition `{0}`")]
    UnknownProposition(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance `{instance}` has no state `{state}`")]
    UnknownState { instance: String, state: String },
    #[error("`{0}` is not a boolean global")]
    NotBool(String),
    #[error("until bound must be nonnegative, got {0}")]
    NegativeBound(f64),
}

// --- compiled propositions ----------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Const(f64),
    Time,
    Global(String),
    Count(String),
    SfCount(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum CompiledProp {
    Const(bool),
    InstState { inst: usize, state: usize },
    InstAbsorbed { inst: usize, kind: PredicateKind },
    BoolGlobal(String),
    Compare { lhs: Operand, op: CmpOp, rhs: Operand },
}

/// What a proposition may observe of a network at one instant.
pub trait Snapshot {
    fn time(&self) -> f64;
    /// Composed state index the instance occupies.
    fn state_of(&self, instance: usize) -> usize;
    fn absorbed_kind(&self, instance: usize) -> Option<PredicateKind>;
    fn global(&self, name: &str) -> Option<&Value>;
    /// Live-instance count for a state id or label.
    fn count(&self, name: &str) -> i64;
    /// Absorbed-instance count for one class.
    fn sf_count(&self, class_idx: usize) -> i64;
}

impl Snapshot for RunState {
    fn time(&self) -> f64 {
        self.clock()
    }
    fn state_of(&self, instance: usize) -> usize {
        self.current_state(instance)
    }
    fn absorbed_kind(&self, instance: usize) -> Option<PredicateKind> {
        self.absorbed(instance)
    }
    fn global(&self, name: &str) -> Option<&Value> {
        self.globals().get(name)
    }
    fn count(&self, name: &str) -> i64 {
        RunState::count(self, name)
    }
    fn sf_count(&self, class_idx: usize) -> i64 {
        RunState::sf_count(self, class_idx)
    }
}

impl CompiledProp {
    fn eval(&self, snap: &dyn Snapshot) -> bool {
        match self {
            CompiledProp::Const(v) => *v,
            CompiledProp::InstState { inst, state } => snap.state_of(*inst) == *state,
            CompiledProp::InstAbsorbed { inst, kind } => snap.absorbed_kind(*inst) == Some(*kind),
            CompiledProp::BoolGlobal(name) => {
                snap.global(name).and_then(Value::as_bool).unwrap_or(false)
            }
            CompiledProp::Compare { lhs, op, rhs } => {
                op.apply(lhs.value(snap), rhs.value(snap))
            }
        }
    }
}

impl Operand {
    fn value(&self, snap: &dyn Snapshot) -> f64 {
        match self {
            Operand::Const(v) => *v,
            Operand::Time => snap.time(),
            Operand::Global(name) => {
                snap.global(name).and_then(Value::as_real).unwrap_or(f64::NAN)
            }
            Operand::Count(name) => snap.count(name) as f64,
            Operand::SfCount(class_idx) => snap.sf_count(*class_idx) as f64,
        }
    }
}

fn resolve_operand(term: &PropTerm, network: &Network) -> Result<Operand, MonitorError> {
    let name = match term {
        PropTerm::Num(v) => return Ok(Operand::Const(*v)),
        PropTerm::Ident(name) => name,
    };
    if name == "SystemTime" {
        return Ok(Operand::Time);
    }
    if let Some(value) = network.globals.get(name) {
        return match value {
            Value::Int(_) | Value::Real(_) => Ok(Operand::Global(name.clone())),
            _ => Err(MonitorError::UnknownProposition(format!(
                "{name} (not a numeric global)"
            ))),
        };
    }
    if let Some(class_name) = name.strip_suffix("SFNum") {
        if let Some(idx) = network
            .classes
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(class_name))
        {
            return Ok(Operand::SfCount(idx));
        }
    }
    if let Some(state_name) = name.strip_suffix("Num") {
        let known = network.classes.iter().any(|c| {
            c.composed
                .states
                .iter()
                .any(|s| s.id == state_name || s.labels.iter().any(|l| l == state_name))
        });
        if known {
            return Ok(Operand::Count(state_name.to_string()));
        }
    }
    Err(MonitorError::UnknownProposition(name.clone()))
}

fn resolve_prop(prop: &Proposition, network: &Network) -> Result<CompiledProp, MonitorError> {
    match prop {
        Proposition::Const(v) => Ok(CompiledProp::Const(*v)),
        Proposition::InstState { instance, state } => {
            let inst = network
                .instance_index(instance)
                .ok_or_else(|| MonitorError::UnknownInstance(instance.clone()))?;
            match state.as_str() {
                "terminated" => {
                    Ok(CompiledProp::InstAbsorbed { inst, kind: PredicateKind::Failure })
                }
                "successful" => {
                    Ok(CompiledProp::InstAbsorbed { inst, kind: PredicateKind::Success })
                }
                _ => {
                    let class = &network.classes[network.instances[inst].class_idx];
                    let idx = class.composed.state_index(state).ok_or_else(|| {
                        MonitorError::UnknownState {
                            instance: instance.clone(),
                            state: state.clone(),
                        }
                    })?;
                    Ok(CompiledProp::InstState { inst, state: idx })
                }
            }
        }
        Proposition::BoolVar(name) => match network.globals.get(name) {
            Some(Value::Bool(_)) => Ok(CompiledProp::BoolGlobal(name.clone())),
            Some(_) => Err(MonitorError::NotBool(name.clone())),
            None => Err(MonitorError::UnknownProposition(name.clone())),
        },
        Proposition::Compare { lhs, op, rhs } => Ok(CompiledProp::Compare {
            lhs: resolve_operand(lhs, network)?,
            op: *op,
            rhs: resolve_operand(rhs, network)?,
        }),
    }
}

// --- compiled formula over proposition rows ------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum CNode {
    Ap(usize),
    Not(Box<CNode>),
    And(Box<CNode>, Box<CNode>),
    Or(Box<CNode>, Box<CNode>),
    Next(Box<CNode>),
    Until { bound: f64, lhs: Box<CNode>, rhs: Box<CNode> },
}

fn compile_formula(
    formula: &MtlFormula,
    props: &mut Vec<Proposition>,
) -> Result<CNode, MonitorError> {
    Ok(match formula {
        MtlFormula::Ap(p) => {
            let idx = match props.iter().position(|q| q == p) {
                Some(idx) => idx,
                None => {
                    props.push(p.clone());
                    props.len() - 1
                }
            };
            CNode::Ap(idx)
        }
        MtlFormula::Not(inner) => CNode::Not(Box::new(compile_formula(inner, props)?)),
        MtlFormula::And(a, b) => CNode::And(
            Box::new(compile_formula(a, props)?),
            Box::new(compile_formula(b, props)?),
        ),
        MtlFormula::Or(a, b) => CNode::Or(
            Box::new(compile_formula(a, props)?),
            Box::new(compile_formula(b, props)?),
        ),
        MtlFormula::Next(inner) => CNode::Next(Box::new(compile_formula(inner, props)?)),
        MtlFormula::Until { bound, lhs, rhs } => {
            if *bound < 0.0 || bound.is_nan() {
                return Err(MonitorError::NegativeBound(*bound));
            }
            CNode::Until {
                bound: *bound,
                lhs: Box::new(compile_formula(lhs, props)?),
                rhs: Box::new(compile_formula(rhs, props)?),
            }
        }
    })
}

/// Lower (guaranteed) and upper (possible) verdict per position over a
/// prefix. With `complete` set, futures are impossible and lower equals
/// upper equals the strong finite-trace semantics.
fn lu_eval(
    node: &CNode,
    rows: &[Vec<bool>],
    times: &[f64],
    complete: bool,
) -> (Vec<bool>, Vec<bool>) {
    let m = times.len();
    match node {
        CNode::Ap(idx) => (rows[*idx].clone(), rows[*idx].clone()),
        CNode::Not(inner) => {
            let (l, u) = lu_eval(inner, rows, times, complete);
            (u.iter().map(|b| !b).collect(), l.iter().map(|b| !b).collect())
        }
        CNode::And(a, b) => {
            let (la, ua) = lu_eval(a, rows, times, complete);
            let (lb, ub) = lu_eval(b, rows, times, complete);
            (
                la.iter().zip(&lb).map(|(x, y)| *x && *y).collect(),
                ua.iter().zip(&ub).map(|(x, y)| *x && *y).collect(),
            )
        }
        CNode::Or(a, b) => {
            let (la, ua) = lu_eval(a, rows, times, complete);
            let (lb, ub) = lu_eval(b, rows, times, complete);
            (
                la.iter().zip(&lb).map(|(x, y)| *x || *y).collect(),
                ua.iter().zip(&ub).map(|(x, y)| *x || *y).collect(),
            )
        }
        CNode::Next(inner) => {
            let (l, u) = lu_eval(inner, rows, times, complete);
            let lower = (0..m).map(|i| i + 1 < m && l[i + 1]).collect();
            let upper = (0..m)
                .map(|i| if i + 1 < m { u[i + 1] } else { !complete })
                .collect();
            (lower, upper)
        }
        CNode::Until { bound, lhs, rhs } => {
            let (ll, ul) = lu_eval(lhs, rows, times, complete);
            let (lr, ur) = lu_eval(rhs, rows, times, complete);
            let lower = until_scan(&ll, &lr, times, *bound);

            let mut upper = until_scan(&ul, &ur, times, *bound);
            if !complete {
                // A future witness is possible while the left side has held
                // throughout and the bound has not yet expired.
                let mut lhs_suffix_ok = true;
                for i in (0..m).rev() {
                    lhs_suffix_ok &= ul[i];
                    // Iterating downward visits suffixes in extension order,
                    // so track "all of [i, m)" incrementally.
                    if !upper[i] && lhs_suffix_ok && times[m - 1] - times[i] <= *bound {
                        upper[i] = true;
                    }
                }
            }
            (lower, upper)
        }
    }
}

/// Strong until over known rows: earliest witness, then the frozen-clock
/// bound check. The earliest witness is optimal because later witnesses only
/// increase the elapsed time.
fn until_scan(lhs: &[bool], rhs: &[bool], times: &[f64], bound: f64) -> Vec<bool> {
    let m = times.len();
    let mut out = vec![false; m];
    let mut witness: Option<usize> = None;
    for i in (0..m).rev() {
        if rhs[i] {
            witness = Some(i);
        } else if !lhs[i] {
            witness = None;
        }
        out[i] = witness.is_some_and(|j| times[j] - times[i] <= bound);
    }
    out
}

// --- offline evaluation ---------------------------------------------------------

/// Replays a trace's global writes and moves to produce proposition rows.
struct Replay {
    states: Vec<usize>,
    absorbed: Vec<Option<PredicateKind>>,
    globals: crate::script::Env,
    counts: std::collections::HashMap<String, i64>,
    class_of: Vec<usize>,
    time: f64,
}

impl Snapshot for Replay {
    fn time(&self) -> f64 {
        self.time
    }
    fn state_of(&self, instance: usize) -> usize {
        self.states[instance]
    }
    fn absorbed_kind(&self, instance: usize) -> Option<PredicateKind> {
        self.absorbed[instance]
    }
    fn global(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }
    fn count(&self, name: &str) -> i64 {
        self.counts.get(name).copied().unwrap_or(0)
    }
    fn sf_count(&self, class_idx: usize) -> i64 {
        self.absorbed
            .iter()
            .zip(&self.class_of)
            .filter(|(a, c)| a.is_some() && **c == class_idx)
            .count() as i64
    }
}

fn replay_rows(
    props: &[CompiledProp],
    trace: &Trace,
) -> (Vec<f64>, Vec<Vec<bool>>) {
    let network = &trace.network;
    let mut replay = Replay {
        states: trace.initial_states.iter().map(|s| *s as usize).collect(),
        absorbed: vec![None; trace.initial_states.len()],
        globals: trace.initial_globals.clone(),
        counts: std::collections::HashMap::new(),
        class_of: network.instances.iter().map(|i| i.class_idx).collect(),
        time: 0.0,
    };
    for (inst, state) in trace.initial_states.iter().enumerate() {
        let class = &network.classes[replay.class_of[inst]];
        let s = &class.composed.states[*state as usize];
        *replay.counts.entry(s.id.clone()).or_insert(0) += 1;
        for label in &s.labels {
            *replay.counts.entry(label.clone()).or_insert(0) += 1;
        }
    }

    let m = trace.entries.len() + 1;
    let mut times = Vec::with_capacity(m);
    let mut rows: Vec<Vec<bool>> = props.iter().map(|_| Vec::with_capacity(m)).collect();

    let record = |replay: &Replay, times: &mut Vec<f64>, rows: &mut Vec<Vec<bool>>| {
        times.push(replay.time);
        for (pi, prop) in props.iter().enumerate() {
            rows[pi].push(prop.eval(replay));
        }
    };
    record(&replay, &mut times, &mut rows);

    for entry in &trace.entries {
        let inst = entry.instance as usize;
        let class = &network.classes[replay.class_of[inst]];
        let from = &class.composed.states[entry.from as usize];
        let to = &class.composed.states[entry.to as usize];
        *replay.counts.entry(from.id.clone()).or_insert(0) -= 1;
        for label in &from.labels {
            *replay.counts.entry(label.clone()).or_insert(0) -= 1;
        }
        *replay.counts.entry(to.id.clone()).or_insert(0) += 1;
        for label in &to.labels {
            *replay.counts.entry(label.clone()).or_insert(0) += 1;
        }
        replay.states[inst] = entry.to as usize;
        if let StateKind::Predicate(kind) = class.state_kinds[entry.to as usize] {
            replay.absorbed[inst] = Some(kind);
        }
        for w in &entry.writes.0 {
            if w.scope == crate::script::Scope::Global {
                match w.index {
                    None => replay.globals.set(w.name.clone(), w.value.clone()),
                    Some(i) => {
                        if let Some(Value::Array(mut items)) =
                            replay.globals.get(&w.name).cloned()
                        {
                            if i < items.len() {
                                items[i] = w.value.clone();
                                replay.globals.set(w.name.clone(), Value::Array(items));
                            }
                        }
                    }
                }
            }
        }
        replay.time = entry.time;
        record(&replay, &mut times, &mut rows);
    }

    (times, rows)
}

/// Evaluates a formula over a finished trace.
pub fn eval(formula: &MtlFormula, trace: &Trace) -> Result<bool, MonitorError> {
    let mut props = Vec::new();
    let node = compile_formula(formula, &mut props)?;
    let compiled: Result<Vec<CompiledProp>, _> =
        props.iter().map(|p| resolve_prop(p, &trace.network)).collect();
    let compiled = compiled?;
    let (times, rows) = replay_rows(&compiled, trace);
    let (lower, _) = lu_eval(&node, &rows, &times, true);
    Ok(lower[0])
}

// --- online monitoring ----------------------------------------------------------

/// Online monitor: feed it each snapshot as the run progresses; it yields a
/// verdict as soon as every continuation agrees, and the exact strong
/// verdict at the end of the run.
#[derive(Debug)]
pub struct WatchMonitor {
    node: CNode,
    props: Vec<CompiledProp>,
    times: Vec<f64>,
    rows: Vec<Vec<bool>>,
    verdict: Option<bool>,
    /// Prefix length at which the verdict became guaranteed true.
    sat_prefix: Option<usize>,
    /// Longest prefix known to leave the verdict open.
    last_open: usize,
    next_check: usize,
}

impl WatchMonitor {
    pub fn new(formula: &MtlFormula, network: &Network) -> Result<Self, MonitorError> {
        let mut props = Vec::new();
        let node = compile_formula(formula, &mut props)?;
        let compiled: Result<Vec<CompiledProp>, _> =
            props.iter().map(|p| resolve_prop(p, network)).collect();
        let compiled = compiled?;
        Ok(WatchMonitor {
            node,
            rows: compiled.iter().map(|_| Vec::new()).collect(),
            props: compiled,
            times: Vec::new(),
            verdict: None,
            sat_prefix: None,
            last_open: 0,
            next_check: 1,
        })
    }

    pub fn verdict(&self) -> Option<bool> {
        self.verdict
    }

    /// Model time at which a true verdict became guaranteed.
    pub fn satisfaction_time(&self) -> Option<f64> {
        match (self.verdict, self.sat_prefix) {
            (Some(true), Some(p)) => Some(self.times[p - 1]),
            _ => None,
        }
    }

    /// Records the snapshot after one event (or the initial one) and checks
    /// for an early verdict on a geometric schedule.
    pub fn observe(&mut self, snap: &dyn Snapshot) -> Option<bool> {
        if self.verdict.is_some() {
            return self.verdict;
        }
        self.times.push(snap.time());
        for (pi, prop) in self.props.iter().enumerate() {
            self.rows[pi].push(prop.eval(snap));
        }
        let len = self.times.len();
        if len >= self.next_check {
            self.next_check = if len < 16 { len + 1 } else { len + len / 4 };
            self.check(false);
        }
        self.verdict
    }

    /// Ends the run: computes the exact strong verdict over everything seen.
    pub fn finish(&mut self) -> bool {
        if let Some(v) = self.verdict {
            return v;
        }
        if self.times.is_empty() {
            // Defensive: observe() is expected before finish(); fall back to
            // a single position where only constant-true atoms hold.
            self.times.push(0.0);
            for (pi, prop) in self.props.iter().enumerate() {
                self.rows[pi].push(matches!(prop, CompiledProp::Const(true)));
            }
        }
        self.check(true);
        self.verdict.expect("complete evaluation always decides")
    }

    fn check(&mut self, complete: bool) {
        let (lower, upper) = lu_eval(&self.node, &self.rows, &self.times, complete);
        if lower[0] {
            self.verdict = Some(true);
            self.sat_prefix = Some(self.refine_earliest());
        } else if !upper[0] {
            self.verdict = Some(false);
        } else {
            self.last_open = self.times.len();
        }
    }

    /// Finds the shortest prefix that already guarantees the formula. The
    /// guaranteed verdict is monotone in the prefix, so binary search
    /// applies. A verdict that only exists under completed-trace semantics
    /// (no prefix guarantees it) resolves to the full length.
    fn refine_earliest(&self) -> usize {
        let full = self.times.len();
        let mut lo = (self.last_open + 1).min(full); // shortest candidate prefix
        let mut hi = full;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let (lower, _) = lu_eval(
                &self.node,
                &self.rows.iter().map(|r| r[..mid].to_vec()).collect::<Vec<_>>(),
                &self.times[..mid],
                false,
            );
            if lower[0] {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}
