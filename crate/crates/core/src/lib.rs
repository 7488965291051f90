//! Statistical model checking for networks of stochastic timed automata.
//!
//! An agent class is described by three separately authored concerns: a
//! spatial activity automaton, an interaction protocol automaton and a set of
//! absorbing success/failure predicate states. The [`weave`] module composes
//! the three into a single automaton per class, [`engine`] executes networks
//! of instances under race semantics, [`monitor`] evaluates metric temporal
//! logic properties over the resulting traces and [`smc`] estimates
//! satisfaction probabilities over many independent runs.
//!
//! Models are plain data: guards and actions are fragments of a small
//! loop-free expression language ([`script`]) rather than host-language
//! callbacks, so model files can be parsed, validated, serialized and shipped
//! ([`text`]).

pub mod engine;
pub mod monitor;
pub mod rng;
pub mod scenarios;
pub mod script;
pub mod smc;
pub mod sta;
pub mod stats;
pub mod text;
pub mod weave;

pub use engine::{RunState, Trace, TraceEntry};
pub use monitor::MtlFormula;
pub use rng::CounterRng;
pub use script::{Block, Expr, Value};
pub use sta::{Distribution, PredicateState, Sta, StaState, StaTransition, ValidationReport};
pub use text::{Deployment, ModelDocument, SourceSpan};
pub use weave::{AgentClass, Network};
