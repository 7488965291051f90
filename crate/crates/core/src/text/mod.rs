//! The textual modeling language: model files, deployment files and
//! property strings.
//!
//! Model files are block structured with keyword-introduced sections
//! (`globals`, `const`, `agentclass` with `locals`/`spatial`/`interaction`/
//! `predicates`/`hooks`), UTF-8, newline-insensitive, with `//` line
//! comments. Parsing and serialization are round-trip stable:
//! `parse_model(serialize_model(doc))` is structurally equal to `doc`.

mod deploy;
mod lexer;
mod parser;
pub mod property;
mod serialize;

pub use deploy::{
    parse_deployment, serialize_deployment, Deployment, DeploymentError, InitialPlacement,
    InstanceGroup,
};
pub use parser::{
    class_type_env, parse_action_block, parse_guard_expr, parse_model, parse_model_named as parse_model_file,
    ParseError,
};
pub use property::parse_property;
pub use serialize::serialize_model;

use std::sync::{Arc, OnceLock};

use crate::script::{Block, Expr, Value};
use crate::sta::{PredicateState, Sta, ValidationReport};

/// Location of a token or node in its source file. Lines and columns are
/// 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl SourceSpan {
    pub fn new(file: Arc<str>, line: u32, column: u32, length: u32) -> Self {
        SourceSpan { file, line: line.max(1), column: column.max(1), length }
    }

    /// Span for nodes built programmatically rather than parsed.
    pub fn synthetic() -> Self {
        static FILE: OnceLock<Arc<str>> = OnceLock::new();
        let file = FILE.get_or_init(|| Arc::from("<builtin>"));
        SourceSpan { file: file.clone(), line: 1, column: 1, length: 0 }
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

/// Parse result for one model file.
#[derive(Debug, Clone, Default)]
pub struct ModelDocument {
    pub consts: Vec<ConstDecl>,
    pub globals: Vec<VarDecl>,
    pub classes: Vec<AgentClassDecl>,
}

impl ModelDocument {
    pub fn class(&self, name: &str) -> Option<&AgentClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Runs structural validation over every contained automaton.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for class in &self.classes {
            report.merge(crate::sta::validate_sta(&class.spatial));
            if let Some(interaction) = &class.interaction {
                report.merge(crate::sta::validate_sta(interaction));
            }
        }
        report
    }
}

impl PartialEq for ModelDocument {
    fn eq(&self, other: &Self) -> bool {
        self.consts == other.consts && self.globals == other.globals && self.classes == other.classes
    }
}

/// A named constant; scripts may read it but never assign it.
#[derive(Debug, Clone)]
pub struct ConstDecl {
    pub name: String,
    pub value: Value,
    pub span: SourceSpan,
}

impl PartialEq for ConstDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.value == other.value
    }
}

/// A variable declaration with its initial value.
#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub init: Value,
    pub span: SourceSpan,
}

impl PartialEq for VarDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.init == other.init
    }
}

/// Designer-supplied hook scripts attached to one agent class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hooks {
    /// Runs after every spatial move.
    pub on_move: Block,
    /// Interaction trigger guard; absent means interaction never triggers.
    pub check_interaction: Option<Expr>,
    /// Runs when control transfers into the interaction automaton.
    pub on_interaction_entry: Block,
    /// Runs when control returns to the originating spatial state.
    pub on_interaction_exit: Block,
}

/// One `agentclass` declaration.
#[derive(Debug, Clone)]
pub struct AgentClassDecl {
    pub name: String,
    pub locals: Vec<VarDecl>,
    pub spatial: Sta,
    pub interaction: Option<Sta>,
    pub predicates: Vec<PredicateState>,
    pub hooks: Hooks,
    pub span: SourceSpan,
}

impl PartialEq for AgentClassDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.locals == other.locals
            && self.spatial == other.spatial
            && self.interaction == other.interaction
            && self.predicates == other.predicates
            && self.hooks == other.hooks
    }
}
